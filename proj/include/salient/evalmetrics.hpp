#pragma once

// Detection metrics: COCO-style mAP over IoU 0.50:0.05:0.95 with 101-point
// interpolation, mAR with one detection per image and category, and
// set-level precision / recall / F1 averaged over the same thresholds.

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "salient/datasetio.hpp"
#include "salient/geometry.hpp"
#include "salient/io_util.hpp"

namespace salient {

// 0.50, 0.55, ..., 0.95, each computed directly as a ratio to avoid drift.
inline std::vector<double> coco_iou_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back((50 + 5 * k) / 100.0);
  return t;
}

struct EvalOptions {
  double score_cutoff = 0.5;
  std::vector<double> iou_thresholds = coco_iou_thresholds();
};

struct CategoryMetrics {
  std::optional<double> ap_50_95;  // nullopt when the category has no gts and no dets
  std::optional<double> ar_1;      // nullopt when the category has no gts
  double precision_50_95 = 0;
  double recall_50_95 = 0;
  double f1_50_95 = 0;
};

struct MetricsReport {
  double map_50_95 = 0;
  double mar_1 = 0;
  double f1_50_95 = 0;
  double precision_50_95 = 0;
  double recall_50_95 = 0;
  std::map<std::int64_t, CategoryMetrics> per_category;
};

// Indices of `dets` in descending score order; equal scores keep input order.
inline std::vector<std::size_t> score_order(const std::vector<DetectionRecord>& dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  return order;
}

// Greedy one-to-one matching within each (image, category): detections in
// descending score order each take the highest-IoU still-unmatched gt with
// IoU >= iou_thr (ties to the lower gt index). Result is indexed like
// `dets`; nullopt marks a false positive.
inline std::vector<std::optional<std::size_t>> match_detections(
    const std::vector<DetectionRecord>& dets, const std::vector<GroundTruthRecord>& gts,
    double iou_thr) {
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>> gt_by_key;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    gt_by_key[{gts[g].image_id, gts[g].category_id}].push_back(g);
  }
  std::vector<bool> taken(gts.size(), false);
  std::vector<std::optional<std::size_t>> match(dets.size());
  for (std::size_t d : score_order(dets)) {
    auto it = gt_by_key.find({dets[d].image_id, dets[d].category_id});
    if (it == gt_by_key.end()) continue;
    double best = -1;
    std::optional<std::size_t> pick;
    for (std::size_t g : it->second) {
      if (taken[g]) continue;
      const double iou = iou_bbox(dets[d].bbox, gts[g].bbox);
      if (iou >= iou_thr && iou > best) {
        best = iou;
        pick = g;
      }
    }
    if (pick) {
      taken[*pick] = true;
      match[d] = pick;
    }
  }
  return match;
}

// 101-point interpolated AP of `dets` against `gts` at one IoU threshold.
// nullopt when both are empty; 0 when there are detections but no gts.
inline std::optional<double> average_precision(const std::vector<DetectionRecord>& dets,
                                               const std::vector<GroundTruthRecord>& gts,
                                               double iou_thr) {
  if (gts.empty()) {
    if (dets.empty()) return std::nullopt;
    return 0.0;
  }
  if (dets.empty()) return 0.0;
  const auto match = match_detections(dets, gts, iou_thr);
  const auto order = score_order(dets);
  const auto npos = static_cast<double>(gts.size());
  std::vector<double> recall(order.size()), precision(order.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (match[order[i]]) ++tp;
    recall[i] = static_cast<double>(tp) / npos;
    precision[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  for (std::size_t i = precision.size() - 1; i > 0; --i) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

namespace detail {

struct SetCounts {
  std::size_t tp = 0, dets = 0, gts = 0;
};

inline double safe_ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline double f1_of(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

// Highest-scored detection per (image, category).
inline std::vector<DetectionRecord> top1_per_image(const std::vector<DetectionRecord>& dets) {
  std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> best;
  for (std::size_t d : score_order(dets)) best.emplace(std::make_pair(dets[d].image_id, dets[d].category_id), d);
  std::vector<std::size_t> keep;
  for (const auto& [k, d] : best) keep.push_back(d);
  std::sort(keep.begin(), keep.end());
  std::vector<DetectionRecord> out;
  for (auto d : keep) out.push_back(dets[d]);
  return out;
}

struct CategoryAccumulator {
  std::vector<DetectionRecord> dets;
  std::vector<GroundTruthRecord> gts;
};

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace detail

inline MetricsReport evaluate(const std::vector<DetectionRecord>& dets,
                              const std::vector<GroundTruthRecord>& gts,
                              const EvalOptions& opt = {}) {
  std::map<std::int64_t, detail::CategoryAccumulator> cats;
  for (const auto& d : dets) cats[d.category_id].dets.push_back(d);
  for (const auto& g : gts) cats[g.category_id].gts.push_back(g);

  MetricsReport rep;
  const auto& thresholds = opt.iou_thresholds;
  std::vector<double> map_t, mar_t, p_t, r_t, f1_t;
  std::map<std::int64_t, std::vector<double>> cat_ap, cat_ar, cat_p, cat_r, cat_f1;

  for (double thr : thresholds) {
    std::vector<double> aps, ars;
    detail::SetCounts total;
    for (const auto& [cid, acc] : cats) {
      if (auto ap = average_precision(acc.dets, acc.gts, thr)) {
        aps.push_back(*ap);
        cat_ap[cid].push_back(*ap);
      }
      if (!acc.gts.empty()) {
        const auto top = detail::top1_per_image(acc.dets);
        const auto m = match_detections(top, acc.gts, thr);
        const auto hits = static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [](const auto& x) { return x.has_value(); }));
        const double ar = detail::safe_ratio(hits, acc.gts.size());
        ars.push_back(ar);
        cat_ar[cid].push_back(ar);
      }
      std::vector<DetectionRecord> kept;
      for (const auto& d : acc.dets) {
        if (d.score >= opt.score_cutoff) kept.push_back(d);
      }
      const auto m = match_detections(kept, acc.gts, thr);
      detail::SetCounts c;
      c.tp = static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [](const auto& x) { return x.has_value(); }));
      c.dets = kept.size();
      c.gts = acc.gts.size();
      total.tp += c.tp;
      total.dets += c.dets;
      total.gts += c.gts;
      const double p = detail::safe_ratio(c.tp, c.dets);
      const double r = detail::safe_ratio(c.tp, c.gts);
      cat_p[cid].push_back(p);
      cat_r[cid].push_back(r);
      cat_f1[cid].push_back(detail::f1_of(p, r));
    }
    map_t.push_back(detail::mean(aps));
    mar_t.push_back(detail::mean(ars));
    const double p = detail::safe_ratio(total.tp, total.dets);
    const double r = detail::safe_ratio(total.tp, total.gts);
    p_t.push_back(p);
    r_t.push_back(r);
    f1_t.push_back(detail::f1_of(p, r));
  }

  rep.map_50_95 = detail::mean(map_t);
  rep.mar_1 = detail::mean(mar_t);
  rep.precision_50_95 = detail::mean(p_t);
  rep.recall_50_95 = detail::mean(r_t);
  rep.f1_50_95 = detail::mean(f1_t);
  for (const auto& [cid, acc] : cats) {
    CategoryMetrics cm;
    if (cat_ap.count(cid)) cm.ap_50_95 = detail::mean(cat_ap[cid]);
    if (cat_ar.count(cid)) cm.ar_1 = detail::mean(cat_ar[cid]);
    cm.precision_50_95 = detail::mean(cat_p[cid]);
    cm.recall_50_95 = detail::mean(cat_r[cid]);
    cm.f1_50_95 = detail::mean(cat_f1[cid]);
    rep.per_category[cid] = cm;
  }
  return rep;
}

inline Json report_to_json(const MetricsReport& r) {
  Json j;
  j["map_50_95"] = r.map_50_95;
  j["mar_1"] = r.mar_1;
  j["f1_50_95"] = r.f1_50_95;
  j["precision_50_95"] = r.precision_50_95;
  j["recall_50_95"] = r.recall_50_95;
  Json per = Json::object();
  for (const auto& [cid, m] : r.per_category) {
    Json c;
    c["ap_50_95"] = m.ap_50_95 ? Json(*m.ap_50_95) : Json(nullptr);
    c["ar_1"] = m.ar_1 ? Json(*m.ar_1) : Json(nullptr);
    c["f1_50_95"] = m.f1_50_95;
    c["precision_50_95"] = m.precision_50_95;
    c["recall_50_95"] = m.recall_50_95;
    per[std::to_string(cid)] = std::move(c);
  }
  j["per_category"] = std::move(per);
  return j;
}

}  // namespace salient
