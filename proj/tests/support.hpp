#pragma once

// Test-only generators and independent oracles. Oracles are written
// without reference to the library internals: pixel rasterization for IoU,
// transitive closure for DBSCAN, and a quadratic re-derivation of the
// detection metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "salient/datasetio.hpp"
#include "salient/geometry.hpp"

namespace testsupport {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {  // inclusive
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(eng_);
  }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  bool coin(double p = 0.5) { return real(0, 1) < p; }
  std::mt19937_64& engine() { return eng_; }

  // Integer-corner box inside [0, w) x [0, h).
  salient::BBox box(std::int64_t w, std::int64_t h) {
    const auto x0 = integer(0, w - 1), y0 = integer(0, h - 1);
    const auto x1 = integer(x0 + 1, w), y1 = integer(y0 + 1, h);
    return salient::BBox(static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1),
                         static_cast<double>(y1));
  }

  salient::BitMask mask(std::uint32_t w, std::uint32_t h, double density) {
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h);
    for (auto& p : px) p = coin(density) ? 1 : 0;
    return salient::BitMask::from_pixels(w, h, px);
  }

 private:
  std::mt19937_64 eng_;
};

// IoU of integer-corner boxes by counting unit pixels.
inline double raster_iou(const salient::BBox& a, const salient::BBox& b) {
  const auto lo_x = static_cast<std::int64_t>(std::min(a.x_min(), b.x_min()));
  const auto hi_x = static_cast<std::int64_t>(std::max(a.x_max(), b.x_max()));
  const auto lo_y = static_cast<std::int64_t>(std::min(a.y_min(), b.y_min()));
  const auto hi_y = static_cast<std::int64_t>(std::max(a.y_max(), b.y_max()));
  std::int64_t inter = 0, uni = 0;
  for (auto y = lo_y; y < hi_y; ++y) {
    for (auto x = lo_x; x < hi_x; ++x) {
      const bool in_a = x >= a.x_min() && x < a.x_max() && y >= a.y_min() && y < a.y_max();
      const bool in_b = x >= b.x_min() && x < b.x_max() && y >= b.y_min() && y < b.y_max();
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

inline double raster_mask_iou(const salient::BitMask& a, const salient::BitMask& b) {
  const auto pa = a.to_pixels(), pb = b.to_pixels();
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    inter += pa[i] && pb[i];
    uni += pa[i] || pb[i];
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

// DBSCAN by definition: core points, transitive closure of core
// reachability, clusters numbered by their lowest core index, border points
// given the lowest-numbered adjacent cluster, everything else noise.
inline std::vector<std::int32_t> dbscan_oracle(const std::vector<std::vector<double>>& d, double eps,
                                               std::size_t min_samples) {
  const std::size_t n = d.size();
  std::vector<bool> core(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) c += (i == j || d[i][j] <= eps) ? 1 : 0;
    core[i] = c >= min_samples;
  }
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      reach[i][j] = core[i] && core[j] && (i == j || d[i][j] <= eps);
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (reach[i][k] && reach[k][j]) reach[i][j] = true;
      }
    }
  }
  std::vector<std::int32_t> label(n, -1);
  std::int32_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!core[i] || label[i] != -1) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (reach[i][j]) label[j] = next;
    }
    ++next;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    std::int32_t best = -1;
    for (std::size_t j = 0; j < n; ++j) {
      if (core[j] && d[i][j] <= eps && (best == -1 || label[j] < best)) best = label[j];
    }
    label[i] = best;
  }
  return label;
}

// --- Naive detection metrics ------------------------------------------------

struct NaiveReport {
  double map = 0, mar1 = 0, precision = 0, recall = 0, f1 = 0;
};

inline std::vector<int> naive_match(const std::vector<salient::DetectionRecord>& dets,
                                    const std::vector<salient::GroundTruthRecord>& gts, double thr) {
  // Descending score, ties by input position (insertion sort keeps stability).
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    std::size_t pos = order.size();
    while (pos > 0 && dets[order[pos - 1]].score < dets[i].score) --pos;
    order.insert(order.begin() + static_cast<std::ptrdiff_t>(pos), i);
  }
  std::vector<int> match(dets.size(), -1);
  std::vector<bool> used(gts.size(), false);
  for (auto d : order) {
    int best = -1;
    double best_iou = 0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].image_id != dets[d].image_id || gts[g].category_id != dets[d].category_id) continue;
      const double iou = raster_iou(dets[d].bbox, gts[g].bbox);
      if (iou < thr) continue;
      if (best == -1 || iou > best_iou) {
        best = static_cast<int>(g);
        best_iou = iou;
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      match[d] = best;
    }
  }
  return match;
}

inline std::optional<double> naive_ap(const std::vector<salient::DetectionRecord>& dets,
                                      const std::vector<salient::GroundTruthRecord>& gts, double thr) {
  if (gts.empty()) return dets.empty() ? std::nullopt : std::optional<double>(0.0);
  const auto match = naive_match(dets, gts, thr);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    std::size_t pos = order.size();
    while (pos > 0 && dets[order[pos - 1]].score < dets[i].score) --pos;
    order.insert(order.begin() + static_cast<std::ptrdiff_t>(pos), i);
  }
  std::vector<double> prec, rec;
  double tp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    tp += match[order[i]] >= 0 ? 1 : 0;
    prec.push_back(tp / static_cast<double>(i + 1));
    rec.push_back(tp / static_cast<double>(gts.size()));
  }
  double total = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    double best = 0;
    for (std::size_t i = 0; i < rec.size(); ++i) {
      if (rec[i] >= r) best = std::max(best, prec[i]);
    }
    total += best;
  }
  return total / 101.0;
}

inline NaiveReport naive_evaluate(const std::vector<salient::DetectionRecord>& dets,
                                  const std::vector<salient::GroundTruthRecord>& gts, double cutoff) {
  std::set<std::int64_t> cats;
  for (const auto& d : dets) cats.insert(d.category_id);
  for (const auto& g : gts) cats.insert(g.category_id);
  NaiveReport rep;
  for (int t = 0; t < 10; ++t) {
    const double thr = (50 + 5 * t) / 100.0;
    double ap_sum = 0, ar_sum = 0;
    int ap_n = 0, ar_n = 0;
    double tp = 0, nd = 0, ng = 0;
    for (auto c : cats) {
      std::vector<salient::DetectionRecord> cd;
      std::vector<salient::GroundTruthRecord> cg;
      for (const auto& d : dets) {
        if (d.category_id == c) cd.push_back(d);
      }
      for (const auto& g : gts) {
        if (g.category_id == c) cg.push_back(g);
      }
      if (auto ap = naive_ap(cd, cg, thr)) {
        ap_sum += *ap;
        ++ap_n;
      }
      if (!cg.empty()) {
        // Best-scored detection per image (first in input order on ties).
        std::vector<salient::DetectionRecord> top;
        std::set<std::int64_t> images;
        for (const auto& d : cd) images.insert(d.image_id);
        for (auto img : images) {
          const salient::DetectionRecord* best = nullptr;
          for (const auto& d : cd) {
            if (d.image_id == img && (!best || d.score > best->score)) best = &d;
          }
          top.push_back(*best);
        }
        const auto m = naive_match(top, cg, thr);
        ar_sum += static_cast<double>(std::count_if(m.begin(), m.end(), [](int x) { return x >= 0; })) /
                  static_cast<double>(cg.size());
        ++ar_n;
      }
      std::vector<salient::DetectionRecord> kept;
      for (const auto& d : cd) {
        if (d.score >= cutoff) kept.push_back(d);
      }
      const auto m = naive_match(kept, cg, thr);
      tp += static_cast<double>(std::count_if(m.begin(), m.end(), [](int x) { return x >= 0; }));
      nd += static_cast<double>(kept.size());
      ng += static_cast<double>(cg.size());
    }
    rep.map += ap_n ? ap_sum / ap_n : 0;
    rep.mar1 += ar_n ? ar_sum / ar_n : 0;
    const double p = nd > 0 ? tp / nd : 0, r = ng > 0 ? tp / ng : 0;
    rep.precision += p;
    rep.recall += r;
    rep.f1 += p + r > 0 ? 2 * p * r / (p + r) : 0;
  }
  rep.map /= 10;
  rep.mar1 /= 10;
  rep.precision /= 10;
  rep.recall /= 10;
  rep.f1 /= 10;
  return rep;
}

// Random detection problem with integer boxes on a small canvas, at most
// `per_image` detections and gts per image.
struct DetectionCase {
  std::vector<salient::DetectionRecord> dets;
  std::vector<salient::GroundTruthRecord> gts;
};

inline DetectionCase random_detection_case(Gen& g, int per_image = 5) {
  DetectionCase c;
  const auto images = g.integer(1, 4);
  const auto cats = g.integer(1, 3);
  for (std::int64_t img = 0; img < images; ++img) {
    const auto ng = g.integer(0, per_image);
    const auto nd = g.integer(0, per_image);
    std::vector<salient::GroundTruthRecord> here;
    for (std::int64_t k = 0; k < ng; ++k) {
      here.push_back({img, g.integer(1, cats), g.box(24, 24)});
      c.gts.push_back(here.back());
    }
    for (std::int64_t k = 0; k < nd; ++k) {
      salient::BBox b = g.box(24, 24);
      std::int64_t cat = g.integer(1, cats);
      if (!here.empty() && g.coin(0.7)) {
        // Perturb a gt box so that a spread of IoUs occurs.
        const auto& src = here[static_cast<std::size_t>(g.integer(0, static_cast<std::int64_t>(here.size()) - 1))];
        cat = src.category_id;
        const double x0 = src.bbox.x_min() + static_cast<double>(g.integer(-2, 2));
        const double y0 = src.bbox.y_min() + static_cast<double>(g.integer(-2, 2));
        const double x1 = std::max(x0 + 1, src.bbox.x_max() + static_cast<double>(g.integer(-2, 2)));
        const double y1 = std::max(y0 + 1, src.bbox.y_max() + static_cast<double>(g.integer(-2, 2)));
        b = salient::BBox(x0, y0, x1, y1);
      }
      // Scores on a coarse grid so ties occur.
      c.dets.push_back({img, cat, b, static_cast<double>(g.integer(0, 10)) / 10.0});
    }
  }
  return c;
}

}  // namespace testsupport
