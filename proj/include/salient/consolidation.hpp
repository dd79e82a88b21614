#pragma once

// Track consolidation, assembly half: per-frame majority-vote mask fusion
// for every object, and the end-to-end tracks -> dataset pipeline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "salient/clustering.hpp"
#include "salient/error.hpp"
#include "salient/geometry.hpp"
#include "salient/parallel.hpp"
#include "salient/trackmodel.hpp"

namespace salient {

struct SalientItem {
  std::int32_t frame_index = 0;
  std::int32_t object_label = 0;
  BBox bbox;
  std::optional<BitMask> mask;
  bool operator==(const SalientItem&) const = default;
};

struct Provenance {
  ClusterParams params;
  std::string track_hash;
};

inline bool operator==(const Provenance& a, const Provenance& b) {
  const auto& p = a.params;
  const auto& q = b.params;
  return a.track_hash == b.track_hash && p.spatial_eps == q.spatial_eps &&
         p.temporal_eps == q.temporal_eps && p.temporal_min_size == q.temporal_min_size &&
         p.spatial_min_size == q.spatial_min_size && p.spatial_metric == q.spatial_metric;
}

struct SalientDataset {
  std::string video_id;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::int32_t label_count = 0;
  std::vector<SalientItem> items;  // sorted by (frame, label), unique pairs
  Provenance provenance;
  double val_ratio = 0;  // share of annotated frames held out for validation
  bool operator==(const SalientDataset&) const = default;
};

// Validation frames: the last round(val_ratio * N) of the N annotated frames.
// A contiguous tail keeps near-identical neighbouring frames on one side.
inline std::set<std::int32_t> validation_frames(const SalientDataset& ds) {
  if (!(ds.val_ratio >= 0 && ds.val_ratio <= 1)) throw ValidationError("val_ratio must be in [0, 1]");
  std::vector<std::int32_t> frames;
  for (const auto& it : ds.items) {
    if (frames.empty() || frames.back() != it.frame_index) frames.push_back(it.frame_index);
  }
  const auto n = static_cast<std::size_t>(std::llround(ds.val_ratio * static_cast<double>(frames.size())));
  return {frames.end() - static_cast<std::ptrdiff_t>(n), frames.end()};
}

// Keeps pixels set in at least ceil(n / 2) of the n masks.
inline BitMask aggregate_masks(std::span<const BitMask> masks) {
  if (masks.empty()) throw ValidationError("aggregate_masks needs at least one mask");
  for (const auto& m : masks) require_same_shape(masks.front(), m);
  if (masks.size() == 1) return masks.front();

  const auto threshold = static_cast<std::int64_t>((masks.size() + 1) / 2);
  std::vector<std::pair<std::uint64_t, std::int32_t>> events;
  for (const auto& m : masks) {
    for (const auto& iv : m.intervals()) {
      events.emplace_back(iv.begin, +1);
      events.emplace_back(iv.end, -1);
    }
  }
  std::sort(events.begin(), events.end());
  std::vector<BitMask::Interval> out;
  std::int64_t depth = 0;
  std::uint64_t open_at = 0;
  for (std::size_t i = 0; i < events.size();) {
    const std::uint64_t pos = events[i].first;
    const std::int64_t before = depth;
    for (; i < events.size() && events[i].first == pos; ++i) depth += events[i].second;
    if (before < threshold && depth >= threshold) {
      open_at = pos;
    } else if (before >= threshold && depth < threshold) {
      out.push_back({open_at, pos});
    }
  }
  return BitMask::from_intervals(masks.front().width(), masks.front().height(), out);
}

inline BitMask aggregate_masks(std::initializer_list<BitMask> masks) {
  return aggregate_masks(std::span<const BitMask>(masks.begin(), masks.size()));
}

namespace detail {

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline BBox median_box(std::span<const BBox> boxes) {
  std::vector<double> x0, y0, x1, y1;
  for (const auto& b : boxes) {
    x0.push_back(b.x_min());
    y0.push_back(b.y_min());
    x1.push_back(b.x_max());
    y1.push_back(b.y_max());
  }
  return BBox(median(x0), median(y0), median(x1), median(y1));
}

}  // namespace detail

// One item per (frame, object) that has member entries. Masked entries are
// fused by majority vote and the box is taken from the fused mask; when no
// member has a mask at that frame the box is the coordinate-wise median of
// the member boxes. A vote that leaves no pixels produces no item.
inline SalientDataset assemble_dataset(const TrackSet& ts, const ObjectAssignment& asg,
                                       unsigned threads = 1) {
  std::vector<std::optional<std::int32_t>> label_of(ts.tracks().size());
  std::vector<bool> covered(ts.tracks().size(), false);
  for (const auto& [id, label] : asg.labels) {
    auto idx = ts.index_of(id);
    if (!idx) throw ValidationError("assignment references unknown track '" + id + "'");
    if (label && (*label < 0 || *label >= asg.label_count)) {
      throw ValidationError("track '" + id + "' has out-of-range object label");
    }
    label_of[*idx] = label;
    covered[*idx] = true;
  }
  for (std::size_t i = 0; i < covered.size(); ++i) {
    if (!covered[i]) {
      throw ValidationError("assignment does not cover track '" + ts.tracks()[i].track_id + "'");
    }
  }

  const auto labels = static_cast<std::size_t>(asg.label_count);
  std::vector<std::vector<SalientItem>> per_frame(static_cast<std::size_t>(ts.frame_count()));
  parallel_for(per_frame.size(), threads, [&](std::size_t f) {
    const auto frame = static_cast<std::int32_t>(f);
    std::vector<std::vector<const TrackEntry*>> members(labels);
    for (auto [ti, ei] : ts.slots_at(frame)) {
      if (label_of[ti]) {
        members[static_cast<std::size_t>(*label_of[ti])].push_back(&ts.tracks()[ti].entries[ei]);
      }
    }
    for (std::size_t l = 0; l < labels; ++l) {
      if (members[l].empty()) continue;
      std::vector<BitMask> masks;
      std::vector<BBox> boxes;
      for (const auto* e : members[l]) {
        if (e->mask) masks.push_back(*e->mask);
        boxes.push_back(e->bbox);
      }
      const auto label = static_cast<std::int32_t>(l);
      if (!masks.empty()) {
        BitMask fused = aggregate_masks(masks);
        auto box = mask_to_bbox(fused);
        if (!box) continue;
        per_frame[f].push_back({frame, label, *box, std::move(fused)});
      } else {
        per_frame[f].push_back({frame, label, detail::median_box(boxes), std::nullopt});
      }
    }
  });

  SalientDataset ds;
  ds.video_id = ts.video_id();
  ds.width = ts.width();
  ds.height = ts.height();
  ds.label_count = asg.label_count;
  for (auto& items : per_frame) {
    for (auto& it : items) ds.items.push_back(std::move(it));
  }
  return ds;
}

struct ConsolidationResult {
  FrameClusterMap frame_clusters;
  std::vector<ClusterTrack> cluster_tracks;
  ObjectAssignment assignment;
  SalientDataset dataset;
};

// Spatial clustering, cluster tracks, temporal grouping, then assembly.
inline ConsolidationResult consolidate(const TrackSet& ts, const ClusterParams& params,
                                       std::string track_hash = {}) {
  ConsolidationResult r;
  r.frame_clusters = spatial_cluster(ts, params);
  r.cluster_tracks = build_cluster_tracks(ts, r.frame_clusters);
  r.assignment = temporal_cluster(r.cluster_tracks, params);
  r.dataset = assemble_dataset(ts, r.assignment, params.threads);
  r.dataset.provenance = {params, std::move(track_hash)};
  return r;
}

}  // namespace salient
