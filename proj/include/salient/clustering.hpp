#pragma once

// Track consolidation, clustering half: per-frame spatial clustering of
// track boxes, per-track "cluster tracks", and temporal grouping of tracks
// whose cluster tracks are similar.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "salient/dbscan.hpp"
#include "salient/error.hpp"
#include "salient/geometry.hpp"
#include "salient/parallel.hpp"
#include "salient/trackmodel.hpp"

namespace salient {

enum class SpatialMetric { kBBoxIoU, kMaskIoU };

inline const char* to_string(SpatialMetric m) {
  return m == SpatialMetric::kMaskIoU ? "mask_iou" : "bbox_iou";
}

struct MinSizePolicy {
  enum class Kind { kAppendixFormula, kFixed };
  Kind kind = Kind::kAppendixFormula;
  std::size_t fixed = 0;

  static MinSizePolicy appendix_formula() { return {}; }
  static MinSizePolicy fixed_size(std::size_t k) { return {Kind::kFixed, k}; }
  bool operator==(const MinSizePolicy&) const = default;
};

struct ClusterParams {
  double spatial_eps = 0.4;
  double temporal_eps = 0.4;
  std::size_t temporal_min_size = 2;
  MinSizePolicy spatial_min_size = MinSizePolicy::appendix_formula();
  SpatialMetric spatial_metric = SpatialMetric::kBBoxIoU;
  // Worker threads for per-frame work; results do not depend on it.
  unsigned threads = 1;

  void validate() const {
    if (!(spatial_eps > 0 && spatial_eps <= 1)) {
      throw ValidationError("spatial_eps must be in (0, 1]");
    }
    if (!(temporal_eps > 0 && temporal_eps <= 1)) {
      throw ValidationError("temporal_eps must be in (0, 1]");
    }
    if (temporal_min_size < 1) throw ValidationError("temporal_min_size must be >= 1");
    if (spatial_min_size.kind == MinSizePolicy::Kind::kFixed && spatial_min_size.fixed < 1) {
      throw ValidationError("fixed spatial min size must be >= 1");
    }
  }
};

// Spatial cluster assignment of every box at every frame. `at(f)[k]` is the
// cluster of the k-th slot of `TrackSet::slots_at(f)`, or kNoise.
class FrameClusterMap {
 public:
  FrameClusterMap() = default;
  explicit FrameClusterMap(std::vector<std::vector<std::int32_t>> per_frame)
      : per_frame_(std::move(per_frame)) {}

  const std::vector<std::int32_t>& at(std::int32_t frame) const {
    return per_frame_.at(static_cast<std::size_t>(frame));
  }
  std::size_t frame_count() const { return per_frame_.size(); }

  // Cluster of `track_index` at `frame`; nullopt when the track has no box
  // there.
  std::optional<std::int32_t> label_of(const TrackSet& ts, std::size_t track_index,
                                       std::int32_t frame) const {
    const auto& slots = ts.slots_at(frame);
    for (std::size_t k = 0; k < slots.size(); ++k) {
      if (slots[k].first == track_index) return at(frame)[k];
    }
    return std::nullopt;
  }

  bool operator==(const FrameClusterMap&) const = default;

 private:
  std::vector<std::vector<std::int32_t>> per_frame_;
};

struct ClusterTrack {
  std::string track_id;
  std::int32_t seed_frame = 0;
  LabelSet labels;
  bool operator==(const ClusterTrack&) const = default;
};

// Final partition of tracks into anonymous objects; nullopt marks a track
// discarded as noise.
struct ObjectAssignment {
  std::map<std::string, std::optional<std::int32_t>> labels;
  std::int32_t label_count = 0;

  std::size_t discarded_count() const {
    return static_cast<std::size_t>(std::count_if(
        labels.begin(), labels.end(), [](const auto& kv) { return !kv.second; }));
  }

  std::vector<std::string> members(std::int32_t label) const {
    std::vector<std::string> out;
    for (const auto& [id, l] : labels) {
      if (l && *l == label) out.push_back(id);
    }
    return out;
  }

  bool operator==(const ObjectAssignment&) const = default;
};

// max(1, floor(boxes at t / (2 * seed count))).
inline std::size_t spatial_min_size(const TrackSet& ts, std::int32_t t) {
  if (ts.seeds().empty()) {
    throw ValidationError(
        "spatial min cluster size formula needs seed masks; the track set has "
        "none, use a fixed min size instead");
  }
  const std::size_t boxes = ts.slots_at(t).size();
  return std::max<std::size_t>(1, boxes / (2 * ts.seeds().size()));
}

inline std::size_t resolve_spatial_min_size(const TrackSet& ts, std::int32_t t,
                                            const ClusterParams& p) {
  if (p.spatial_min_size.kind == MinSizePolicy::Kind::kFixed) return p.spatial_min_size.fixed;
  return spatial_min_size(ts, t);
}

// Per-frame DBSCAN over 1 - IoU. Under the mask metric, pairs where either
// entry is box-only fall back to box IoU.
inline FrameClusterMap spatial_cluster(const TrackSet& ts, const ClusterParams& p) {
  p.validate();
  if (p.spatial_min_size.kind == MinSizePolicy::Kind::kAppendixFormula &&
      ts.seeds().empty() && ts.entry_count() > 0) {
    spatial_min_size(ts, 0);  // throws the policy error
  }
  std::vector<std::vector<std::int32_t>> per_frame(static_cast<std::size_t>(ts.frame_count()));
  parallel_for(per_frame.size(), p.threads, [&](std::size_t f) {
    const auto frame = static_cast<std::int32_t>(f);
    const auto& slots = ts.slots_at(frame);
    if (slots.empty()) return;
    auto entry = [&](std::size_t k) -> const TrackEntry& {
      return ts.tracks()[slots[k].first].entries[slots[k].second];
    };
    auto dist = [&](std::size_t i, std::size_t j) {
      const auto& a = entry(i);
      const auto& b = entry(j);
      if (p.spatial_metric == SpatialMetric::kMaskIoU && a.mask && b.mask) {
        return 1.0 - iou_mask(*a.mask, *b.mask);
      }
      return 1.0 - iou_bbox(a.bbox, b.bbox);
    };
    per_frame[f] = dbscan(slots.size(), dist, p.spatial_eps,
                          resolve_spatial_min_size(ts, frame, p));
  });
  return FrameClusterMap(std::move(per_frame));
}

// Noise label of a track at a frame: unique to that (track, frame) pair so
// it can only ever enlarge a union, never an intersection.
inline FrameLabel noise_label(std::int32_t frame, std::size_t track_index) {
  return {frame, -1 - static_cast<std::int32_t>(track_index)};
}

inline std::vector<ClusterTrack> build_cluster_tracks(const TrackSet& ts,
                                                      const FrameClusterMap& fcm) {
  if (fcm.frame_count() != static_cast<std::size_t>(ts.frame_count())) {
    throw ValidationError("frame cluster map does not match the track set");
  }
  std::vector<std::vector<FrameLabel>> labels(ts.tracks().size());
  for (std::int32_t f = 0; f < ts.frame_count(); ++f) {
    const auto& slots = ts.slots_at(f);
    const auto& clusters = fcm.at(f);
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const std::size_t ti = slots[k].first;
      labels[ti].push_back(clusters[k] == kNoise ? noise_label(f, ti)
                                                 : FrameLabel{f, clusters[k]});
    }
  }
  std::vector<ClusterTrack> out;
  out.reserve(ts.tracks().size());
  for (std::size_t ti = 0; ti < ts.tracks().size(); ++ti) {
    const auto& t = ts.tracks()[ti];
    out.push_back({t.track_id, t.seed_frame, LabelSet(std::move(labels[ti]))});
  }
  return out;
}

// DBSCAN over tracks with distance 1 - Jaccard. Input order does not
// matter: tracks are processed by ascending track_id and objects are
// numbered by their earliest member seed_frame (then smallest track_id).
inline ObjectAssignment temporal_cluster(std::vector<ClusterTrack> cts,
                                         const ClusterParams& p) {
  p.validate();
  std::sort(cts.begin(), cts.end(),
            [](const ClusterTrack& a, const ClusterTrack& b) { return a.track_id < b.track_id; });
  for (std::size_t i = 0; i + 1 < cts.size(); ++i) {
    if (cts[i].track_id == cts[i + 1].track_id) {
      throw ValidationError("duplicate cluster track '" + cts[i].track_id + "'");
    }
  }
  const auto raw = dbscan(
      cts.size(),
      [&](std::size_t i, std::size_t j) { return jaccard_distance(cts[i].labels, cts[j].labels); },
      p.temporal_eps, p.temporal_min_size);

  std::int32_t clusters = 0;
  for (auto l : raw) clusters = std::max(clusters, l + 1);
  struct Key {
    std::int32_t seed_frame = std::numeric_limits<std::int32_t>::max();
    std::size_t first_index = std::numeric_limits<std::size_t>::max();
  };
  std::vector<Key> keys(static_cast<std::size_t>(clusters));
  for (std::size_t i = 0; i < cts.size(); ++i) {
    if (raw[i] == kNoise) continue;
    auto& k = keys[static_cast<std::size_t>(raw[i])];
    k.seed_frame = std::min(k.seed_frame, cts[i].seed_frame);
    k.first_index = std::min(k.first_index, i);
  }
  std::vector<std::int32_t> order(static_cast<std::size_t>(clusters));
  for (std::int32_t c = 0; c < clusters; ++c) order[static_cast<std::size_t>(c)] = c;
  std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    const auto& ka = keys[static_cast<std::size_t>(a)];
    const auto& kb = keys[static_cast<std::size_t>(b)];
    if (ka.seed_frame != kb.seed_frame) return ka.seed_frame < kb.seed_frame;
    return ka.first_index < kb.first_index;
  });
  std::vector<std::int32_t> renumber(static_cast<std::size_t>(clusters));
  for (std::int32_t rank = 0; rank < clusters; ++rank) {
    renumber[static_cast<std::size_t>(order[static_cast<std::size_t>(rank)])] = rank;
  }

  ObjectAssignment asg;
  asg.label_count = clusters;
  for (std::size_t i = 0; i < cts.size(); ++i) {
    asg.labels[cts[i].track_id] =
        raw[i] == kNoise ? std::nullopt
                         : std::optional<std::int32_t>(renumber[static_cast<std::size_t>(raw[i])]);
  }
  return asg;
}

}  // namespace salient
