#pragma once

// Object-centric scene graph fed by labeled, segmented point-cloud
// observations. Observations pass a two-threshold fitness gate, may be held
// back until every label of their acceptance group is seen, and are then
// either merged into the best-overlapping same-label node or added as a new
// node. Queries rank same-label nodes by score unless one is locked.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "salient/error.hpp"
#include "salient/io_util.hpp"

namespace salient {

struct Point3 {
  double x = 0, y = 0, z = 0;
  bool operator==(const Point3&) const = default;
};

using Pose6 = std::array<double, 6>;

struct Observation {
  double timestamp = 0;
  std::string label;
  double seg_score = 0;
  std::vector<Point3> points;
  std::optional<Pose6> pose;
};

struct FitnessParams {
  double alpha = 1000.0;
  double seg_threshold = 0.3;
  double pix_threshold = 10.0;
  double sighting_weight = 0.02;
  double association_overlap_threshold = 0.5;
  double nn_radius = 0.02;  // meters

  void validate() const {
    if (!(alpha > 0 && seg_threshold > 0 && pix_threshold > 0 && sighting_weight > 0 &&
          association_overlap_threshold > 0 && nn_radius > 0)) {
      throw ValidationError("fitness parameters must all be positive");
    }
  }
};

struct AcceptanceGroup {
  std::set<std::string> labels;
  double window = 0;  // seconds; 0 means identical timestamps
};

// S_seg / sqrt(N_p) * alpha.
inline double pixel_confidence(const Observation& obs, const FitnessParams& p) {
  if (obs.points.empty()) throw ValidationError("pixel confidence of an empty point cloud");
  return obs.seg_score / std::sqrt(static_cast<double>(obs.points.size())) * p.alpha;
}

enum class FitVerdict { kAccept, kRejectSegScore, kRejectPixelConfidence, kRejectEmpty };

inline const char* to_string(FitVerdict v) {
  switch (v) {
    case FitVerdict::kAccept: return "accept";
    case FitVerdict::kRejectSegScore: return "reject(seg)";
    case FitVerdict::kRejectPixelConfidence: return "reject(pix)";
    default: return "reject(empty)";
  }
}

// Both thresholds are inclusive.
inline FitVerdict frame_fit(const Observation& obs, const FitnessParams& p) {
  if (!(obs.seg_score >= p.seg_threshold)) return FitVerdict::kRejectSegScore;
  if (obs.points.empty()) return FitVerdict::kRejectEmpty;
  if (!(pixel_confidence(obs, p) >= p.pix_threshold)) return FitVerdict::kRejectPixelConfidence;
  return FitVerdict::kAccept;
}

class SceneNode {
 public:
  SceneNode(std::int64_t id, const Observation& obs, double cell)
      : id_(id), label_(obs.label), seg_score_(obs.seg_score), pose_(obs.pose), cell_(cell) {
    add_points(obs.points);
  }

  std::int64_t node_id() const { return id_; }
  const std::string& label() const { return label_; }
  double seg_score() const { return seg_score_; }
  std::int64_t sightings() const { return sightings_; }
  bool locked() const { return locked_; }
  const std::vector<Point3>& points() const { return points_; }

  // Supplied 6D pose if any, else the cloud centroid with zero rotation.
  Pose6 pose() const {
    if (pose_) return *pose_;
    Pose6 out{};
    for (const auto& q : points_) {
      out[0] += q.x;
      out[1] += q.y;
      out[2] += q.z;
    }
    const double n = points_.empty() ? 1.0 : static_cast<double>(points_.size());
    out[0] /= n;
    out[1] /= n;
    out[2] /= n;
    return out;
  }

  // Fraction of `pts` with a node point within `radius` (inclusive).
  double overlap(const std::vector<Point3>& pts, double radius) const {
    if (pts.empty()) return 0.0;
    std::size_t hits = 0;
    const double r2 = radius * radius;
    for (const auto& q : pts) {
      const auto [cx, cy, cz] = cell_of(q);
      bool found = false;
      for (int dx = -1; dx <= 1 && !found; ++dx) {
        for (int dy = -1; dy <= 1 && !found; ++dy) {
          for (int dz = -1; dz <= 1 && !found; ++dz) {
            auto it = grid_.find(key(cx + dx, cy + dy, cz + dz));
            if (it == grid_.end()) continue;
            for (std::uint32_t idx : it->second) {
              const auto& s = points_[idx];
              const double d2 = (s.x - q.x) * (s.x - q.x) + (s.y - q.y) * (s.y - q.y) +
                                (s.z - q.z) * (s.z - q.z);
              if (d2 <= r2) {
                found = true;
                break;
              }
            }
          }
        }
      }
      if (found) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(pts.size());
  }

 private:
  friend class SceneGraph;

  void merge(const Observation& obs) {
    ++sightings_;
    seg_score_ = std::max(seg_score_, obs.seg_score);
    if (obs.pose) pose_ = obs.pose;
    add_points(obs.points);
  }

  void add_points(const std::vector<Point3>& pts) {
    for (const auto& q : pts) {
      const auto [cx, cy, cz] = cell_of(q);
      grid_[key(cx, cy, cz)].push_back(static_cast<std::uint32_t>(points_.size()));
      points_.push_back(q);
    }
  }

  std::array<std::int64_t, 3> cell_of(const Point3& q) const {
    return {static_cast<std::int64_t>(std::floor(q.x / cell_)),
            static_cast<std::int64_t>(std::floor(q.y / cell_)),
            static_cast<std::int64_t>(std::floor(q.z / cell_))};
  }

  static std::uint64_t key(std::int64_t x, std::int64_t y, std::int64_t z) {
    const auto h = [](std::int64_t v) { return static_cast<std::uint64_t>(v) * 0x9E3779B97F4A7C15ULL; };
    return h(x) ^ (h(y) >> 1) ^ (h(z) << 1) ^ static_cast<std::uint64_t>(z);
  }

  std::int64_t id_;
  std::string label_;
  double seg_score_;
  std::int64_t sightings_ = 1;
  bool locked_ = false;
  std::optional<Pose6> pose_;
  double cell_;
  std::vector<Point3> points_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> grid_;
};

// S_seg + w * (N_s - 1).
inline double object_score(const SceneNode& n, const FitnessParams& p) {
  return n.seg_score() + p.sighting_weight * static_cast<double>(n.sightings() - 1);
}

struct Association {
  std::optional<std::int64_t> merge_into;  // nullopt: new node
  double overlap = 0;
};

enum class IntegrateOutcome { kRejected, kBuffered, kIntegrated };

class SceneGraph {
 public:
  explicit SceneGraph(FitnessParams params = {}, std::vector<AcceptanceGroup> groups = {})
      : params_(params), groups_(std::move(groups)) {
    params_.validate();
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      if (groups_[g].window < 0) throw ValidationError("acceptance group window must be >= 0");
      if (groups_[g].labels.empty()) throw ValidationError("acceptance group has no labels");
      for (const auto& l : groups_[g].labels) {
        if (!group_of_.emplace(l, g).second) {
          throw ValidationError("label '" + l + "' belongs to more than one acceptance group");
        }
      }
    }
    pending_.resize(groups_.size());
  }

  const FitnessParams& params() const { return params_; }
  const std::vector<SceneNode>& nodes() const { return nodes_; }

  const SceneNode* find(std::int64_t node_id) const {
    for (const auto& n : nodes_) {
      if (n.node_id() == node_id) return &n;
    }
    return nullptr;
  }

  // Best same-label node by point overlap; merge when the overlap reaches
  // the threshold (inclusive), ties to the lower node id.
  Association associate(const Observation& obs) const {
    Association a;
    const SceneNode* best = nullptr;
    for (const auto& n : nodes_) {
      if (n.label() != obs.label) continue;
      const double ov = n.overlap(obs.points, params_.nn_radius);
      if (!best || ov > a.overlap) {
        best = &n;
        a.overlap = ov;
      }
    }
    if (best && a.overlap >= params_.association_overlap_threshold) a.merge_into = best->node_id();
    return a;
  }

  IntegrateOutcome integrate(const Observation& obs) {
    if (frame_fit(obs, params_) != FitVerdict::kAccept) return IntegrateOutcome::kRejected;
    auto g = group_of_.find(obs.label);
    if (g == group_of_.end()) {
      insert(obs);
      return IntegrateOutcome::kIntegrated;
    }
    const auto& group = groups_[g->second];
    auto& pending = pending_[g->second];
    std::erase_if(pending, [&](const Observation& o) {
      return std::abs(o.timestamp - obs.timestamp) > group.window;
    });
    pending.push_back(obs);

    // One observation per label: the highest segmentation score, earliest
    // on ties, integrated in arrival order.
    std::map<std::string, std::size_t> chosen;
    for (std::size_t i = 0; i < pending.size(); ++i) {
      auto [it, fresh] = chosen.emplace(pending[i].label, i);
      if (!fresh && pending[i].seg_score > pending[it->second].seg_score) it->second = i;
    }
    if (chosen.size() < group.labels.size()) return IntegrateOutcome::kBuffered;
    std::vector<std::size_t> picks;
    for (const auto& [label, i] : chosen) picks.push_back(i);
    std::sort(picks.begin(), picks.end());
    std::vector<Observation> batch;
    for (auto i : picks) batch.push_back(std::move(pending[i]));
    pending.clear();
    for (const auto& o : batch) insert(o);
    return IntegrateOutcome::kIntegrated;
  }

  // At most one locked node per label.
  void lock(std::int64_t node_id) {
    SceneNode& n = node_ref(node_id);
    for (const auto& other : nodes_) {
      if (other.locked() && other.label() == n.label() && other.node_id() != node_id) {
        throw ValidationError("label '" + n.label() + "' already has locked node " +
                              std::to_string(other.node_id()));
      }
    }
    n.locked_ = true;
  }

  void unlock(std::int64_t node_id) { node_ref(node_id).locked_ = false; }

  // Drops every node of `label` along with any buffered observations of it.
  void forget(const std::string& label) {
    std::erase_if(nodes_, [&](const SceneNode& n) { return n.label() == label; });
    for (auto& p : pending_) {
      std::erase_if(p, [&](const Observation& o) { return o.label == label; });
    }
  }

  // Locked node if present, else the highest object score (ties to the
  // lower node id).
  const SceneNode* query(const std::string& label) const {
    const SceneNode* best = nullptr;
    for (const auto& n : nodes_) {
      if (n.label() != label) continue;
      if (n.locked()) return &n;
      if (!best || object_score(n, params_) > object_score(*best, params_)) best = &n;
    }
    return best;
  }

  // Total observations integrated per label.
  const std::map<std::string, std::int64_t>& integrated_counts() const { return integrated_; }

 private:
  SceneNode& node_ref(std::int64_t node_id) {
    for (auto& n : nodes_) {
      if (n.node_id() == node_id) return n;
    }
    throw ValidationError("no scene node with id " + std::to_string(node_id));
  }

  void insert(const Observation& obs) {
    ++integrated_[obs.label];
    const Association a = associate(obs);
    if (a.merge_into) {
      node_ref(*a.merge_into).merge(obs);
    } else {
      nodes_.emplace_back(next_id_++, obs, params_.nn_radius);
    }
  }

  FitnessParams params_;
  std::vector<AcceptanceGroup> groups_;
  std::map<std::string, std::size_t> group_of_;
  std::vector<std::vector<Observation>> pending_;
  std::vector<SceneNode> nodes_;
  std::int64_t next_id_ = 0;
  std::map<std::string, std::int64_t> integrated_;
};

// --- Replay files -----------------------------------------------------------
//
// Stream: JSONL, one record per line. Observations:
//   {"t":..,"label":..,"seg_score":..,"points":[[x,y,z],..],"pose":[6 numbers]?}
// Operator directives:
//   {"directive":"lock"|"unlock","node_id":..}  or  {"directive":"lock","label":..}
//   {"directive":"forget","label":..}
// Groups: JSON array of {"labels":[..],"window":seconds}.

struct ReplayStats {
  std::size_t observations = 0;
  std::size_t rejected = 0;
  std::size_t buffered = 0;
  std::size_t integrated = 0;
  std::size_t directives = 0;
};

inline Observation observation_from_json(const Json& j, const std::string& path) {
  using namespace detail;
  Observation o;
  o.timestamp = get_number(field(j, "t", path), path + ".t");
  o.label = get_string(field(j, "label", path), path + ".label");
  o.seg_score = get_number(field(j, "seg_score", path), path + ".seg_score");
  if (!(o.seg_score >= 0 && o.seg_score <= 1)) {
    throw ValidationError(path + ".seg_score: outside [0, 1]");
  }
  const Json& pts = field(j, "points", path);
  if (!pts.is_array()) throw ValidationError(path + ".points: expected an array");
  o.points.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const std::string pp = path + ".points[" + std::to_string(i) + "]";
    if (!pts[i].is_array() || pts[i].size() != 3) throw ValidationError(pp + ": expected [x, y, z]");
    o.points.push_back({get_number(pts[i][0], pp), get_number(pts[i][1], pp), get_number(pts[i][2], pp)});
  }
  if (auto it = j.find("pose"); it != j.end() && !it->is_null()) {
    if (!it->is_array() || it->size() != 6) throw ValidationError(path + ".pose: expected 6 numbers");
    Pose6 pose{};
    for (std::size_t i = 0; i < 6; ++i) pose[i] = get_number((*it)[i], path + ".pose");
    o.pose = pose;
  }
  return o;
}

inline Json observation_to_json(const Observation& o) {
  Json j;
  j["t"] = o.timestamp;
  j["label"] = o.label;
  j["seg_score"] = o.seg_score;
  Json pts = Json::array();
  for (const auto& q : o.points) pts.push_back(Json::array({q.x, q.y, q.z}));
  j["points"] = std::move(pts);
  if (o.pose) j["pose"] = *o.pose;
  return j;
}

inline std::vector<AcceptanceGroup> parse_groups(std::string_view text) {
  using namespace detail;
  const Json root = parse_json(text, "acceptance groups");
  if (!root.is_array()) throw ValidationError("$: acceptance groups must be an array");
  std::vector<AcceptanceGroup> out;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const std::string p = "$[" + std::to_string(i) + "]";
    AcceptanceGroup g;
    const Json& labels = field(root[i], "labels", p);
    if (!labels.is_array()) throw ValidationError(p + ".labels: expected an array");
    for (std::size_t k = 0; k < labels.size(); ++k) {
      g.labels.insert(get_string(labels[k], p + ".labels[" + std::to_string(k) + "]"));
    }
    if (auto it = root[i].find("window"); it != root[i].end()) g.window = get_number(*it, p + ".window");
    out.push_back(std::move(g));
  }
  return out;
}

// Applies a JSONL stream to `graph`; errors carry the 1-based line number.
inline ReplayStats replay_stream(SceneGraph& graph, std::string_view text) {
  using namespace detail;
  ReplayStats stats;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    try {
      if (!j.is_object()) throw ValidationError("$: expected an object");
      if (auto d = j.find("directive"); d != j.end()) {
        ++stats.directives;
        const std::string kind = get_string(*d, "$.directive");
        if (kind == "forget") {
          graph.forget(get_string(field(j, "label", "$"), "$.label"));
          continue;
        }
        std::int64_t id = 0;
        if (j.contains("node_id")) {
          id = get_integer(j["node_id"], "$.node_id");
        } else {
          const auto label = get_string(field(j, "label", "$"), "$.label");
          const SceneNode* n = graph.query(label);
          if (!n) throw ValidationError("no node with label '" + label + "' to " + kind);
          id = n->node_id();
        }
        if (kind == "lock") {
          graph.lock(id);
        } else if (kind == "unlock") {
          graph.unlock(id);
        } else {
          throw ValidationError("unknown directive '" + kind + "'");
        }
        continue;
      }
      ++stats.observations;
      switch (graph.integrate(observation_from_json(j, "$"))) {
        case IntegrateOutcome::kRejected: ++stats.rejected; break;
        case IntegrateOutcome::kBuffered: ++stats.buffered; break;
        case IntegrateOutcome::kIntegrated: ++stats.integrated; break;
      }
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return stats;
}

inline Json graph_to_json(const SceneGraph& g) {
  Json nodes = Json::array();
  for (const auto& n : g.nodes()) {
    Json j;
    j["node_id"] = n.node_id();
    j["label"] = n.label();
    j["seg_score"] = n.seg_score();
    j["sightings"] = n.sightings();
    j["score"] = object_score(n, g.params());
    j["point_count"] = n.points().size();
    j["locked"] = n.locked();
    j["pose"] = n.pose();
    nodes.push_back(std::move(j));
  }
  Json root;
  root["nodes"] = std::move(nodes);
  return root;
}

}  // namespace salient
