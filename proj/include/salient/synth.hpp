#pragma once

// Synthetic scenes with known ground truth: objects on piecewise-linear
// trajectories, jittered forward/backward tracks per seed, and short
// random-walk spurious tracks. Also scores an object assignment against the
// truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "salient/clustering.hpp"
#include "salient/error.hpp"
#include "salient/geometry.hpp"
#include "salient/parallel.hpp"
#include "salient/trackmodel.hpp"

namespace salient {

struct OcclusionWindow {
  std::int32_t object = 0;
  std::int32_t begin = 0;  // inclusive
  std::int32_t end = 0;    // exclusive
  bool operator==(const OcclusionWindow&) const = default;
};

struct SynthConfig {
  std::int32_t object_count = 2;
  std::int32_t frame_count = 50;
  std::uint32_t width = 640;
  std::uint32_t height = 480;
  std::int32_t seeds_per_object = 1;
  double jitter = 0.0;  // per-coordinate std dev in pixels
  std::int32_t spurious_track_count = 0;
  std::int32_t spurious_max_length = 5;
  std::vector<OcclusionWindow> occlusions;
  std::uint64_t seed = 1;
  bool masks = true;
  // Minimum IoU of a jittered box with its true box; draws below it are
  // redrawn.
  double min_jitter_iou = 0.6;

  void validate() const {
    if (object_count < 1) throw ValidationError("object_count must be >= 1");
    if (frame_count < 2) throw ValidationError("frame_count must be >= 2");
    if (width < 32 || height < 32) throw ValidationError("canvas must be at least 32x32");
    if (seeds_per_object < 1) throw ValidationError("seeds_per_object must be >= 1");
    if (!(jitter >= 0)) throw ValidationError("jitter must be >= 0");
    if (spurious_track_count < 0) throw ValidationError("spurious_track_count must be >= 0");
    if (spurious_max_length < 2) throw ValidationError("spurious_max_length must be >= 2");
    if (!(min_jitter_iou > 0 && min_jitter_iou <= 1)) throw ValidationError("min_jitter_iou must be in (0, 1]");
    for (const auto& o : occlusions) {
      if (o.object < 0 || o.object >= object_count || o.begin < 0 || o.end > frame_count ||
          o.begin >= o.end) {
        throw ValidationError("occlusion window out of range");
      }
    }
  }
};

// Track id -> true object id; nullopt marks a spurious track.
struct GroundTruth {
  std::map<std::string, std::optional<std::int32_t>> objects;
  bool operator==(const GroundTruth&) const = default;
};

struct SynthScene {
  TrackSet tracks;
  GroundTruth truth;
};

namespace detail {

// Portable draws on top of mt19937_64, whose output sequence is fixed by
// the standard (the std distributions are not).
class SynthRng {
 public:
  SynthRng(std::uint64_t seed, std::uint32_t stream, std::uint32_t sub = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      stream, sub};
    eng_.seed(seq);
  }
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {  // inclusive
    return lo + static_cast<std::int64_t>(eng_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 eng_;
};

struct IntBox {
  std::int64_t x0, y0, x1, y1;
  BBox bbox() const {
    return BBox(static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1),
                static_cast<double>(y1));
  }
};

inline IntBox clip(IntBox b, std::uint32_t w, std::uint32_t h) {
  b.x0 = std::clamp<std::int64_t>(b.x0, 0, w);
  b.x1 = std::clamp<std::int64_t>(b.x1, 0, w);
  b.y0 = std::clamp<std::int64_t>(b.y0, 0, h);
  b.y1 = std::clamp<std::int64_t>(b.y1, 0, h);
  return b;
}

inline bool valid(const IntBox& b) { return b.x1 > b.x0 && b.y1 > b.y0; }

inline double iou(const IntBox& a, const IntBox& b) { return iou_bbox(a.bbox(), b.bbox()); }

inline TrackEntry make_entry(std::int32_t frame, const IntBox& b, const SynthConfig& cfg) {
  TrackEntry e{frame, b.bbox(), std::nullopt};
  if (cfg.masks) e.mask = BitMask::rectangle(cfg.width, cfg.height, b.x0, b.y0, b.x1, b.y1);
  return e;
}

// Constant-size box moving linearly between 2-4 random waypoints.
inline std::vector<IntBox> trajectory(const SynthConfig& cfg, SynthRng& rng) {
  const double W = cfg.width, H = cfg.height;
  const double bw = std::max(4.0, std::round(rng.uniform(0.08, 0.16) * W));
  const double bh = std::max(4.0, std::round(rng.uniform(0.08, 0.16) * H));
  const auto waypoints = rng.integer(2, 4);
  std::vector<double> wf{0.0}, wx, wy;
  for (std::int64_t k = 1; k + 1 < waypoints; ++k) wf.push_back(rng.uniform(0, cfg.frame_count - 1));
  wf.push_back(cfg.frame_count - 1);
  std::sort(wf.begin(), wf.end());
  for (std::size_t k = 0; k < wf.size(); ++k) {
    wx.push_back(rng.uniform(0, W - bw));
    wy.push_back(rng.uniform(0, H - bh));
  }
  std::vector<IntBox> out;
  std::size_t seg = 0;
  for (std::int32_t t = 0; t < cfg.frame_count; ++t) {
    while (seg + 2 < wf.size() && t > wf[seg + 1]) ++seg;
    const double span = wf[seg + 1] - wf[seg];
    const double a = span > 0 ? std::clamp((t - wf[seg]) / span, 0.0, 1.0) : 0.0;
    const auto x = static_cast<std::int64_t>(std::lround(wx[seg] + a * (wx[seg + 1] - wx[seg])));
    const auto y = static_cast<std::int64_t>(std::lround(wy[seg] + a * (wy[seg + 1] - wy[seg])));
    out.push_back({x, y, x + static_cast<std::int64_t>(bw), y + static_cast<std::int64_t>(bh)});
  }
  return out;
}

inline IntBox jittered(const IntBox& truth, const SynthConfig& cfg, SynthRng& rng) {
  if (cfg.jitter == 0) return truth;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    IntBox b{truth.x0 + std::lround(rng.normal() * cfg.jitter),
             truth.y0 + std::lround(rng.normal() * cfg.jitter),
             truth.x1 + std::lround(rng.normal() * cfg.jitter),
             truth.y1 + std::lround(rng.normal() * cfg.jitter)};
    b = clip(b, cfg.width, cfg.height);
    if (valid(b) && iou(b, truth) >= cfg.min_jitter_iou) return b;
  }
  return truth;
}

inline std::string object_track_id(std::int32_t object, std::int32_t seed, bool forward) {
  return "obj" + std::to_string(object) + "_s" + std::to_string(seed) + (forward ? "_fwd" : "_bwd");
}

}  // namespace detail

// Trajectories are drawn one object at a time; an object whose path
// overlaps an earlier one in more than a tenth of the frames is redrawn
// (up to 200 times, then kept). Track jitter uses one rng stream per track,
// so `threads` does not affect the output.
inline SynthScene generate(const SynthConfig& cfg, unsigned threads = 1) {
  using namespace detail;
  cfg.validate();
  const auto K = static_cast<std::size_t>(cfg.object_count);
  const auto T = cfg.frame_count;

  std::vector<std::vector<IntBox>> paths;
  for (std::size_t k = 0; k < K; ++k) {
    SynthRng rng(cfg.seed, static_cast<std::uint32_t>(k), 0);
    std::vector<IntBox> path;
    for (int attempt = 0; attempt < 200; ++attempt) {
      path = trajectory(cfg, rng);
      bool crowded = false;
      for (const auto& other : paths) {
        std::int32_t overlap = 0;
        for (std::int32_t t = 0; t < T; ++t) overlap += iou(path[t], other[t]) > 0 ? 1 : 0;
        crowded = crowded || overlap * 10 > T;
      }
      if (!crowded) break;
    }
    paths.push_back(std::move(path));
  }

  auto visible = [&](std::size_t k, std::int32_t t) {
    for (const auto& o : cfg.occlusions) {
      if (static_cast<std::size_t>(o.object) == k && t >= o.begin && t < o.end) return false;
    }
    return true;
  };

  struct Plan {
    std::int32_t object;  // -1 for spurious
    std::int32_t seed;
    bool forward;
    std::int32_t seed_frame;
  };
  std::vector<SeedMask> seeds;
  std::vector<Plan> plans;
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<std::int32_t> frames;
    for (std::int32_t t = 0; t < T; ++t) {
      if (visible(k, t)) frames.push_back(t);
    }
    if (frames.empty()) throw ValidationError("object " + std::to_string(k) + " is never visible");
    SynthRng rng(cfg.seed, static_cast<std::uint32_t>(k), 1);
    for (std::int32_t s = 0; s < cfg.seeds_per_object; ++s) {
      const auto f = frames[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(frames.size()) - 1))];
      const auto& b = paths[k][static_cast<std::size_t>(f)];
      seeds.push_back({f, BitMask::rectangle(cfg.width, cfg.height, b.x0, b.y0, b.x1, b.y1)});
      plans.push_back({static_cast<std::int32_t>(k), s, true, f});
      plans.push_back({static_cast<std::int32_t>(k), s, false, f});
    }
  }
  for (std::int32_t j = 0; j < cfg.spurious_track_count; ++j) plans.push_back({-1, j, true, 0});

  std::vector<Track> tracks(plans.size());
  parallel_for(plans.size(), threads, [&](std::size_t i) {
    const Plan& p = plans[i];
    Track& tr = tracks[i];
    if (p.object >= 0) {
      const auto k = static_cast<std::size_t>(p.object);
      SynthRng rng(cfg.seed, static_cast<std::uint32_t>(k), 2 + static_cast<std::uint32_t>(i));
      tr.track_id = object_track_id(p.object, p.seed, p.forward);
      tr.seed_frame = p.seed_frame;
      tr.direction = p.forward ? Direction::kForward : Direction::kBackward;
      for (std::int32_t t = 0; t < T; ++t) {
        if (!visible(k, t)) continue;
        tr.entries.push_back(make_entry(t, jittered(paths[k][static_cast<std::size_t>(t)], cfg, rng), cfg));
      }
      return;
    }
    SynthRng rng(cfg.seed, 0x5eed0000u + static_cast<std::uint32_t>(p.seed), 0);
    const auto len = static_cast<std::int32_t>(rng.integer(2, std::min(cfg.spurious_max_length, T)));
    const auto start = static_cast<std::int32_t>(rng.integer(0, T - len));
    const double W = cfg.width, H = cfg.height;
    const double bw = std::round(rng.uniform(0.05, 0.12) * W);
    const double bh = std::round(rng.uniform(0.05, 0.12) * H);
    double x = rng.uniform(0, W - bw), y = rng.uniform(0, H - bh);
    tr.track_id = "spur" + std::to_string(p.seed);
    tr.seed_frame = start;
    for (std::int32_t t = start; t < start + len; ++t) {
      const auto xi = std::lround(x), yi = std::lround(y);
      tr.entries.push_back(make_entry(t, IntBox{xi, yi, xi + static_cast<std::int64_t>(bw), yi + static_cast<std::int64_t>(bh)}, cfg));
      x = std::clamp(x + rng.normal() * 0.02 * W, 0.0, W - bw);
      y = std::clamp(y + rng.normal() * 0.02 * H, 0.0, H - bh);
    }
  });

  SynthScene scene;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    scene.truth.objects[tracks[i].track_id] =
        plans[i].object >= 0 ? std::optional<std::int32_t>(plans[i].object) : std::nullopt;
  }
  scene.tracks = TrackSet({"synth-" + std::to_string(cfg.seed), T, cfg.width, cfg.height},
                          std::move(seeds), std::move(tracks));
  return scene;
}

// Five-frame scene of two objects that coincide at frame 30, plus a short
// spurious track. Tracks are named by color: red, yellow and blue follow
// object 0 (blue is lost before frame 48), green and purple follow object 1,
// magenta is the spurious track at frames 20 and 30.
inline SynthScene fig3_scene() {
  using detail::IntBox;
  const std::uint32_t W = 200, H = 120;
  const std::vector<std::int32_t> frames{18, 20, 30, 40, 48};
  // True boxes per key frame; index 2 (frame 30) is shared.
  const std::vector<IntBox> a{{20, 20, 60, 60}, {40, 25, 80, 65}, {80, 40, 120, 80},
                              {120, 20, 160, 60}, {140, 10, 180, 50}};
  const std::vector<IntBox> b{{30, 70, 70, 110}, {50, 65, 90, 105}, {80, 40, 120, 80},
                              {110, 70, 150, 110}, {140, 70, 180, 110}};
  struct Spec {
    const char* id;
    const std::vector<IntBox>* path;
    std::int32_t seed_frame;
    Direction dir;
    std::int64_t dx, dy;  // fixed per-track offset
    std::size_t frames_used;
  };
  const std::vector<Spec> specs{
      {"red", &a, 18, Direction::kForward, 0, 0, 5},
      {"yellow", &a, 18, Direction::kBackward, 1, -1, 5},
      {"blue", &a, 40, Direction::kForward, -1, 1, 4},
      {"green", &b, 30, Direction::kForward, 1, 0, 5},
      {"purple", &b, 30, Direction::kBackward, 0, 1, 5},
  };
  auto entry = [&](std::int32_t f, const IntBox& box) {
    return TrackEntry{f, box.bbox(), BitMask::rectangle(W, H, box.x0, box.y0, box.x1, box.y1)};
  };
  std::vector<Track> tracks;
  SynthScene scene;
  for (const auto& s : specs) {
    Track t{s.id, s.seed_frame, s.dir, {}};
    for (std::size_t i = 0; i < s.frames_used; ++i) {
      const IntBox& p = (*s.path)[i];
      t.entries.push_back(entry(frames[i], {p.x0 + s.dx, p.y0 + s.dy, p.x1 + s.dx, p.y1 + s.dy}));
    }
    scene.truth.objects[s.id] = s.path == &a ? 0 : 1;
    tracks.push_back(std::move(t));
  }
  Track magenta{"magenta", 20, Direction::kUnspecified,
                {entry(20, {170, 2, 195, 20}), entry(30, {165, 5, 190, 25})}};
  scene.truth.objects["magenta"] = std::nullopt;
  tracks.push_back(std::move(magenta));

  auto seed = [&](std::int32_t f, const IntBox& box) {
    return SeedMask{f, BitMask::rectangle(W, H, box.x0, box.y0, box.x1, box.y1)};
  };
  std::vector<SeedMask> seeds{seed(18, a[0]), seed(40, a[3]), seed(30, b[2])};
  scene.tracks = TrackSet({"fig3", 50, W, H}, std::move(seeds), std::move(tracks));
  return scene;
}

// key = value lines; '#' comments. Keys mirror SynthConfig fields;
// `occlusion = object:begin-end` may repeat.
inline SynthConfig parse_synth_config(std::string_view text) {
  SynthConfig cfg;
  std::size_t pos = 0, line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (pos < text.size()) {
    const std::size_t nl = std::min(text.find('\n', pos), text.size());
    std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto as_int = [&]() -> std::int64_t {
      std::size_t used = 0;
      std::int64_t v = 0;
      try {
        v = std::stoll(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != value.size()) throw ParseError(key + ": expected an integer", line_no);
      return v;
    };
    auto as_double = [&]() -> double {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != value.size()) throw ParseError(key + ": expected a number", line_no);
      return v;
    };
    auto as_u32 = [&]() -> std::uint32_t {
      const auto v = as_int();
      if (v < 0 || v > 1 << 20) throw ParseError(key + ": out of range", line_no);
      return static_cast<std::uint32_t>(v);
    };
    auto as_i32 = [&]() -> std::int32_t {
      const auto v = as_int();
      if (v < -(1 << 30) || v > 1 << 30) throw ParseError(key + ": out of range", line_no);
      return static_cast<std::int32_t>(v);
    };
    if (key == "object_count") cfg.object_count = as_i32();
    else if (key == "frame_count") cfg.frame_count = as_i32();
    else if (key == "width") cfg.width = as_u32();
    else if (key == "height") cfg.height = as_u32();
    else if (key == "seeds_per_object") cfg.seeds_per_object = as_i32();
    else if (key == "jitter") cfg.jitter = as_double();
    else if (key == "spurious_track_count") cfg.spurious_track_count = as_i32();
    else if (key == "spurious_max_length") cfg.spurious_max_length = as_i32();
    else if (key == "min_jitter_iou") cfg.min_jitter_iou = as_double();
    else if (key == "seed") {
      const auto v = as_int();
      if (v < 0) throw ParseError("seed must be non-negative", line_no);
      cfg.seed = static_cast<std::uint64_t>(v);
    } else if (key == "masks") {
      if (value != "true" && value != "false") throw ParseError("masks: expected true or false", line_no);
      cfg.masks = value == "true";
    } else if (key == "occlusion") {
      OcclusionWindow o;
      char colon = 0, dash = 0;
      std::istringstream in(value);
      if (!(in >> o.object >> colon >> o.begin >> dash >> o.end) || colon != ':' || dash != '-' ||
          !(in >> std::ws).eof()) {
        throw ParseError("occlusion: expected object:begin-end", line_no);
      }
      cfg.occlusions.push_back(o);
    } else {
      throw ParseError("unknown key '" + key + "'", line_no);
    }
  }
  cfg.validate();
  return cfg;
}

struct PartitionScore {
  double purity = 1.0;
  double adjusted_rand = 1.0;
  double spurious_discard_rate = 1.0;
};

namespace detail {

inline double pairs(double n) { return n * (n - 1) / 2; }

// Adjusted Rand index between two labelings of the same items.
inline double adjusted_rand(const std::vector<std::int64_t>& x, const std::vector<std::int64_t>& y) {
  std::map<std::pair<std::int64_t, std::int64_t>, double> cells;
  std::map<std::int64_t, double> rows, cols;
  for (std::size_t i = 0; i < x.size(); ++i) {
    cells[{x[i], y[i]}] += 1;
    rows[x[i]] += 1;
    cols[y[i]] += 1;
  }
  double index = 0, a = 0, b = 0;
  for (const auto& [k, n] : cells) index += pairs(n);
  for (const auto& [k, n] : rows) a += pairs(n);
  for (const auto& [k, n] : cols) b += pairs(n);
  const double total = pairs(static_cast<double>(x.size()));
  const double expected = total > 0 ? a * b / total : 0;
  const double max_index = (a + b) / 2;
  if (max_index == expected) return cells.size() == rows.size() && cells.size() == cols.size() ? 1.0 : 0.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace detail

// purity: share of non-spurious tracks whose predicted object's majority
// true object is their own (a discarded real track is never pure);
// adjusted_rand over non-spurious tracks with each discarded track a
// singleton; spurious_discard_rate: share of spurious tracks discarded.
// Empty denominators give 1.0.
inline PartitionScore score_partition(const ObjectAssignment& asg, const GroundTruth& gt) {
  if (asg.labels.size() != gt.objects.size()) throw ValidationError("assignment and truth cover different tracks");
  for (const auto& [id, l] : gt.objects) {
    if (!asg.labels.count(id)) throw ValidationError("assignment lacks track '" + id + "'");
  }
  constexpr std::int64_t kSpurious = -1;
  std::map<std::int32_t, std::map<std::int64_t, std::size_t>> votes;
  for (const auto& [id, pred] : asg.labels) {
    const auto& truth = gt.objects.at(id);
    if (pred) ++votes[*pred][truth ? *truth : kSpurious];
  }
  std::map<std::int32_t, std::int64_t> majority;
  for (const auto& [pred, counts] : votes) {
    std::int64_t best = kSpurious;
    std::size_t best_n = 0;
    for (const auto& [t, n] : counts) {
      if (n > best_n || (n == best_n && best == kSpurious)) {
        best = t;
        best_n = n;
      }
    }
    majority[pred] = best;
  }

  PartitionScore s;
  std::size_t real = 0, pure = 0, spurious = 0, discarded = 0;
  std::vector<std::int64_t> pred_labels, true_labels;
  std::int64_t singleton = -1;
  for (const auto& [id, pred] : asg.labels) {
    const auto& truth = gt.objects.at(id);
    if (!truth) {
      ++spurious;
      discarded += pred ? 0 : 1;
      continue;
    }
    ++real;
    if (pred && majority.at(*pred) == *truth) ++pure;
    pred_labels.push_back(pred ? *pred : singleton--);
    true_labels.push_back(*truth);
  }
  if (real > 0) {
    s.purity = static_cast<double>(pure) / static_cast<double>(real);
    s.adjusted_rand = detail::adjusted_rand(pred_labels, true_labels);
  }
  if (spurious > 0) s.spurious_discard_rate = static_cast<double>(discarded) / static_cast<double>(spurious);
  return s;
}

inline Json truth_to_json(const GroundTruth& gt) {
  Json j = Json::object();
  for (const auto& [id, obj] : gt.objects) j[id] = obj ? Json(*obj) : Json("SPURIOUS");
  return j;
}

}  // namespace salient
