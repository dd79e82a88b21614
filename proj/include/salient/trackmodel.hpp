#pragma once

// Upstream grasp seeds and mask tracks, and the JSONL file contract they
// arrive in.
//
// File layout (UTF-8, one JSON object per line):
//   {"format":"salient-tracks","version":1,"video_id":..,"frame_count":..,
//    "width":..,"height":..}
//   {"kind":"seed","frame":..,"rle":[..]}
//   {"kind":"track","track_id":..,"seed_frame":..,"direction":..,
//    "entries":[{"frame":..,"bbox":[x0,y0,x1,y1],"rle":[..]}, ..]}
// `rle` is the canonical row-major count list of BitMask::counts().

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "salient/error.hpp"
#include "salient/geometry.hpp"
#include "salient/io_util.hpp"

namespace salient {

inline constexpr const char* kTrackFormat = "salient-tracks";
inline constexpr int kTrackFormatVersion = 1;

enum class Direction { kUnspecified, kForward, kBackward };

inline const char* to_string(Direction d) {
  switch (d) {
    case Direction::kForward: return "forward";
    case Direction::kBackward: return "backward";
    default: return "unspecified";
  }
}

inline Direction direction_from_string(const std::string& s) {
  if (s == "forward") return Direction::kForward;
  if (s == "backward") return Direction::kBackward;
  if (s == "unspecified") return Direction::kUnspecified;
  throw ValidationError("unknown track direction '" + s + "'");
}

struct SeedMask {
  std::int32_t frame_index = 0;
  BitMask mask;
  bool operator==(const SeedMask&) const = default;
};

struct TrackEntry {
  std::int32_t frame = 0;
  BBox bbox;
  std::optional<BitMask> mask;  // box-only entries carry no mask
  bool operator==(const TrackEntry&) const = default;
};

struct Track {
  std::string track_id;
  std::int32_t seed_frame = 0;
  Direction direction = Direction::kUnspecified;
  std::vector<TrackEntry> entries;  // strictly increasing frame

  const TrackEntry* entry_at(std::int32_t frame) const {
    auto it = std::lower_bound(
        entries.begin(), entries.end(), frame,
        [](const TrackEntry& e, std::int32_t f) { return e.frame < f; });
    if (it == entries.end() || it->frame != frame) return nullptr;
    return &*it;
  }

  bool operator==(const Track&) const = default;
};

struct TrackBox {
  std::string track_id;
  BBox bbox;
  bool operator==(const TrackBox&) const = default;
};

// Validated, immutable collection of tracks for one video. Tracks are held
// in ascending track_id order.
class TrackSet {
 public:
  struct Header {
    std::string video_id;
    std::int32_t frame_count = 0;
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    bool operator==(const Header&) const = default;
  };

  // (track index, entry index) pairs present at a frame.
  using FrameSlot = std::pair<std::size_t, std::size_t>;

  TrackSet() = default;

  // Validates every invariant. Entry boxes that disagree with their mask's
  // tight box by at most one pixel are snapped to the mask box; larger
  // disagreements are errors.
  TrackSet(Header header, std::vector<SeedMask> seeds, std::vector<Track> tracks)
      : header_(std::move(header)),
        seeds_(std::move(seeds)),
        tracks_(std::move(tracks)) {
    if (header_.frame_count < 0) {
      throw ValidationError("frame_count must be non-negative");
    }
    for (const auto& s : seeds_) {
      check_frame(s.frame_index, "seed");
      check_mask_shape(s.mask, "seed at frame " + std::to_string(s.frame_index));
    }
    std::sort(tracks_.begin(), tracks_.end(),
              [](const Track& a, const Track& b) { return a.track_id < b.track_id; });
    for (std::size_t i = 0; i + 1 < tracks_.size(); ++i) {
      if (tracks_[i].track_id == tracks_[i + 1].track_id) {
        throw ValidationError("duplicate track_id '" + tracks_[i].track_id + "'");
      }
    }
    for (auto& t : tracks_) validate_track(t);
    build_frame_index();
  }

  const Header& header() const { return header_; }
  const std::string& video_id() const { return header_.video_id; }
  std::int32_t frame_count() const { return header_.frame_count; }
  std::uint32_t width() const { return header_.width; }
  std::uint32_t height() const { return header_.height; }
  const std::vector<SeedMask>& seeds() const { return seeds_; }
  const std::vector<Track>& tracks() const { return tracks_; }

  const std::vector<FrameSlot>& slots_at(std::int32_t frame) const {
    check_query_frame(frame);
    return by_frame_[static_cast<std::size_t>(frame)];
  }

  std::size_t entry_count() const {
    std::size_t n = 0;
    for (const auto& t : tracks_) n += t.entries.size();
    return n;
  }

  std::optional<std::size_t> index_of(const std::string& track_id) const {
    auto it = std::lower_bound(
        tracks_.begin(), tracks_.end(), track_id,
        [](const Track& t, const std::string& id) { return t.track_id < id; });
    if (it == tracks_.end() || it->track_id != track_id) return std::nullopt;
    return static_cast<std::size_t>(it - tracks_.begin());
  }

  bool operator==(const TrackSet& o) const {
    return header_ == o.header_ && seeds_ == o.seeds_ && tracks_ == o.tracks_;
  }

  // Per-record checks, usable before the whole set exists. The track's boxes
  // are snapped exactly as the constructor would.
  static void validate_record(const Header& h, Track& t) {
    TrackSet probe;
    probe.header_ = h;
    probe.validate_track(t);
  }
  static void validate_record(const Header& h, const SeedMask& s) {
    TrackSet probe;
    probe.header_ = h;
    probe.check_frame(s.frame_index, "seed");
    probe.check_mask_shape(s.mask, "seed at frame " + std::to_string(s.frame_index));
  }

 private:
  void check_frame(std::int32_t f, const std::string& what) const {
    if (f < 0 || f >= header_.frame_count) {
      throw ValidationError(what + " frame " + std::to_string(f) +
                            " outside [0, " + std::to_string(header_.frame_count) + ")");
    }
  }

  void check_query_frame(std::int32_t f) const {
    if (f < 0 || f >= header_.frame_count) {
      throw ValidationError("frame " + std::to_string(f) + " out of range [0, " +
                            std::to_string(header_.frame_count) + ")");
    }
  }

  void check_mask_shape(const BitMask& m, const std::string& what) const {
    if (m.width() != header_.width || m.height() != header_.height) {
      throw ValidationError(what + ": mask is " + std::to_string(m.width()) + "x" +
                            std::to_string(m.height()) + ", video is " +
                            std::to_string(header_.width) + "x" +
                            std::to_string(header_.height));
    }
  }

  void validate_track(Track& t) const {
    const std::string where = "track '" + t.track_id + "'";
    if (t.entries.empty()) throw ValidationError(where + " has no entries");
    check_frame(t.seed_frame, where + " seed");
    for (std::size_t i = 0; i < t.entries.size(); ++i) {
      auto& e = t.entries[i];
      check_frame(e.frame, where);
      if (i > 0 && e.frame <= t.entries[i - 1].frame) {
        throw ValidationError(where + " frames not strictly increasing at frame " +
                              std::to_string(e.frame));
      }
      if (!e.mask) continue;
      const std::string at = where + " frame " + std::to_string(e.frame);
      check_mask_shape(*e.mask, at);
      auto tight = mask_to_bbox(*e.mask);
      if (!tight) throw ValidationError(at + ": mask is empty");
      const double dev = std::max(
          {std::abs(tight->x_min() - e.bbox.x_min()), std::abs(tight->y_min() - e.bbox.y_min()),
           std::abs(tight->x_max() - e.bbox.x_max()), std::abs(tight->y_max() - e.bbox.y_max())});
      if (dev > 1.0) {
        throw ValidationError(at + ": bbox differs from mask extent by " +
                              std::to_string(dev) + " px");
      }
      e.bbox = *tight;
    }
  }

  void build_frame_index() {
    by_frame_.assign(static_cast<std::size_t>(header_.frame_count), {});
    for (std::size_t ti = 0; ti < tracks_.size(); ++ti) {
      const auto& es = tracks_[ti].entries;
      for (std::size_t ei = 0; ei < es.size(); ++ei) {
        by_frame_[static_cast<std::size_t>(es[ei].frame)].emplace_back(ti, ei);
      }
    }
  }

  Header header_;
  std::vector<SeedMask> seeds_;
  std::vector<Track> tracks_;
  std::vector<std::vector<FrameSlot>> by_frame_;
};

// Boxes of every track present at frame t, ordered by track_id.
inline std::vector<TrackBox> boxes_at_frame(const TrackSet& ts, std::int32_t t) {
  std::vector<TrackBox> out;
  for (auto [ti, ei] : ts.slots_at(t)) {
    out.push_back({ts.tracks()[ti].track_id, ts.tracks()[ti].entries[ei].bbox});
  }
  return out;
}

namespace detail {

inline BitMask rle_from_json(const Json& v, std::uint32_t w, std::uint32_t h,
                             const std::string& path) {
  if (!v.is_array()) throw ValidationError(path + ": rle must be an array");
  std::vector<std::uint64_t> counts;
  counts.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number_unsigned() && !(v[i].is_number_integer() && v[i].get<std::int64_t>() >= 0)) {
      throw ValidationError(path + "[" + std::to_string(i) + "]: expected a non-negative integer");
    }
    counts.push_back(v[i].get<std::uint64_t>());
  }
  try {
    return BitMask::from_counts(w, h, counts);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

inline Json rle_to_json(const BitMask& m) {
  Json a = Json::array();
  for (auto c : m.counts()) a.push_back(c);
  return a;
}

inline Json bbox_to_json(const BBox& b) {
  return Json::array({b.x_min(), b.y_min(), b.x_max(), b.y_max()});
}

inline Json number_json(double v) {
  // Integral values print without a fractional part so files stay compact.
  if (std::trunc(v) == v && std::abs(v) < 9.0e15) return static_cast<std::int64_t>(v);
  return v;
}

inline Json bbox_to_json_compact(const BBox& b) {
  return Json::array({number_json(b.x_min()), number_json(b.y_min()),
                      number_json(b.x_max()), number_json(b.y_max())});
}

}  // namespace detail

inline TrackSet parse_trackset(std::string_view text) {
  TrackSet::Header header;
  std::vector<SeedMask> seeds;
  std::vector<Track> tracks;
  std::set<std::string> track_ids;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    Json obj;
    try {
      obj = Json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    try {
      using namespace detail;
      if (!obj.is_object()) throw ValidationError("expected a JSON object");
      if (!have_header) {
        if (get_string(field(obj, "format", "$"), "$.format") != kTrackFormat) {
          throw ValidationError("not a salient-tracks file");
        }
        const auto version = get_integer(field(obj, "version", "$"), "$.version");
        if (version != kTrackFormatVersion) {
          throw ValidationError("unsupported track format version " +
                                std::to_string(version) + " (expected " +
                                std::to_string(kTrackFormatVersion) + ")");
        }
        header.video_id = get_string(field(obj, "video_id", "$"), "$.video_id");
        header.frame_count = static_cast<std::int32_t>(
            get_integer(field(obj, "frame_count", "$"), "$.frame_count"));
        const auto w = get_integer(field(obj, "width", "$"), "$.width");
        const auto h = get_integer(field(obj, "height", "$"), "$.height");
        if (w <= 0 || h <= 0 || header.frame_count < 0) {
          throw ValidationError("width/height must be positive, frame_count non-negative");
        }
        header.width = static_cast<std::uint32_t>(w);
        header.height = static_cast<std::uint32_t>(h);
        have_header = true;
        continue;
      }
      const std::string kind = get_string(field(obj, "kind", "$"), "$.kind");
      if (kind == "seed") {
        SeedMask s;
        s.frame_index = static_cast<std::int32_t>(get_integer(field(obj, "frame", "$"), "$.frame"));
        s.mask = rle_from_json(field(obj, "rle", "$"), header.width, header.height, "$.rle");
        TrackSet::validate_record(header, s);
        seeds.push_back(std::move(s));
      } else if (kind == "track") {
        Track t;
        t.track_id = get_string(field(obj, "track_id", "$"), "$.track_id");
        t.seed_frame = static_cast<std::int32_t>(
            get_integer(field(obj, "seed_frame", "$"), "$.seed_frame"));
        if (auto it = obj.find("direction"); it != obj.end() && !it->is_null()) {
          t.direction = direction_from_string(get_string(*it, "$.direction"));
        }
        const Json& entries = field(obj, "entries", "$");
        if (!entries.is_array()) throw ValidationError("$.entries: expected an array");
        for (std::size_t i = 0; i < entries.size(); ++i) {
          const std::string p = "$.entries[" + std::to_string(i) + "]";
          const Json& e = entries[i];
          const auto frame = static_cast<std::int32_t>(get_integer(field(e, "frame", p), p + ".frame"));
          const Json& b = field(e, "bbox", p);
          if (!b.is_array() || b.size() != 4) {
            throw ValidationError(p + ".bbox: expected [x0, y0, x1, y1]");
          }
          BBox box(get_number(b[0], p + ".bbox[0]"), get_number(b[1], p + ".bbox[1]"),
                   get_number(b[2], p + ".bbox[2]"), get_number(b[3], p + ".bbox[3]"));
          std::optional<BitMask> mask;
          if (auto it = e.find("rle"); it != e.end() && !it->is_null()) {
            mask = rle_from_json(*it, header.width, header.height, p + ".rle");
          }
          t.entries.push_back({frame, box, std::move(mask)});
        }
        if (!track_ids.insert(t.track_id).second) {
          throw ValidationError("duplicate track_id '" + t.track_id + "'");
        }
        TrackSet::validate_record(header, t);
        tracks.push_back(std::move(t));
      } else {
        throw ValidationError("unknown record kind '" + kind + "'");
      }
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  // A file with no lines at all is an empty track set.
  return TrackSet(std::move(header), std::move(seeds), std::move(tracks));
}

inline TrackSet load_trackset(const std::string& path) {
  return parse_trackset(read_file(path));
}

inline std::string serialize_trackset(const TrackSet& ts) {
  std::string out;
  Json h;
  h["format"] = kTrackFormat;
  h["version"] = kTrackFormatVersion;
  h["video_id"] = ts.video_id();
  h["frame_count"] = ts.frame_count();
  h["width"] = ts.width();
  h["height"] = ts.height();
  out += h.dump();
  out += '\n';
  for (const auto& s : ts.seeds()) {
    Json j;
    j["kind"] = "seed";
    j["frame"] = s.frame_index;
    j["rle"] = detail::rle_to_json(s.mask);
    out += j.dump();
    out += '\n';
  }
  for (const auto& t : ts.tracks()) {
    Json j;
    j["kind"] = "track";
    j["track_id"] = t.track_id;
    j["seed_frame"] = t.seed_frame;
    j["direction"] = to_string(t.direction);
    Json entries = Json::array();
    for (const auto& e : t.entries) {
      Json je;
      je["frame"] = e.frame;
      je["bbox"] = detail::bbox_to_json_compact(e.bbox);
      if (e.mask) je["rle"] = detail::rle_to_json(*e.mask);
      entries.push_back(std::move(je));
    }
    j["entries"] = std::move(entries);
    out += j.dump();
    out += '\n';
  }
  return out;
}

inline void write_trackset(const TrackSet& ts, const std::string& path) {
  write_file(path, serialize_trackset(ts));
}

}  // namespace salient
