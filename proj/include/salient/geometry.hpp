#pragma once

// Boxes, run-length masks, and the overlap measures shared by every stage.
//
// Pixel convention: boxes are half-open [x_min, x_max) x [y_min, y_max) in
// image coordinates; mask pixels are addressed row-major by (row, col), so
// pixel (row, col) covers the unit box (col, row, col + 1, row + 1).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "salient/error.hpp"

namespace salient {

class BBox {
 public:
  BBox(double x_min, double y_min, double x_max, double y_max)
      : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max) {
    if (!(std::isfinite(x_min) && std::isfinite(y_min) &&
          std::isfinite(x_max) && std::isfinite(y_max))) {
      throw ValidationError("bbox has non-finite coordinates");
    }
    if (!(x_max > x_min) || !(y_max > y_min)) {
      throw ValidationError("bbox must have positive extent, got [" +
                            std::to_string(x_min) + ", " +
                            std::to_string(y_min) + ", " +
                            std::to_string(x_max) + ", " +
                            std::to_string(y_max) + "]");
    }
  }

  static BBox from_xywh(double x, double y, double w, double h) {
    if (!(w > 0) || !(h > 0)) {
      throw ValidationError("bbox width and height must be positive");
    }
    return BBox(x, y, x + w, y + h);
  }

  double x_min() const { return x_min_; }
  double y_min() const { return y_min_; }
  double x_max() const { return x_max_; }
  double y_max() const { return y_max_; }
  double width() const { return x_max_ - x_min_; }
  double height() const { return y_max_ - y_min_; }
  double area() const { return width() * height(); }

  bool operator==(const BBox&) const = default;

 private:
  double x_min_, y_min_, x_max_, y_max_;
};

inline double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
  const double h = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
  if (w <= 0 || h <= 0) return 0.0;
  return w * h;
}

// Symmetric, in [0, 1], 0 for disjoint boxes.
inline double iou_bbox(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// Binary pixel grid stored as sorted, disjoint, non-adjacent half-open
// intervals of row-major linear pixel indices.
class BitMask {
 public:
  struct Interval {
    std::uint64_t begin;
    std::uint64_t end;
    bool operator==(const Interval&) const = default;
  };

  BitMask() = default;

  // Empty mask.
  BitMask(std::uint32_t width, std::uint32_t height)
      : width_(width), height_(height) {}

  // Decode alternating (skip, run, skip, run, ...) counts. Counts must sum
  // to width * height; zero-length runs or skips are accepted and merged.
  static BitMask from_counts(std::uint32_t width, std::uint32_t height,
                             std::span<const std::uint64_t> counts) {
    BitMask m(width, height);
    std::uint64_t pos = 0;
    bool set = false;
    for (std::uint64_t c : counts) {
      if (set && c > 0) m.append(pos, pos + c);
      pos += c;
      set = !set;
    }
    if (pos != m.pixel_count()) {
      throw ValidationError("rle counts sum to " + std::to_string(pos) +
                            ", expected " + std::to_string(m.pixel_count()));
    }
    return m;
  }

  // Row-major boolean grid, size width * height.
  static BitMask from_pixels(std::uint32_t width, std::uint32_t height,
                             std::span<const std::uint8_t> pixels) {
    BitMask m(width, height);
    if (pixels.size() != m.pixel_count()) {
      throw ValidationError("pixel buffer size does not match mask dimensions");
    }
    for (std::uint64_t i = 0; i < pixels.size(); ++i) {
      if (pixels[i]) m.append(i, i + 1);
    }
    return m;
  }

  // Filled axis-aligned rectangle of whole pixels, clipped to the grid.
  static BitMask rectangle(std::uint32_t width, std::uint32_t height,
                           std::int64_t col0, std::int64_t row0,
                           std::int64_t col1, std::int64_t row1) {
    BitMask m(width, height);
    col0 = std::clamp<std::int64_t>(col0, 0, width);
    col1 = std::clamp<std::int64_t>(col1, 0, width);
    row0 = std::clamp<std::int64_t>(row0, 0, height);
    row1 = std::clamp<std::int64_t>(row1, 0, height);
    if (col1 <= col0 || row1 <= row0) return m;
    for (std::int64_t r = row0; r < row1; ++r) {
      const auto base = static_cast<std::uint64_t>(r) * width;
      m.append(base + col0, base + col1);
    }
    return m;
  }

  // Build from intervals that are already sorted by begin; overlapping or
  // touching intervals are merged.
  static BitMask from_intervals(std::uint32_t width, std::uint32_t height,
                                std::span<const Interval> intervals) {
    BitMask m(width, height);
    for (const auto& iv : intervals) {
      if (iv.end > m.pixel_count() || iv.begin > iv.end) {
        throw ValidationError("mask interval out of range");
      }
      if (iv.begin == iv.end) continue;
      m.append(iv.begin, iv.end);
    }
    return m;
  }

  // Canonical RLE: starts with a (possibly zero) skip, then strictly positive
  // alternating run/skip counts; the total equals width * height.
  std::vector<std::uint64_t> counts() const {
    std::vector<std::uint64_t> out;
    out.reserve(intervals_.size() * 2 + 1);
    std::uint64_t pos = 0;
    for (const auto& iv : intervals_) {
      out.push_back(iv.begin - pos);
      out.push_back(iv.end - iv.begin);
      pos = iv.end;
    }
    if (pos < pixel_count() || out.empty()) out.push_back(pixel_count() - pos);
    return out;
  }

  std::uint32_t width() const { return width_; }
  std::uint32_t height() const { return height_; }
  std::uint64_t pixel_count() const {
    return static_cast<std::uint64_t>(width_) * height_;
  }
  const std::vector<Interval>& intervals() const { return intervals_; }

  std::uint64_t area() const {
    std::uint64_t a = 0;
    for (const auto& iv : intervals_) a += iv.end - iv.begin;
    return a;
  }
  bool empty() const { return intervals_.empty(); }

  bool test(std::uint32_t row, std::uint32_t col) const {
    const std::uint64_t idx = static_cast<std::uint64_t>(row) * width_ + col;
    auto it = std::upper_bound(
        intervals_.begin(), intervals_.end(), idx,
        [](std::uint64_t v, const Interval& iv) { return v < iv.begin; });
    if (it == intervals_.begin()) return false;
    --it;
    return idx < it->end;
  }

  std::vector<std::uint8_t> to_pixels() const {
    std::vector<std::uint8_t> px(pixel_count(), 0);
    for (const auto& iv : intervals_) {
      std::fill(px.begin() + static_cast<std::ptrdiff_t>(iv.begin),
                px.begin() + static_cast<std::ptrdiff_t>(iv.end), 1);
    }
    return px;
  }

  // Same pixels in column-major order, as a mask of shape (height x width)
  // read row-major. Used for COCO-compatible encoding.
  BitMask transposed() const {
    std::vector<std::vector<std::uint32_t>> rows_by_col(width_);
    for (const auto& iv : intervals_) {
      for (std::uint64_t i = iv.begin; i < iv.end; ++i) {
        rows_by_col[i % width_].push_back(static_cast<std::uint32_t>(i / width_));
      }
    }
    BitMask t(height_, width_);
    for (std::uint32_t c = 0; c < width_; ++c) {
      const std::uint64_t base = static_cast<std::uint64_t>(c) * height_;
      for (std::uint32_t r : rows_by_col[c]) t.append(base + r, base + r + 1);
    }
    return t;
  }

  bool operator==(const BitMask&) const = default;

 private:
  void append(std::uint64_t begin, std::uint64_t end) {
    if (!intervals_.empty() && begin <= intervals_.back().end) {
      intervals_.back().end = std::max(intervals_.back().end, end);
    } else {
      intervals_.push_back({begin, end});
    }
  }

  std::uint32_t width_ = 0;
  std::uint32_t height_ = 0;
  std::vector<Interval> intervals_;
};

inline void require_same_shape(const BitMask& a, const BitMask& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw ValidationError("mask dimension mismatch: " +
                          std::to_string(a.width()) + "x" +
                          std::to_string(a.height()) + " vs " +
                          std::to_string(b.width()) + "x" +
                          std::to_string(b.height()));
  }
}

inline std::uint64_t intersection_area(const BitMask& a, const BitMask& b) {
  require_same_shape(a, b);
  const auto& x = a.intervals();
  const auto& y = b.intervals();
  std::uint64_t inter = 0;
  std::size_t i = 0, j = 0;
  while (i < x.size() && j < y.size()) {
    const auto lo = std::max(x[i].begin, y[j].begin);
    const auto hi = std::min(x[i].end, y[j].end);
    if (hi > lo) inter += hi - lo;
    if (x[i].end < y[j].end) ++i; else ++j;
  }
  return inter;
}

// |a & b| / |a | b|, with 0/0 defined as 0.
inline double iou_mask(const BitMask& a, const BitMask& b) {
  const std::uint64_t inter = intersection_area(a, b);
  const std::uint64_t uni = a.area() + b.area() - inter;
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Tight half-open box around the set pixels; nullopt for an empty mask.
inline std::optional<BBox> mask_to_bbox(const BitMask& m) {
  if (m.empty()) return std::nullopt;
  const std::uint64_t w = m.width();
  std::uint64_t col_min = w, col_max = 0;
  const std::uint64_t row_min = m.intervals().front().begin / w;
  const std::uint64_t row_max = (m.intervals().back().end - 1) / w;
  for (const auto& iv : m.intervals()) {
    const std::uint64_t r0 = iv.begin / w, r1 = (iv.end - 1) / w;
    if (r0 != r1) {
      col_min = 0;
      col_max = w - 1;
      break;
    }
    col_min = std::min(col_min, iv.begin % w);
    col_max = std::max(col_max, (iv.end - 1) % w);
  }
  return BBox(static_cast<double>(col_min), static_cast<double>(row_min),
              static_cast<double>(col_max + 1), static_cast<double>(row_max + 1));
}

// A spatial cluster bound to the frame it was found in. Negative cluster ids
// are reserved for per-track noise singletons.
struct FrameLabel {
  std::int32_t frame = 0;
  std::int32_t cluster = 0;
  auto operator<=>(const FrameLabel&) const = default;
};

inline std::string to_string(const FrameLabel& l) {
  return "F" + std::to_string(l.frame) + "C" + std::to_string(l.cluster);
}

// Set of frame-qualified cluster labels, kept sorted and unique.
class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::initializer_list<FrameLabel> init)
      : LabelSet(std::vector<FrameLabel>(init)) {}
  explicit LabelSet(std::vector<FrameLabel> labels) : labels_(std::move(labels)) {
    std::sort(labels_.begin(), labels_.end());
    labels_.erase(std::unique(labels_.begin(), labels_.end()), labels_.end());
  }

  void insert(FrameLabel l) {
    auto it = std::lower_bound(labels_.begin(), labels_.end(), l);
    if (it == labels_.end() || *it != l) labels_.insert(it, l);
  }

  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  auto begin() const { return labels_.begin(); }
  auto end() const { return labels_.end(); }
  const std::vector<FrameLabel>& elements() const { return labels_; }

  bool operator==(const LabelSet&) const = default;

 private:
  std::vector<FrameLabel> labels_;
};

// |a & b| / |a | b|; two empty sets score 0.
inline double jaccard(const LabelSet& a, const LabelSet& b) {
  std::size_t inter = 0;
  auto i = a.begin(), j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++inter;
      ++i;
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  if (uni == 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline double jaccard_distance(const LabelSet& a, const LabelSet& b) {
  return 1.0 - jaccard(a, b);
}

}  // namespace salient
