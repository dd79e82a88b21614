#pragma once

// COCO-style serialization of consolidated datasets, plus readers for the
// detection-result and ground-truth files consumed by evaluation.
//
// Dataset files carry the standard images/annotations/categories arrays.
// Segmentations use COCO uncompressed RLE ({"size":[h,w],"counts":[...]},
// column-major). Category ids are object label + 1 (0 stays free for a
// background class); names are "object_<label>". Two non-standard keys make
// the file round-trip exactly: "info" (video, shape, label count,
// provenance) and per-annotation "bbox_xyxy".

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "salient/consolidation.hpp"
#include "salient/error.hpp"
#include "salient/geometry.hpp"
#include "salient/io_util.hpp"
#include "salient/trackmodel.hpp"

namespace salient {

inline constexpr const char* kDatasetFormat = "salient-dataset";
inline constexpr int kDatasetFormatVersion = 1;

struct DetectionRecord {
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  BBox bbox;
  double score = 0;
  bool operator==(const DetectionRecord&) const = default;
};

struct GroundTruthRecord {
  std::int64_t image_id = 0;
  std::int64_t category_id = 0;
  BBox bbox;
  bool operator==(const GroundTruthRecord&) const = default;
};

struct GroundTruthFile {
  std::vector<GroundTruthRecord> records;
  std::vector<std::int64_t> category_ids;  // from "categories", sorted
};

inline std::int64_t category_id_for(std::int32_t object_label) { return object_label + 1; }
inline std::string category_name_for(std::int32_t object_label) {
  return "object_" + std::to_string(object_label);
}

namespace detail {

inline Json coco_rle(const BitMask& m) {
  Json seg;
  seg["size"] = Json::array({m.height(), m.width()});
  Json counts = Json::array();
  for (auto c : m.transposed().counts()) counts.push_back(c);
  seg["counts"] = std::move(counts);
  return seg;
}

inline BitMask mask_from_coco_rle(const Json& seg, std::uint32_t width, std::uint32_t height,
                                  const std::string& path) {
  const Json& size = field(seg, "size", path);
  if (!size.is_array() || size.size() != 2 ||
      get_integer(size[0], path + ".size[0]") != height ||
      get_integer(size[1], path + ".size[1]") != width) {
    throw ValidationError(path + ".size: does not match image size");
  }
  // Column-major counts decode as the transposed (width x height) grid.
  BitMask t = rle_from_json(field(seg, "counts", path), height, width, path + ".counts");
  return t.transposed();
}

inline Json provenance_to_json(const Provenance& p) {
  Json j;
  j["spatial_eps"] = p.params.spatial_eps;
  j["temporal_eps"] = p.params.temporal_eps;
  j["temporal_min_size"] = p.params.temporal_min_size;
  if (p.params.spatial_min_size.kind == MinSizePolicy::Kind::kFixed) {
    j["spatial_min_size"] = p.params.spatial_min_size.fixed;
  } else {
    j["spatial_min_size"] = "appendix_formula";
  }
  j["spatial_metric"] = to_string(p.params.spatial_metric);
  j["track_hash"] = p.track_hash;
  return j;
}

inline Provenance provenance_from_json(const Json& j, const std::string& path) {
  Provenance p;
  p.params.spatial_eps = get_number(field(j, "spatial_eps", path), path + ".spatial_eps");
  p.params.temporal_eps = get_number(field(j, "temporal_eps", path), path + ".temporal_eps");
  p.params.temporal_min_size = static_cast<std::size_t>(
      get_integer(field(j, "temporal_min_size", path), path + ".temporal_min_size"));
  const Json& ms = field(j, "spatial_min_size", path);
  if (ms.is_string()) {
    if (ms.get<std::string>() != "appendix_formula") {
      throw ValidationError(path + ".spatial_min_size: unknown policy");
    }
    p.params.spatial_min_size = MinSizePolicy::appendix_formula();
  } else {
    p.params.spatial_min_size = MinSizePolicy::fixed_size(
        static_cast<std::size_t>(get_integer(ms, path + ".spatial_min_size")));
  }
  const auto metric = get_string(field(j, "spatial_metric", path), path + ".spatial_metric");
  if (metric == "bbox_iou") {
    p.params.spatial_metric = SpatialMetric::kBBoxIoU;
  } else if (metric == "mask_iou") {
    p.params.spatial_metric = SpatialMetric::kMaskIoU;
  } else {
    throw ValidationError(path + ".spatial_metric: unknown metric '" + metric + "'");
  }
  p.track_hash = get_string(field(j, "track_hash", path), path + ".track_hash");
  return p;
}

inline BBox bbox_from_xywh_json(const Json& b, const std::string& path) {
  if (!b.is_array() || b.size() != 4) throw ValidationError(path + ": expected [x, y, w, h]");
  const double x = get_number(b[0], path + "[0]");
  const double y = get_number(b[1], path + "[1]");
  const double w = get_number(b[2], path + "[2]");
  const double h = get_number(b[3], path + "[3]");
  if (!(w > 0)) throw ValidationError(path + "[2]: width must be positive");
  if (!(h > 0)) throw ValidationError(path + "[3]: height must be positive");
  return BBox(x, y, x + w, y + h);
}

}  // namespace detail

inline std::string serialize_dataset(const SalientDataset& ds) {
  Json root;
  Json info;
  info["format"] = kDatasetFormat;
  info["version"] = kDatasetFormatVersion;
  info["video_id"] = ds.video_id;
  info["width"] = ds.width;
  info["height"] = ds.height;
  info["label_count"] = ds.label_count;
  info["provenance"] = detail::provenance_to_json(ds.provenance);
  info["val_ratio"] = ds.val_ratio;
  root["info"] = std::move(info);

  Json images = Json::array();
  std::set<std::int32_t> frames;
  for (const auto& it : ds.items) frames.insert(it.frame_index);
  const auto val = validation_frames(ds);
  for (auto f : frames) {
    Json img;
    img["id"] = f;
    char name[32];
    std::snprintf(name, sizeof name, "frame_%06d.png", f);
    img["file_name"] = ds.video_id.empty() ? std::string(name) : ds.video_id + "/" + name;
    img["width"] = ds.width;
    img["height"] = ds.height;
    img["frame_index"] = f;
    img["split"] = val.count(f) ? "val" : "train";
    images.push_back(std::move(img));
  }
  root["images"] = std::move(images);

  Json annotations = Json::array();
  std::int64_t next_id = 1;
  for (const auto& it : ds.items) {
    Json a;
    a["id"] = next_id++;
    a["image_id"] = it.frame_index;
    a["category_id"] = category_id_for(it.object_label);
    a["bbox"] = Json::array({detail::number_json(it.bbox.x_min()), detail::number_json(it.bbox.y_min()),
                             detail::number_json(it.bbox.width()), detail::number_json(it.bbox.height())});
    a["bbox_xyxy"] = detail::bbox_to_json_compact(it.bbox);
    a["area"] = it.mask ? Json(it.mask->area()) : detail::number_json(it.bbox.area());
    a["iscrowd"] = 0;
    if (it.mask) a["segmentation"] = detail::coco_rle(*it.mask);
    annotations.push_back(std::move(a));
  }
  root["annotations"] = std::move(annotations);

  Json categories = Json::array();
  for (std::int32_t l = 0; l < ds.label_count; ++l) {
    Json c;
    c["id"] = category_id_for(l);
    c["name"] = category_name_for(l);
    c["supercategory"] = "object";
    categories.push_back(std::move(c));
  }
  root["categories"] = std::move(categories);
  return root.dump(1) + "\n";
}

inline void write_dataset(const SalientDataset& ds, const std::string& path) {
  write_file(path, serialize_dataset(ds));
}

inline SalientDataset parse_dataset(std::string_view text) {
  using namespace detail;
  const Json root = parse_json(text, "dataset");
  const Json& info = field(root, "info", "$");
  if (get_string(field(info, "format", "$.info"), "$.info.format") != kDatasetFormat) {
    throw ValidationError("$.info.format: not a salient-dataset file");
  }
  if (get_integer(field(info, "version", "$.info"), "$.info.version") != kDatasetFormatVersion) {
    throw ValidationError("$.info.version: unsupported dataset version");
  }
  SalientDataset ds;
  ds.video_id = get_string(field(info, "video_id", "$.info"), "$.info.video_id");
  ds.width = static_cast<std::uint32_t>(get_integer(field(info, "width", "$.info"), "$.info.width"));
  ds.height = static_cast<std::uint32_t>(get_integer(field(info, "height", "$.info"), "$.info.height"));
  ds.label_count = static_cast<std::int32_t>(
      get_integer(field(info, "label_count", "$.info"), "$.info.label_count"));
  ds.provenance = provenance_from_json(field(info, "provenance", "$.info"), "$.info.provenance");
  if (auto it = info.find("val_ratio"); it != info.end()) {
    ds.val_ratio = get_number(*it, "$.info.val_ratio");
    if (!(ds.val_ratio >= 0 && ds.val_ratio <= 1)) throw ValidationError("$.info.val_ratio: outside [0, 1]");
  }

  const Json& anns = field(root, "annotations", "$");
  if (!anns.is_array()) throw ValidationError("$.annotations: expected an array");
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string p = "$.annotations[" + std::to_string(i) + "]";
    const Json& a = anns[i];
    SalientItem item{static_cast<std::int32_t>(get_integer(field(a, "image_id", p), p + ".image_id")),
                     static_cast<std::int32_t>(get_integer(field(a, "category_id", p), p + ".category_id") - 1),
                     bbox_from_xywh_json(field(a, "bbox", p), p + ".bbox"),
                     std::nullopt};
    if (auto it = a.find("bbox_xyxy"); it != a.end()) {
      const Json& b = *it;
      if (!b.is_array() || b.size() != 4) throw ValidationError(p + ".bbox_xyxy: expected 4 numbers");
      item.bbox = BBox(get_number(b[0], p + ".bbox_xyxy[0]"), get_number(b[1], p + ".bbox_xyxy[1]"),
                       get_number(b[2], p + ".bbox_xyxy[2]"), get_number(b[3], p + ".bbox_xyxy[3]"));
    }
    if (item.object_label < 0 || item.object_label >= ds.label_count) {
      throw ValidationError(p + ".category_id: outside the dataset's categories");
    }
    if (auto it = a.find("segmentation"); it != a.end() && !it->is_null()) {
      item.mask = mask_from_coco_rle(*it, ds.width, ds.height, p + ".segmentation");
    }
    ds.items.push_back(std::move(item));
  }
  return ds;
}

inline SalientDataset read_dataset(const std::string& path) {
  return parse_dataset(read_file(path));
}

inline std::vector<DetectionRecord> parse_detections(std::string_view text) {
  using namespace detail;
  const Json root = parse_json(text, "detections");
  if (!root.is_array()) throw ValidationError("$: detections must be a JSON array");
  std::vector<DetectionRecord> out;
  out.reserve(root.size());
  for (std::size_t i = 0; i < root.size(); ++i) {
    const std::string p = "$[" + std::to_string(i) + "]";
    const Json& d = root[i];
    const double score = get_number(field(d, "score", p), p + ".score");
    if (!(score >= 0.0 && score <= 1.0)) {
      throw ValidationError(p + ".score: " + std::to_string(score) + " outside [0, 1]");
    }
    out.push_back({get_integer(field(d, "image_id", p), p + ".image_id"),
                   get_integer(field(d, "category_id", p), p + ".category_id"),
                   bbox_from_xywh_json(field(d, "bbox", p), p + ".bbox"), score});
  }
  return out;
}

inline std::vector<DetectionRecord> read_detections(const std::string& path) {
  return parse_detections(read_file(path));
}

inline GroundTruthFile parse_groundtruth(std::string_view text) {
  using namespace detail;
  const Json root = parse_json(text, "ground truth");
  GroundTruthFile gt;
  const Json& anns = field(root, "annotations", "$");
  if (!anns.is_array()) throw ValidationError("$.annotations: expected an array");
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const std::string p = "$.annotations[" + std::to_string(i) + "]";
    const Json& a = anns[i];
    gt.records.push_back({get_integer(field(a, "image_id", p), p + ".image_id"),
                          get_integer(field(a, "category_id", p), p + ".category_id"),
                          bbox_from_xywh_json(field(a, "bbox", p), p + ".bbox")});
  }
  std::set<std::int64_t> cats;
  if (auto it = root.find("categories"); it != root.end()) {
    if (!it->is_array()) throw ValidationError("$.categories: expected an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const std::string p = "$.categories[" + std::to_string(i) + "]";
      cats.insert(get_integer(field((*it)[i], "id", p), p + ".id"));
    }
  } else {
    for (const auto& r : gt.records) cats.insert(r.category_id);
  }
  gt.category_ids.assign(cats.begin(), cats.end());
  return gt;
}

inline GroundTruthFile read_groundtruth_file(const std::string& path) {
  return parse_groundtruth(read_file(path));
}

inline std::vector<GroundTruthRecord> read_groundtruth(const std::string& path) {
  return read_groundtruth_file(path).records;
}

// Detection category ids that the ground truth does not declare. These are
// still evaluated; callers surface them as warnings.
inline std::vector<std::int64_t> unknown_categories(const std::vector<DetectionRecord>& dets,
                                                    const GroundTruthFile& gt) {
  std::set<std::int64_t> known(gt.category_ids.begin(), gt.category_ids.end());
  std::set<std::int64_t> unknown;
  for (const auto& d : dets) {
    if (!known.count(d.category_id)) unknown.insert(d.category_id);
  }
  return {unknown.begin(), unknown.end()};
}

}  // namespace salient
