#include <gtest/gtest.h>

#include "salient/consolidation.hpp"
#include "salient/datasetio.hpp"
#include "salient/synth.hpp"

using namespace salient;

TEST(DatasetIo, EmptyDatasetHasEmptyArrays) {
  SalientDataset ds;
  ds.video_id = "v";
  ds.width = 4;
  ds.height = 3;
  const std::string text = serialize_dataset(ds);
  const Json j = Json::parse(text);
  EXPECT_TRUE(j["images"].empty());
  EXPECT_TRUE(j["annotations"].empty());
  EXPECT_TRUE(j["categories"].empty());
  EXPECT_EQ(parse_dataset(text), ds);
}

TEST(DatasetIo, Fig3CategoriesAndRoundTrip) {
  const auto r = consolidate(fig3_scene().tracks, ClusterParams{}, "abc");
  const std::string text = serialize_dataset(r.dataset);
  const Json j = Json::parse(text);
  ASSERT_EQ(j["categories"].size(), 2u);
  EXPECT_EQ(j["categories"][0]["name"], "object_0");
  EXPECT_EQ(j["categories"][1]["name"], "object_1");
  const auto back = parse_dataset(text);
  EXPECT_EQ(back, r.dataset);
  EXPECT_EQ(serialize_dataset(back), text);
}

TEST(DatasetIo, SegmentationIsColumnMajorAndMatchesBox) {
  // 3x2 image; pixels (row 0, col 1) and (row 1, col 1) set.
  const std::vector<std::uint8_t> px{0, 1, 0, 0, 1, 0};
  const auto m = BitMask::from_pixels(3, 2, px);
  SalientDataset ds;
  ds.width = 3;
  ds.height = 2;
  ds.label_count = 1;
  ds.items.push_back({0, 0, *mask_to_bbox(m), m});
  const Json j = Json::parse(serialize_dataset(ds));
  const Json& a = j["annotations"][0];
  EXPECT_EQ(a["segmentation"]["size"], Json::array({2, 3}));
  EXPECT_EQ(a["segmentation"]["counts"], Json::array({2, 2, 2}));
  EXPECT_EQ(a["bbox"], Json::array({1, 0, 1, 2}));
  EXPECT_EQ(a["category_id"], 1);
  EXPECT_EQ(parse_dataset(j.dump()).items[0].mask, m);
}

TEST(DatasetIo, ByteStableOnRandomScenes) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.object_count = 3;
    cfg.frame_count = 15;
    cfg.width = 120;
    cfg.height = 90;
    cfg.jitter = 1.0;
    cfg.masks = seed % 3 != 0;
    const auto ds = consolidate(generate(cfg).tracks, ClusterParams{}, "h").dataset;
    const std::string a = serialize_dataset(ds);
    ASSERT_EQ(serialize_dataset(ds), a);
    const auto back = parse_dataset(a);
    ASSERT_EQ(back, ds);
    ASSERT_EQ(serialize_dataset(back), a);
    for (const auto& it : back.items) {
      if (it.mask) {
        ASSERT_EQ(it.bbox, *mask_to_bbox(*it.mask));
      }
    }
  }
}

TEST(DatasetIo, ReadsDetectionsAndValidates) {
  const auto dets = parse_detections(R"([{"image_id":1,"category_id":2,"bbox":[0,0,5,5],"score":0.9}])");
  ASSERT_EQ(dets.size(), 1u);
  EXPECT_EQ(dets[0].bbox, BBox(0, 0, 5, 5));
  try {
    parse_detections(R"([{"image_id":1,"category_id":2,"bbox":[0,0,5,5],"score":0.9},
                         {"image_id":1,"category_id":2,"bbox":[0,0,5,5],"score":1.2}])");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("$[1].score"), std::string::npos);
  }
  try {
    parse_detections(R"([{"image_id":1,"category_id":2,"bbox":[0,0,0,5],"score":0.5}])");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("$[0].bbox[2]"), std::string::npos);
  }
  EXPECT_THROW(parse_detections("{"), ParseError);
}

TEST(DatasetIo, GroundTruthCategoriesAndUnknownReport) {
  const auto gt = parse_groundtruth(
      R"({"annotations":[{"image_id":0,"category_id":1,"bbox":[0,0,2,2]}],"categories":[{"id":1},{"id":3}]})");
  EXPECT_EQ(gt.category_ids, (std::vector<std::int64_t>{1, 3}));
  const auto dets = parse_detections(
      R"([{"image_id":0,"category_id":7,"bbox":[0,0,1,1],"score":0.5},{"image_id":0,"category_id":1,"bbox":[0,0,1,1],"score":0.5}])");
  EXPECT_EQ(unknown_categories(dets, gt), (std::vector<std::int64_t>{7}));
  EXPECT_THROW(parse_groundtruth(R"({"annotations":[{"image_id":0,"category_id":1,"bbox":[0,0,2,-1]}]})"),
               ValidationError);
}

TEST(DatasetIo, ValidationSplitIsTrailingFramesAndRoundTrips) {
  auto ds = consolidate(fig3_scene().tracks, ClusterParams{}, "abc").dataset;
  std::set<std::int32_t> frames;
  for (const auto& it : ds.items) frames.insert(it.frame_index);
  ASSERT_GE(frames.size(), 4u);
  EXPECT_TRUE(validation_frames(ds).empty());

  ds.val_ratio = 0.25;
  const auto val = validation_frames(ds);
  const auto n = static_cast<std::size_t>(std::llround(0.25 * static_cast<double>(frames.size())));
  ASSERT_EQ(val.size(), n);
  EXPECT_EQ(*val.rbegin(), *frames.rbegin());
  for (auto f : frames) {
    if (f > *val.begin()) {
      EXPECT_TRUE(val.count(f)) << f;
    }
  }
  const std::string text = serialize_dataset(ds);
  std::size_t val_images = 0;
  const Json j = Json::parse(text);
  for (const auto& img : j["images"]) {
    EXPECT_EQ(img["split"] == "val", val.count(img["frame_index"].get<std::int32_t>()) == 1);
    val_images += img["split"] == "val";
  }
  EXPECT_EQ(val_images, n);
  EXPECT_EQ(parse_dataset(text), ds);

  ds.val_ratio = 1;
  EXPECT_EQ(validation_frames(ds), frames);
  ds.val_ratio = 1.5;
  EXPECT_THROW(validation_frames(ds), ValidationError);
}
