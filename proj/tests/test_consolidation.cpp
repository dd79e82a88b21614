#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "salient/consolidation.hpp"
#include "salient/datasetio.hpp"
#include "salient/synth.hpp"
#include "support.hpp"

using namespace salient;

namespace {

BitMask pixels(std::uint32_t w, std::uint32_t h, std::initializer_list<int> set) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(w) * h, 0);
  for (int i : set) px[static_cast<std::size_t>(i)] = 1;
  return BitMask::from_pixels(w, h, px);
}

// Pixel-by-pixel vote with threshold ceil(n / 2).
BitMask vote_oracle(const std::vector<BitMask>& ms) {
  const auto w = ms[0].width(), h = ms[0].height();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h, 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t c = 0;
    for (const auto& m : ms) c += m.to_pixels()[i];
    out[i] = 2 * c >= ms.size() ? 1 : 0;
  }
  return BitMask::from_pixels(w, h, out);
}

}  // namespace

TEST(AggregateMasks, Examples) {
  const auto a = pixels(3, 3, {0, 1, 4});
  EXPECT_EQ(aggregate_masks({a}), a);
  const auto b = pixels(3, 3, {8});
  EXPECT_EQ(aggregate_masks({a, b}), pixels(3, 3, {0, 1, 4, 8}));  // n = 2 keeps the union
  const auto c = pixels(3, 3, {0, 2});
  EXPECT_EQ(aggregate_masks({a, c, b}), pixels(3, 3, {0}));
  EXPECT_EQ(aggregate_masks({a, c, pixels(3, 3, {0, 4})}), pixels(3, 3, {0, 4}));
  EXPECT_THROW(aggregate_masks({a, BitMask(3, 4)}), ValidationError);
  EXPECT_THROW(aggregate_masks(std::span<const BitMask>{}), ValidationError);
}

TEST(AggregateMasks, MatchesPixelVoteAndSandwich) {
  testsupport::Gen g(4);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto n = static_cast<std::size_t>(g.integer(1, 6));
    std::vector<BitMask> ms;
    for (std::size_t i = 0; i < n; ++i) ms.push_back(g.mask(5, 4, g.real(0.1, 0.9)));
    const auto got = aggregate_masks(ms);
    ASSERT_EQ(got, vote_oracle(ms));
    std::vector<BitMask> rev(ms.rbegin(), ms.rend());
    ASSERT_EQ(aggregate_masks(rev), got);
    const auto px = got.to_pixels();
    for (std::size_t i = 0; i < px.size(); ++i) {
      bool any = false, all = true;
      for (const auto& m : ms) {
        any = any || m.to_pixels()[i];
        all = all && m.to_pixels()[i];
      }
      if (px[i]) {
        ASSERT_TRUE(any);
      }
      if (all) {
        ASSERT_TRUE(px[i]);
      }
    }
    const std::vector<BitMask> copies(static_cast<std::size_t>(g.integer(1, 5)), ms[0]);
    ASSERT_EQ(aggregate_masks(copies), ms[0]);
  }
}

TEST(AssembleDataset, IdenticalMasksAndMissingFrames) {
  const auto m = BitMask::rectangle(10, 10, 2, 2, 6, 5);
  std::vector<Track> tracks;
  for (const char* id : {"a", "b", "c"}) {
    tracks.push_back({id, 0, Direction::kForward, {{0, BBox(2, 2, 6, 5), m}, {2, BBox(2, 2, 6, 5), m}}});
  }
  const TrackSet ts({"v", 3, 10, 10}, {SeedMask{0, m}}, tracks);
  ObjectAssignment asg;
  asg.label_count = 1;
  for (const char* id : {"a", "b", "c"}) asg.labels[id] = 0;
  const auto ds = assemble_dataset(ts, asg);
  ASSERT_EQ(ds.items.size(), 2u);
  EXPECT_EQ(ds.items[0].frame_index, 0);
  EXPECT_EQ(ds.items[1].frame_index, 2);
  EXPECT_EQ(*ds.items[0].mask, m);
  EXPECT_EQ(ds.items[0].bbox, BBox(2, 2, 6, 5));

  ObjectAssignment unknown = asg;
  unknown.labels["zzz"] = 0;
  EXPECT_THROW(assemble_dataset(ts, unknown), ValidationError);
  ObjectAssignment partial = asg;
  partial.labels.erase("c");
  EXPECT_THROW(assemble_dataset(ts, partial), ValidationError);
}

TEST(AssembleDataset, BoxOnlyFallbackUsesMedian) {
  std::vector<Track> tracks{
      {"a", 0, Direction::kForward, {{0, BBox(0, 0, 10, 10), std::nullopt}}},
      {"b", 0, Direction::kForward, {{0, BBox(2, 1, 12, 11), std::nullopt}}},
      {"c", 0, Direction::kForward, {{0, BBox(1, 30, 11, 40), std::nullopt}}},
  };
  const TrackSet ts({"v", 1, 50, 50}, {}, tracks);
  ObjectAssignment asg;
  asg.label_count = 1;
  for (const char* id : {"a", "b", "c"}) asg.labels[id] = 0;
  const auto ds = assemble_dataset(ts, asg);
  ASSERT_EQ(ds.items.size(), 1u);
  EXPECT_EQ(ds.items[0].bbox, BBox(1, 1, 11, 11));
  EXPECT_FALSE(ds.items[0].mask.has_value());
}

TEST(AssembleDataset, EmptyVoteProducesNoItem) {
  const auto m1 = BitMask::rectangle(10, 10, 0, 0, 2, 2);
  const auto m2 = BitMask::rectangle(10, 10, 4, 4, 6, 6);
  const auto m3 = BitMask::rectangle(10, 10, 8, 8, 10, 10);
  std::vector<Track> tracks{{"a", 0, Direction::kForward, {{0, BBox(0, 0, 2, 2), m1}}},
                            {"b", 0, Direction::kForward, {{0, BBox(4, 4, 6, 6), m2}}},
                            {"c", 0, Direction::kForward, {{0, BBox(8, 8, 10, 10), m3}}}};
  const TrackSet ts({"v", 1, 10, 10}, {}, tracks);
  ObjectAssignment asg;
  asg.label_count = 1;
  for (const char* id : {"a", "b", "c"}) asg.labels[id] = 0;
  EXPECT_TRUE(assemble_dataset(ts, asg).items.empty());
}

TEST(Consolidate, Fig3Coverage) {
  const auto scene = fig3_scene();
  const auto r = consolidate(scene.tracks, ClusterParams{});
  EXPECT_EQ(r.assignment.label_count, 2);
  std::set<std::pair<std::int32_t, std::int32_t>> seen;
  for (const auto& it : r.dataset.items) {
    seen.insert({it.frame_index, it.object_label});
    ASSERT_TRUE(it.mask.has_value());
    EXPECT_EQ(it.bbox, *mask_to_bbox(*it.mask));
  }
  for (std::int32_t f : {18, 20, 30, 40, 48}) {
    EXPECT_TRUE(seen.count({f, 0})) << f;
    EXPECT_TRUE(seen.count({f, 1})) << f;
  }
  EXPECT_EQ(r.dataset.items.size(), 10u);
}

TEST(Consolidate, InvariantsOnRandomScenes) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    SynthConfig cfg;
    cfg.seed = seed;
    cfg.object_count = static_cast<std::int32_t>(1 + seed % 4);
    cfg.frame_count = 25;
    cfg.width = 160;
    cfg.height = 120;
    cfg.jitter = 1.5;
    cfg.spurious_track_count = 2;
    const auto scene = generate(cfg);
    ClusterParams p;
    const auto r = consolidate(scene.tracks, p, "h");
    std::set<std::pair<std::int32_t, std::int32_t>> keys;
    std::set<std::int32_t> labels;
    for (std::size_t i = 0; i < r.dataset.items.size(); ++i) {
      const auto& it = r.dataset.items[i];
      ASSERT_TRUE(keys.insert({it.frame_index, it.object_label}).second);
      ASSERT_GE(it.object_label, 0);
      ASSERT_LT(it.object_label, r.dataset.label_count);
      if (i) {
        const auto& prev = r.dataset.items[i - 1];
        ASSERT_LT(std::make_pair(prev.frame_index, prev.object_label), std::make_pair(it.frame_index, it.object_label));
      }
      labels.insert(it.object_label);
    }
    ASSERT_EQ(static_cast<std::int32_t>(labels.size()), r.dataset.label_count);
    p.threads = 3;
    ASSERT_EQ(serialize_dataset(consolidate(scene.tracks, p, "h").dataset), serialize_dataset(r.dataset));
  }
}
