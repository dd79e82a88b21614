#include <gtest/gtest.h>

#include "salient/consolidation.hpp"
#include "salient/synth.hpp"

using namespace salient;

namespace {

SynthConfig small(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.object_count = 3;
  cfg.frame_count = 30;
  cfg.width = 320;
  cfg.height = 240;
  return cfg;
}

ObjectAssignment assignment(std::initializer_list<std::pair<const char*, std::optional<std::int32_t>>> xs) {
  ObjectAssignment a;
  std::set<std::int32_t> labels;
  for (const auto& [id, l] : xs) {
    a.labels[id] = l;
    if (l) labels.insert(*l);
  }
  a.label_count = static_cast<std::int32_t>(labels.size());
  return a;
}

}  // namespace

TEST(Synth, DeterministicAndThreadInvariant) {
  auto cfg = small(11);
  cfg.jitter = 2.0;
  cfg.spurious_track_count = 4;
  cfg.seeds_per_object = 2;
  const auto a = generate(cfg);
  EXPECT_EQ(serialize_trackset(generate(cfg).tracks), serialize_trackset(a.tracks));
  EXPECT_EQ(serialize_trackset(generate(cfg, 4).tracks), serialize_trackset(a.tracks));
  EXPECT_EQ(a.tracks.tracks().size(), 3u * 2 * 2 + 4);
  EXPECT_EQ(a.tracks.seeds().size(), 6u);
  cfg.seed = 12;
  EXPECT_NE(serialize_trackset(generate(cfg).tracks), serialize_trackset(a.tracks));
}

TEST(Synth, ZeroJitterCopiesTruthIntoEveryTrack) {
  const auto scene = generate(small(3));
  const auto& tracks = scene.tracks.tracks();
  for (const auto& tr : tracks) {
    const auto obj = *scene.truth.objects.at(tr.track_id);
    ASSERT_EQ(tr.entries.size(), 30u);
    for (const auto& other : tracks) {
      if (*scene.truth.objects.at(other.track_id) != obj) continue;
      for (std::size_t i = 0; i < tr.entries.size(); ++i) ASSERT_EQ(tr.entries[i].bbox, other.entries[i].bbox);
    }
    for (const auto& e : tr.entries) {
      ASSERT_TRUE(e.mask.has_value());
      ASSERT_EQ(*mask_to_bbox(*e.mask), e.bbox);
    }
  }
}

TEST(Synth, OcclusionRemovesFrames) {
  auto cfg = small(5);
  cfg.occlusions.push_back({1, 10, 20});
  const auto scene = generate(cfg);
  for (const auto& tr : scene.tracks.tracks()) {
    if (*scene.truth.objects.at(tr.track_id) != 1) continue;
    EXPECT_EQ(tr.entries.size(), 20u);
    for (const auto& e : tr.entries) EXPECT_TRUE(e.frame < 10 || e.frame >= 20);
  }
  cfg.occlusions = {{0, 0, 30}};
  EXPECT_THROW(generate(cfg), ValidationError);
}

TEST(Synth, ConfigParsing) {
  const auto cfg = parse_synth_config(
      "# scene\nobject_count = 4\nframe_count=20\njitter = 1.5\nocclusion = 1:3-7\nocclusion = 2:0-1\nmasks = false\n"
      "seed = 99\n");
  EXPECT_EQ(cfg.object_count, 4);
  EXPECT_EQ(cfg.jitter, 1.5);
  EXPECT_FALSE(cfg.masks);
  EXPECT_EQ(cfg.seed, 99u);
  ASSERT_EQ(cfg.occlusions.size(), 2u);
  EXPECT_EQ(cfg.occlusions[0], (OcclusionWindow{1, 3, 7}));
  try {
    parse_synth_config("object_count = 2\nframe_count = many\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_synth_config("colour = red"), ParseError);
  EXPECT_THROW(parse_synth_config("object_count = 0"), ValidationError);
  EXPECT_THROW(parse_synth_config("occlusion = 1-3"), ParseError);
}

TEST(PartitionScoring, HandComputedCases) {
  GroundTruth gt{{{"a", 0}, {"b", 0}, {"c", 1}, {"d", 1}, {"s", std::nullopt}}};
  auto perfect = score_partition(assignment({{"a", 0}, {"b", 0}, {"c", 1}, {"d", 1}, {"s", std::nullopt}}), gt);
  EXPECT_EQ(perfect.purity, 1.0);
  EXPECT_EQ(perfect.adjusted_rand, 1.0);
  EXPECT_EQ(perfect.spurious_discard_rate, 1.0);

  // Labels are arbitrary.
  EXPECT_EQ(score_partition(assignment({{"a", 1}, {"b", 1}, {"c", 0}, {"d", 0}, {"s", std::nullopt}}), gt)
                .adjusted_rand,
            1.0);

  auto merged = score_partition(assignment({{"a", 0}, {"b", 0}, {"c", 0}, {"d", 0}, {"s", 0}}), gt);
  EXPECT_EQ(merged.adjusted_rand, 0.0);
  EXPECT_EQ(merged.purity, 0.5);
  EXPECT_EQ(merged.spurious_discard_rate, 0.0);

  auto dropped = score_partition(assignment({{"a", 0}, {"b", std::nullopt}, {"c", 1}, {"d", 1}, {"s", std::nullopt}}), gt);
  EXPECT_EQ(dropped.purity, 0.75);
  EXPECT_LT(dropped.adjusted_rand, 1.0);

  EXPECT_THROW(score_partition(assignment({{"a", 0}}), gt), ValidationError);
}

TEST(PartitionScoring, TruthJson) {
  GroundTruth gt{{{"a", 0}, {"s", std::nullopt}}};
  EXPECT_EQ(truth_to_json(gt).dump(), R"({"a":0,"s":"SPURIOUS"})");
}

TEST(Recovery, NoiseFreeScenesArePartitionedExactly) {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    auto cfg = small(seed);
    cfg.object_count = static_cast<std::int32_t>(1 + seed % 5);
    cfg.seeds_per_object = static_cast<std::int32_t>(1 + seed % 2);
    const auto scene = generate(cfg);
    const auto r = consolidate(scene.tracks, ClusterParams{});
    const auto s = score_partition(r.assignment, scene.truth);
    ASSERT_EQ(s.adjusted_rand, 1.0) << seed;
    ASSERT_EQ(s.purity, 1.0) << seed;
    ASSERT_EQ(r.assignment.label_count, cfg.object_count) << seed;
  }
}

TEST(Recovery, JitterAndSpuriousTracks) {
  double purity = 0, discard = 0;
  const int n = 20;
  for (int seed = 1; seed <= n; ++seed) {
    auto cfg = small(static_cast<std::uint64_t>(seed));
    cfg.jitter = 2.0;
    cfg.seeds_per_object = 2;
    cfg.spurious_track_count = 3;
    const auto scene = generate(cfg);
    const auto s = score_partition(consolidate(scene.tracks, ClusterParams{}).assignment, scene.truth);
    purity += s.purity;
    discard += s.spurious_discard_rate;
  }
  EXPECT_GE(purity / n, 0.95);
  EXPECT_GE(discard / n, 0.9);
}

TEST(Recovery, Fig3PresetCrossing) {
  const auto scene = fig3_scene();
  const auto s = score_partition(consolidate(scene.tracks, ClusterParams{}).assignment, scene.truth);
  EXPECT_EQ(s.purity, 1.0);
  EXPECT_EQ(s.adjusted_rand, 1.0);
  EXPECT_EQ(s.spurious_discard_rate, 1.0);
}
