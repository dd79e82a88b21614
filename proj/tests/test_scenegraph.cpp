#include <gtest/gtest.h>

#include <cmath>

#include "salient/scenegraph.hpp"
#include "support.hpp"

using namespace salient;

namespace {

// n points on a line with 5 mm spacing starting at `origin`.
std::vector<Point3> cloud(std::size_t n, Point3 origin) {
  std::vector<Point3> pts;
  for (std::size_t i = 0; i < n; ++i) pts.push_back({origin.x + 0.005 * static_cast<double>(i), origin.y, origin.z});
  return pts;
}

Observation obs(const std::string& label, double seg, std::size_t n, Point3 at = {}, double t = 0) {
  return {t, label, seg, cloud(n, at), std::nullopt};
}

}  // namespace

TEST(Fitness, PixelConfidenceFormulaAndInclusiveBoundary) {
  FitnessParams p;
  const auto o = obs("cup", 0.5, 2500);
  EXPECT_NEAR(pixel_confidence(o, p), 10.0, 1e-9);
  EXPECT_EQ(frame_fit(o, p), FitVerdict::kAccept);
  EXPECT_EQ(frame_fit(obs("cup", 0.5, 2600), p), FitVerdict::kRejectPixelConfidence);
  EXPECT_EQ(frame_fit(obs("cup", 0.3, 10), p), FitVerdict::kAccept);
  EXPECT_EQ(frame_fit(obs("cup", 0.29, 10), p), FitVerdict::kRejectSegScore);
  EXPECT_EQ(frame_fit(obs("cup", 0.9, 0), p), FitVerdict::kRejectEmpty);
}

TEST(Fitness, ObjectScoreGrowsWithSightings) {
  FitnessParams p;
  SceneGraph g(p);
  for (int i = 0; i < 6; ++i) g.integrate(obs("cup", 0.8, 20));
  ASSERT_EQ(g.nodes().size(), 1u);
  EXPECT_EQ(g.nodes()[0].sightings(), 6);
  EXPECT_NEAR(object_score(g.nodes()[0], p), 0.9, 1e-9);
}

TEST(Association, MergesOnOverlapAndSplitsOtherwise) {
  SceneGraph g;
  g.integrate(obs("cup", 0.6, 20));
  g.integrate(obs("cup", 0.7, 20, {1, 0, 0}));  // far away
  ASSERT_EQ(g.nodes().size(), 2u);
  g.integrate(obs("cup", 0.9, 20, {0.001, 0, 0}));  // within radius of node 0
  ASSERT_EQ(g.nodes().size(), 2u);
  EXPECT_EQ(g.nodes()[0].sightings(), 2);
  EXPECT_EQ(g.nodes()[0].seg_score(), 0.9);
  g.integrate(obs("bowl", 0.9, 20));  // other label never merges
  EXPECT_EQ(g.nodes().size(), 3u);

  // Exactly half the points overlapping still merges.
  SceneGraph h;
  h.integrate(obs("cup", 0.6, 10));
  auto half = cloud(5, {0, 0, 0});
  for (auto q : cloud(5, {0, 2, 0})) half.push_back(q);
  const Association a = h.associate({0, "cup", 0.6, half, std::nullopt});
  EXPECT_DOUBLE_EQ(a.overlap, 0.5);
  EXPECT_EQ(a.merge_into, std::optional<std::int64_t>(0));
}

TEST(AcceptanceGroups, HoldUntilCompleteThenIntegrateBestPerLabel) {
  SceneGraph g({}, {{{"basket", "apple"}, 0.5}});
  EXPECT_EQ(g.integrate(obs("apple", 0.5, 10, {}, 0.0)), IntegrateOutcome::kBuffered);
  EXPECT_EQ(g.integrate(obs("apple", 0.8, 10, {3, 0, 0}, 0.1)), IntegrateOutcome::kBuffered);
  EXPECT_TRUE(g.nodes().empty());
  EXPECT_EQ(g.integrate(obs("basket", 0.7, 10, {5, 5, 5}, 0.2)), IntegrateOutcome::kIntegrated);
  ASSERT_EQ(g.nodes().size(), 2u);
  EXPECT_EQ(g.integrated_counts().at("apple"), 1);
  EXPECT_EQ(g.query("apple")->seg_score(), 0.8);

  // Ungrouped labels bypass the buffer; stale partials expire.
  EXPECT_EQ(g.integrate(obs("plate", 0.7, 10)), IntegrateOutcome::kIntegrated);
  EXPECT_EQ(g.integrate(obs("apple", 0.9, 10, {9, 9, 9}, 1.0)), IntegrateOutcome::kBuffered);
  EXPECT_EQ(g.integrate(obs("basket", 0.9, 10, {5, 5, 5}, 2.0)), IntegrateOutcome::kBuffered);
  EXPECT_EQ(g.integrated_counts().at("apple"), 1);
  EXPECT_EQ(g.integrate(obs("cup", 0.1, 10)), IntegrateOutcome::kRejected);
}

TEST(AcceptanceGroups, InvalidConfigurations) {
  EXPECT_THROW(SceneGraph({}, {{{"a", "b"}, 0}, {{"b"}, 0}}), ValidationError);
  EXPECT_THROW(SceneGraph({}, {{{}, 0}}), ValidationError);
  FitnessParams bad;
  bad.alpha = 0;
  EXPECT_THROW(SceneGraph{bad}, ValidationError);
}

TEST(Locking, LockedNodeWinsQueriesAndIsUnique) {
  SceneGraph g;
  g.integrate(obs("cup", 0.4, 10));
  g.integrate(obs("cup", 0.95, 10, {1, 0, 0}));
  EXPECT_EQ(g.query("cup")->node_id(), 1);
  g.lock(0);
  EXPECT_EQ(g.query("cup")->node_id(), 0);
  EXPECT_THROW(g.lock(1), ValidationError);
  EXPECT_THROW(g.lock(42), ValidationError);
  g.unlock(0);
  g.lock(1);
  EXPECT_EQ(g.query("cup")->node_id(), 1);
  EXPECT_EQ(g.query("nothing"), nullptr);
}

TEST(Forget, RemovesLabelAndBuffered) {
  SceneGraph g({}, {{{"a", "b"}, 1}});
  g.integrate(obs("cup", 0.9, 10));
  g.integrate(obs("a", 0.9, 10));
  g.forget("cup");
  g.forget("a");
  EXPECT_TRUE(g.nodes().empty());
  EXPECT_EQ(g.integrate(obs("b", 0.9, 10)), IntegrateOutcome::kBuffered);
}

TEST(Replay, DirectivesAndErrors) {
  SceneGraph g;
  const std::string stream =
      R"({"t":0,"label":"cup","seg_score":0.9,"points":[[0,0,0],[0.01,0,0]]})"
      "\n\n"
      R"({"t":1,"label":"cup","seg_score":0.1,"points":[[0,0,0]]})"
      "\n"
      R"({"directive":"lock","label":"cup"})"
      "\n";
  const auto s = replay_stream(g, stream);
  EXPECT_EQ(s.observations, 2u);
  EXPECT_EQ(s.rejected, 1u);
  EXPECT_EQ(s.integrated, 1u);
  EXPECT_EQ(s.directives, 1u);
  EXPECT_TRUE(g.nodes()[0].locked());
  const Json j = graph_to_json(g);
  EXPECT_EQ(j["nodes"][0]["label"], "cup");
  EXPECT_EQ(j["nodes"][0]["pose"][0], 0.005);

  SceneGraph h;
  try {
    replay_stream(h, stream + R"({"directive":"explode","node_id":0})" + "\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 5u);
  }
  try {
    replay_stream(h, "{\"t\":0}\nnot json\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 1u);
  }
  EXPECT_EQ(parse_groups(R"([{"labels":["a","b"],"window":0.5}])")[0].labels.size(), 2u);
}

TEST(SceneGraphProperties, RandomizedInvariants) {
  testsupport::Gen gen(77);
  FitnessParams p;
  SceneGraph g(p, {{{"l2", "l3"}, 0.3}});
  const std::vector<std::string> labels{"l0", "l1", "l2", "l3"};
  double t = 0;
  for (int step = 0; step < 10000; ++step) {
    t += gen.real(0, 0.1);
    const int op = gen.integer(0, 99);
    if (op < 85) {
      const auto& label = labels[static_cast<std::size_t>(gen.integer(0, 3))];
      const auto n = static_cast<std::size_t>(gen.integer(0, 30));
      const Point3 at{static_cast<double>(gen.integer(0, 3)), 0, 0};
      const Observation o{t, label, gen.real(0, 1), cloud(n, at), std::nullopt};
      const auto before = g.nodes().size();
      const auto outcome = g.integrate(o);
      if (frame_fit(o, p) != FitVerdict::kAccept) {
        ASSERT_EQ(outcome, IntegrateOutcome::kRejected);
        ASSERT_EQ(g.nodes().size(), before);
      }
    } else if (op < 93 && !g.nodes().empty()) {
      const auto& n = g.nodes()[static_cast<std::size_t>(gen.integer(0, static_cast<std::int64_t>(g.nodes().size()) - 1))];
      const auto id = n.node_id();
      try {
        g.lock(id);
      } catch (const ValidationError&) {
        g.unlock(id);
      }
    } else if (op < 97 && !g.nodes().empty()) {
      g.unlock(g.nodes()[0].node_id());
    } else {
      g.forget(labels[static_cast<std::size_t>(gen.integer(0, 3))]);
    }
    std::map<std::string, int> locks;
    std::set<std::int64_t> ids;
    for (const auto& n : g.nodes()) {
      ASSERT_TRUE(ids.insert(n.node_id()).second);
      ASSERT_GE(n.sightings(), 1);
      ASSERT_GE(object_score(n, p), n.seg_score());
      if (n.locked()) ++locks[n.label()];
    }
    for (const auto& [label, c] : locks) {
      ASSERT_EQ(c, 1);
      ASSERT_TRUE(g.query(label)->locked());
    }
    for (const auto& label : labels) {
      const SceneNode* q = g.query(label);
      if (!q || q->locked()) continue;
      for (const auto& n : g.nodes()) {
        if (n.label() == label) {
          ASSERT_LE(object_score(n, p), object_score(*q, p));
        }
      }
    }
  }
}
