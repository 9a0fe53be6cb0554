#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "psadet/eval.hpp"
#include "test_util.hpp"

using namespace psadet;
using namespace psadet::eval;

namespace {

kitti::KittiObject obj(int occ, double trunc, double height) {
  kitti::KittiObject o;
  o.type = "Car";
  o.occlusion = occ;
  o.truncation = trunc;
  o.top = 100.0;
  o.bottom = 100.0 + height;
  return o;
}

std::vector<ScoredBox> scored(const std::vector<Box3D>& b, const std::vector<double>& s) {
  std::vector<ScoredBox> out;
  for (std::size_t i = 0; i < b.size(); ++i) out.push_back({b[i], s[i]});
  return out;
}

}  // namespace

TEST(Difficulty, Tiers) {
  EXPECT_EQ(assign_difficulty(obj(0, 0.0, 50)), Difficulty::easy);
  EXPECT_EQ(assign_difficulty(obj(1, 0.2, 30)), Difficulty::moderate);
  EXPECT_EQ(assign_difficulty(obj(2, 0.4, 30)), Difficulty::hard);
  EXPECT_EQ(assign_difficulty(obj(3, 0.0, 50)), Difficulty::none);
  EXPECT_EQ(assign_difficulty(obj(0, 0.0, 10)), Difficulty::none);
  EXPECT_EQ(assign_difficulty(obj(0, 0.6, 50)), Difficulty::none);
  // Cumulative: an easy object also counts for the harder tiers.
  EXPECT_TRUE(qualifies(obj(0, 0.0, 50), Difficulty::hard));
  EXPECT_FALSE(qualifies(obj(2, 0.4, 30), Difficulty::moderate));
  EXPECT_EQ(difficulty_from_string(to_string(Difficulty::moderate)), Difficulty::moderate);
  EXPECT_THROW(difficulty_from_string("medium"), Error);
}

TEST(Matching, HighestScoreTakesTheGroundTruth) {
  const Box3D g = make_box(0, 0, 0, 4, 2, 1.5);
  const std::vector<Box3D> gts{g};
  const auto dets = scored({g, g}, {0.3, 0.9});
  const auto a = match_detections(dets, gts, 0.7);
  EXPECT_EQ(a.flags[1], MatchFlag::true_positive);
  EXPECT_EQ(a.flags[0], MatchFlag::false_positive);
  EXPECT_EQ(a.matched_gt[1], 0);
  EXPECT_EQ(a.matched_gt[0], -1);
  EXPECT_EQ(a.true_positives, 1u);
  EXPECT_EQ(a.false_negatives, 0u);
}

TEST(Matching, ThresholdIsInclusive) {
  const Box3D g = make_box(0, 0, 0, 2, 1, 1);
  const Box3D d = make_box(0.5, 0, 0, 2, 1, 1);  // IoU 1.5 / 2.5 = 0.6
  const std::vector<Box3D> gts{g};
  const auto dets = scored({d}, {1.0});
  EXPECT_EQ(match_detections(dets, gts, 0.6).flags[0], MatchFlag::true_positive);
  EXPECT_EQ(match_detections(dets, gts, 0.6000001).flags[0], MatchFlag::false_positive);
}

TEST(Matching, PrefersNonIgnoredGroundTruth) {
  const Box3D g = make_box(0, 0, 0, 2, 2, 2);
  const std::vector<Box3D> gts{g, make_box(0.1, 0, 0, 2, 2, 2)};
  const std::vector<std::uint8_t> ignore{1, 0};
  const auto dets = scored({g}, {1.0});
  const auto a = match_detections(dets, gts, 0.5, ignore);
  EXPECT_EQ(a.matched_gt[0], 1);
  EXPECT_EQ(a.flags[0], MatchFlag::true_positive);
  const std::vector<std::uint8_t> both{1, 1};
  EXPECT_EQ(match_detections(dets, gts, 0.5, both).flags[0], MatchFlag::ignored);
}

TEST(Matching, AgreesWithExhaustiveOracle) {
  Rng rng(31);
  auto count = [&] { return static_cast<int>(rng.below(9)); };
  auto coin = [&] { return static_cast<int>(rng.below(4)); };
  auto score = [&] { return rng.uniform(0.0, 1.0); };
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<Box3D> gts, dets;
    std::vector<double> scores;
    std::vector<std::uint8_t> ign;
    const int ng = count(), nd = count();
    for (int g = 0; g < ng; ++g) {
      gts.push_back(testutil::random_box(rng, 3.0, 0.8, 2.5));
      ign.push_back(coin() == 0);
    }
    for (int d = 0; d < nd; ++d) {
      dets.push_back(ng && coin() ? testutil::nearby_box(rng, gts[d % ng]) : testutil::random_box(rng, 3.0, 0.8, 2.5));
      scores.push_back(coin() == 0 && d ? scores.back() : score());  // some ties
    }
    const auto a = match_detections(scored(dets, scores), gts, 0.3, ign);
    const auto m = oracle::greedy_match(dets, scores, gts, ign, 0.3);
    for (int d = 0; d < nd; ++d) {
      EXPECT_EQ(static_cast<int>(a.flags[d]), m.flag[d]) << "trial " << trial;
      EXPECT_EQ(a.matched_gt[d], m.gt[d]) << "trial " << trial;
    }
  }
}

TEST(Ap, PerfectAndEmpty) {
  std::vector<Box3D> gts;
  for (int i = 0; i < 5; ++i) gts.push_back(make_box(10.0 * i, 0, 0, 4, 2, 1.5));
  std::vector<double> s{0.9, 0.8, 0.7, 0.6, 0.5};
  EXPECT_DOUBLE_EQ(average_precision_40(scored(gts, s), gts, 0.7).ap, 1.0);
  EXPECT_DOUBLE_EQ(average_precision_40({}, gts, 0.7).ap, 0.0);
  EXPECT_THROW(average_precision_40(scored(gts, s), std::vector<Box3D>{}, 0.7), Error);
}

TEST(Ap, FalsePositiveAboveOnlyHitGivesHalf) {
  const std::vector<Box3D> gts{make_box(0, 0, 0, 4, 2, 1.5)};
  const auto dets = scored({make_box(20, 0, 0, 4, 2, 1.5), gts[0]}, {0.9, 0.8});
  const auto r = average_precision_40(dets, gts, 0.7);
  EXPECT_DOUBLE_EQ(r.ap, 0.5);
  ASSERT_EQ(r.curve.size(), 2u);
  EXPECT_DOUBLE_EQ(r.curve[0].precision, 0.0);
  EXPECT_DOUBLE_EQ(r.curve[1].recall, 1.0);
}

TEST(Ap, TiesAreOneThreshold) {
  // A TP and an FP at the same score: precision is 1/2 at recall 1, never 1.
  const std::vector<Box3D> gts{make_box(0, 0, 0, 4, 2, 1.5)};
  const auto dets = scored({gts[0], make_box(20, 0, 0, 4, 2, 1.5)}, {0.5, 0.5});
  const auto r = average_precision_40(dets, gts, 0.7);
  EXPECT_EQ(r.curve.size(), 1u);
  EXPECT_DOUBLE_EQ(r.ap, 0.5);
}

TEST(Ap, MatchesOracleWithDistinctScores) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n_gt = 1 + rng() % 30, n = rng() % 60;
    std::vector<std::pair<double, bool>> pairs;
    std::size_t tps = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool tp = tps < n_gt && u(rng) < 0.5;
      tps += tp;
      pairs.emplace_back(u(rng), tp);
    }
    EXPECT_NEAR(average_precision_from_flags(pairs, n_gt).ap, oracle::ap40(pairs, n_gt), 1e-12);
  }
}

TEST(Ap, InterpolatedPrecisionNonIncreasingAndBounded) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<double, bool>> pairs;
    for (int i = 0; i < 40; ++i) pairs.emplace_back(std::floor(u(rng) * 10) / 10, u(rng) < 0.4);
    const auto r = average_precision_from_flags(pairs, 20);
    for (std::size_t j = 1; j < r.interpolated.size(); ++j) EXPECT_LE(r.interpolated[j], r.interpolated[j - 1]);
    EXPECT_GE(r.ap, 0.0);
    EXPECT_LE(r.ap, 1.0);
  }
}

TEST(Ap, AddingATrueHitNeverLowersAp) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<double, bool>> pairs;
    for (int i = 0; i < 10; ++i) pairs.emplace_back(u(rng), u(rng) < 0.5);
    const auto before = average_precision_from_flags(pairs, 20).ap;
    // Turning a false positive into a hit.
    for (auto& p : pairs) {
      if (!p.second) {
        p.second = true;
        break;
      }
    }
    EXPECT_GE(average_precision_from_flags(pairs, 20).ap, before - 1e-15);
  }
}

TEST(EvaluateClass, GroundTruthAsDetectionsOnFixtures) {
  const auto calib = kitti::KittiCalib::reference();
  std::vector<FrameData> frames;
  for (const auto& stem : {"000000", "000001", "000002"}) {
    const auto labels = kitti::read_labels(testutil::data_dir() / "kitti" / "label_2" / (std::string(stem) + ".txt"));
    FrameData f;
    f.gts = ground_truths(labels, calib);
    for (const auto& g : f.gts) f.dets.push_back({g.cls, g.box, 1.0});
    frames.push_back(std::move(f));
  }
  EvalConfig cfg;
  for (const auto& cls : {"Car", "Pedestrian", "Cyclist"}) {
    for (auto d : {Difficulty::easy, Difficulty::moderate, Difficulty::hard}) {
      std::size_t n = 0;
      for (const auto& f : frames)
        for (const auto& g : f.gts) n += g.cls == cls && qualifies(g.attrs, d);
      if (n == 0) {
        EXPECT_THROW(evaluate_class(frames, cls, d, cfg), Error);
        continue;
      }
      EXPECT_DOUBLE_EQ(evaluate_class(frames, cls, d, cfg).ap, 1.0) << cls << " " << to_string(d);
    }
  }
}

TEST(EvaluateClass, IgnoredGroundTruthsDoNotCount) {
  FrameData f;
  kitti::KittiObject hard_only = obj(2, 0.4, 30);
  f.gts.push_back({"Car", make_box(0, 0, 0, 4, 2, 1.5), obj(0, 0, 50)});
  f.gts.push_back({"Car", make_box(20, 0, 0, 4, 2, 1.5), hard_only});
  f.dets.push_back({"Car", make_box(20, 0, 0, 4, 2, 1.5), 0.9});
  f.dets.push_back({"Car", make_box(0, 0, 0, 4, 2, 1.5), 0.8});
  const std::vector<FrameData> frames{f};
  EvalConfig cfg;
  const auto easy = evaluate_class(frames, "Car", Difficulty::easy, cfg);
  EXPECT_EQ(easy.num_gt, 1u);
  EXPECT_EQ(easy.num_det, 1u);
  EXPECT_DOUBLE_EQ(easy.ap, 1.0);
  EXPECT_EQ(evaluate_class(frames, "Car", Difficulty::hard, cfg).num_gt, 2u);
  EXPECT_THROW(evaluate_class(frames, "Truck", Difficulty::easy, cfg), Error);
}
