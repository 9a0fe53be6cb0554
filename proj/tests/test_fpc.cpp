#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "psadet/fpc.hpp"
#include "test_util.hpp"

using namespace psadet;
using namespace psadet::fpc;

namespace {

Box3D cube_at(const Point3& c, double s) { return make_box(c.x, c.y, c.z, s, s, s); }

struct Instance {
  std::vector<Point3> pts;
  std::vector<double> conf;
  std::vector<Box3D> boxes;
};

Instance random_instance(Rng& rng, std::size_t n) {
  Instance in;
  in.pts = testutil::random_points(rng, n, 3, 2);
  for (std::size_t i = 0; i < n; ++i) {
    // Coarse confidences so ties happen.
    in.conf.push_back(std::round(rng.uniform() * 8.0) / 8.0);
    const auto& p = in.pts[i];
    in.boxes.push_back(make_box(p.x + rng.normal(0, 0.3), p.y + rng.normal(0, 0.3), p.z + rng.normal(0, 0.3),
                                rng.uniform(0.2, 2.5), rng.uniform(0.2, 2.5), rng.uniform(0.2, 2.5),
                                rng.uniform(-3.0, 3.0)));
  }
  return in;
}

}  // namespace

TEST(CenterEstimation, HandTrace) {
  const std::vector<Point3> pts{{0, 0, 0}, {0.5, 0, 0}, {5, 0, 0}};
  const std::vector<double> conf{0.9, 0.8, 0.7};
  const std::vector<Box3D> boxes{cube_at({0.25, 0, 0}, 1.0), cube_at({0.5, 0, 0}, 0.2), cube_at({5, 0, 0}, 0.5)};
  const auto est = center_estimation(pts, conf, boxes);
  EXPECT_EQ(est.center, (std::vector<std::uint8_t>{1, 0, 1}));
  EXPECT_EQ(est.order, (std::vector<std::size_t>{0, 2}));
}

TEST(CenterEstimation, SelfOnlyBoxesMakeEveryPointACenter) {
  Rng rng(1);
  const auto pts = testutil::random_points(rng, 60, 50, 50);
  std::vector<double> conf(60);
  std::vector<Box3D> boxes;
  for (std::size_t i = 0; i < 60; ++i) {
    conf[i] = rng.uniform();
    boxes.push_back(cube_at(pts[i], 1e-3));
  }
  const auto est = center_estimation(pts, conf, boxes);
  EXPECT_TRUE(std::all_of(est.center.begin(), est.center.end(), [](auto c) { return c == 1; }));
}

TEST(CenterEstimation, MatchesLiteralOracleAndInvariants) {
  Rng rng(2);
  for (int t = 0; t < 300; ++t) {
    const auto in = random_instance(rng, 1 + rng.below(64));
    const auto est = center_estimation(in.pts, in.conf, in.boxes);
    const auto ref = oracle::center_estimation(in.pts, in.conf, in.boxes);
    ASSERT_EQ(est.center, ref.center) << "instance " << t;
    ASSERT_EQ(est.ignored, ref.ignored);
    ASSERT_EQ(est.order, ref.order);
    for (std::size_t i = 0; i < in.pts.size(); ++i) EXPECT_TRUE(est.center[i] || est.ignored[i]);
    for (std::size_t k = 1; k < est.order.size(); ++k) EXPECT_GE(in.conf[est.order[k - 1]], in.conf[est.order[k]]);
  }
}

TEST(CenterEstimation, GridCellDoesNotMatter) {
  Rng rng(3);
  const auto in = random_instance(rng, 64);
  const auto a = center_estimation(in.pts, in.conf, in.boxes, 0.05);
  const auto b = center_estimation(in.pts, in.conf, in.boxes, 50.0);
  EXPECT_EQ(a.center, b.center);
  EXPECT_EQ(a.ignored, b.ignored);
}

TEST(CenterEstimation, Errors) {
  const std::vector<Point3> pts{{0, 0, 0}};
  const std::vector<Box3D> boxes{cube_at({0, 0, 0}, 1)};
  EXPECT_THROW(center_estimation(pts, std::vector<double>{}, boxes), Error);
  EXPECT_THROW(center_estimation(pts, std::vector<double>{NAN}, boxes), Error);
  EXPECT_TRUE(center_estimation({}, {}, {}).center.empty());
}

TEST(FuseScores, Examples) {
  EXPECT_NEAR(fuse_scores(std::vector<double>{0.8}, std::vector<std::uint8_t>{1}, 0.5)[0], 1.2, 1e-15);
  const std::vector<double> c{0.3, 0.6, 0.9};
  EXPECT_EQ(fuse_scores(c, std::vector<std::uint8_t>{0, 0, 0}, 0.7), c);
  EXPECT_EQ(fuse_scores(c, std::vector<std::uint8_t>{1, 0, 1}, 0.0), c);
  EXPECT_THROW(fuse_scores(c, std::vector<std::uint8_t>{1, 0, 1}, -0.1), Error);
  EXPECT_THROW(fuse_scores(c, std::vector<std::uint8_t>{1, 0}, 0.5), Error);
  EXPECT_THROW(fuse_scores(c, std::vector<std::uint8_t>{1, 0, 2}, 0.5), Error);
}

TEST(FuseScores, PreservesOrderWithinGroupsAndNeverDecreases) {
  Rng rng(4);
  std::vector<double> c(500);
  std::vector<std::uint8_t> m(500);
  for (std::size_t i = 0; i < 500; ++i) c[i] = rng.uniform(), m[i] = rng.below(2);
  const auto f = fuse_scores(c, m, 0.75);
  for (std::size_t i = 0; i < 500; ++i) {
    EXPECT_GE(f[i], c[i]);
    for (std::size_t j = 0; j < 500; j += 7) {
      if (m[i] == m[j] && c[i] < c[j]) EXPECT_LT(f[i], f[j]);
    }
  }
}

TEST(RankCandidates, Examples) {
  const std::vector<double> s{0.1, 0.9, 0.5, 0.9, 0.3};
  EXPECT_EQ(rank_candidates(s, 5), (std::vector<std::size_t>{1, 3, 2, 4, 0}));
  EXPECT_EQ(rank_candidates(s, 2), (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(rank_candidates(s, 99).size(), 5u);
  EXPECT_TRUE(rank_candidates(s, 0).empty());
  EXPECT_EQ(rank_candidates(std::vector<double>(10, 0.5), 4), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(RankCandidates, MatchesFullSort) {
  Rng rng(5);
  std::vector<double> s(1000);
  for (auto& v : s) v = std::round(rng.uniform() * 50) / 50;
  std::vector<std::size_t> all(s.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::stable_sort(all.begin(), all.end(), [&](auto a, auto b) { return s[a] > s[b]; });
  all.resize(100);
  EXPECT_EQ(rank_candidates(s, 100), all);
}

TEST(Pipeline, ZeroRatioIsRawTopK) {
  Rng rng(6);
  const auto in = random_instance(rng, 64);
  const auto res = fpc_pipeline(in.pts, in.conf, in.boxes, 0.0, 10);
  EXPECT_EQ(res.candidates, rank_candidates(in.conf, 10));
  EXPECT_EQ(res.state.fused, in.conf);
}

TEST(Pipeline, CenterOvertakesIgnoredPointAtThresholdRatio) {
  // Point 0 (0.9) is a center whose box swallows point 1 (0.8), so point 1 is
  // ignored and never fused. The object's best point (0.6) is a center.
  // It overtakes point 1 once 0.6 * (1 + r) > 0.8, i.e. r > 1/3.
  std::vector<Point3> pts{{10, 0, 0}, {10.2, 0, 0}, {0, 0, 0}, {0.1, 0, 0}, {0, 0.1, 0}, {-0.1, 0, 0}};
  std::vector<double> conf{0.9, 0.8, 0.6, 0.5, 0.5, 0.5};
  std::vector<Box3D> boxes(6, cube_at({0, 0, 0}, 1.0));
  boxes[0] = boxes[1] = cube_at(pts[0], 1.0);
  const auto at = [&](double r) { return fpc_pipeline(pts, conf, boxes, r, 2).candidates; };
  EXPECT_EQ(at(0.3), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(at(0.34), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(at(2.0), (std::vector<std::size_t>{0, 2}));
}

TEST(Pipeline, RerankReusesCenters) {
  Rng rng(7);
  const auto in = random_instance(rng, 40);
  auto res = fpc_pipeline(in.pts, in.conf, in.boxes, 0.5, 8);
  const auto again = rerank(res.state, 0.5, 8);
  EXPECT_EQ(again, res.candidates);
  EXPECT_EQ(rerank(res.state, 0.0, 8), rank_candidates(in.conf, 8));
}

TEST(Recall, CountsBoxesWithACandidate) {
  const std::vector<Point3> pts{{0, 0, 0}, {5, 0, 0}, {9, 9, 9}};
  const std::vector<Box3D> gts{cube_at({0, 0, 0}, 1), cube_at({5, 0, 0}, 1), cube_at({-5, 0, 0}, 1)};
  std::size_t hit = 0;
  EXPECT_DOUBLE_EQ(candidate_recall(pts, std::vector<std::size_t>{0, 2}, gts, &hit), 1.0 / 3.0);
  EXPECT_EQ(hit, 1u);
  EXPECT_EQ(candidate_recall(pts, std::vector<std::size_t>{0}, {}), 0.0);
}

TEST(PredictionFiles, CsvRoundTripIsExact) {
  Rng rng(8);
  PointPredictions p;
  for (int i = 0; i < 20; ++i) {
    p.confidence.push_back(rng.uniform());
    p.boxes.push_back(testutil::random_box(rng));
  }
  const auto back = parse_predictions_csv(format_predictions_csv(p));
  ASSERT_EQ(back.size(), 20u);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(back.confidence[i], p.confidence[i]);
    EXPECT_EQ(back.boxes[i].cx, p.boxes[i].cx);
    EXPECT_EQ(back.boxes[i].yaw, p.boxes[i].yaw);
  }
}

TEST(PredictionFiles, CsvErrorsCarryLineNumbers) {
  const std::string hdr = std::string(kPredictionCsvHeader) + "\n";
  try {
    parse_predictions_csv(hdr + "0.5,0,0,0,1,1,1,0\n0.5,0,0,0,1,1\n", "p.csv");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse_predictions_csv("bad header\n"), ParseError);
  EXPECT_THROW(parse_predictions_csv(hdr + "0.5,0,0,0,0,1,1,0\n"), ParseError);
  EXPECT_THROW(parse_predictions_csv(hdr + "x,0,0,0,1,1,1,0\n"), ParseError);
  EXPECT_EQ(parse_predictions_csv(hdr).size(), 0u);
}

TEST(PredictionFiles, BinaryRoundTripAndFiles) {
  PointPredictions p;
  p.confidence = {0.25, 0.75};
  p.boxes = {make_box(1, 2, 3, 1, 2, 3, 0.5), make_box(-1, 0, 0, 2, 2, 2)};
  const auto bin = encode_predictions_binary(p);
  EXPECT_EQ(bin.size(), 64u);
  const auto back = decode_predictions_binary(bin);
  EXPECT_EQ(back.confidence, p.confidence);
  EXPECT_EQ(back.boxes[0].cx, 1.0);
  EXPECT_THROW(decode_predictions_binary(bin.substr(1)), ParseError);
  const auto dir = testutil::scratch("pred");
  write_predictions(dir / "a.csv", p);
  write_predictions(dir / "a.bin", p);
  EXPECT_EQ(read_predictions(dir / "a.csv").confidence, p.confidence);
  EXPECT_EQ(read_predictions(dir / "a.bin").confidence, p.confidence);
  EXPECT_THROW(read_predictions(dir / "missing.csv"), Error);
}

TEST(Pipeline, DefaultFusionRatioIsHalf) { EXPECT_EQ(kDefaultFusionRatio, 0.5); }
