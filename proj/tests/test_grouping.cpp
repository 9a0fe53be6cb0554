#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "psadet/grouping.hpp"
#include "psadet/synth.hpp"
#include "test_util.hpp"

using namespace psadet;
using namespace psadet::grouping;

namespace {

const std::vector<Point3> kTiny{{0, 0, 0}, {0, 0, 10}, {3, 4, 1}, {0, 0, 2}};
const std::vector<std::size_t> kTinyKey{3};

std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

}  // namespace

TEST(BallQuery, TinyExample) {
  const auto g = ball_query(kTiny, kTinyKey, 2.5);
  EXPECT_EQ(g.groups[0], (std::vector<std::size_t>{0, 3}));
}

TEST(PillarQuery, TinyExample) {
  const auto g = pillar_query(kTiny, kTinyKey, 1.0);
  EXPECT_EQ(g.groups[0], (std::vector<std::size_t>{0, 1, 3}));
  // Same parameters as a ball query: ball result is a subset.
  const auto b = ball_query(kTiny, kTinyKey, 1.0);
  EXPECT_TRUE(std::includes(g.groups[0].begin(), g.groups[0].end(), b.groups[0].begin(), b.groups[0].end()));
}

TEST(Query, SmallRadiusLeavesKeyAlone) {
  Rng rng(1);
  const auto pts = testutil::random_points(rng, 100, 10, 10);
  const auto keys = iota_n(pts.size());
  for (auto kind : {QueryKind::ball, QueryKind::pillar}) {
    const auto g = query(kind, pts, keys, 1e-6);
    for (std::size_t k = 0; k < keys.size(); ++k) EXPECT_EQ(g.groups[k], std::vector<std::size_t>{k});
  }
}

TEST(Query, StrictRadius) {
  const std::vector<Point3> pts{{0, 0, 0}, {1, 0, 0}, {0, 0, 5}};
  const std::vector<std::size_t> keys{0};
  EXPECT_EQ(ball_query(pts, keys, 1.0).groups[0], std::vector<std::size_t>{0});
  EXPECT_EQ(pillar_query(pts, keys, 1.0).groups[0], (std::vector<std::size_t>{0, 2}));
}

TEST(Query, MatchesBruteForce) {
  Rng rng(2);
  for (int t = 0; t < 30; ++t) {
    const auto pts = testutil::random_points(rng, 50 + rng.below(500), 5, 3);
    std::vector<std::size_t> keys;
    for (int i = 0; i < 20; ++i) keys.push_back(rng.below(pts.size()));
    const double r = rng.uniform(0.1, 2.0);
    const auto b = ball_query(pts, keys, r);
    const auto p = pillar_query(pts, keys, r, kUnlimited, 3);
    for (std::size_t k = 0; k < keys.size(); ++k) {
      EXPECT_EQ(b.groups[k], oracle::ball(pts, pts[keys[k]], r));
      EXPECT_EQ(p.groups[k], oracle::pillar(pts, pts[keys[k]], r));
      EXPECT_EQ(b.member_counts[k], b.groups[k].size());
    }
  }
}

TEST(Query, ThreadCountDoesNotChangeResults) {
  Rng rng(3);
  const auto pts = testutil::random_points(rng, 3000, 20, 3);
  const auto keys = sampling::farthest_point_sample(pts, 500).indices;
  for (auto kind : {QueryKind::ball, QueryKind::pillar}) {
    const auto a = query(kind, pts, keys, 1.0, 16, 1);
    const auto b = query(kind, pts, keys, 1.0, 16, 4);
    EXPECT_EQ(a.groups, b.groups);
    EXPECT_EQ(a.member_counts, b.member_counts);
  }
}

TEST(Query, CappedGroupsContainKeyAndArePadded) {
  Rng rng(4);
  const auto pts = testutil::random_points(rng, 400, 1, 1);
  std::vector<std::size_t> keys{399, 0, 200};
  for (auto kind : {QueryKind::ball, QueryKind::pillar}) {
    for (std::size_t cap : {1u, 4u, 64u, 1000u}) {
      const auto g = query(kind, pts, keys, 0.5, cap);
      for (std::size_t k = 0; k < keys.size(); ++k) {
        const auto& grp = g.groups[k];
        ASSERT_EQ(grp.size(), cap);
        EXPECT_NE(std::find(grp.begin(), grp.end(), keys[k]), grp.end());
        const auto full = kind == QueryKind::ball ? oracle::ball(pts, pts[keys[k]], 0.5)
                                                  : oracle::pillar(pts, pts[keys[k]], 0.5);
        const std::size_t real = std::min(cap, full.size());
        EXPECT_EQ(g.member_counts[k], real);
        for (std::size_t i = 0; i < real; ++i) {
          EXPECT_TRUE(std::binary_search(full.begin(), full.end(), grp[i]));
        }
        for (std::size_t i = real; i < cap; ++i) EXPECT_EQ(grp[i], keys[k]);
      }
    }
  }
}

TEST(Query, Errors) {
  const std::vector<std::size_t> bad{4};
  EXPECT_THROW(ball_query(kTiny, bad, 1.0), Error);
  EXPECT_THROW(pillar_query(kTiny, kTinyKey, 0.0), Error);
  EXPECT_THROW(pillar_query(kTiny, kTinyKey, 1.0, 0), Error);
  EXPECT_THROW(ball_query(kTiny, kTinyKey, NAN), Error);
}

TEST(Coverage, Examples) {
  const std::vector<Point3> pts{{0, 0, 0}, {5, 0, 0}};
  const std::vector<std::size_t> obj{0, 1};
  EXPECT_DOUBLE_EQ(group_coverage(obj, ball_query(pts, std::vector<std::size_t>{0}, 1.0)), 0.5);
  EXPECT_DOUBLE_EQ(group_coverage(obj, ball_query(pts, obj, 1.0)), 1.0);
  EXPECT_THROW(group_coverage(std::vector<std::size_t>{}, ball_query(pts, obj, 1.0)), Error);
}

TEST(Coverage, PillarBeatsBallOnPedestrian) {
  std::vector<std::size_t> obj;
  const auto cloud = synth::pedestrian_fixture(2000, 5, &obj);
  const std::vector<std::size_t> key{0};
  const double pillar = group_coverage(obj, pillar_query(cloud.points(), key, 0.5));
  const double ball = group_coverage(obj, ball_query(cloud.points(), key, 0.5));
  EXPECT_EQ(pillar, 1.0);
  EXPECT_LT(ball, 1.0);
}

TEST(Aggregate, IdentityOnKeyAlone) {
  PointCloud cloud = PointCloud::with_width(2);
  const std::vector<double> f{0.25, -3.0};
  cloud.push_back({1, 2, 3}, f);
  const auto out = pointnet_aggregate(cloud, std::vector<std::size_t>{0}, cloud[0], MlpSpec::identity(5));
  EXPECT_EQ(out, (std::vector<double>{0, 0, 0, 0.25, -3.0}));
}

TEST(Aggregate, PermutationInvariantAndMatchesOracle) {
  Rng rng(6);
  PointCloud cloud = PointCloud::with_width(3);
  for (int i = 0; i < 40; ++i) {
    const std::vector<double> f{rng.normal(), rng.normal(), rng.normal()};
    cloud.push_back({rng.normal(), rng.normal(), rng.normal()}, f);
  }
  const std::vector<std::size_t> widths{6, 16, 8};
  const auto mlp = MlpSpec::random(widths, 7, Activation::linear);
  std::vector<std::size_t> members{3, 9, 1, 17, 30, 5};
  const Point3 key = cloud[9];
  const auto a = pointnet_aggregate(cloud, members, key, mlp);
  std::reverse(members.begin(), members.end());
  EXPECT_EQ(a, pointnet_aggregate(cloud, members, key, mlp));
  std::vector<double> expect(8, -1e300);
  for (auto m : members) {
    const auto& p = cloud[m];
    std::vector<double> x{p.x - key.x, p.y - key.y, p.z - key.z};
    for (double v : cloud.feature(m)) x.push_back(v);
    const auto y = oracle::mlp_forward(mlp, x);
    for (int c = 0; c < 8; ++c) expect[c] = std::max(expect[c], y[c]);
  }
  for (int c = 0; c < 8; ++c) EXPECT_NEAR(a[c], expect[c], 1e-6);
}

TEST(Aggregate, MonotoneUnderMemberAddition) {
  Rng rng(8);
  PointCloud cloud = PointCloud::with_width(1);
  for (int i = 0; i < 30; ++i) {
    const std::vector<double> f{rng.uniform()};
    cloud.push_back({rng.uniform(), rng.uniform(), rng.uniform()}, f);
  }
  const auto mlp = MlpSpec::identity(4);
  std::vector<std::size_t> members{0};
  auto prev = pointnet_aggregate(cloud, members, cloud[0], mlp);
  for (std::size_t i = 1; i < 30; ++i) {
    members.push_back(i);
    const auto cur = pointnet_aggregate(cloud, members, cloud[0], mlp);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_GE(cur[c], prev[c]);
    prev = cur;
  }
}

TEST(Aggregate, DimensionMismatch) {
  PointCloud cloud = PointCloud::with_width(2);
  const std::vector<double> f{0, 0};
  cloud.push_back({0, 0, 0}, f);
  EXPECT_THROW(pointnet_aggregate(cloud, std::vector<std::size_t>{0}, cloud[0], MlpSpec::identity(3)), Error);
  EXPECT_THROW(pointnet_aggregate(cloud, std::vector<std::size_t>{}, cloud[0], MlpSpec::identity(5)), Error);
}

TEST(PsaLayer, SelfOnlyGroups) {
  Rng rng(9);
  std::vector<Point3> pts;
  for (int i = 0; i < 20; ++i) pts.push_back({static_cast<double>(i), rng.uniform(), rng.uniform()});
  const PointCloud cloud(pts, 0, {});
  PsaLayerConfig cfg{20, {{0.4, 8, MlpSpec::identity(3), QueryKind::pillar}}};
  const auto out = psa_layer(cloud, cfg);
  ASSERT_EQ(out.keys.size(), 20u);
  ASSERT_EQ(out.keys.feature_width(), 3u);
  for (double v : out.keys.features()) EXPECT_EQ(v, 0.0);
}

TEST(PsaLayer, TranslationInvariant) {
  const auto cloud = synth::street_cloud(3, 2048);
  PointCloud moved = PointCloud::with_width(1);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud[i];
    moved.push_back({p.x + 100.0, p.y - 50.0, p.z + 2.0}, cloud.feature(i));
  }
  const std::vector<std::size_t> widths{4, 8, 8};
  PsaLayerConfig cfg{256, {{0.8, 16, MlpSpec::random(widths, 3), QueryKind::pillar},
                           {1.6, 32, MlpSpec::random(widths, 4), QueryKind::ball}}};
  const auto a = psa_layer(cloud, cfg);
  const auto b = psa_layer(moved, cfg);
  EXPECT_EQ(a.key_indices, b.key_indices);
  ASSERT_EQ(a.keys.feature_width(), 16u);
  for (std::size_t i = 0; i < a.keys.features().size(); ++i) {
    EXPECT_NEAR(a.keys.features()[i], b.keys.features()[i], 1e-9);
  }
}

TEST(PsaLayer, Errors) {
  const PointCloud cloud(std::vector<Point3>{{0, 0, 0}}, 0, {});
  EXPECT_THROW(psa_layer(cloud, PsaLayerConfig{1, {}}), Error);
  EXPECT_THROW(psa_layer(cloud, PsaLayerConfig{2, {{0.5, 4, MlpSpec::identity(3), QueryKind::pillar}}}), Error);
}

TEST(PsaStack, ShapeChainSmall) {
  const auto cloud = synth::street_cloud(5, 4096);
  const auto layers = default_psa_stack(1, 1, 2048);
  const auto stages = psa_stack(cloud, layers);
  const std::size_t keys[4] = {2048, 1024, 256, 64}, widths[4] = {32, 64, 128, 256};
  ASSERT_EQ(stages.size(), 4u);
  for (int l = 0; l < 4; ++l) {
    EXPECT_EQ(stages[l].keys.size(), keys[l]);
    EXPECT_EQ(stages[l].keys.feature_width(), widths[l]);
  }
}

TEST(PsaStack, PublishedConfiguration) {
  const auto layers = default_psa_stack(1, 0);
  ASSERT_EQ(layers.size(), 4u);
  const std::size_t keys[4] = {8192, 1024, 256, 64};
  const double radii[4] = {0.1, 0.5, 1.0, 2.0};
  for (std::size_t l = 0; l < 4; ++l) {
    EXPECT_EQ(layers[l].n_keys, keys[l]);
    ASSERT_EQ(layers[l].branches.size(), 1u);
    EXPECT_EQ(layers[l].branches[0].radius, radii[l]);
    EXPECT_EQ(layers[l].branches[0].query, QueryKind::pillar);
  }
}
