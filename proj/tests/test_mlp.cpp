#include <gtest/gtest.h>

#include <fstream>

#include "oracles.hpp"
#include "psadet/mlp.hpp"
#include "test_util.hpp"

using namespace psadet;

TEST(Mlp, RandomMatchesOracle) {
  const std::vector<std::size_t> widths{7, 12, 5, 3};
  const auto mlp = MlpSpec::random(widths, 3);
  EXPECT_EQ(mlp.input_width(), 7u);
  EXPECT_EQ(mlp.output_width(), 3u);
  Rng rng(1);
  std::vector<double> out, scratch;
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x(7);
    for (auto& v : x) v = rng.normal();
    mlp.forward(x, out, scratch);
    const auto ref = oracle::mlp_forward(mlp, x);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out[i], ref[i], 1e-12);
  }
}

TEST(Mlp, ValidatesShapes) {
  DenseLayer a{2, 3, std::vector<double>(6, 0.1), std::vector<double>(3, 0.0), Activation::relu};
  DenseLayer b{4, 1, std::vector<double>(4, 0.1), std::vector<double>(1, 0.0), Activation::linear};
  EXPECT_THROW(MlpSpec({a, b}), Error);
  DenseLayer c = a;
  c.weight.pop_back();
  EXPECT_THROW(MlpSpec({c}), Error);
  DenseLayer d = a;
  d.bias[0] = NAN;
  EXPECT_THROW(MlpSpec({d}), Error);
  std::vector<double> out, scratch;
  EXPECT_THROW(MlpSpec({a}).forward(std::vector<double>(5), out, scratch), Error);
}

TEST(Mlp, JsonRoundTrip) {
  const std::vector<std::size_t> widths{4, 6, 2};
  const auto mlp = MlpSpec::random(widths, 9, Activation::linear);
  const auto back = mlp_from_json(nlohmann::json::parse(mlp_to_json(mlp).dump()));
  ASSERT_EQ(back.layers().size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_EQ(back.layers()[l].weight, mlp.layers()[l].weight);
    EXPECT_EQ(back.layers()[l].bias, mlp.layers()[l].bias);
    EXPECT_EQ(back.layers()[l].activation, mlp.layers()[l].activation);
  }
  EXPECT_THROW(mlp_from_json(nlohmann::json::parse(R"({"layers":[{"in":2}]})")), ParseError);
}

TEST(Mlp, BinaryRoundTripIsFloat32) {
  const std::vector<std::size_t> widths{3, 5, 4};
  const auto mlp = MlpSpec::random(widths, 2);
  const std::string bin = mlp_to_binary(mlp);
  EXPECT_EQ(bin.substr(0, 4), "PMLP");
  const auto back = mlp_from_binary(bin);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t i = 0; i < mlp.layers()[l].weight.size(); ++i) {
      EXPECT_EQ(back.layers()[l].weight[i], static_cast<double>(static_cast<float>(mlp.layers()[l].weight[i])));
    }
  }
  EXPECT_EQ(mlp_to_binary(back), bin);
  EXPECT_THROW(mlp_from_binary(bin.substr(0, bin.size() - 1)), ParseError);
  EXPECT_THROW(mlp_from_binary(bin + "x"), ParseError);
  EXPECT_THROW(mlp_from_binary(std::string("XMLP") + bin.substr(4)), ParseError);
}

TEST(Mlp, BundledFixturesAgree) {
  const auto js = load_mlp((testutil::data_dir() / "mlp" / "small.json").string());
  const auto bn = load_mlp((testutil::data_dir() / "mlp" / "small.bin").string());
  ASSERT_EQ(js.input_width(), bn.input_width());
  std::vector<double> x(js.input_width(), 0.5), a, b, s;
  js.forward(x, a, s);
  bn.forward(x, b, s);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
  EXPECT_THROW(load_mlp("/nonexistent/mlp.json"), Error);
}
