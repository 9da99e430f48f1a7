#include <gtest/gtest.h>

#include <regex>
#include <set>
#include <string>
#include <vector>

#include "ghostlayer/network.hpp"
#include "support/nets.hpp"
#include "support/oracles.hpp"

namespace ghostlayer {
namespace {

using testing::central_difference;
using testing::random_tensor;
using testing::relative_error;
using testing::TempDir;
using testing::tiny_network;
using testing::tiny_spec;
using testing::weighted_sum;

const FeatureExtractor& vgg_random() {
  static const FeatureExtractor net(vgg19_spec(), random_weights(vgg19_spec(), 1));
  return net;
}

std::size_t count_kind(const NetworkSpec& s, LayerKind kind) {
  std::size_t n = 0;
  for (const auto& l : s.layers) n += l.kind == kind;
  return n;
}

TEST(Vgg19Spec, HasSixteenConvsFivePoolsAndAReluAfterEachConv) {
  const NetworkSpec s = vgg19_spec();
  EXPECT_EQ(count_kind(s, LayerKind::kConv), 16u);
  EXPECT_EQ(count_kind(s, LayerKind::kRelu), 16u);
  EXPECT_EQ(count_kind(s, LayerKind::kPool), 5u);
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    if (s.layers[i].kind != LayerKind::kConv) continue;
    ASSERT_LT(i + 1, s.layers.size());
    EXPECT_EQ(s.layers[i + 1].kind, LayerKind::kRelu) << s.layers[i].name;
  }
}

TEST(Vgg19Spec, NamesAreUniqueAndFollowTheBlockConvention) {
  const NetworkSpec s = vgg19_spec();
  std::set<std::string> names;
  const std::regex conv(R"(conv[1-5]_[1-4])");
  for (const auto& l : s.layers) {
    EXPECT_TRUE(names.insert(l.name).second) << l.name;
    if (l.kind == LayerKind::kConv) EXPECT_TRUE(std::regex_match(l.name, conv)) << l.name;
  }
  EXPECT_NO_THROW(s.validate());
}

TEST(Vgg19Spec, PoolModeIsConfigurable) {
  EXPECT_EQ(vgg19_spec().pool_mode, PoolMode::kAverage);
  EXPECT_EQ(vgg19_spec(PoolMode::kMax).pool_mode, PoolMode::kMax);
}

TEST(NetworkSpec, DuplicateNamesAreRejected) {
  NetworkSpec s;
  s.conv("a", 2).relu("a");
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(WeightFile, SerializeParseRoundTripIsIdentity) {
  const WeightSet ws = random_weights(tiny_spec(), 3);
  const auto bytes = serialize_weights(ws);
  EXPECT_EQ(parse_weights(bytes), ws);
  EXPECT_EQ(serialize_weights(parse_weights(bytes)), bytes);
}

TEST(WeightFile, HeaderLayoutIsLittleEndian) {
  WeightSet ws = random_weights(tiny_spec(), 3, {1.0f, 2.0f, 3.0f});
  const auto bytes = serialize_weights(ws);
  ASSERT_GE(bytes.size(), 24u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "GLW1");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
  // 1.0f is 0x3F800000.
  EXPECT_EQ(bytes[8], 0x00);
  EXPECT_EQ(bytes[11], 0x3F);
  EXPECT_EQ(bytes[20], 3);  // layer count
}

TEST(WeightFile, SaveLoadRoundTripOfFullVggShape) {
  TempDir dir;
  const WeightSet ws = random_weights(vgg19_spec(), 11);
  save_weights(ws, dir / "vgg.glw");
  const WeightSet back = load_weights(dir / "vgg.glw", vgg19_spec());
  EXPECT_EQ(back, ws);
  const ConvKernel& k = back.at("conv1_1");
  EXPECT_EQ(k.out_channels, 64u);
  EXPECT_EQ(k.in_channels, 3u);
  EXPECT_EQ(k.kernel_h, 3u);
  EXPECT_EQ(k.kernel_w, 3u);
  EXPECT_EQ(back.layers.size(), 16u);
}

TEST(WeightFile, WrongMagicIsFormatError) {
  auto bytes = serialize_weights(random_weights(tiny_spec(), 3));
  bytes[0] = 'X';
  EXPECT_THROW(parse_weights(bytes), FormatError);
}

TEST(WeightFile, WrongVersionIsFormatError) {
  auto bytes = serialize_weights(random_weights(tiny_spec(), 3));
  bytes[4] = 2;
  EXPECT_THROW(parse_weights(bytes), FormatError);
}

TEST(WeightFile, EveryTruncationIsIoError) {
  const auto bytes = serialize_weights(random_weights(tiny_spec(), 3));
  for (std::size_t len = 4; len < bytes.size(); len += 7) {
    const std::span<const std::uint8_t> prefix(bytes.data(), len);
    EXPECT_THROW(parse_weights(prefix), IoError) << "length " << len;
  }
}

TEST(WeightFile, TrailingBytesAreValidationError) {
  auto bytes = serialize_weights(random_weights(tiny_spec(), 3));
  bytes.push_back(0);
  EXPECT_THROW(parse_weights(bytes), ValidationError);
}

TEST(WeightFile, MissingFileIsIoError) {
  TempDir dir;
  EXPECT_THROW(load_weights(dir / "absent.glw", tiny_spec()), IoError);
}

TEST(WeightFile, ShapeMismatchNamesTheLayer) {
  WeightSet ws = random_weights(tiny_spec(), 3);
  ws.layers[1].kernel = ConvKernel(6, 3, 3, 3);  // conv2_1 should read 4 channels
  try {
    validate_weights(ws, tiny_spec());
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("conv2_1"), std::string::npos) << e.what();
  }
}

TEST(WeightFile, MissingAndExtraLayersAreValidationErrors) {
  WeightSet missing = random_weights(tiny_spec(), 3);
  missing.layers.pop_back();
  EXPECT_THROW(validate_weights(missing, tiny_spec()), ValidationError);

  WeightSet extra = random_weights(tiny_spec(), 3);
  extra.layers.push_back({"conv9_9", ConvKernel(1, 5, 1, 1)});
  EXPECT_THROW(validate_weights(extra, tiny_spec()), ValidationError);

  WeightSet wrong_out = random_weights(vgg19_spec(), 3);
  wrong_out.layers[0].kernel = ConvKernel(32, 3, 3, 3);
  EXPECT_THROW(validate_weights(wrong_out, vgg19_spec()), ValidationError);
}

TEST(Forward, EmptyTapsGiveEmptyMap) {
  const auto net = tiny_network();
  SeededRng rng(1);
  EXPECT_TRUE(net.forward(random_tensor(Shape{1, 3, 8, 8}, rng), {}).features.empty());
}

TEST(Forward, UnknownTapIsConfigError) {
  const auto net = tiny_network();
  const std::string taps[] = {"conv7_1"};
  EXPECT_THROW(net.forward(Tensor(Shape{1, 3, 8, 8}), taps), ConfigError);
}

TEST(Forward, WrongInputRankIsConfigError) {
  const auto net = tiny_network();
  const std::string taps[] = {"conv1_1"};
  EXPECT_THROW(net.forward(Tensor(Shape{2, 3, 8, 8}), taps), ConfigError);
  EXPECT_THROW(net.forward(Tensor(Shape{1, 1, 8, 8}), taps), ConfigError);
}

TEST(Forward, Conv1_1On32x32Gives64ChannelsAnd1024Positions) {
  SeededRng rng(2);
  const std::string taps[] = {"conv1_1"};
  const auto r = vgg_random().forward(random_tensor(Shape{1, 3, 32, 32}, rng, -100, 100), taps);
  const FeatureMap& f = r.features.at("conv1_1");
  EXPECT_EQ(f.channels(), 64u);
  EXPECT_EQ(f.positions(), 1024u);
  EXPECT_EQ(f.channels() * f.positions(), f.values.shape().per_batch());
}

TEST(Forward, VggChannelsDoubleAndExtentsHalve) {
  SeededRng rng(3);
  const std::vector<std::string> taps = {"conv1_1", "conv2_1", "conv3_1", "conv4_1", "conv5_1", "pool5"};
  const auto r = vgg_random().forward(random_tensor(Shape{1, 3, 64, 64}, rng, -100, 100), taps);
  const std::size_t channels[] = {64, 128, 256, 512, 512, 512};
  const std::size_t extent[] = {64, 32, 16, 8, 4, 2};
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const Shape s = r.features.at(taps[i]).values.shape();
    EXPECT_EQ(s.c, channels[i]) << taps[i];
    EXPECT_EQ(s.h, extent[i]) << taps[i];
    EXPECT_EQ(s.w, extent[i]) << taps[i];
  }
}

TEST(Forward, OddExtentsAreFloored) {
  SeededRng rng(4);
  const std::vector<std::string> taps = {"conv2_1", "conv3_1"};
  const auto r = vgg_random().forward(random_tensor(Shape{1, 3, 25, 18}, rng), taps);
  EXPECT_EQ(r.features.at("conv2_1").values.shape(), (Shape{1, 128, 12, 9}));
  EXPECT_EQ(r.features.at("conv3_1").values.shape(), (Shape{1, 256, 6, 4}));
}

TEST(Forward, IsBitwiseDeterministic) {
  const auto net = tiny_network();
  SeededRng rng(5);
  const Tensor x = random_tensor(Shape{1, 3, 8, 8}, rng);
  const std::vector<std::string> taps = {"conv1_1", "relu3_1"};
  const auto a = net.forward(x, taps);
  const auto b = net.forward(x, taps);
  for (const auto& t : taps) EXPECT_EQ(a.features.at(t).values, b.features.at(t).values);
}

TEST(Forward, CopiedExtractorComputesTheSameFeatures) {
  const auto net = tiny_network();
  const FeatureExtractor copy = net;
  SeededRng rng(6);
  const Tensor x = random_tensor(Shape{1, 3, 8, 8}, rng);
  const std::string taps[] = {"conv3_1"};
  EXPECT_EQ(net.forward(x, taps).features.at("conv3_1").values,
            copy.forward(x, taps).features.at("conv3_1").values);
}

TEST(Forward, SinglePrecisionTracksDoublePrecision) {
  const auto net = tiny_network<float>();
  const auto net_d = tiny_network<double>();
  SeededRng rng(7);
  const auto x = random_tensor<double>(Shape{1, 3, 8, 8}, rng, -50, 50);
  const std::string taps[] = {"conv3_1"};
  const Tensor f = net.forward(tensor_cast<float>(x), taps).features.at("conv3_1").values;
  const auto d = net_d.forward(x, taps).features.at("conv3_1").values;
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(f[i], d[i], 1e-4 * (1.0 + std::abs(d[i])));
}

TEST(Backward, ZeroGradientsGiveZeroPixelGradient) {
  const auto net = tiny_network();
  SeededRng rng(8);
  const std::vector<std::string> taps = {"conv1_1", "conv3_1"};
  const auto r = net.forward(random_tensor(Shape{1, 3, 8, 8}, rng), taps);
  LayerGradients grads;
  for (const auto& t : taps) grads[t] = Tensor(r.features.at(t).values.shape());
  const Tensor g = net.backward_to_input(grads, r.context);
  EXPECT_EQ(g.shape(), (Shape{1, 3, 8, 8}));
  for (float v : g.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Backward, EmptyGradientMapGivesZeros) {
  const auto net = tiny_network();
  const std::string taps[] = {"conv2_1"};
  const auto r = net.forward(Tensor(Shape{1, 3, 8, 8}, 1.0f), taps);
  EXPECT_EQ(net.backward_to_input({}, r.context), Tensor(Shape{1, 3, 8, 8}));
}

TEST(Backward, UntappedLayerIsConfigError) {
  const auto net = tiny_network();
  const std::string taps[] = {"conv1_1"};
  const auto r = net.forward(Tensor(Shape{1, 3, 8, 8}), taps);
  LayerGradients grads;
  grads["conv2_1"] = Tensor(Shape{1, 6, 4, 4});
  EXPECT_THROW(net.backward_to_input(grads, r.context), ConfigError);
}

TEST(Backward, WrongGradientShapeIsConfigError) {
  const auto net = tiny_network();
  const std::string taps[] = {"conv2_1"};
  const auto r = net.forward(Tensor(Shape{1, 3, 8, 8}), taps);
  LayerGradients grads;
  grads["conv2_1"] = Tensor(Shape{1, 6, 8, 8});
  EXPECT_THROW(net.backward_to_input(grads, r.context), ConfigError);
}

// For the scalar loss L(x) = <R, F_l(x)>, dL/dF_l = R, so backward_to_input
// must reproduce the finite-difference slope of L.
class SingleTapGradient : public ::testing::TestWithParam<std::string> {};

TEST_P(SingleTapGradient, MatchesFiniteDifferences) {
  using DTensor = BasicTensor<double>;
  const std::string tap = GetParam();
  for (PoolMode mode : {PoolMode::kAverage, PoolMode::kMax}) {
    const auto net = tiny_network<double>(17, mode);
    SeededRng rng(9);
    const DTensor x = random_tensor<double>(Shape{1, 3, 8, 8}, rng, -2, 2);
    const std::string taps[] = {tap};
    const auto r = net.forward(x, taps);
    const DTensor R = random_tensor<double>(r.features.at(tap).values.shape(), rng);
    BasicLayerGradients<double> grads;
    grads[tap] = R;
    const DTensor analytic = net.backward_to_input(grads, r.context);
    auto loss = [&](const DTensor& t) { return weighted_sum(net.forward(t, taps).features.at(tap).values, R); };
    for (std::size_t i : testing::random_coordinates(20, x.size(), rng)) {
      const double numeric = central_difference(loss, x, i, 1e-6);
      EXPECT_LE(relative_error(analytic[i], numeric, 1e-7), 1e-3) << tap << " coordinate " << i;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(TinyNet, SingleTapGradient,
                         ::testing::Values("conv1_1", "relu1_1", "pool1", "conv2_1", "conv3_1", "relu3_1"));

TEST(Backward, MultiTapGradientIsSumOfSingleTapGradients) {
  const auto net = tiny_network();
  SeededRng rng(10);
  const Tensor x = random_tensor(Shape{1, 3, 8, 8}, rng, -2, 2);
  const std::vector<std::string> taps = {"conv1_1", "conv2_1", "relu3_1"};
  const auto r = net.forward(x, taps);
  LayerGradients all;
  Tensor sum(x.shape());
  for (const auto& t : taps) {
    const Tensor g = random_tensor(r.features.at(t).values.shape(), rng);
    all[t] = g;
    LayerGradients one;
    one[t] = g;
    sum += net.backward_to_input(one, r.context);
  }
  const Tensor joint = net.backward_to_input(all, r.context);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(joint[i], sum[i], 1e-5);
}

}  // namespace
}  // namespace ghostlayer
