#include <gtest/gtest.h>

#include <random>

#include "homwarp/model.hpp"
#include "support.hpp"

using namespace homwarp;

namespace {

RegressorConfig tiny(double dropout = 0.0) {
  RegressorConfig c = RegressorConfig::desk();
  c.input_side = 16;
  c.filters = {3, 3, 4, 4, 4, 4, 5, 5};
  c.fc1_units = 7;
  c.dropout = dropout;
  return c;
}

Tensor<double> random_input(std::mt19937_64& rng, int side) {
  return stack_pair<double>(oracle::random_patch(rng, side, side), oracle::random_patch(rng, side, side));
}

// Projection J = sum_o c_o * out_o so a scalar finite difference probes backward().
double project_output(const RegressorParams<double>& p, const Tensor<double>& x, const PredictionHead<double>& c) {
  const auto out = predict(p, x);
  double j = 0.0;
  for (int o = 0; o < kOutputs; ++o) j += c[o] * out[o];
  return j;
}

}  // namespace

TEST(Regressor, PresetShapes) {
  const RegressorParams<double> p(RegressorConfig::paper());
  ASSERT_EQ(p.tensors.size(), 2u * kConvLayers + 4u);
  EXPECT_EQ(p.conv_w(0).shape, (std::vector<int>{64, 2, 3, 3}));
  EXPECT_EQ(p.conv_w(7).shape, (std::vector<int>{128, 128, 3, 3}));
  EXPECT_EQ(p.fc1_w().shape, (std::vector<int>{1024, 128}));
  EXPECT_EQ(p.fc2_w().shape, (std::vector<int>{8, 1024}));
  EXPECT_EQ(p.conv_w(3).name, "conv3.w");
  EXPECT_EQ(RegressorConfig::paper().side_at(7), 16);
}

TEST(Regressor, RejectsBadConfigAndInput) {
  RegressorConfig c = tiny();
  c.input_side = 24;
  EXPECT_THROW(RegressorParams<double>{c}, Error);
  c = tiny();
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), Error);
  const auto p = init_params<double>(tiny(), 1);
  EXPECT_THROW(predict(p, Tensor<double>(2, 32, 32)), Error);
  EXPECT_THROW(predict(p, Tensor<double>(3, 16, 16)), Error);
}

TEST(Regressor, ZeroWeightsGiveTheBias) {
  auto p = init_params<double>(tiny(), 3);
  for (auto& t : p.tensors)
    if (t.name != "fc2.b") std::fill(t.value.begin(), t.value.end(), 0.0);
  std::mt19937_64 rng(1);
  const auto out = predict(p, random_input(rng, 16));
  const auto id = Homography3::identity(Frame::Normalized).free_elements();
  for (int o = 0; o < kOutputs; ++o) EXPECT_EQ(out[o], id[o]);
}

TEST(Regressor, InitIsDeterministicPerSeed) {
  const auto a = init_params<double>(tiny(), 42), b = init_params<double>(tiny(), 42), c = init_params<double>(tiny(), 43);
  EXPECT_EQ(a.conv_w(2).value, b.conv_w(2).value);
  EXPECT_NE(a.conv_w(2).value, c.conv_w(2).value);
  for (int i = 0; i < kConvLayers; ++i)
    for (double v : a.conv_b(i).value) EXPECT_EQ(v, 0.0);
}

TEST(Regressor, InitStdFollowsFanIn) {
  const auto p = init_params<float>(RegressorConfig::paper(), 7);
  for (const auto& t : p.tensors) {
    if (t.shape.size() < 2 || t.size() < 2000) continue;
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < t.shape.size(); ++d) fan_in *= static_cast<std::size_t>(t.shape[d]);
    double s = 0.0, s2 = 0.0;
    for (float v : t.value) {
      s += v;
      s2 += static_cast<double>(v) * v;
    }
    const double n = static_cast<double>(t.size());
    const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
    EXPECT_NEAR(sd / std::sqrt(2.0 / static_cast<double>(fan_in)), 1.0, 0.2) << t.name;
  }
}

TEST(Regressor, EvalIsDeterministicAndIgnoresDropout) {
  const auto p = init_params<double>(tiny(0.5), 5);
  std::mt19937_64 rng(2);
  const auto x = random_input(rng, 16);
  EXPECT_EQ(predict(p, x), predict(p, x));
  std::mt19937_64 r1(10), r2(99);
  EXPECT_EQ(forward(p, x, Mode::Eval, r1), forward(p, x, Mode::Eval, r2));
}

TEST(Regressor, DropoutMaskReplaysFromTheRng) {
  const auto p = init_params<double>(tiny(0.5), 5);
  std::mt19937_64 rng(3);
  const auto x = random_input(rng, 16);
  std::mt19937_64 r1(10), r2(10);
  ForwardCache<double> c1, c2;
  EXPECT_EQ(forward(p, x, Mode::Train, r1, &c1), forward(p, x, Mode::Train, r2, &c2));
  EXPECT_EQ(c1.dropout_scale, c2.dropout_scale);
  for (double s : c1.dropout_scale) EXPECT_TRUE(s == 0.0 || s == 2.0);
}

TEST(Regressor, TrainWithoutDropoutMatchesEval) {
  const auto p = init_params<double>(tiny(0.0), 8);
  std::mt19937_64 rng(4);
  const auto x = random_input(rng, 16);
  EXPECT_EQ(forward(p, x, Mode::Train, rng), predict(p, x));
}

TEST(Regressor, BackwardNeedsAFreshCache) {
  auto p = init_params<double>(tiny(), 9);
  std::mt19937_64 rng(5);
  const auto x = random_input(rng, 16);
  Gradients<double> g(p);
  ForwardCache<double> cache;
  EXPECT_THROW(backward(p, cache, PredictionHead<double>{}, g), Error);
  forward(p, x, Mode::Train, rng, &cache);
  EXPECT_NO_THROW(backward(p, cache, PredictionHead<double>{}, g));
  ++p.version;
  try {
    backward(p, cache, PredictionHead<double>{}, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::StaleCache);
  }
}

TEST(Regressor, ParameterGradientMatchesFiniteDifferences) {
  auto p = init_params<double>(tiny(), 11);
  std::mt19937_64 rng(6);
  const auto x = random_input(rng, 16);
  PredictionHead<double> c{};
  std::normal_distribution<double> n01;
  for (auto& v : c) v = n01(rng);

  ForwardCache<double> cache;
  forward(p, x, Mode::Train, rng, &cache);
  Gradients<double> g(p);
  backward(p, cache, c, g);

  int checked = 0, bad = 0;
  for (std::size_t k = 0; k < p.tensors.size(); ++k) {
    auto& t = p.tensors[k];
    std::uniform_int_distribution<std::size_t> pick(0, t.size() - 1);
    for (int r = 0; r < 6; ++r) {
      const std::size_t i = pick(rng);
      const double orig = t.value[i];
      const double fd = oracle::central_difference(
          [&](double v) {
            t.value[i] = v;
            return project_output(p, x, c);
          },
          orig, 1e-6);
      t.value[i] = orig;
      ++checked;
      if (oracle::rel_err(fd, g.tensors[k][i], 1e-6) > 1e-4) {
        ++bad;
        ADD_FAILURE() << t.name << "[" << i << "] fd " << fd << " analytic " << g.tensors[k][i];
      }
    }
  }
  EXPECT_EQ(bad, 0) << "of " << checked;
}

TEST(Regressor, InputGradientMatchesFiniteDifferences) {
  const auto p = init_params<double>(tiny(), 12);
  std::mt19937_64 rng(7);
  auto x = random_input(rng, 16);
  PredictionHead<double> c{};
  std::normal_distribution<double> n01;
  for (auto& v : c) v = n01(rng);

  ForwardCache<double> cache;
  forward(p, x, Mode::Train, rng, &cache);
  Gradients<double> g(p);
  Tensor<double> gx;
  backward(p, cache, c, g, &gx);
  ASSERT_EQ(gx.data.size(), x.data.size());

  std::uniform_int_distribution<std::size_t> pick(0, x.data.size() - 1);
  for (int r = 0; r < 20; ++r) {
    const std::size_t i = pick(rng);
    const double orig = x.data[i];
    const double fd = oracle::central_difference(
        [&](double v) {
          x.data[i] = v;
          return project_output(p, x, c);
        },
        orig, 1e-6);
    x.data[i] = orig;
    EXPECT_LT(oracle::rel_err(fd, gx.data[i], 1e-6), 1e-4) << i;
  }
}

TEST(Regressor, BackwardAccumulates) {
  const auto p = init_params<double>(tiny(), 13);
  std::mt19937_64 rng(8);
  const auto x = random_input(rng, 16);
  PredictionHead<double> c{};
  c[2] = 1.0;
  ForwardCache<double> cache;
  forward(p, x, Mode::Train, rng, &cache);
  Gradients<double> once(p), twice(p);
  backward(p, cache, c, once);
  backward(p, cache, c, twice);
  backward(p, cache, c, twice);
  for (std::size_t k = 0; k < once.tensors.size(); ++k)
    for (std::size_t i = 0; i < once.tensors[k].size(); ++i)
      EXPECT_NEAR(twice.tensors[k][i], 2.0 * once.tensors[k][i], 1e-12);
}

TEST(Regressor, GlobalPoolingMakesTheHeadSideAgnostic) {
  // same weights on two input sides: a blank input reaches the head identically
  RegressorConfig a = tiny(), b = tiny();
  b.input_side = 32;
  const auto pa = init_params<double>(a, 14);
  RegressorParams<double> pb(b);
  for (std::size_t k = 0; k < pa.tensors.size(); ++k) pb.tensors[k].value = pa.tensors[k].value;
  Tensor<double> xa(2, 16, 16), xb(2, 32, 32);
  EXPECT_NO_THROW(predict(pa, xa));
  EXPECT_EQ(predict(pa, xa), predict(pb, xb));
}

TEST(Loss, L2MatchesDefinitionAndGradient) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n01;
  PredictionHead<double> a{}, b{};
  for (int i = 0; i < 8; ++i) {
    a[i] = n01(rng);
    b[i] = n01(rng);
  }
  const auto l = l2_homography_loss(a, b);
  double want = 0.0;
  for (int i = 0; i < 8; ++i) want += (a[i] - b[i]) * (a[i] - b[i]) / 8.0;
  EXPECT_NEAR(l.value, want, 1e-14);
  for (int i = 0; i < 8; ++i) {
    const double fd = oracle::central_difference(
        [&](double v) {
          auto p = a;
          p[i] = v;
          return l2_homography_loss(p, b).value;
        },
        a[i], 1e-6);
    EXPECT_NEAR(l.grad[i], fd, 1e-8);
  }
}

TEST(Loss, TotalLossDropsL2WithoutTarget) {
  const PredictionHead<double> pred{1.1, 0, 0, 0, 1, 0, 0, 0};
  const PredictionHead<double> truth{1, 0, 0, 0, 1, 0, 0, 0};
  const ImagePatch w(4, 4, 0.5), t(4, 4, 0.25);
  const double l2 = l2_homography_loss(pred, truth).value;
  const double l1 = l1_photometric(w, t).value;
  EXPECT_NEAR(total_loss<double>(pred, truth, w, t, 2.0, 3.0), 2.0 * l2 + 3.0 * l1, 1e-15);
  EXPECT_NEAR(total_loss<double>(pred, std::nullopt, w, t, 2.0, 3.0), 3.0 * l1, 1e-15);
  EXPECT_THROW(total_loss<double>(pred, truth, w, t, -1.0, 1.0), Error);
}
