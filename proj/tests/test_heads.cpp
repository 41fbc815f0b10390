#include <gtest/gtest.h>

#include <cmath>

#include "gramalign/gradcheck.hpp"
#include "gramalign/heads.hpp"

using namespace gramalign;

namespace {

Mat random_input(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng = make_rng(seed, "test.input");
  Mat m(rows, cols);
  for (double& x : m.flat()) x = normal01(rng);
  return m;
}

}  // namespace

TEST(Gelu, Values) {
  EXPECT_EQ(gelu(0.0), 0.0);
  EXPECT_NEAR(gelu(1.0), 0.8413447460685429, 1e-15);
  EXPECT_NEAR(gelu(-40.0), 0.0, 1e-300);
  for (double x = -4; x <= 4; x += 0.37) {
    EXPECT_NEAR(gelu_grad(x), (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6, 1e-8);
  }
}

TEST(Init, GlorotAndDeterminism) {
  EXPECT_DOUBLE_EQ(glorot_bound(768, 768), 0.0625);
  const auto shape = projector_shape(24, 20, 12);
  const MlpParams a = init_params(shape, 17), b = init_params(shape, 17), c = init_params(shape, 18);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == c);
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    const double bound = glorot_bound(a.weights[l].cols(), a.weights[l].rows());
    for (double w : a.weights[l].flat()) {
      EXPECT_LE(std::abs(w), bound);
      EXPECT_EQ(w, static_cast<double>(static_cast<float>(w)));
    }
    for (double x : a.biases[l]) EXPECT_EQ(x, 0.0);
  }
  for (const auto& g : a.ln_gamma) for (double x : g) EXPECT_EQ(x, 1.0);
  for (const auto& be : a.ln_beta) for (double x : be) EXPECT_EQ(x, 0.0);
}

TEST(Shapes, PublishedArchitecture) {
  const auto p = projector_shape(1280);
  EXPECT_EQ(p.dims, (std::vector<std::size_t>{1280, 768, 512, 512}));
  EXPECT_TRUE(p.layer_norm);
  EXPECT_TRUE(p.normalize_output);
  EXPECT_DOUBLE_EQ(p.dropout, 0.1);
  EXPECT_EQ(ic50_shape().dims, (std::vector<std::size_t>{2048, 512, 3}));
  EXPECT_DOUBLE_EQ(ic50_shape().dropout, 0.3);
  const auto d = dti_shape();
  EXPECT_EQ(d.dims, (std::vector<std::size_t>{1024, 512, 256, 2}));
  EXPECT_EQ(d.hidden_activation, Activation::Relu);
  EXPECT_DOUBLE_EQ(d.dropout, 0.3);
}

TEST(Projector, UnitOutputAndEvalDeterminism) {
  ProjectionHead head{Modality::Protein, init_params(projector_shape(20, 16, 8), 3)};
  const Mat x = random_input(5, 20, 1);
  const auto a = project(head, x, Mode::Eval, nullptr);
  const auto b = project(head, x, Mode::Eval, nullptr);
  EXPECT_EQ(a.output, b.output);
  for (std::size_t r = 0; r < 5; ++r) EXPECT_NEAR(norm2(a.output.row(r)), 1.0, 1e-9);
}

TEST(Projector, ZeroParamsIsZeroVector) {
  ProjectionHead head{Modality::Smiles, zero_params(projector_shape(6, 5, 4))};
  try {
    project(head, random_input(2, 6, 2), Mode::Eval, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ZeroVector);
  }
}

TEST(Projector, DimensionChecked) {
  ProjectionHead head{Modality::Smiles, init_params(projector_shape(6, 5, 4), 0)};
  EXPECT_THROW(project(head, random_input(2, 7, 2), Mode::Eval, nullptr), Error);
  EXPECT_THROW(project(head, random_input(2, 6, 2), Mode::Train, nullptr), Error);
}

TEST(Heads, ZeroParamsGiveZeroLogits) {
  Ic50Head ic{zero_params(ic50_shape(4, 6))};
  const auto t = ic50_forward(ic, random_input(3, 16, 4), Mode::Eval, nullptr);
  for (double x : t.output.flat()) EXPECT_EQ(x, 0.0);

  DtiHead dti{zero_params(dti_shape(4, {6, 5}))};
  const auto u = dti_forward(dti, random_input(3, 4, 5), random_input(3, 4, 6), Mode::Eval, nullptr);
  for (double x : u.output.flat()) EXPECT_EQ(x, 0.0);
}

TEST(Heads, DeadReluPathYieldsFinalBias) {
  DtiHead dti{init_params(dti_shape(3, {4, 4}), 9)};
  for (double& b : dti.params.biases[0]) b = -1e6;
  dti.params.biases[2] = {0.25, -0.75};
  const auto t = dti_forward(dti, random_input(4, 3, 1), random_input(4, 3, 2), Mode::Eval, nullptr);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_EQ(t.output(r, 0), 0.25);
    EXPECT_EQ(t.output(r, 1), -0.75);
  }
}

TEST(Dropout, RateAndReproducibility) {
  MlpShape shape{{4, 1000, 2}, Activation::Gelu, false, 0.3, false};
  const MlpParams p = init_params(shape, 1);
  const Mat x = random_input(100, 4, 3);
  Rng r1 = make_rng(5, "dropout"), r2 = make_rng(5, "dropout");
  const auto a = forward(p, x, Mode::Train, &r1);
  const auto b = forward(p, x, Mode::Train, &r2);
  EXPECT_EQ(a.output, b.output);
  const auto& mask = a.layers[0].dropout_mask;
  std::size_t zeros = 0;
  for (double m : mask.flat()) zeros += m == 0.0 ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(zeros) / static_cast<double>(mask.size()), 0.3, 0.01);
  for (double m : mask.flat()) EXPECT_TRUE(m == 0.0 || std::abs(m - 1.0 / 0.7) < 1e-15);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  const MlpParams p = init_params(projector_shape(7, 6, 5), 2);
  const auto tape = forward(p, random_input(3, 7, 8), Mode::Eval, nullptr);
  const auto back = backward(p, tape, Mat(3, 5));
  back.param_grads.for_each_tensor([](const std::string&, std::size_t, std::size_t, std::span<const double> g) {
    for (double x : g) EXPECT_EQ(x, 0.0);
  });
  for (double x : back.input_grad.flat()) EXPECT_EQ(x, 0.0);
}

TEST(Backward, NormalizationAnnihilatesRadialDirection) {
  const MlpParams p = init_params(projector_shape(7, 6, 5), 2);
  const auto tape = forward(p, random_input(3, 7, 8), Mode::Eval, nullptr);
  const auto back = backward(p, tape, tape.output);  // upstream along u
  for (double x : back.input_grad.flat()) EXPECT_NEAR(x, 0.0, 1e-12);
}

TEST(Backward, TapeMustMatch) {
  const MlpParams p = init_params(projector_shape(7, 6, 5), 2);
  const MlpParams q = p;
  const auto tape = forward(p, random_input(3, 7, 8), Mode::Eval, nullptr);
  try {
    backward(q, tape, Mat(3, 5));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TapeMismatch);
  }
  EXPECT_THROW(backward(p, tape, Mat(2, 5)), Error);
}

TEST(Backward, FiniteDifferencesAcross50Seeds) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng = make_rng(seed, "test.mlp");
    EXPECT_LE(detail::check_mlp(projector_shape(4 + seed % 13, 4 + seed % 9, 4 + seed % 13), rng, "p", ""), 1e-5);
    EXPECT_LE(detail::check_mlp(ic50_shape(1 + seed % 4, 3 + seed % 10), rng, "i", ""), 1e-5);
    EXPECT_LE(detail::check_mlp(dti_shape(1 + seed % 8, {3 + seed % 7, 2 + seed % 5}), rng, "d", ""), 1e-5);
  }
}

TEST(Backward, TrainModeUsesTheSameMask) {
  // With a fixed mask the network is a deterministic function; its gradient
  // must match finite differences that replay the same rng stream.
  MlpShape shape = projector_shape(6, 8, 4);
  shape.dropout = 0.4;
  MlpParams p = init_params(shape, 12);
  const Mat x = random_input(3, 6, 4);
  const Mat u = random_input(3, 4, 5);
  auto objective = [&] {
    Rng r = make_rng(1, "dropout");
    const Mat y = forward(p, x, Mode::Train, &r).output;
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.flat()[i] * u.flat()[i];
    return s;
  };
  Rng r = make_rng(1, "dropout");
  const auto tape = forward(p, x, Mode::Train, &r);
  auto back = backward(p, tape, u);
  EXPECT_LE(relative_error(back.param_grads.weights[0].flat(), numeric_gradient(p.weights[0].flat(), objective)), 1e-5);
}
