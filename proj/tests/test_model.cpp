#include <gtest/gtest.h>

#include <filesystem>

#include "gramalign/model.hpp"

using namespace gramalign;

namespace {

ModelDims tiny_dims() {
  ModelDims d;
  d.input_dims = {5, 6, 7, 8};
  d.hidden_dim = 6;
  d.shared_dim = 4;
  d.ic50_hidden = 5;
  return d;
}

}  // namespace

TEST(Adam, OneStepHandValue) {
  std::vector<double> theta = {0.0}, g = {1.0};
  AdamMoments mom;
  AdamConfig cfg;
  cfg.lr = 0.1;
  cfg.float32_storage = false;
  adam_update(theta, g, mom, 1, cfg);
  // m_hat = v_hat = 1, so the step is lr / (1 + eps).
  EXPECT_NEAR(theta[0], -0.1 / (1.0 + 1e-8), 1e-17);
  EXPECT_NEAR(theta[0], -0.1, 1e-8);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> theta = {0.5, -0.25, 3.0}, g(3, 0.0);
  AdamMoments mom;
  AdamConfig cfg;
  for (std::uint64_t t = 1; t <= 5; ++t) adam_update(theta, g, mom, t, cfg);
  EXPECT_EQ(theta, (std::vector<double>{0.5, -0.25, 3.0}));
}

TEST(Adam, DeterministicAndFloatStored) {
  auto run = [] {
    std::vector<double> theta = {0.1, 0.2}, g = {0.3, -0.7};
    AdamMoments mom;
    AdamConfig cfg;
    cfg.lr = 1e-3;
    for (std::uint64_t t = 1; t <= 10; ++t) adam_update(theta, g, mom, t, cfg);
    return std::make_pair(theta, mom.v);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a, b);
  for (double x : a.first) EXPECT_EQ(x, static_cast<double>(static_cast<float>(x)));
  for (double x : a.second) EXPECT_EQ(x, static_cast<double>(static_cast<float>(x)));
}

TEST(Adam, StepCountsOncePerCall) {
  AlignmentModel model = make_model(tiny_dims(), 1);
  AlignmentModel grads = make_model(tiny_dims(), 2);
  AdamState st;
  adam_step(model.tensors(), grads.tensors(), st, AdamConfig{});
  adam_step(model.tensors(), grads.tensors(), st, AdamConfig{});
  EXPECT_EQ(st.t, 2u);
  EXPECT_EQ(st.moments.size(), model.tensors().size());
}

TEST(Model, TensorNamesAndInitDeterminism) {
  AlignmentModel a = make_model(tiny_dims(), 3), b = make_model(tiny_dims(), 3);
  EXPECT_EQ(a, b);
  const auto ts = a.tensors();
  EXPECT_EQ(ts.front().name, "proj.smiles.L0.w");
  EXPECT_EQ(ts.front().rows, 6u);
  EXPECT_EQ(ts.front().cols, 5u);
  bool has_ln = false, has_ic50 = false;
  for (const auto& t : ts) {
    has_ln = has_ln || t.name == "proj.protein.ln1.g";
    has_ic50 = has_ic50 || t.name == "ic50.L1.w";
  }
  EXPECT_TRUE(has_ln);
  EXPECT_TRUE(has_ic50);
  EXPECT_EQ(dims_of(a), tiny_dims());
  // Projectors draw from separate streams.
  EXPECT_FALSE(a.projector(Modality::Text).params.weights[1] == a.projector(Modality::Hta).params.weights[1]);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  AlignmentModel model = make_model(tiny_dims(), 4);
  AlignmentModel grads = make_model(tiny_dims(), 5);
  AdamState adam;
  AdamConfig cfg;
  cfg.lr = 0.01;
  adam_step(model.tensors(), grads.tensors(), adam, cfg);
  Checkpoint ck;
  ck.meta["note"] = "x";
  store_model(ck, model, &adam);
  const std::string bytes = encode_checkpoint(ck);
  EXPECT_EQ(bytes.substr(0, 7), "GCKPT1\n");
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  AlignmentModel restored = restore_model(back);
  EXPECT_EQ(restored, model);
  const AdamState adam2 = restore_adam(back, restored);
  EXPECT_EQ(adam2.t, 1u);
  for (const auto& [name, mom] : adam.moments) {
    EXPECT_EQ(adam2.moments.at(name).m, mom.m) << name;
    EXPECT_EQ(adam2.moments.at(name).v, mom.v) << name;
  }
  const auto path = std::filesystem::temp_directory_path() / "gramalign_test_ckpt.gckpt";
  save_checkpoint(path, ck);
  EXPECT_EQ(restore_model(load_checkpoint(path)), model);
}

TEST(Checkpoint, CorruptionDetected) {
  AlignmentModel model = make_model(tiny_dims(), 4);
  Checkpoint ck;
  store_model(ck, model);
  const std::string bytes = encode_checkpoint(ck);
  try {
    decode_checkpoint("GCKPT9\n{}\n" + std::string(1, '\0'));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadMagic);
  }
  try {
    decode_checkpoint(bytes.substr(0, bytes.size() - 8));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TruncatedFile);
  }
  Checkpoint missing = decode_checkpoint(bytes);
  missing.tensors.erase("ic50.L0.b");
  try {
    restore_model(missing);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingTensor);
  }
  Checkpoint wrong = decode_checkpoint(bytes);
  wrong.tensors["ic50.L0.w"].rows += 1;
  wrong.tensors["ic50.L0.w"].data.resize(wrong.tensors["ic50.L0.w"].rows * wrong.tensors["ic50.L0.w"].cols);
  try {
    restore_model(wrong);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}
