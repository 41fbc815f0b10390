#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "gramalign/data.hpp"
#include "gramalign/eval.hpp"

using namespace gramalign;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gramalign_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidArgument;
}

EmbeddingTable small_table() {
  return EmbeddingTable(Modality::Text, 3, {"a", "b"}, {0.1f, -2.5f, 3.0f, 1e-30f, 7.25f, -0.0f});
}

std::vector<std::pair<std::string, std::string>> toy_positives(std::size_t drugs, std::size_t prots, std::size_t count) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.emplace_back("d" + std::to_string(i % drugs), "p" + std::to_string((i * 7 + i / drugs) % prots));
  }
  std::set<std::pair<std::string, std::string>> uniq(out.begin(), out.end());
  return {uniq.begin(), uniq.end()};
}

void check_fold_invariants(const std::vector<PairDataset>& folds, SplitKind kind) {
  std::set<std::pair<std::string, std::string>> all_test_pos;
  for (const auto& f : folds) {
    std::size_t pos_tr = 0, pos_te = 0;
    for (const auto& p : f.train) pos_tr += p.label;
    for (const auto& p : f.test) pos_te += p.label;
    EXPECT_EQ(f.train.size(), pos_tr * 11);
    EXPECT_EQ(f.test.size(), pos_te * 11);
    std::set<std::string> tr_d, tr_p, te_d, te_p;
    for (const auto& p : f.train) {
      tr_d.insert(p.drug);
      tr_p.insert(p.protein);
    }
    for (const auto& p : f.test) {
      te_d.insert(p.drug);
      te_p.insert(p.protein);
      if (p.label == 1) all_test_pos.insert({p.drug, p.protein});
    }
    if (kind == SplitKind::DrugCold) {
      for (const auto& d : te_d) EXPECT_FALSE(tr_d.count(d)) << d;
    }
    if (kind == SplitKind::TargetCold) {
      for (const auto& p : te_p) EXPECT_FALSE(tr_p.count(p)) << p;
    }
    std::set<std::tuple<std::string, std::string, int>> uniq;
    for (const auto& p : f.train) EXPECT_TRUE(uniq.insert({p.drug, p.protein, 0}).second);
    for (const auto& p : f.test) EXPECT_TRUE(uniq.insert({p.drug, p.protein, 0}).second);
  }
}

}  // namespace

TEST(Gemb, RoundTripIsBitExact) {
  const auto t = small_table();
  const auto bytes = encode_embedding_table(t);
  EXPECT_EQ(bytes.substr(0, 6), "GEMB1\n");
  const auto back = decode_embedding_table(bytes);
  EXPECT_EQ(back, t);
  const auto dir = temp_dir("gemb");
  write_embedding_table(dir / "t.gemb", t);
  EXPECT_EQ(load_embedding_table(dir / "t.gemb", Modality::Text), t);
}

TEST(Gemb, CorruptFilesRejected) {
  auto bytes = encode_embedding_table(small_table());
  auto bad = bytes;
  bad.replace(0, 4, "XXXX");
  EXPECT_EQ(code_of([&] { decode_embedding_table(bad); }), ErrorCode::BadMagic);
  EXPECT_EQ(code_of([&] { decode_embedding_table(bytes.substr(0, bytes.size() - 3)); }), ErrorCode::TruncatedFile);
  const auto dir = temp_dir("gemb_modality");
  write_embedding_table(dir / "t.gemb", small_table());
  EXPECT_THROW(load_embedding_table(dir / "t.gemb", Modality::Protein), Error);
  EXPECT_EQ(code_of([&] { load_embedding_table(dir / "missing.gemb", Modality::Text); }), ErrorCode::IoFailure);
}

TEST(Gemb, TableValidation) {
  EXPECT_EQ(code_of([] { EmbeddingTable(Modality::Text, 1, {"a"}, {std::nanf("")}); }), ErrorCode::NonFiniteValue);
  EXPECT_THROW(EmbeddingTable(Modality::Text, 1, {"a", "a"}, {1.0f, 2.0f}), Error);
  EXPECT_THROW(EmbeddingTable(Modality::Text, 2, {"a"}, {1.0f}), Error);
}

TEST(Ic50, Discretization) {
  EXPECT_EQ(discretize_ic50(5), 0);
  EXPECT_EQ(discretize_ic50(10), 1);
  EXPECT_EQ(discretize_ic50(1000), 1);
  EXPECT_EQ(discretize_ic50(1000.1), 2);
  EXPECT_EQ(code_of([] { discretize_ic50(0); }), ErrorCode::NonPositiveIc50);
  EXPECT_EQ(code_of([] { discretize_ic50(-3); }), ErrorCode::NonPositiveIc50);
  int prev = 0;
  for (double v = 0.01; v < 1e5; v *= 1.07) {
    const int c = discretize_ic50(v);
    EXPECT_GE(c, prev);
    prev = c;
  }
}

TEST(Ic50, ClassWeights) {
  auto labels_for = [](std::array<int, 3> counts) {
    std::vector<int> out;
    for (int c = 0; c < 3; ++c) out.insert(out.end(), static_cast<std::size_t>(counts[c]), c);
    return out;
  };
  const auto balanced = class_weights(labels_for({10, 10, 10}));
  for (double w : balanced.weights) EXPECT_DOUBLE_EQ(w, 1.0);

  const auto a = class_weights(labels_for({100, 50, 50}));
  EXPECT_NEAR(a.weights[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(a.weights[1], 4.0 / 3.0, 1e-12);
  EXPECT_NEAR(a.weights[2], 4.0 / 3.0, 1e-12);

  // N / (3 N_c) with N = 1000.
  const auto b = class_weights(labels_for({1, 1, 998}));
  EXPECT_NEAR(b.weights[0], 333.3333333333333, 1e-9);
  EXPECT_NEAR(b.weights[1], 333.3333333333333, 1e-9);
  EXPECT_NEAR(b.weights[2], 0.33400133600534404, 1e-12);
  double total = 0.0;
  for (int c = 0; c < 3; ++c) total += b.counts[c] * b.weights[c];
  EXPECT_NEAR(total, 1000.0, 1e-9);

  EXPECT_EQ(code_of([&] { class_weights(labels_for({3, 0, 2})); }), ErrorCode::EmptyClass);
}

TEST(Manifest, RoundTripThroughDirectory) {
  SynthOptions opt;
  opt.n = 12;
  opt.dims = {5, 6, 7, 8};
  opt.seed = 4;
  const Dataset ds = synth_quadruplets(opt);
  const auto dir = temp_dir("manifest");
  write_dataset(dir, ds);
  const Dataset back = load_dataset(dir);
  for (Modality m : kAllModalities) EXPECT_EQ(back.table(m), ds.table(m));
  ASSERT_EQ(back.quads.size(), ds.quads.size());
  for (std::size_t i = 0; i < ds.quads.size(); ++i) {
    for (Modality m : kAllModalities) EXPECT_EQ(back.quads[i].row(m), ds.quads[i].row(m));
    EXPECT_EQ(back.quads[i].ic50_class, ds.quads[i].ic50_class);
    EXPECT_EQ(back.quads[i].ic50_um, ds.quads[i].ic50_um);
  }
}

TEST(Manifest, UnknownIdRejected) {
  SynthOptions opt;
  opt.n = 4;
  opt.dims = {3, 3, 3, 3};
  const Dataset ds = synth_quadruplets(opt);
  std::string text = encode_manifest(ds.tables, ds.quads);
  text += "smiles_999999\ttext_000000\thta_000000\tprotein_000000\t\n";
  EXPECT_THROW(decode_manifest(text, ds.tables), Error);
  EXPECT_THROW(decode_manifest("wrong\theader\n", ds.tables), Error);
}

TEST(Synth, DeterministicAndAnnotatedFraction) {
  SynthOptions opt;
  opt.n = 100;
  opt.dims = {8, 8, 8, 12};
  opt.seed = 9;
  const Dataset a = synth_quadruplets(opt), b = synth_quadruplets(opt);
  for (Modality m : kAllModalities) EXPECT_EQ(a.table(m), b.table(m));
  std::size_t annotated = 0;
  for (const auto& q : a.quads) annotated += q.ic50_class ? 1 : 0;
  EXPECT_TRUE(annotated == 33 || annotated == 34) << annotated;
  opt.n = 3;
  EXPECT_THROW(synth_quadruplets(opt), Error);
}

TEST(Synth, NoiseFreeModalitiesShareCosineGeometry) {
  SynthOptions opt;
  opt.n = 30;
  opt.dims = {10, 12, 14, 16};
  opt.noise_sigma = 0.0;
  const Dataset ds = synth_quadruplets(opt);
  std::vector<std::size_t> rows(opt.n);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  const Mat ref = cosine_matrix(ds.table(Modality::Smiles).gather(rows), ds.table(Modality::Smiles).gather(rows));
  for (Modality m : kAllModalities) {
    const Mat x = ds.table(m).gather(rows);
    const Mat c = cosine_matrix(x, x);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c.flat()[i], ref.flat()[i], 1e-5);
  }
}

TEST(Split, WarmFoldArithmetic) {
  std::vector<std::pair<std::string, std::string>> pos;
  for (int i = 0; i < 20; ++i) pos.emplace_back("d" + std::to_string(i), "p" + std::to_string(i));
  const auto folds = make_split(pos, SplitKind::Warm, 5, 1);
  ASSERT_EQ(folds.size(), 5u);
  std::set<std::pair<std::string, std::string>> tested;
  for (const auto& f : folds) {
    std::size_t pos_te = 0;
    for (const auto& p : f.test) {
      pos_te += p.label;
      if (p.label) tested.insert({p.drug, p.protein});
    }
    EXPECT_EQ(pos_te, 4u);
    EXPECT_EQ(f.test.size(), 44u);
  }
  EXPECT_EQ(tested.size(), 20u);
  check_fold_invariants(folds, SplitKind::Warm);
}

TEST(Split, ColdSplitsAreDisjoint) {
  const auto pos = toy_positives(30, 30, 60);
  for (auto kind : {SplitKind::Warm, SplitKind::DrugCold, SplitKind::TargetCold}) {
    const auto folds = make_split(pos, kind, 5, 3);
    EXPECT_EQ(folds.size(), 5u);
    check_fold_invariants(folds, kind);
  }
}

TEST(Split, DeterministicPerSeed) {
  const auto pos = toy_positives(30, 30, 50);
  EXPECT_EQ(make_split(pos, SplitKind::DrugCold, 5, 7), make_split(pos, SplitKind::DrugCold, 5, 7));
  EXPECT_NE(make_split(pos, SplitKind::DrugCold, 5, 7), make_split(pos, SplitKind::DrugCold, 5, 8));
}

TEST(Split, TooFewEntities) {
  std::vector<std::pair<std::string, std::string>> pos = {{"a", "x"}, {"b", "y"}, {"c", "z"}};
  EXPECT_EQ(code_of([&] { make_split(pos, SplitKind::Warm, 2, 0); }), ErrorCode::InsufficientEntities);
  EXPECT_EQ(code_of([&] { make_split(pos, SplitKind::Warm, 1, 0); }), ErrorCode::InvalidArgument);
}

TEST(Split, Names) {
  EXPECT_EQ(split_from_name("drug-cold"), SplitKind::DrugCold);
  EXPECT_EQ(name_of(SplitKind::TargetCold), "target-cold");
  EXPECT_THROW(split_from_name("lukewarm"), Error);
}
