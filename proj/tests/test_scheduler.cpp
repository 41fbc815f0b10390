#include <gtest/gtest.h>

#include <cmath>

#include "gramalign/scheduler.hpp"

using namespace gramalign;

namespace {

SchedulerConfig always_drop() {
  SchedulerConfig c;
  c.p_drop = 1.0;
  return c;
}

}  // namespace

TEST(History, RingSemantics) {
  GradHistory h(5);
  h.record({1, 2, 3, 4});
  EXPECT_EQ(h.entries(Modality::Smiles).size(), 1u);
  for (int k = 2; k <= 6; ++k) h.record({double(k), 0, 0, 0});
  const auto& e = h.entries(Modality::Smiles);
  ASSERT_EQ(e.size(), 5u);
  EXPECT_EQ(e.front(), 6.0);  // newest first
  EXPECT_EQ(e.back(), 2.0);   // first record (1) evicted
}

TEST(History, Smoothing) {
  GradHistory h(5);
  for (int i = 0; i < 5; ++i) h.record({1, 1, 1, 1});
  for (double g : h.smoothed(0.9)) EXPECT_DOUBLE_EQ(g, 1.0);

  GradHistory one(5);
  one.record({2, 2, 2, 2});
  EXPECT_DOUBLE_EQ(one.smoothed(0.9)[0], 2.0);

  GradHistory two(5);
  two.record({1, 1, 1, 1});
  two.record({2, 2, 2, 2});
  EXPECT_NEAR(two.smoothed(0.9)[0], 2.9 / 1.9, 1e-15);
  EXPECT_NEAR(two.smoothed(0.9)[0], 1.526316, 1e-6);
}

TEST(History, Errors) {
  GradHistory h(3);
  try {
    h.smoothed(0.9);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyHistory);
  }
  try {
    h.record({1, -1, 0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NegativeNorm);
  }
}

TEST(Decide, WorkedExamples) {
  const auto s1 = drop_stats({10, 1, 1, 1}, 1.5);
  EXPECT_NEAR(s1.mean, 3.25, 1e-12);
  EXPECT_NEAR(s1.stddev, 3.897114, 1e-6);
  EXPECT_NEAR(s1.threshold, 9.095671, 1e-6);
  Rng rng = make_rng(0, "test.decide");
  const auto d1 = decide({10, 1, 1, 1}, always_drop(), rng, true);
  EXPECT_EQ(d1.branch, DropBranch::Dominance);
  EXPECT_EQ(d1.dropped, Modality::Smiles);

  const auto s2 = drop_stats({1, 2, 3, 4}, 1.5);
  EXPECT_NEAR(s2.stddev, 1.118034, 1e-6);
  EXPECT_NEAR(s2.threshold, 4.177051, 1e-6);
  const auto d2 = decide({1, 2, 3, 4}, always_drop(), rng, true);
  EXPECT_EQ(d2.branch, DropBranch::Argmin);
  EXPECT_EQ(d2.dropped, Modality::Smiles);

  const auto d3 = decide({10, 1, 1, 1}, always_drop(), rng, false);
  EXPECT_FALSE(d3.should_drop);
  EXPECT_EQ(d3.anchor, Modality::Protein);
  EXPECT_EQ(d3.branch, DropBranch::None);
}

TEST(Decide, EqualNormsNeverDominate) {
  Rng rng = make_rng(1, "test.decide");
  for (int i = 0; i < 100; ++i) {
    const auto d = decide({2, 2, 2, 2}, always_drop(), rng, true);
    EXPECT_EQ(d.branch, DropBranch::Argmin);
    EXPECT_EQ(d.dropped, Modality::Smiles);
  }
}

TEST(Decide, AnchorNeverDroppedAndUniform) {
  Rng rng = make_rng(2, "test.decide");
  std::array<int, 4> anchors{};
  for (int i = 0; i < 30000; ++i) {
    const auto d = decide({1, 3, 2, 3}, always_drop(), rng, true);
    ASSERT_TRUE(d.dropped);
    EXPECT_NE(d.anchor, *d.dropped);
    anchors[index_of(d.anchor)]++;
  }
  EXPECT_EQ(anchors[0], 0);  // smiles is the argmin
  for (int m = 1; m < 4; ++m) EXPECT_NEAR(anchors[m] / 30000.0, 1.0 / 3.0, 0.015);
}

TEST(Decide, DeterministicGivenRngState) {
  Rng a = make_rng(7, "scheduler", 3), b = make_rng(7, "scheduler", 3);
  SchedulerConfig cfg;
  for (int i = 0; i < 100; ++i) {
    const auto x = decide({1, 2, 3, 4}, cfg, a, true);
    const auto y = decide({1, 2, 3, 4}, cfg, b, true);
    EXPECT_EQ(x.should_drop, y.should_drop);
    EXPECT_EQ(x.anchor, y.anchor);
    EXPECT_EQ(x.dropped, y.dropped);
  }
}

TEST(Config, Validation) {
  SchedulerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.p_drop = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.history = 0;
  EXPECT_THROW(c.validate(), Error);
}
