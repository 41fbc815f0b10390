#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gramalign/gradcheck.hpp"
#include "gramalign/numerics.hpp"
#include "gramalign/rng.hpp"

using namespace gramalign;

namespace {

Vec e(std::size_t i, std::size_t d = 4) {
  Vec v(d, 0.0);
  v[i] = 1.0;
  return v;
}

Vec random_unit(Rng& rng, std::size_t d) {
  Vec v(d);
  for (double& x : v) x = normal01(rng);
  return l2_normalize(v);
}

// Laplace expansion along the first row.
double cofactor_det(const Mat& m) {
  const std::size_t n = m.rows();
  if (n == 1) return m(0, 0);
  double s = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    Mat minor(n - 1, n - 1);
    for (std::size_t r = 1; r < n; ++r) {
      for (std::size_t k = 0, kk = 0; k < n; ++k) {
        if (k != c) minor(r - 1, kk++) = m(r, k);
      }
    }
    s += (c % 2 == 0 ? 1.0 : -1.0) * m(0, c) * cofactor_det(minor);
  }
  return s;
}

}  // namespace

TEST(Normalize, WorkedExamples) {
  const Vec a = l2_normalize(Vec{3, 4});
  EXPECT_DOUBLE_EQ(a[0], 0.6);
  EXPECT_DOUBLE_EQ(a[1], 0.8);
  EXPECT_EQ(l2_normalize(Vec{1, 0, 0}), (Vec{1, 0, 0}));
  const Vec b = l2_normalize(Vec{2, 2});
  EXPECT_NEAR(b[0], 0.70710678118654752, 1e-15);
  EXPECT_NEAR(b[1], 0.70710678118654752, 1e-15);
}

TEST(Normalize, ZeroVectorRejected) {
  try {
    l2_normalize(Vec{0, 0, 0});
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::ZeroVector);
  }
}

TEST(Gram, WorkedExamples) {
  std::vector<Vec> basis = {e(0), e(1), e(2), e(3)};
  EXPECT_EQ(gram_matrix(basis), Mat::identity(4));

  std::vector<Vec> dup = {e(1), e(1)};
  const Mat g = gram_matrix(dup);
  for (double x : g.flat()) EXPECT_DOUBLE_EQ(x, 1.0);

  const double c = std::cos(std::numbers::pi / 3), s = std::sin(std::numbers::pi / 3);
  std::vector<Vec> sixty = {{1, 0}, {c, s}};
  const Mat h = gram_matrix(sixty);
  EXPECT_NEAR(h(0, 1), 0.5, 1e-15);
  EXPECT_NEAR(h(1, 0), 0.5, 1e-15);
}

TEST(Gram, RejectsBadInput) {
  std::vector<Vec> one = {e(0)};
  EXPECT_THROW(gram_matrix(one), Error);
  std::vector<Vec> five = {e(0, 5), e(1, 5), e(2, 5), e(3, 5), e(4, 5)};
  EXPECT_THROW(gram_matrix(five), Error);
  std::vector<Vec> ragged = {e(0, 3), e(0, 4)};
  try {
    gram_matrix(ragged);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::DimensionMismatch);
  }
  std::vector<Vec> loose = {Vec{2, 0}, Vec{0, 1}};
  try {
    gram_matrix(loose);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::NotNormalized);
  }
}

TEST(Det, WorkedExamples) {
  EXPECT_DOUBLE_EQ(det_psd(Mat::identity(4)), 1.0);
  EXPECT_DOUBLE_EQ(det_psd(Mat(2, 2, {2, 0, 0, 3})), 6.0);
  EXPECT_DOUBLE_EQ(det_psd(Mat(2, 2, {1, 1, 1, 1})), 0.0);
}

TEST(Det, RejectsAsymmetric) {
  try {
    det_psd(Mat(2, 2, {1, 0.5, 0.2, 1}));
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::NotSymmetric);
  }
}

TEST(Det, MatchesCofactorExpansion) {
  Rng rng = make_rng(11, "test.det");
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + trial % 3;
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) m(i, j) = m(j, i) = normal01(rng);
    }
    // Make it PSD so clamping never applies: A A^T.
    const Mat psd = matmul_nt(m, m);
    EXPECT_NEAR(det_psd(psd), cofactor_det(psd), 1e-10 * std::max(1.0, std::abs(cofactor_det(psd))));
  }
}

TEST(Volume, WorkedExamples) {
  EXPECT_NEAR(gram_volume(std::vector<Vec>{e(0), e(1), e(2), e(3)}), 1.0, 1e-15);
  EXPECT_NEAR(gram_volume(std::vector<Vec>{e(0), e(1), e(2), e(0)}), 0.0, 1e-15);
  Vec diag(4, 0.0);
  diag[0] = diag[3] = 1.0 / std::numbers::sqrt2;
  EXPECT_NEAR(gram_volume(std::vector<Vec>{e(0), e(1), e(2), diag}), 0.70710678118654752, 1e-12);
}

TEST(Volume, BoundsAndPermutationInvariance) {
  Rng rng = make_rng(3, "test.volume");
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 3;
    const std::size_t d = n + uniform_index(rng, 6);
    std::vector<Vec> vs;
    for (std::size_t k = 0; k < n; ++k) vs.push_back(random_unit(rng, d));
    const double v = gram_volume(vs);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0 + 1e-12);
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    while (std::next_permutation(perm.begin(), perm.end())) {
      std::vector<Vec> p;
      for (auto i : perm) p.push_back(vs[i]);
      EXPECT_NEAR(gram_volume(p), v, 1e-12);
    }
    // Collapse: a duplicate drives the volume to zero.
    vs.back() = vs.front();
    EXPECT_LT(gram_volume(vs), 1e-6);
  }
}

TEST(VolumeGrad, SixtyDegreeClosedForm) {
  // V = sin(theta); moving v along the tangent changes theta at unit rate.
  const double th = std::numbers::pi / 3;
  std::vector<Vec> uv = {{1, 0}, {std::cos(th), std::sin(th)}};
  const auto g = gram_volume_grad(uv);
  EXPECT_NEAR(g.value, std::sin(th), 1e-15);
  const Vec tangent = {-std::sin(th), std::cos(th)};
  EXPECT_NEAR(dot(g.per_vector[1], tangent), 0.5, 1e-12);
}

TEST(VolumeGrad, OrthonormalIsStationaryOnSphere) {
  std::vector<Vec> basis = {e(0), e(1), e(2), e(3)};
  const auto g = gram_volume_grad(basis);
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (j != k) {
        EXPECT_NEAR(g.per_vector[k][j], 0.0, 1e-15);
      }
    }
  }
}

TEST(VolumeGrad, SingularIsAnError) {
  try {
    gram_volume_grad(std::vector<Vec>{e(0), e(0)});
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::SingularGram);
  }
}

TEST(VolumeGrad, FiniteDifferencesOver100Seeds) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng = make_rng(seed, "test.volgrad");
    const std::size_t n = 2 + seed % 3;
    std::vector<Vec> vs;
    for (std::size_t k = 0; k < n; ++k) vs.push_back(random_unit(rng, 4 + seed % 5));
    const auto g = gram_volume_grad(vs);
    for (std::size_t k = 0; k < n; ++k) {
      const Vec num = numeric_gradient(vs[k], [&] { return detail::volume_unchecked(vs); });
      EXPECT_LE(relative_error(g.per_vector[k], num), 1e-6) << "seed " << seed;
    }
  }
}

TEST(Matmul, VariantsAgree) {
  const Mat a(2, 3, {1, 2, 3, 4, 5, 6});
  const Mat b(3, 2, {7, 8, 9, 10, 11, 12});
  EXPECT_EQ(matmul(a, b), Mat(2, 2, {58, 64, 139, 154}));
  const Mat bt(2, 3, {7, 9, 11, 8, 10, 12});
  EXPECT_EQ(matmul_nt(a, bt), Mat(2, 2, {58, 64, 139, 154}));
  const Mat at(3, 2, {1, 4, 2, 5, 3, 6});
  EXPECT_EQ(matmul_tn(at, b), Mat(2, 2, {58, 64, 139, 154}));
}

TEST(Rng, StreamsAreIndependentAndRepeatable) {
  Rng a = make_rng(5, "shuffle", 1), b = make_rng(5, "shuffle", 1), c = make_rng(5, "dropout", 1);
  const auto x = a(), y = b(), z = c();
  EXPECT_EQ(x, y);
  EXPECT_NE(x, z);
  Rng r = make_rng(1, "test.index");
  for (int i = 0; i < 1000; ++i) EXPECT_LT(uniform_index(r, 7), 7u);
}
