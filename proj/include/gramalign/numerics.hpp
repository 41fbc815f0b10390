#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gramalign/error.hpp"

namespace gramalign {

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, std::vector<double> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, ErrorCode::ShapeMismatch, "data length must equal rows*cols");
  }

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Result of gram_volume_grad: the volume and dV/df^k for every input vector.
struct VolumeGrad {
  double value = 0.0;
  std::vector<Vec> per_vector;
};

inline constexpr double kNormEps = 1e-12;
inline constexpr double kDetEps = 1e-12;
inline constexpr double kUnitTol = 1e-9;
inline constexpr double kSymTol = 1e-9;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline Vec l2_normalize(std::span<const double> v) {
  require(!v.empty(), ErrorCode::DimensionMismatch, "cannot normalize an empty vector");
  const double n = norm2(v);
  require(n > kNormEps, ErrorCode::ZeroVector, "vector norm " + std::to_string(n) + " <= 1e-12");
  Vec out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

// Fixed-size kernels for the n <= 4 Gram matrices that sit in the inner
// loop of the volume loss (one per tuple, B^2 tuples per step).
namespace small {

template <std::size_t N>
using Square = std::array<double, N * N>;

/// Determinant by LU with partial pivoting.
template <std::size_t N>
double det_lu(Square<N> a) {
  double det = 1.0;
  for (std::size_t k = 0; k < N; ++k) {
    std::size_t p = k;
    double best = std::abs(a[k * N + k]);
    for (std::size_t r = k + 1; r < N; ++r) {
      if (std::abs(a[r * N + k]) > best) {
        best = std::abs(a[r * N + k]);
        p = r;
      }
    }
    if (best == 0.0) return 0.0;
    if (p != k) {
      for (std::size_t c = 0; c < N; ++c) std::swap(a[k * N + c], a[p * N + c]);
      det = -det;
    }
    const double piv = a[k * N + k];
    det *= piv;
    for (std::size_t r = k + 1; r < N; ++r) {
      const double f = a[r * N + k] / piv;
      if (f == 0.0) continue;
      for (std::size_t c = k + 1; c < N; ++c) a[r * N + c] -= f * a[k * N + c];
    }
  }
  return det;
}

template <>
inline double det_lu<1>(Square<1> a) {
  return a[0];
}

/// Minor of `a` with row `skip_r` and column `skip_c` removed.
template <std::size_t N>
Square<N - 1> minor(const Square<N>& a, std::size_t skip_r, std::size_t skip_c) {
  Square<N - 1> m{};
  std::size_t idx = 0;
  for (std::size_t r = 0; r < N; ++r) {
    if (r == skip_r) continue;
    for (std::size_t c = 0; c < N; ++c) {
      if (c == skip_c) continue;
      m[idx++] = a[r * N + c];
    }
  }
  return m;
}

/// Adjugate, adj(A) = det(A) * inv(A) when A is invertible. Well defined for
/// singular A, which is why the volume gradient is built on it.
template <std::size_t N>
Square<N> adjugate(const Square<N>& a) {
  Square<N> adj{};
  if constexpr (N == 1) {
    adj[0] = 1.0;
  } else {
    for (std::size_t r = 0; r < N; ++r) {
      for (std::size_t c = 0; c < N; ++c) {
        const double sign = ((r + c) % 2 == 0) ? 1.0 : -1.0;
        adj[c * N + r] = sign * det_lu<N - 1>(minor<N>(a, r, c));
      }
    }
  }
  return adj;
}

}  // namespace small

namespace detail {

template <std::size_t N>
small::Square<N> to_square(const Mat& g) {
  small::Square<N> s{};
  for (std::size_t i = 0; i < N * N; ++i) s[i] = g.flat()[i];
  return s;
}

inline double det_dispatch(const Mat& g) {
  switch (g.rows()) {
    case 1: return g(0, 0);
    case 2: return small::det_lu<2>(to_square<2>(g));
    case 3: return small::det_lu<3>(to_square<3>(g));
    case 4: return small::det_lu<4>(to_square<4>(g));
    default: fail(ErrorCode::DimensionMismatch, "determinant supports n <= 4, got " + std::to_string(g.rows()));
  }
}

inline Mat adjugate_dispatch(const Mat& g) {
  auto pack = [&](const auto& s) { return Mat(g.rows(), g.cols(), std::vector<double>(s.begin(), s.end())); };
  switch (g.rows()) {
    case 1: return Mat(1, 1, 1.0);
    case 2: return pack(small::adjugate<2>(to_square<2>(g)));
    case 3: return pack(small::adjugate<3>(to_square<3>(g)));
    case 4: return pack(small::adjugate<4>(to_square<4>(g)));
    default: fail(ErrorCode::DimensionMismatch, "adjugate supports n <= 4, got " + std::to_string(g.rows()));
  }
}

/// Gram matrix without the unit-norm precondition (finite differences need it).
inline Mat gram_unchecked(std::span<const Vec> vectors) {
  const std::size_t n = vectors.size();
  Mat g(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = k; j < n; ++j) {
      g(k, j) = g(j, k) = dot(vectors[k], vectors[j]);
    }
  }
  return g;
}

inline double clamp_det(double det) { return (det < 0.0 && det >= -kDetEps) ? 0.0 : det; }

/// sqrt(det(Gram)) for arbitrary (not necessarily unit) vectors.
inline double volume_unchecked(std::span<const Vec> vectors) {
  return std::sqrt(std::max(0.0, clamp_det(det_dispatch(gram_unchecked(vectors)))));
}

/// dV/df^k = sum_j adj(G)_kj f^j / V, for arbitrary vectors with V > 0.
inline std::vector<Vec> volume_grad_unchecked(std::span<const Vec> vectors, double volume, const Mat& adj) {
  const std::size_t n = vectors.size();
  const std::size_t d = vectors.front().size();
  std::vector<Vec> grads(n, Vec(d, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < n; ++j) {
      const double c = adj(k, j) / volume;
      for (std::size_t t = 0; t < d; ++t) grads[k][t] += c * vectors[j][t];
    }
  }
  return grads;
}

}  // namespace detail

inline Mat gram_matrix(std::span<const Vec> vectors) {
  const std::size_t n = vectors.size();
  require(n >= 2 && n <= 4, ErrorCode::DimensionMismatch, "gram_matrix needs 2..4 vectors, got " + std::to_string(n));
  const std::size_t d = vectors.front().size();
  for (const auto& v : vectors) {
    require(v.size() == d, ErrorCode::DimensionMismatch, "vectors must share one dimension");
    require(std::abs(norm2(v) - 1.0) <= kUnitTol, ErrorCode::NotNormalized, "input vectors must be unit norm");
  }
  return detail::gram_unchecked(vectors);
}

/// det(G) for a symmetric G with n <= 4. Negative round-off in [-1e-12, 0)
/// is clamped to zero.
inline double det_psd(const Mat& g) {
  require(g.rows() == g.cols(), ErrorCode::DimensionMismatch, "det_psd needs a square matrix");
  for (std::size_t k = 0; k < g.rows(); ++k) {
    for (std::size_t j = k + 1; j < g.cols(); ++j) {
      require(std::abs(g(k, j) - g(j, k)) <= kSymTol, ErrorCode::NotSymmetric, "matrix is not symmetric");
    }
  }
  return detail::clamp_det(detail::det_dispatch(g));
}

inline double gram_volume(std::span<const Vec> vectors) {
  return std::sqrt(std::max(0.0, det_psd(gram_matrix(vectors))));
}

inline VolumeGrad gram_volume_grad(std::span<const Vec> vectors) {
  const Mat g = gram_matrix(vectors);
  const double det = det_psd(g);
  require(det > kDetEps, ErrorCode::SingularGram, "det(G) = " + std::to_string(det) + " <= 1e-12");
  VolumeGrad out;
  out.value = std::sqrt(det);
  out.per_vector = detail::volume_grad_unchecked(vectors, out.value, detail::adjugate_dispatch(g));
  return out;
}

// Small dense helpers used by the heads and losses.

/// C = A * B^T  (A: m x k, B: n x k)
inline Mat matmul_nt(const Mat& a, const Mat& b) {
  require(a.cols() == b.cols(), ErrorCode::DimensionMismatch, "matmul_nt inner dims differ");
  Mat c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ar = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = dot(ar, b.row(j));
  }
  return c;
}

/// C = A * B  (A: m x k, B: k x n)
inline Mat matmul(const Mat& a, const Mat& b) {
  require(a.cols() == b.rows(), ErrorCode::DimensionMismatch, "matmul inner dims differ");
  Mat c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto cr = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto br = b.row(k);
      for (std::size_t j = 0; j < cr.size(); ++j) cr[j] += aik * br[j];
    }
  }
  return c;
}

/// C = A^T * B  (A: k x m, B: k x n)
inline Mat matmul_tn(const Mat& a, const Mat& b) {
  require(a.rows() == b.rows(), ErrorCode::DimensionMismatch, "matmul_tn inner dims differ");
  Mat c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto ar = a.row(k);
    const auto br = b.row(k);
    for (std::size_t i = 0; i < ar.size(); ++i) {
      const double aki = ar[i];
      if (aki == 0.0) continue;
      auto cr = c.row(i);
      for (std::size_t j = 0; j < br.size(); ++j) cr[j] += aki * br[j];
    }
  }
  return c;
}

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace gramalign
