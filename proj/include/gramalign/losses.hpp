#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gramalign/data.hpp"
#include "gramalign/error.hpp"
#include "gramalign/modality.hpp"
#include "gramalign/numerics.hpp"
#include "gramalign/parallel.hpp"

namespace gramalign {

/// Projected embeddings for one mini-batch, one B x d matrix per modality.
struct Batch {
  std::array<Mat, kNumModalities> f;
  std::vector<int> ic50_label;   // per row; meaningful only where ic50_valid
  std::vector<bool> ic50_valid;

  std::size_t size() const { return f[0].rows(); }
  std::size_t dim() const { return f[0].cols(); }
  const Mat& operator[](Modality m) const { return f[index_of(m)]; }
  Mat& operator[](Modality m) { return f[index_of(m)]; }
};

struct LossOut {
  double value = 0.0;
  std::array<Mat, kNumModalities> grads;  // dL/df^m, zero blocks for unused modalities
  std::map<std::string, double> diagnostics;
};

inline constexpr double kVolumeEps = 1e-10;
inline constexpr double kDefaultTemperature = 0.07;

inline LossOut zero_loss(std::size_t batch, std::size_t dim) {
  LossOut out;
  for (auto& g : out.grads) g = Mat(batch, dim);
  return out;
}

namespace detail {

inline double logsumexp(std::span<const double> xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// Loss and dL/dS for the symmetric InfoNCE over a B x B score matrix whose
/// diagonal holds the positives: 1/2 (row-wise CE + column-wise CE).
/// `row_loss` / `col_loss` receive the two directional means.
inline Mat symmetric_infonce(const Mat& s, double& row_loss, double& col_loss) {
  const std::size_t b = s.rows();
  const double inv_b = 1.0 / static_cast<double>(b);
  Mat ds(b, b);
  row_loss = 0.0;
  col_loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto r = s.row(i);
    const double lse = logsumexp(r);
    row_loss += lse - s(i, i);
    for (std::size_t j = 0; j < b; ++j) ds(i, j) += 0.5 * inv_b * (std::exp(r[j] - lse) - (i == j ? 1.0 : 0.0));
  }
  Vec col(b);
  for (std::size_t j = 0; j < b; ++j) {
    for (std::size_t i = 0; i < b; ++i) col[i] = s(i, j);
    const double lse = logsumexp(col);
    col_loss += lse - s(j, j);
    for (std::size_t i = 0; i < b; ++i) ds(i, j) += 0.5 * inv_b * (std::exp(col[i] - lse) - (i == j ? 1.0 : 0.0));
  }
  row_loss *= inv_b;
  col_loss *= inv_b;
  return ds;
}

/// Anchor first, then the other active modalities in fixed order.
inline std::vector<Modality> tuple_order(Modality anchor, std::span<const Modality> active) {
  require(active.size() == 3 || active.size() == 4, ErrorCode::InvalidArgument, "volume loss needs 3 or 4 active modalities");
  require(std::find(active.begin(), active.end(), anchor) != active.end(), ErrorCode::InvalidArgument,
          "anchor must be an active modality");
  std::vector<Modality> order{anchor};
  for (Modality m : kAllModalities) {
    if (m != anchor && std::find(active.begin(), active.end(), m) != active.end()) order.push_back(m);
  }
  require(order.size() == active.size(), ErrorCode::InvalidArgument, "active modalities must be distinct");
  return order;
}

/// Per-tuple volume and adjugate for every (i, j): anchor row j with the
/// non-anchor rows of sample i. Entry (i, j) therefore sits on row i.
template <std::size_t N>
struct VolumeGrid {
  Mat volume;                                 // B x B, regularized sqrt(det + eps)
  std::vector<small::Square<N>> adjugates;    // B*B, row-major in (i, j)
};

template <std::size_t N>
VolumeGrid<N> volume_grid(const Batch& batch, std::span<const Modality> order) {
  const std::size_t b = batch.size();
  // cross[k](j, i) = <anchor_j, other_k_i>
  std::vector<Mat> cross;
  for (std::size_t k = 1; k < N; ++k) cross.push_back(matmul_nt(batch[order[0]], batch[order[k]]));
  VolumeGrid<N> grid{Mat(b, b), std::vector<small::Square<N>>(b * b)};
  parallel_for(b, [&](std::size_t i) {
    small::Square<N> g{};
    for (std::size_t k = 1; k < N; ++k) {
      for (std::size_t l = k; l < N; ++l) {
        g[k * N + l] = g[l * N + k] = dot(batch[order[k]].row(i), batch[order[l]].row(i));
      }
    }
    for (std::size_t j = 0; j < b; ++j) {
      g[0] = dot(batch[order[0]].row(j), batch[order[0]].row(j));
      for (std::size_t k = 1; k < N; ++k) g[k] = g[k * N] = cross[k - 1](j, i);
      const double det = std::max(0.0, small::det_lu<N>(g));
      grid.volume(i, j) = std::sqrt(det + kVolumeEps);
      grid.adjugates[i * b + j] = small::adjugate<N>(g);
    }
  });
  return grid;
}

template <std::size_t N>
LossOut volume_contrastive_n(const Batch& batch, std::span<const Modality> order, double tau) {
  const std::size_t b = batch.size();
  const std::size_t d = batch.dim();
  auto grid = volume_grid<N>(batch, order);
  Mat s(b, b);
  for (std::size_t i = 0; i < s.size(); ++i) s.flat()[i] = -grid.volume.flat()[i] / tau;
  double fwd = 0.0, rev = 0.0;
  const Mat ds = symmetric_infonce(s, fwd, rev);

  // C(i,j) = dL/dV(i,j) * adj(G_ij) / V_ij; dV/df_p = sum_q C_pq f_q.
  // coef_anchor_self(j), coef_cross[k](j, i) and coef_other[k][l](i) collect the
  // pieces so the embedding gradients reduce to B x B by B x d products.
  Vec anchor_self(b, 0.0);
  std::vector<Mat> cross_coef(N - 1, Mat(b, b));
  std::vector<Mat> other_coef((N - 1) * (N - 1), Mat(b, 1));
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) {
      const double w = -ds(i, j) / tau / grid.volume(i, j);
      const auto& adj = grid.adjugates[i * b + j];
      anchor_self[j] += w * adj[0];
      for (std::size_t k = 1; k < N; ++k) {
        cross_coef[k - 1](j, i) += w * adj[k];
        for (std::size_t l = 1; l < N; ++l) other_coef[(k - 1) * (N - 1) + (l - 1)](i, 0) += w * adj[k * N + l];
      }
    }
  }

  LossOut out = zero_loss(b, d);
  const Mat& anchor = batch[order[0]];
  Mat& g_anchor = out.grads[index_of(order[0])];
  for (std::size_t j = 0; j < b; ++j) {
    auto gr = g_anchor.row(j);
    const auto ar = anchor.row(j);
    for (std::size_t t = 0; t < d; ++t) gr[t] += anchor_self[j] * ar[t];
  }
  for (std::size_t k = 1; k < N; ++k) {
    const Mat& other = batch[order[k]];
    const Mat a_part = matmul(cross_coef[k - 1], other);      // into anchors
    const Mat o_part = matmul_tn(cross_coef[k - 1], anchor);  // into others
    for (std::size_t i = 0; i < g_anchor.size(); ++i) g_anchor.flat()[i] += a_part.flat()[i];
    Mat& g_other = out.grads[index_of(order[k])];
    for (std::size_t i = 0; i < g_other.size(); ++i) g_other.flat()[i] += o_part.flat()[i];
    for (std::size_t r = 0; r < b; ++r) {
      auto gr = g_other.row(r);
      for (std::size_t l = 1; l < N; ++l) {
        const double c = other_coef[(k - 1) * (N - 1) + (l - 1)](r, 0);
        const auto fr = batch[order[l]].row(r);
        for (std::size_t t = 0; t < d; ++t) gr[t] += c * fr[t];
      }
    }
  }
  out.value = 0.5 * (fwd + rev);
  out.diagnostics["vol_forward"] = fwd;
  out.diagnostics["vol_reverse"] = rev;
  double pos = 0.0;
  for (std::size_t i = 0; i < b; ++i) pos += grid.volume(i, i);
  out.diagnostics["positive_volume"] = pos / static_cast<double>(b);
  return out;
}

}  // namespace detail

/// B x B similarity S(i, j) = -V(anchor_j, non-anchor modalities of sample i) / tau,
/// with V = sqrt(det(G) + 1e-10). The reverse matrix is its transpose.
inline Mat volume_similarity_forward(const Batch& batch, Modality anchor, std::span<const Modality> active, double tau) {
  require(tau > 0.0, ErrorCode::InvalidArgument, "temperature must be positive");
  const auto order = detail::tuple_order(anchor, active);
  Mat v = order.size() == 4 ? detail::volume_grid<4>(batch, order).volume : detail::volume_grid<3>(batch, order).volume;
  for (double& x : v.flat()) x = -x / tau;
  return v;
}

/// 1/2 (L-> + L<-) over the volume similarity matrix; positives on the diagonal,
/// the whole batch in every denominator.
inline LossOut volume_contrastive(const Batch& batch, Modality anchor, std::span<const Modality> active, double tau) {
  require(tau > 0.0, ErrorCode::InvalidArgument, "temperature must be positive");
  const auto order = detail::tuple_order(anchor, active);
  return order.size() == 4 ? detail::volume_contrastive_n<4>(batch, order, tau)
                           : detail::volume_contrastive_n<3>(batch, order, tau);
}

/// CLIP-style symmetric InfoNCE between SMILES and protein rows.
inline LossOut clip_bimodal(const Batch& batch, double tau) {
  require(tau > 0.0, ErrorCode::InvalidArgument, "temperature must be positive");
  const Mat& fs = batch[Modality::Smiles];
  const Mat& fp = batch[Modality::Protein];
  require(fs.rows() == fp.rows() && fs.cols() == fp.cols(), ErrorCode::DimensionMismatch, "SMILES/protein blocks differ in shape");
  Mat logits = matmul_nt(fs, fp);
  for (double& x : logits.flat()) x /= tau;
  double s2p = 0.0, p2s = 0.0;
  Mat dl = detail::symmetric_infonce(logits, s2p, p2s);
  for (double& x : dl.flat()) x /= tau;
  LossOut out = zero_loss(batch.size(), batch.dim());
  out.grads[index_of(Modality::Smiles)] = matmul(dl, fp);
  out.grads[index_of(Modality::Protein)] = matmul_tn(dl, fs);
  out.value = 0.5 * (s2p + p2s);
  out.diagnostics["bi_s2p"] = s2p;
  out.diagnostics["bi_p2s"] = p2s;
  return out;
}

inline constexpr double kLabelSmoothing = 0.1;

/// Weighted, label-smoothed cross-entropy over the annotated rows only.
struct Ic50LossOut {
  double value = 0.0;
  Mat logit_grads;  // B x 3, zero rows where no label
  std::size_t annotated = 0;
};

inline Ic50LossOut ic50_loss(const Mat& logits, std::span<const int> labels, const std::vector<bool>& valid,
                             const std::array<double, kIc50Classes>& weights, double smoothing = kLabelSmoothing) {
  require(logits.cols() == kIc50Classes, ErrorCode::DimensionMismatch, "IC50 logits must have 3 columns");
  require(labels.size() == logits.rows() && valid.size() == logits.rows(), ErrorCode::DimensionMismatch,
          "label mask does not match the batch");
  Ic50LossOut out{0.0, Mat(logits.rows(), kIc50Classes), 0};
  for (bool v : valid) out.annotated += v ? 1 : 0;
  if (out.annotated == 0) return out;
  const double inv_s = 1.0 / static_cast<double>(out.annotated);
  const double off = smoothing / static_cast<double>(kIc50Classes);
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (!valid[r]) continue;
    const int y = labels[r];
    require(y >= 0 && y < static_cast<int>(kIc50Classes), ErrorCode::InvalidArgument, "IC50 label out of range");
    const auto z = logits.row(r);
    const double lse = detail::logsumexp(z);
    const double w = weights[static_cast<std::size_t>(y)];
    for (std::size_t c = 0; c < kIc50Classes; ++c) {
      const double q = (c == static_cast<std::size_t>(y) ? 1.0 - smoothing : 0.0) + off;
      const double logp = z[c] - lse;
      out.value -= inv_s * w * q * logp;
      out.logit_grads(r, c) = inv_s * w * (std::exp(logp) - q);
    }
  }
  return out;
}

struct LossWeights {
  double vol = 1.0;
  double bi = 1.0;
  double ic50 = 1.0;
};

/// lambda1 * L_vol + lambda2 * L_bi + lambda3 * L_IC50, gradients weighted alike.
inline LossOut total_loss(const LossOut& vol, const LossOut& bi, const LossOut& ic50, const LossWeights& w) {
  LossOut out;
  out.value = w.vol * vol.value + w.bi * bi.value + w.ic50 * ic50.value;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    const Mat* parts[] = {&vol.grads[m], &bi.grads[m], &ic50.grads[m]};
    const double ws[] = {w.vol, w.bi, w.ic50};
    for (int k = 0; k < 3; ++k) {
      if (parts[k]->size() == 0) continue;
      if (out.grads[m].size() == 0) out.grads[m] = Mat(parts[k]->rows(), parts[k]->cols());
      require(out.grads[m].rows() == parts[k]->rows() && out.grads[m].cols() == parts[k]->cols(), ErrorCode::ShapeMismatch,
              "loss components disagree on batch shape");
      for (std::size_t i = 0; i < out.grads[m].size(); ++i) out.grads[m].flat()[i] += ws[k] * parts[k]->flat()[i];
    }
  }
  out.diagnostics["vol"] = vol.value;
  out.diagnostics["bi"] = bi.value;
  out.diagnostics["ic50"] = ic50.value;
  return out;
}

}  // namespace gramalign
