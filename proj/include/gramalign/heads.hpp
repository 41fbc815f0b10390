#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "gramalign/error.hpp"
#include "gramalign/modality.hpp"
#include "gramalign/numerics.hpp"
#include "gramalign/rng.hpp"

namespace gramalign {

enum class Activation { None, Gelu, Relu };
enum class Mode { Train, Eval };

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2))); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2)));
  const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return cdf + x * pdf;
}

inline constexpr double kLayerNormEps = 1e-5;

/// Architecture of an MLP: dims[0] -> dims[1] -> ... -> dims.back().
/// Every layer but the last is Linear -> activation -> [LayerNorm] -> Dropout.
/// The last layer is Linear only, optionally followed by L2 normalization.
struct MlpShape {
  std::vector<std::size_t> dims;
  Activation hidden_activation = Activation::Gelu;
  bool layer_norm = false;
  double dropout = 0.0;
  bool normalize_output = false;

  std::size_t num_layers() const { return dims.size() - 1; }
  std::size_t in_dim() const { return dims.front(); }
  std::size_t out_dim() const { return dims.back(); }
  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

/// Trainable tensors of an MLP. Gradients use the same type.
struct MlpParams {
  MlpShape shape;
  std::vector<Mat> weights;  // out x in
  std::vector<Vec> biases;
  std::vector<Vec> ln_gamma;  // one per hidden layer when shape.layer_norm
  std::vector<Vec> ln_beta;

  /// All tensors with their checkpoint suffix, e.g. "L0.w", "ln1.g".
  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    for (std::size_t i = 0; i < weights.size(); ++i) {
      fn("L" + std::to_string(i) + ".w", weights[i].rows(), weights[i].cols(), std::span<double>(weights[i].storage()));
      fn("L" + std::to_string(i) + ".b", std::size_t{1}, biases[i].size(), std::span<double>(biases[i]));
    }
    for (std::size_t i = 0; i < ln_gamma.size(); ++i) {
      fn("ln" + std::to_string(i) + ".g", std::size_t{1}, ln_gamma[i].size(), std::span<double>(ln_gamma[i]));
      fn("ln" + std::to_string(i) + ".b", std::size_t{1}, ln_beta[i].size(), std::span<double>(ln_beta[i]));
    }
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    const_cast<MlpParams*>(this)->for_each_tensor(
        [&](const std::string& name, std::size_t r, std::size_t c, std::span<double> data) {
          fn(name, r, c, std::span<const double>(data));
        });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_tensor([&](const std::string&, std::size_t, std::size_t, std::span<const double> d) { n += d.size(); });
    return n;
  }

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Zero tensors with the layout of `shape`.
inline MlpParams zero_params(const MlpShape& shape) {
  require(shape.dims.size() >= 2, ErrorCode::ShapeMismatch, "an MLP needs at least one layer");
  require(shape.dropout >= 0.0 && shape.dropout < 1.0, ErrorCode::InvalidArgument, "dropout must be in [0, 1)");
  MlpParams p;
  p.shape = shape;
  for (std::size_t l = 0; l < shape.num_layers(); ++l) {
    p.weights.emplace_back(shape.dims[l + 1], shape.dims[l]);
    p.biases.emplace_back(shape.dims[l + 1], 0.0);
    if (shape.layer_norm && l + 1 < shape.num_layers()) {
      p.ln_gamma.emplace_back(shape.dims[l + 1], 0.0);
      p.ln_beta.emplace_back(shape.dims[l + 1], 0.0);
    }
  }
  return p;
}

inline double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

/// Glorot-uniform weights, zero biases, unit gamma, zero beta. Values are
/// rounded to float32 so a freshly initialized model survives a checkpoint
/// round trip unchanged.
inline MlpParams init_params(const MlpShape& shape, std::uint64_t seed) {
  MlpParams p = zero_params(shape);
  Rng rng = make_rng(seed, "init");
  for (auto& w : p.weights) {
    const double bound = glorot_bound(w.cols(), w.rows());
    for (double& x : w.flat()) x = static_cast<double>(static_cast<float>(uniform(rng, -bound, bound)));
  }
  for (auto& g : p.ln_gamma) std::fill(g.begin(), g.end(), 1.0);
  return p;
}

struct LayerCache {
  Mat input;        // input to the linear map
  Mat pre;          // linear output
  Mat normalized;   // layer-norm xhat (hidden layers with layer norm)
  Vec inv_std;      // per row
  Mat dropout_mask; // scale factor per unit (0 or 1/(1-p)); empty when inactive
};

/// Everything backward() needs from one forward call.
struct ForwardTape {
  const MlpParams* owner = nullptr;
  std::size_t batch = 0;
  std::vector<LayerCache> layers;
  Mat raw_output;  // before L2 normalization
  Mat output;
  Vec output_norm;
};

/// Batched forward pass; rows of `x` are samples.
inline ForwardTape forward(const MlpParams& p, const Mat& x, Mode mode, Rng* rng) {
  const auto& s = p.shape;
  require(x.cols() == s.in_dim(), ErrorCode::DimensionMismatch,
          "input dim " + std::to_string(x.cols()) + " != " + std::to_string(s.in_dim()));
  const bool drop = mode == Mode::Train && s.dropout > 0.0;
  require(!drop || rng != nullptr, ErrorCode::InvalidArgument, "train-mode dropout needs an rng");
  ForwardTape tape;
  tape.owner = &p;
  tape.batch = x.rows();
  Mat h = x;
  for (std::size_t l = 0; l < s.num_layers(); ++l) {
    LayerCache c;
    c.input = h;
    Mat z = matmul_nt(h, p.weights[l]);
    for (std::size_t r = 0; r < z.rows(); ++r) {
      auto zr = z.row(r);
      for (std::size_t j = 0; j < zr.size(); ++j) zr[j] += p.biases[l][j];
    }
    c.pre = z;
    const bool last = l + 1 == s.num_layers();
    if (!last) {
      for (double& v : z.flat()) {
        switch (s.hidden_activation) {
          case Activation::Gelu: v = gelu(v); break;
          case Activation::Relu: v = v > 0.0 ? v : 0.0; break;
          case Activation::None: break;
        }
      }
      if (s.layer_norm) {
        c.normalized = Mat(z.rows(), z.cols());
        c.inv_std.resize(z.rows());
        const double n = static_cast<double>(z.cols());
        for (std::size_t r = 0; r < z.rows(); ++r) {
          auto zr = z.row(r);
          double mean = 0.0;
          for (double v : zr) mean += v;
          mean /= n;
          double var = 0.0;
          for (double v : zr) var += (v - mean) * (v - mean);
          var /= n;
          const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
          c.inv_std[r] = inv;
          auto xr = c.normalized.row(r);
          for (std::size_t j = 0; j < zr.size(); ++j) {
            xr[j] = (zr[j] - mean) * inv;
            zr[j] = xr[j] * p.ln_gamma[l][j] + p.ln_beta[l][j];
          }
        }
      }
      if (drop) {
        c.dropout_mask = Mat(z.rows(), z.cols());
        const double keep_scale = 1.0 / (1.0 - s.dropout);
        auto mask = c.dropout_mask.flat();
        auto zf = z.flat();
        for (std::size_t i = 0; i < zf.size(); ++i) {
          mask[i] = uniform01(*rng) < s.dropout ? 0.0 : keep_scale;
          zf[i] *= mask[i];
        }
      }
    }
    tape.layers.push_back(std::move(c));
    h = std::move(z);
  }
  tape.raw_output = h;
  if (s.normalize_output) {
    tape.output_norm.resize(h.rows());
    for (std::size_t r = 0; r < h.rows(); ++r) {
      auto hr = h.row(r);
      const double nrm = norm2(hr);
      require(nrm > kNormEps, ErrorCode::ZeroVector, "projector output row " + std::to_string(r) + " has zero norm");
      tape.output_norm[r] = nrm;
      for (double& v : hr) v /= nrm;
    }
  }
  tape.output = std::move(h);
  return tape;
}

struct BackwardResult {
  MlpParams param_grads;
  Mat input_grad;
};

/// Exact gradients of sum(upstream .* output) for the call recorded in `tape`.
inline BackwardResult backward(const MlpParams& p, const ForwardTape& tape, const Mat& upstream) {
  const auto& s = p.shape;
  require(tape.owner == &p && tape.layers.size() == s.num_layers(), ErrorCode::TapeMismatch,
          "tape was not produced by this network");
  require(upstream.rows() == tape.batch && upstream.cols() == s.out_dim(), ErrorCode::TapeMismatch,
          "upstream gradient shape does not match the tape");
  BackwardResult res{zero_params(s), Mat()};
  Mat g = upstream;
  if (s.normalize_output) {
    // d(u/|u|) : g -> (g - y <y, g>) / |u|
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto gr = g.row(r);
      const auto yr = tape.output.row(r);
      const double proj = dot(yr, gr);
      for (std::size_t j = 0; j < gr.size(); ++j) gr[j] = (gr[j] - yr[j] * proj) / tape.output_norm[r];
    }
  }
  for (std::size_t li = s.num_layers(); li-- > 0;) {
    const auto& c = tape.layers[li];
    const bool last = li + 1 == s.num_layers();
    if (!last) {
      if (!c.dropout_mask.storage().empty()) {
        auto gf = g.flat();
        const auto mf = c.dropout_mask.flat();
        for (std::size_t i = 0; i < gf.size(); ++i) gf[i] *= mf[i];
      }
      if (s.layer_norm) {
        auto& dg = res.param_grads.ln_gamma[li];
        auto& db = res.param_grads.ln_beta[li];
        const double n = static_cast<double>(g.cols());
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto gr = g.row(r);
          const auto xr = c.normalized.row(r);
          double mean_dx = 0.0, mean_dx_x = 0.0;
          for (std::size_t j = 0; j < gr.size(); ++j) {
            dg[j] += gr[j] * xr[j];
            db[j] += gr[j];
            const double dx = gr[j] * p.ln_gamma[li][j];
            mean_dx += dx;
            mean_dx_x += dx * xr[j];
          }
          mean_dx /= n;
          mean_dx_x /= n;
          for (std::size_t j = 0; j < gr.size(); ++j) {
            const double dx = gr[j] * p.ln_gamma[li][j];
            gr[j] = c.inv_std[r] * (dx - mean_dx - xr[j] * mean_dx_x);
          }
        }
      }
      auto gf = g.flat();
      const auto zf = c.pre.flat();
      for (std::size_t i = 0; i < gf.size(); ++i) {
        switch (s.hidden_activation) {
          case Activation::Gelu: gf[i] *= gelu_grad(zf[i]); break;
          case Activation::Relu: gf[i] = zf[i] > 0.0 ? gf[i] : 0.0; break;
          case Activation::None: break;
        }
      }
    }
    res.param_grads.weights[li] = matmul_tn(g, c.input);
    auto& gb = res.param_grads.biases[li];
    for (std::size_t r = 0; r < g.rows(); ++r) {
      const auto gr = g.row(r);
      for (std::size_t j = 0; j < gr.size(); ++j) gb[j] += gr[j];
    }
    g = matmul(g, p.weights[li]);
  }
  res.input_grad = std::move(g);
  return res;
}

/// Accumulates `scale * src` into `dst` tensor by tensor.
inline void axpy(MlpParams& dst, const MlpParams& src, double scale) {
  std::vector<std::span<const double>> srcs;
  src.for_each_tensor([&](const std::string&, std::size_t, std::size_t, std::span<const double> d) { srcs.push_back(d); });
  std::size_t t = 0;
  dst.for_each_tensor([&](const std::string&, std::size_t, std::size_t, std::span<double> d) {
    const auto s = srcs[t++];
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
  });
}

// ---------------------------------------------------------------------------
// Concrete heads
// ---------------------------------------------------------------------------

inline constexpr std::size_t kSharedDim = 512;
inline constexpr std::size_t kProjectorHidden = 768;
inline constexpr double kProjectorDropout = 0.1;
inline constexpr std::size_t kIc50Hidden = 512;
inline constexpr double kHeadDropout = 0.3;

/// in_dim -> hidden -> shared -> shared, GELU + LayerNorm + dropout 0.1,
/// L2-normalized output.
inline MlpShape projector_shape(std::size_t in_dim, std::size_t hidden = kProjectorHidden, std::size_t shared = kSharedDim) {
  return MlpShape{{in_dim, hidden, shared, shared}, Activation::Gelu, true, kProjectorDropout, true};
}

/// [f^s; f^t; f^h; f^p] -> hidden -> 3 logits.
inline MlpShape ic50_shape(std::size_t shared = kSharedDim, std::size_t hidden = kIc50Hidden) {
  return MlpShape{{kNumModalities * shared, hidden, 3}, Activation::Gelu, false, kHeadDropout, false};
}

/// [f^s; f^p] -> 512 -> 256 -> 2 logits with ReLU and dropout 0.3.
inline MlpShape dti_shape(std::size_t shared = kSharedDim, std::vector<std::size_t> hidden = {512, 256}) {
  MlpShape s{{2 * shared}, Activation::Relu, false, kHeadDropout, false};
  for (auto h : hidden) s.dims.push_back(h);
  s.dims.push_back(2);
  return s;
}

struct ProjectionHead {
  Modality modality = Modality::Smiles;
  MlpParams params;
};

struct Ic50Head {
  MlpParams params;
};

struct DtiHead {
  MlpParams params;
};

/// Projects raw rows into the shared space; output rows are unit norm.
inline ForwardTape project(const ProjectionHead& head, const Mat& raw, Mode mode, Rng* rng) {
  return forward(head.params, raw, mode, rng);
}

inline ForwardTape ic50_forward(const Ic50Head& head, const Mat& fused, Mode mode, Rng* rng) {
  require(fused.cols() == head.params.shape.in_dim(), ErrorCode::DimensionMismatch, "IC50 head expects 4 x shared_dim inputs");
  return forward(head.params, fused, mode, rng);
}

inline ForwardTape dti_forward(const DtiHead& head, const Mat& f_s, const Mat& f_p, Mode mode, Rng* rng) {
  require(f_s.rows() == f_p.rows() && f_s.cols() + f_p.cols() == head.params.shape.in_dim(), ErrorCode::DimensionMismatch,
          "DTI head expects [f^s; f^p] rows");
  Mat cat(f_s.rows(), f_s.cols() + f_p.cols());
  for (std::size_t r = 0; r < cat.rows(); ++r) {
    auto out = cat.row(r);
    std::copy(f_s.row(r).begin(), f_s.row(r).end(), out.begin());
    std::copy(f_p.row(r).begin(), f_p.row(r).end(), out.begin() + static_cast<std::ptrdiff_t>(f_s.cols()));
  }
  return forward(head.params, cat, mode, rng);
}

/// Row-wise concatenation [a | b | ...].
inline Mat hconcat(std::span<const Mat> blocks) {
  const std::size_t rows = blocks.front().rows();
  std::size_t cols = 0;
  for (const auto& b : blocks) {
    require(b.rows() == rows, ErrorCode::DimensionMismatch, "hconcat row counts differ");
    cols += b.cols();
  }
  Mat out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto dst = out.row(r);
    std::size_t off = 0;
    for (const auto& b : blocks) {
      const auto src = b.row(r);
      std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(off));
      off += b.cols();
    }
  }
  return out;
}

/// Column block [col, col + width) of `m`.
inline Mat column_block(const Mat& m, std::size_t col, std::size_t width) {
  Mat out(m.rows(), width);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto src = m.row(r);
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(col), src.begin() + static_cast<std::ptrdiff_t>(col + width),
              out.row(r).begin());
  }
  return out;
}

}  // namespace gramalign
