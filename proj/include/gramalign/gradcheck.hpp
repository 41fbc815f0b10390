#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gramalign/heads.hpp"
#include "gramalign/losses.hpp"
#include "gramalign/numerics.hpp"
#include "gramalign/rng.hpp"

namespace gramalign {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kVolumeGradTol = 1e-6;
inline constexpr double kGradTol = 1e-5;

struct ComponentReport {
  std::string name;
  double tolerance = kGradTol;
  double max_rel_error = 0.0;
  std::uint64_t worst_trial = 0;
  std::size_t trials = 0;

  bool passed() const { return max_rel_error <= tolerance; }
};

struct GradcheckReport {
  std::vector<ComponentReport> components;
  double seconds = 0.0;

  bool passed() const {
    return std::all_of(components.begin(), components.end(), [](const auto& c) { return c.passed(); });
  }
  /// Component with the largest error-to-tolerance ratio.
  const ComponentReport& worst() const {
    return *std::max_element(components.begin(), components.end(), [](const auto& a, const auto& b) {
      return a.max_rel_error / a.tolerance < b.max_rel_error / b.tolerance;
    });
  }
};

/// ||a - n|| / max(||a||, ||n||), 0 when both vanish.
inline double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  require(analytic.size() == numeric.size(), ErrorCode::ShapeMismatch, "gradient sizes differ");
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double scale = std::sqrt(std::max(na, nn));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

/// Central differences of `f` with respect to every entry of `x` (restored afterwards).
inline Vec numeric_gradient(std::span<double> x, const std::function<double()>& f, double h = kFdStep) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

namespace detail {

inline Mat random_mat(std::size_t rows, std::size_t cols, Rng& rng) {
  Mat m(rows, cols);
  for (double& x : m.flat()) x = normal01(rng);
  return m;
}

inline Mat random_unit_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  Mat m = random_mat(rows, cols, rng);
  for (std::size_t r = 0; r < rows; ++r) {
    const Vec u = l2_normalize(m.row(r));
    std::copy(u.begin(), u.end(), m.row(r).begin());
  }
  return m;
}

/// Multiplies the analytic gradient of the sabotaged component by 1.01.
inline void maybe_sabotage(std::span<double> g, const std::string& component, const std::string& sabotage) {
  if (component != sabotage) return;
  for (double& x : g) x *= 1.01;
}

inline double check_volume(Rng& rng, const std::string& sabotage) {
  const std::size_t n = 2 + uniform_index(rng, 3);
  const std::size_t d = n + uniform_index(rng, 7);
  std::vector<Vec> vs;
  for (std::size_t k = 0; k < n; ++k) {
    Vec v(d);
    for (double& x : v) x = normal01(rng);
    vs.push_back(l2_normalize(v));
  }
  auto grad = gram_volume_grad(vs);
  double worst = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    maybe_sabotage(grad.per_vector[k], "gram_volume_grad", sabotage);
    // Off the unit sphere the formula still holds for V = sqrt(det(F F^T)).
    const Vec num = numeric_gradient(vs[k], [&] { return volume_unchecked(vs); });
    worst = std::max(worst, relative_error(grad.per_vector[k], num));
  }
  return worst;
}

inline Batch random_batch(Rng& rng, std::size_t b, std::size_t d) {
  Batch batch;
  for (auto& f : batch.f) f = random_unit_rows(b, d, rng);
  return batch;
}

inline double check_loss(Batch& batch, const std::function<LossOut()>& loss, const std::string& name,
                         const std::string& sabotage) {
  LossOut out = loss();
  double worst = 0.0;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    maybe_sabotage(out.grads[m].flat(), name, sabotage);
    const Vec num = numeric_gradient(batch.f[m].flat(), [&] { return loss().value; });
    worst = std::max(worst, relative_error(out.grads[m].flat(), num));
  }
  return worst;
}

inline double check_volume_loss(Rng& rng, const std::string& sabotage) {
  const std::size_t b = 2 + uniform_index(rng, 3);
  const std::size_t d = 4 + uniform_index(rng, 5);
  Batch batch = random_batch(rng, b, d);
  std::vector<Modality> active(kAllModalities.begin(), kAllModalities.end());
  Modality anchor = Modality::Protein;
  if (uniform01(rng) < 0.5) {
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(uniform_index(rng, kNumModalities)));
    anchor = active[uniform_index(rng, active.size())];
  }
  const double tau = uniform(rng, 0.05, 1.0);
  return check_loss(batch, [&] { return volume_contrastive(batch, anchor, active, tau); }, "volume_contrastive", sabotage);
}

inline double check_clip(Rng& rng, const std::string& sabotage) {
  Batch batch = random_batch(rng, 2 + uniform_index(rng, 3), 4 + uniform_index(rng, 5));
  const double tau = uniform(rng, 0.05, 1.0);
  return check_loss(batch, [&] { return clip_bimodal(batch, tau); }, "clip_bimodal", sabotage);
}

inline double check_ic50_loss(Rng& rng, const std::string& sabotage) {
  const std::size_t b = 1 + uniform_index(rng, 4);
  Mat logits = random_mat(b, kIc50Classes, rng);
  std::vector<int> labels(b);
  std::vector<bool> valid(b);
  for (std::size_t r = 0; r < b; ++r) {
    labels[r] = static_cast<int>(uniform_index(rng, kIc50Classes));
    valid[r] = r == 0 || uniform01(rng) < 0.7;
  }
  const std::array<double, kIc50Classes> w = {uniform(rng, 0.2, 3.0), uniform(rng, 0.2, 3.0), uniform(rng, 0.2, 3.0)};
  auto out = ic50_loss(logits, labels, valid, w);
  maybe_sabotage(out.logit_grads.flat(), "ic50_loss", sabotage);
  const Vec num = numeric_gradient(logits.flat(), [&] { return ic50_loss(logits, labels, valid, w).value; });
  return relative_error(out.logit_grads.flat(), num);
}

/// Params and inputs of a random small network against sum(U .* output), eval mode.
inline double check_mlp(MlpShape shape, Rng& rng, const std::string& name, const std::string& sabotage) {
  shape.dropout = 0.0;
  MlpParams p = init_params(shape, rng());
  // Non-trivial layer-norm affine parameters.
  for (auto& g : p.ln_gamma) for (double& x : g) x = 1.0 + 0.3 * normal01(rng);
  for (auto& b : p.ln_beta) for (double& x : b) x = 0.3 * normal01(rng);
  for (auto& b : p.biases) for (double& x : b) x = 0.1 * normal01(rng);
  const std::size_t batch = 1 + uniform_index(rng, 3);
  Mat x = random_mat(batch, shape.in_dim(), rng);
  // ReLU is not differentiable at 0: redraw inputs whose hidden
  // pre-activations sit close enough to the kink for a step to cross it.
  if (shape.hidden_activation == Activation::Relu) {
    auto near_kink = [&] {
      const ForwardTape t = forward(p, x, Mode::Eval, nullptr);
      for (std::size_t l = 0; l + 1 < t.layers.size(); ++l) {
        for (double z : t.layers[l].pre.flat()) {
          if (std::abs(z) < 1e-3) return true;
        }
      }
      return false;
    };
    for (int tries = 0; tries < 100 && near_kink(); ++tries) x = random_mat(batch, shape.in_dim(), rng);
  }
  const Mat u = random_mat(batch, shape.out_dim(), rng);
  auto objective = [&] {
    const Mat y = forward(p, x, Mode::Eval, nullptr).output;
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.flat()[i] * u.flat()[i];
    return s;
  };
  const ForwardTape tape = forward(p, x, Mode::Eval, nullptr);
  BackwardResult back = backward(p, tape, u);
  double worst = 0.0;
  std::vector<std::span<double>> analytic;
  back.param_grads.for_each_tensor([&](const std::string&, std::size_t, std::size_t, std::span<double> g) { analytic.push_back(g); });
  std::size_t t = 0;
  p.for_each_tensor([&](const std::string&, std::size_t, std::size_t, std::span<double> w) {
    maybe_sabotage(analytic[t], name, sabotage);
    worst = std::max(worst, relative_error(analytic[t], numeric_gradient(w, objective)));
    ++t;
  });
  maybe_sabotage(back.input_grad.flat(), name, sabotage);
  worst = std::max(worst, relative_error(back.input_grad.flat(), numeric_gradient(x.flat(), objective)));
  return worst;
}

inline std::size_t small_dim(Rng& rng) { return 4 + uniform_index(rng, 13); }

}  // namespace detail

inline const std::vector<std::string>& gradcheck_components() {
  static const std::vector<std::string> names = {"gram_volume_grad", "volume_contrastive", "clip_bimodal", "ic50_loss",
                                                 "projection_head",  "ic50_head",          "dti_head"};
  return names;
}

/// Runs every finite-difference suite for `trials` seeds derived from `seed`.
/// `sabotage` names a component whose analytic gradient is deliberately
/// perturbed (negative control); empty for a normal run.
inline GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t trials, const std::string& sabotage = {}) {
  require(trials >= 1, ErrorCode::InvalidArgument, "trials must be >= 1");
  if (!sabotage.empty()) {
    const auto& names = gradcheck_components();
    require(std::find(names.begin(), names.end(), sabotage) != names.end(), ErrorCode::InvalidArgument,
            "unknown component '" + sabotage + "'");
  }
  using detail::small_dim;
  const std::vector<std::pair<std::string, std::function<double(Rng&)>>> suites = {
      {"gram_volume_grad", [&](Rng& r) { return detail::check_volume(r, sabotage); }},
      {"volume_contrastive", [&](Rng& r) { return detail::check_volume_loss(r, sabotage); }},
      {"clip_bimodal", [&](Rng& r) { return detail::check_clip(r, sabotage); }},
      {"ic50_loss", [&](Rng& r) { return detail::check_ic50_loss(r, sabotage); }},
      {"projection_head",
       [&](Rng& r) {
         return detail::check_mlp(projector_shape(small_dim(r), small_dim(r), small_dim(r)), r, "projection_head", sabotage);
       }},
      {"ic50_head",
       [&](Rng& r) { return detail::check_mlp(ic50_shape(1 + uniform_index(r, 4), small_dim(r)), r, "ic50_head", sabotage); }},
      {"dti_head",
       [&](Rng& r) {
         auto shape = dti_shape(1 + uniform_index(r, 8), {small_dim(r), small_dim(r)});
         return detail::check_mlp(shape, r, "dti_head", sabotage);
       }},
  };
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckReport report;
  for (std::size_t s = 0; s < suites.size(); ++s) {
    ComponentReport c;
    c.name = suites[s].first;
    c.tolerance = c.name == "gram_volume_grad" ? kVolumeGradTol : kGradTol;
    c.trials = trials;
    for (std::uint64_t t = 0; t < trials; ++t) {
      Rng rng = make_rng(seed, "gradcheck." + c.name, t);
      const double e = suites[s].second(rng);
      if (!(e <= c.max_rel_error)) {
        c.max_rel_error = e;
        c.worst_trial = t;
      }
    }
    report.components.push_back(c);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace gramalign
