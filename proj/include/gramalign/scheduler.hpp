#pragma once

#include <array>
#include <cmath>
#include <deque>
#include <optional>
#include <string_view>

#include "gramalign/error.hpp"
#include "gramalign/modality.hpp"
#include "gramalign/rng.hpp"

namespace gramalign {

struct SchedulerConfig {
  double p_drop = 0.8;
  std::size_t history = 5;  // K
  double decay = 0.9;       // alpha
  double lambda_sigma = 1.5;

  void validate() const {
    require(p_drop >= 0.0 && p_drop <= 1.0, ErrorCode::InvalidArgument, "p_drop must be in [0, 1]");
    require(history >= 1, ErrorCode::InvalidArgument, "history length K must be >= 1");
    require(decay > 0.0 && decay < 1.0, ErrorCode::InvalidArgument, "decay alpha must be in (0, 1)");
    require(lambda_sigma > 0.0, ErrorCode::InvalidArgument, "lambda_sigma must be positive");
  }
};

using ModalityScores = std::array<double, kNumModalities>;

/// Per-modality gradient norms, newest first, at most K each.
class GradHistory {
 public:
  explicit GradHistory(std::size_t capacity = 5) : capacity_(capacity) {
    require(capacity >= 1, ErrorCode::InvalidArgument, "history capacity must be >= 1");
  }

  void record(const ModalityScores& norms) {
    for (double n : norms) {
      require(std::isfinite(n), ErrorCode::NegativeNorm, "gradient norm is not finite");
      require(n >= 0.0, ErrorCode::NegativeNorm, "gradient norm is negative");
    }
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      buffers_[m].push_front(norms[m]);
      if (buffers_[m].size() > capacity_) buffers_[m].pop_back();
    }
  }

  /// sum_k alpha^k g_{t-k} / sum_k alpha^k over the stored entries.
  ModalityScores smoothed(double alpha) const {
    ModalityScores out{};
    for (std::size_t m = 0; m < kNumModalities; ++m) {
      require(!buffers_[m].empty(), ErrorCode::EmptyHistory, "no gradient norms recorded yet");
      double num = 0.0, den = 0.0, w = 1.0;
      for (double g : buffers_[m]) {
        num += w * g;
        den += w;
        w *= alpha;
      }
      out[m] = num / den;
    }
    return out;
  }

  const std::deque<double>& entries(Modality m) const { return buffers_[index_of(m)]; }
  std::size_t capacity() const { return capacity_; }

  /// Replaces the buffer for `m` (newest first); used when resuming.
  void restore(Modality m, std::deque<double> values) {
    require(values.size() <= capacity_, ErrorCode::InvalidArgument, "restored history longer than K");
    buffers_[index_of(m)] = std::move(values);
  }

 private:
  std::size_t capacity_;
  std::array<std::deque<double>, kNumModalities> buffers_;
};

enum class DropBranch { None, Dominance, Argmin };

constexpr std::string_view name_of(DropBranch b) {
  switch (b) {
    case DropBranch::None: return "NONE";
    case DropBranch::Dominance: return "DOMINANCE";
    case DropBranch::Argmin: return "ARGMIN";
  }
  return "?";
}

struct DropDecision {
  bool should_drop = false;
  std::optional<Modality> dropped;
  Modality anchor = Modality::Protein;
  DropBranch branch = DropBranch::None;
};

struct DropStats {
  double mean = 0.0;
  double stddev = 0.0;  // population, divide by 4
  double threshold = 0.0;
};

inline DropStats drop_stats(const ModalityScores& g, double lambda_sigma) {
  DropStats s;
  for (double x : g) s.mean += x;
  s.mean /= static_cast<double>(kNumModalities);
  double var = 0.0;
  for (double x : g) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(kNumModalities));
  s.threshold = s.mean + lambda_sigma * s.stddev;
  return s;
}

/// One Bernoulli(p_drop) draw gates dropping. A modality whose smoothed norm
/// exceeds mean + lambda_sigma * std is dropped (first in modality order);
/// otherwise the smallest is dropped (lowest index on ties). The anchor is
/// then uniform over the three remaining modalities.
inline DropDecision decide(const ModalityScores& g, const SchedulerConfig& cfg, Rng& rng, bool training) {
  for (double x : g) require(std::isfinite(x), ErrorCode::InvalidArgument, "smoothed gradient is not finite");
  DropDecision d;
  if (!training) return d;
  if (!(uniform01(rng) < cfg.p_drop)) return d;

  const DropStats st = drop_stats(g, cfg.lambda_sigma);
  std::optional<std::size_t> drop;
  for (std::size_t m = 0; m < kNumModalities; ++m) {
    if (g[m] > st.threshold) {
      drop = m;
      d.branch = DropBranch::Dominance;
      break;
    }
  }
  if (!drop) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < kNumModalities; ++m) {
      if (g[m] < g[best]) best = m;
    }
    drop = best;
    d.branch = DropBranch::Argmin;
  }
  d.should_drop = true;
  d.dropped = kAllModalities[*drop];
  std::array<Modality, kNumModalities - 1> remaining{};
  std::size_t r = 0;
  for (Modality m : kAllModalities) {
    if (m != *d.dropped) remaining[r++] = m;
  }
  d.anchor = remaining[uniform_index(rng, remaining.size())];
  return d;
}

}  // namespace gramalign
