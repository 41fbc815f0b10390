#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "gramalign/error.hpp"
#include "gramalign/numerics.hpp"
#include "gramalign/parallel.hpp"

namespace gramalign {

/// Q x C cosine similarities.
inline Mat cosine_matrix(const Mat& queries, const Mat& candidates) {
  require(queries.cols() == candidates.cols(), ErrorCode::DimensionMismatch, "query and candidate dims differ");
  auto norms = [](const Mat& m) {
    Vec n(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) {
      n[r] = norm2(m.row(r));
      require(n[r] > kNormEps, ErrorCode::ZeroVector, "row " + std::to_string(r) + " has zero norm");
    }
    return n;
  };
  const Vec qn = norms(queries), cn = norms(candidates);
  Mat out(queries.rows(), candidates.rows());
  parallel_for(queries.rows(), [&](std::size_t q) {
    for (std::size_t c = 0; c < candidates.rows(); ++c) {
      out(q, c) = std::clamp(dot(queries.row(q), candidates.row(c)) / (qn[q] * cn[c]), -1.0, 1.0);
    }
  });
  return out;
}

enum class RetrievalDirection { SmilesToProtein, ProteinToSmiles };

inline std::string_view name_of(RetrievalDirection d) {
  return d == RetrievalDirection::SmilesToProtein ? "S_TO_P" : "P_TO_S";
}

inline constexpr std::array<std::size_t, 3> kRecallKs = {1, 10, 100};

struct RetrievalResult {
  RetrievalDirection direction = RetrievalDirection::SmilesToProtein;
  std::map<std::size_t, double> recall_at;
};

/// Position of the best-ranked relevant candidate, ranking by descending
/// score with ties broken by ascending candidate index.
inline std::size_t best_relevant_rank(std::span<const double> scores, const std::vector<std::size_t>& relevant) {
  std::size_t best = relevant.front();
  for (auto r : relevant) {
    if (scores[r] > scores[best] || (scores[r] == scores[best] && r < best)) best = r;
  }
  std::size_t rank = 0;
  for (std::size_t c = 0; c < scores.size(); ++c) {
    if (scores[c] > scores[best] || (scores[c] == scores[best] && c < best)) ++rank;
  }
  return rank;
}

/// R@k = fraction of queries with a relevant candidate in the top min(k, C).
inline std::map<std::size_t, double> recall_at_k(const Mat& scores, const std::vector<std::vector<std::size_t>>& relevant,
                                                 std::span<const std::size_t> ks = kRecallKs) {
  require(relevant.size() == scores.rows(), ErrorCode::DimensionMismatch, "one relevance set per query required");
  std::vector<std::size_t> ranks(scores.rows());
  for (std::size_t q = 0; q < scores.rows(); ++q) {
    require(!relevant[q].empty(), ErrorCode::NoRelevant, "query " + std::to_string(q) + " has no relevant candidate");
    for (auto r : relevant[q]) require(r < scores.cols(), ErrorCode::DimensionMismatch, "relevant index out of range");
    ranks[q] = best_relevant_rank(scores.row(q), relevant[q]);
  }
  std::map<std::size_t, double> out;
  for (auto k : ks) {
    const std::size_t cut = std::min(k, scores.cols());
    std::size_t hits = 0;
    for (auto r : ranks) hits += r < cut ? 1 : 0;
    out[k] = scores.rows() == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(scores.rows());
  }
  return out;
}

/// Mann-Whitney AUROC with half credit for ties.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorCode::DimensionMismatch, "scores and labels differ in length");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double n_pos = 0.0, n_neg = 0.0, pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[idx[t]] == 1) {
        n_pos += 1.0;
        pos_rank_sum += mid_rank;
      } else {
        n_neg += 1.0;
      }
    }
    i = j;
  }
  require(n_pos > 0.0 && n_neg > 0.0, ErrorCode::SingleClass, "AUROC needs both classes");
  return (pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

/// Step-rule average precision; tied scores enter as one block.
inline double auprc(std::span<const double> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorCode::DimensionMismatch, "scores and labels differ in length");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  double total_pos = 0.0;
  for (int y : labels) total_pos += y == 1 ? 1.0 : 0.0;
  require(total_pos > 0.0, ErrorCode::NoPositives, "AUPRC needs at least one positive");
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, area = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / total_pos;
    area += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return area;
}

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t total() const { return tp + fp + tn + fn; }
};

struct ClassificationMetrics {
  double sensitivity = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  ConfusionCounts counts;
  std::vector<std::string> warnings;  // metrics whose denominator was zero
};

/// Predicted positive iff score > threshold (argmax of a 2-way softmax).
inline ClassificationMetrics classification_metrics(std::span<const double> scores, std::span<const int> labels,
                                                    double threshold = 0.5) {
  require(scores.size() == labels.size(), ErrorCode::DimensionMismatch, "scores and labels differ in length");
  ClassificationMetrics m;
  auto& c = m.counts;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1, ErrorCode::InvalidArgument, "labels must be 0 or 1");
    const bool pred = scores[i] > threshold;
    if (labels[i] == 1) {
      (pred ? c.tp : c.fn) += 1;
    } else {
      (pred ? c.fp : c.tn) += 1;
    }
  }
  auto ratio = [&](double num, double den, const char* name) {
    if (den == 0.0) {
      m.warnings.emplace_back(name);
      return 0.0;
    }
    return num / den;
  };
  m.sensitivity = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn), "sensitivity");
  m.f1 = ratio(2.0 * static_cast<double>(c.tp), static_cast<double>(2 * c.tp + c.fp + c.fn), "f1");
  m.accuracy = ratio(static_cast<double>(c.tp + c.tn), static_cast<double>(c.total()), "accuracy");
  return m;
}

}  // namespace gramalign
