#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "gramalign/error.hpp"
#include "gramalign/heads.hpp"
#include "gramalign/losses.hpp"
#include "gramalign/scheduler.hpp"

namespace gramalign {

/// Hyperparameters; defaults are the published training configuration except
/// batch_size (desk scale) and the desk-only width knobs.
struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 128;
  std::size_t epochs = 40;
  double tau = kDefaultTemperature;
  LossWeights lambdas;
  SchedulerConfig scheduler;
  double label_smoothing = kLabelSmoothing;
  std::uint64_t seed = 0;
  std::size_t shared_dim = kSharedDim;
  std::size_t hidden_dim = kProjectorHidden;
  std::size_t ic50_hidden = kIc50Hidden;
  /// Quadruplets used for the per-epoch volume summary (all pairs among them).
  std::size_t eval_subset = 512;

  // downstream DTI head
  std::size_t dti_epochs = 100;
  double dti_lr = 1e-3;
  std::size_t dti_batch_size = 128;
  std::vector<std::size_t> dti_hidden = {512, 256};
  std::size_t folds = 5;

  void validate() const {
    require(lr > 0.0, ErrorCode::InvalidArgument, "lr must be positive");
    require(batch_size >= 2, ErrorCode::InvalidArgument, "batch_size must be >= 2");
    require(tau > 0.0, ErrorCode::InvalidArgument, "tau must be positive");
    require(lambdas.vol >= 0.0 && lambdas.bi >= 0.0 && lambdas.ic50 >= 0.0, ErrorCode::InvalidArgument,
            "loss weights must be non-negative");
    require(label_smoothing >= 0.0 && label_smoothing < 1.0, ErrorCode::InvalidArgument, "label_smoothing must be in [0, 1)");
    require(shared_dim >= 2 && hidden_dim >= 1 && ic50_hidden >= 1, ErrorCode::InvalidArgument, "layer widths must be positive");
    require(dti_lr > 0.0 && dti_batch_size >= 1 && folds >= 2, ErrorCode::InvalidArgument, "invalid DTI settings");
    scheduler.validate();
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"lr", c.lr},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"tau", c.tau},
      {"lambda1", c.lambdas.vol},
      {"lambda2", c.lambdas.bi},
      {"lambda3", c.lambdas.ic50},
      {"scheduler",
       {{"p_drop", c.scheduler.p_drop},
        {"K", c.scheduler.history},
        {"alpha", c.scheduler.decay},
        {"lambda_sigma", c.scheduler.lambda_sigma}}},
      {"label_smoothing", c.label_smoothing},
      {"seed", c.seed},
      {"shared_dim", c.shared_dim},
      {"hidden_dim", c.hidden_dim},
      {"ic50_hidden", c.ic50_hidden},
      {"eval_subset", c.eval_subset},
      {"dti_epochs", c.dti_epochs},
      {"dti_lr", c.dti_lr},
      {"dti_batch_size", c.dti_batch_size},
      {"dti_hidden", c.dti_hidden},
      {"folds", c.folds},
  };
}

/// Reads the fields present in `j` over `c`; unknown keys are rejected.
inline void merge_config(TrainConfig& c, const nlohmann::json& j) {
  require(j.is_object(), ErrorCode::InvalidArgument, "config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "lr") c.lr = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "tau") c.tau = v.get<double>();
      else if (key == "lambda1") c.lambdas.vol = v.get<double>();
      else if (key == "lambda2") c.lambdas.bi = v.get<double>();
      else if (key == "lambda3") c.lambdas.ic50 = v.get<double>();
      else if (key == "label_smoothing") c.label_smoothing = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "shared_dim") c.shared_dim = v.get<std::size_t>();
      else if (key == "hidden_dim") c.hidden_dim = v.get<std::size_t>();
      else if (key == "ic50_hidden") c.ic50_hidden = v.get<std::size_t>();
      else if (key == "eval_subset") c.eval_subset = v.get<std::size_t>();
      else if (key == "dti_epochs") c.dti_epochs = v.get<std::size_t>();
      else if (key == "dti_lr") c.dti_lr = v.get<double>();
      else if (key == "dti_batch_size") c.dti_batch_size = v.get<std::size_t>();
      else if (key == "dti_hidden") c.dti_hidden = v.get<std::vector<std::size_t>>();
      else if (key == "folds") c.folds = v.get<std::size_t>();
      else if (key == "scheduler") {
        require(v.is_object(), ErrorCode::InvalidArgument, "scheduler must be an object");
        for (const auto& [sk, sv] : v.items()) {
          if (sk == "p_drop") c.scheduler.p_drop = sv.get<double>();
          else if (sk == "K") c.scheduler.history = sv.get<std::size_t>();
          else if (sk == "alpha") c.scheduler.decay = sv.get<double>();
          else if (sk == "lambda_sigma") c.scheduler.lambda_sigma = sv.get<double>();
          else fail(ErrorCode::InvalidArgument, "unknown scheduler key '" + sk + "'");
        }
      } else {
        fail(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("bad config value: ") + e.what());
  }
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  merge_config(c, j);
  return c;
}

}  // namespace gramalign
