#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "fusegen/core.hpp"
#include "fusegen/error.hpp"
#include "fusegen/stm.hpp"

namespace fusegen {

// The printed update multiplies wrongly-predicted weights by beta^(-error),
// which raises them, while the surrounding description says those samples are
// down-weighted. prose_intent (default) applies beta^(+error) to wrong
// samples; paper_literal keeps the printed exponent behind a switch.
enum class SignMode { prose_intent, paper_literal };

inline const char* to_string(SignMode mode) {
  return mode == SignMode::prose_intent ? "prose_intent" : "paper_literal";
}

inline SignMode sign_mode_from_string(const std::string& s) {
  if (s == "prose_intent") return SignMode::prose_intent;
  if (s == "paper_literal") return SignMode::paper_literal;
  throw ConfigError("unknown swa.sign_mode '" + s + "' (expected prose_intent or paper_literal)");
}

struct SwaConfig {
  int weight_epochs = 30;  // E1
  SignMode sign_mode = SignMode::prose_intent;
  std::optional<double> beta_override;

  void validate() const {
    if (weight_epochs < 1) throw ConfigError("e1_weight_epochs must be >= 1");
    if (beta_override && !(*beta_override > 0.0 && *beta_override < 1.0)) {
      throw ConfigError("swa.beta override must lie in (0,1)");
    }
  }
};

// beta = 1 / (1 + sqrt(2 ln(NK) / E1)), the boosting constant.
inline double compute_beta_for_size(std::size_t total_samples, int weight_epochs) {
  if (total_samples < 2) {
    throw ConfigError("compute_beta needs N*K >= 2 samples, got " + std::to_string(total_samples));
  }
  if (weight_epochs < 1) throw ConfigError("compute_beta needs E1 >= 1");
  const double nk = static_cast<double>(total_samples);
  return 1.0 / (1.0 + std::sqrt(2.0 * std::log(nk) / static_cast<double>(weight_epochs)));
}

inline double compute_beta(std::size_t n_per_plm, std::size_t k_plms, int weight_epochs) {
  return compute_beta_for_size(n_per_plm * k_plms, weight_epochs);
}

// Per-sample weights over D with their normalization target 0.5 * N * K.
struct WeightState {
  std::vector<double> w;
  int epoch = 0;
  double target_sum = 0.0;

  static WeightState uniform(std::size_t n) {
    WeightState s;
    s.w.assign(n, kInitialSampleWeight);
    s.target_sum = kInitialSampleWeight * static_cast<double>(n);
    return s;
  }

  double sum() const {
    double acc = 0.0;
    for (double x : w) acc += x;
    return acc;
  }

  void check_normalized() const {
    const double tolerance = 1e-9 * static_cast<double>(w.size());
    if (std::abs(sum() - target_sum) > tolerance) {
      throw InvariantError("weight normalization broken: sum " + std::to_string(sum()) +
                           " vs target " + std::to_string(target_sum));
    }
  }
};

struct PredictionOutcome {
  double error = 0.0;  // 1 - p[y]
  bool correct = false;
};

inline std::vector<PredictionOutcome> prediction_outcomes(const StmModel& model,
                                                          const SyntheticDataset& dataset) {
  std::vector<PredictionOutcome> out;
  out.reserve(dataset.size());
  for (const auto& s : dataset.samples()) {
    auto p = model.predict_proba(s.text);
    PredictionOutcome o;
    o.error = 1.0 - p[static_cast<std::size_t>(s.label)];
    o.correct = argmax_lowest(p) == s.label;
    out.push_back(o);
  }
  return out;
}

// One boosting step: wrong samples get multiplier beta^error (prose_intent)
// or beta^-error (paper_literal); correct samples keep their raw weight. A
// single positive rescale then restores sum(w) = 0.5 * N * K.
inline WeightState adjust_weights(const WeightState& state, const std::vector<PredictionOutcome>& outcomes,
                                  double beta, SignMode mode) {
  if (outcomes.size() != state.w.size()) {
    throw InvariantError("adjust_weights: outcome count " + std::to_string(outcomes.size()) +
                         " does not cover the weight vector of size " + std::to_string(state.w.size()));
  }
  if (!(beta > 0.0 && beta < 1.0)) throw InvariantError("adjust_weights: beta outside (0,1)");

  WeightState next = state;
  next.epoch = state.epoch + 1;
  for (std::size_t i = 0; i < next.w.size(); ++i) {
    if (!outcomes[i].correct) {
      const double exponent = mode == SignMode::prose_intent ? outcomes[i].error : -outcomes[i].error;
      next.w[i] *= std::pow(beta, exponent);
    }
    if (!(next.w[i] >= 0.0) || !std::isfinite(next.w[i])) {
      throw InvariantError("adjust_weights: weight " + std::to_string(i) + " became invalid");
    }
  }
  const double total = next.sum();
  if (!(total > 0.0)) throw InvariantError("adjust_weights: weight mass vanished");
  const double scale = next.target_sum / total;
  for (double& x : next.w) x *= scale;
  next.check_normalized();
  return next;
}

struct SwaEpochStats {
  int epoch = 0;
  double train_accuracy = 0.0;
  std::optional<double> test_accuracy;
  double weight_sum = 0.0;          // after this epoch's adjustment
  std::vector<double> weights_after;
};

struct SwaResult {
  StmModel model;  // trained in the final iteration, weights w^(E1-1)
  WeightState final_state;
  TrainingDynamics final_dynamics;
  std::vector<SwaEpochStats> trace;
  double beta = 0.0;
};

// E1 rounds of: train a fresh STM with the current weights, score every
// sample of D under it, boost, renormalize. Weights always start uniform at
// 0.5; the shuffle schedule is shared across rounds so only the weights move.
inline SwaResult swa_train(const SyntheticDataset& dataset, const TrainingConfig& train_config,
                           const SwaConfig& swa_config, FeaturizerConfig fz_config = {},
                           const std::vector<LabeledExample>* testset = nullptr,
                           bool record_weights = true) {
  swa_config.validate();
  if (dataset.empty()) throw DataError("swa_train: empty dataset");

  const double beta = swa_config.beta_override
                          ? *swa_config.beta_override
                          : compute_beta_for_size(dataset.size(), swa_config.weight_epochs);

  SwaResult result;
  result.beta = beta;
  WeightState state = WeightState::uniform(dataset.size());
  for (int e1 = 0; e1 < swa_config.weight_epochs; ++e1) {
    auto trained = train(dataset, state.w, train_config, fz_config);
    auto outcomes = prediction_outcomes(trained.model, dataset);

    state = adjust_weights(state, outcomes, beta, swa_config.sign_mode);

    SwaEpochStats stats;
    stats.epoch = e1;
    std::size_t hits = 0;
    for (const auto& o : outcomes) hits += o.correct ? 1 : 0;
    stats.train_accuracy = static_cast<double>(hits) / static_cast<double>(outcomes.size());
    if (testset) stats.test_accuracy = evaluate(trained.model, *testset);
    stats.weight_sum = state.sum();
    if (record_weights) stats.weights_after = state.w;
    result.trace.push_back(std::move(stats));

    if (e1 == swa_config.weight_epochs - 1) {
      result.model = std::move(trained.model);
      result.final_dynamics = std::move(trained.dynamics);
    }
  }
  result.final_state = std::move(state);
  return result;
}

// CSV of (epoch, sample_id, weight) rows for every adjustment epoch, feeding
// noised-vs-clean weight audits.
inline void export_weight_trace(const SwaResult& result, const SyntheticDataset& dataset,
                                const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << "epoch,sample_id,weight\n";
  char buffer[64];
  for (const auto& stats : result.trace) {
    if (stats.weights_after.empty()) continue;
    for (std::size_t i = 0; i < stats.weights_after.size(); ++i) {
      std::snprintf(buffer, sizeof(buffer), "%.17g", stats.weights_after[i]);
      out << stats.epoch << "," << dataset.at(i).sample_id << "," << buffer << "\n";
    }
  }
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

}  // namespace fusegen
