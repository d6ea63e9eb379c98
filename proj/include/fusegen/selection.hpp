#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "fusegen/core.hpp"
#include "fusegen/error.hpp"
#include "fusegen/stm.hpp"

namespace fusegen {

// p[k'][i]: scorer model k's predicted probability of sample i's synthetic
// label. Complete by construction; every entry in [0, 1].
struct ProbabilityMatrix {
  std::vector<std::string> sample_ids;
  std::vector<std::vector<double>> rows;

  std::size_t num_scorers() const { return rows.size(); }
  std::size_t num_samples() const { return sample_ids.size(); }

  void validate() const {
    for (const auto& row : rows) {
      if (row.size() != sample_ids.size()) {
        throw InvariantError("probability matrix row size mismatch");
      }
      for (double p : row) {
        if (!(p >= 0.0 && p <= 1.0)) throw InvariantError("probability matrix entry outside [0,1]");
      }
    }
  }
};

inline ProbabilityMatrix build_probability_matrix(const std::vector<const StmModel*>& scorers,
                                                  const SyntheticDataset& dataset) {
  ProbabilityMatrix m;
  m.sample_ids.reserve(dataset.size());
  for (const auto& s : dataset.samples()) m.sample_ids.push_back(s.sample_id);
  m.rows.reserve(scorers.size());
  for (const StmModel* model : scorers) {
    std::vector<double> row;
    row.reserve(dataset.size());
    for (const auto& s : dataset.samples()) {
      row.push_back(model->predict_proba(s.text)[static_cast<std::size_t>(s.label)]);
    }
    m.rows.push_back(std::move(row));
  }
  m.validate();
  return m;
}

enum class InfluenceScorer { gradient_alignment, variability_rank };

struct SelectionConfig {
  double alpha = 0.5;
  int r_candidates = 40;   // R
  int s_incontext = 8;     // S
  InfluenceScorer scorer = InfluenceScorer::gradient_alignment;
  std::size_t reference_size = 256;
  double reference_threshold = 0.9;
  // Divide-by-K (population) spread by default; the sample estimator is a
  // documented switch, not the shipped behavior.
  bool use_sample_std = false;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0,1]");
    if (r_candidates < 1) throw ConfigError("r_candidates must be >= 1");
    if (s_incontext < 1) throw ConfigError("s_incontext must be >= 1");
    if (s_incontext > r_candidates) throw ConfigError("s_incontext must not exceed r_candidates");
    if (!(reference_threshold > 0.0 && reference_threshold <= 1.0)) {
      throw ConfigError("reference_threshold must lie in (0,1]");
    }
  }
};

// Spread of the K scorer probabilities per sample. Requires K >= 2; with a
// single PLM there is nothing to disagree, and candidate selection falls back
// to random sampling instead.
inline std::vector<double> cross_model_variability(const ProbabilityMatrix& matrix,
                                                   bool use_sample_std = false) {
  const std::size_t K = matrix.num_scorers();
  if (K < 2) {
    throw ConfigError("cross-model variability needs at least 2 scorer models (got " +
                      std::to_string(K) + "); use random candidate selection in single-PLM mode");
  }
  matrix.validate();
  const std::size_t n = matrix.num_samples();
  std::vector<double> d(n, 0.0);
  const double denom = use_sample_std ? static_cast<double>(K - 1) : static_cast<double>(K);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (std::size_t k = 0; k < K; ++k) mean += matrix.rows[k][i];
    mean /= static_cast<double>(K);
    double ss = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double dev = matrix.rows[k][i] - mean;
      ss += dev * dev;
    }
    d[i] = std::sqrt(ss / denom);
  }
  return d;
}

// round(alpha * R), half away from zero.
inline int high_variability_count(double alpha, int r) {
  return static_cast<int>(std::floor(alpha * static_cast<double>(r) + 0.5));
}

struct CandidateSelection {
  // Candidate positions into the scored arrays: high-variability group first
  // (descending d), then the low group (ascending d).
  std::vector<std::size_t> indices;
  std::size_t high_count = 0;
};

// alpha*R top high-variability plus the rest top low-variability, disjoint.
// A sample qualifying for both under exact ties goes to the high group; the
// low group backfills from the next-lowest d. Ties break by ascending
// sample_id.
inline CandidateSelection select_candidates(const std::vector<std::string>& sample_ids,
                                            const std::vector<double>& d, const SelectionConfig& config) {
  config.validate();
  if (sample_ids.size() != d.size()) throw InvariantError("select_candidates: id/score size mismatch");
  const std::size_t n = sample_ids.size();
  const std::size_t R = static_cast<std::size_t>(config.r_candidates);
  if (n < R) {
    throw ConfigError("dataset has " + std::to_string(n) + " samples but R=" + std::to_string(R) +
                      " candidates were requested; lower r_candidates");
  }

  std::vector<std::size_t> by_high(n), by_low(n);
  for (std::size_t i = 0; i < n; ++i) by_high[i] = by_low[i] = i;
  std::sort(by_high.begin(), by_high.end(), [&](std::size_t a, std::size_t b) {
    if (d[a] != d[b]) return d[a] > d[b];
    return sample_ids[a] < sample_ids[b];
  });
  std::sort(by_low.begin(), by_low.end(), [&](std::size_t a, std::size_t b) {
    if (d[a] != d[b]) return d[a] < d[b];
    return sample_ids[a] < sample_ids[b];
  });

  CandidateSelection out;
  const std::size_t want_high = static_cast<std::size_t>(high_variability_count(config.alpha, config.r_candidates));
  std::vector<bool> taken(n, false);
  for (std::size_t i = 0; i < want_high; ++i) {
    out.indices.push_back(by_high[i]);
    taken[by_high[i]] = true;
  }
  out.high_count = out.indices.size();
  for (std::size_t i = 0; i < n && out.indices.size() < R; ++i) {
    if (!taken[by_low[i]]) out.indices.push_back(by_low[i]);
  }
  return out;
}

// Seeded uniform draw of R distinct candidates, for single-PLM and
// self-guided modes where variability is undefined.
inline CandidateSelection select_random_candidates(std::size_t n, const SelectionConfig& config,
                                                   SplitMix64& rng) {
  config.validate();
  const std::size_t R = static_cast<std::size_t>(config.r_candidates);
  if (n < R) {
    throw ConfigError("dataset has " + std::to_string(n) + " samples but R=" + std::to_string(R) +
                      " candidates were requested; lower r_candidates");
  }
  auto order = rng.permutation(n);
  CandidateSelection out;
  out.indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(R));
  out.high_count = 0;
  return out;
}

struct ReferenceSet {
  std::vector<std::size_t> indices;
  bool relaxed = false;
};

// Samples every scorer is confident about (min over k' of p >= threshold),
// capped at reference_size, most confident first. An empty set relaxes the
// threshold to the top-confidence decile.
inline ReferenceSet build_reference_set(const ProbabilityMatrix& matrix, const SelectionConfig& config) {
  ReferenceSet out;
  const std::size_t n = matrix.num_samples();
  if (n == 0 || matrix.num_scorers() == 0) return out;
  std::vector<double> min_prob(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lo = 1.0;
    for (const auto& row : matrix.rows) lo = std::min(lo, row[i]);
    min_prob[i] = lo;
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (min_prob[a] != min_prob[b]) return min_prob[a] > min_prob[b];
    return matrix.sample_ids[a] < matrix.sample_ids[b];
  });

  double threshold = config.reference_threshold;
  if (min_prob[order[0]] < threshold) {
    // top-confidence decile (at least one sample)
    const std::size_t decile = std::max<std::size_t>(1, n / 10);
    threshold = min_prob[order[decile - 1]];
    out.relaxed = true;
  }
  for (std::size_t idx : order) {
    if (out.indices.size() >= config.reference_size) break;
    if (min_prob[idx] >= threshold) out.indices.push_back(idx);
  }
  return out;
}

// Gradient-alignment influence: g(z) . g_bar, where g_bar is the mean of the
// reference samples' last-layer gradients under the fused model, each scaled
// by the sample's current weight. Scaling all reference weights by a positive
// constant scales every score by that constant, so the top-S set is stable.
inline std::vector<double> influence_scores(const StmModel& model, const SyntheticDataset& dataset,
                                            const std::vector<std::size_t>& candidates,
                                            const std::vector<std::size_t>& reference) {
  if (reference.empty()) throw InvariantError("influence_scores: empty reference set");
  std::vector<LastLayerGradient> ref_grads;
  ref_grads.reserve(reference.size());
  std::vector<double> ref_weights;
  ref_weights.reserve(reference.size());
  for (std::size_t idx : reference) {
    ref_grads.push_back(last_layer_gradient(model, dataset.at(idx)));
    ref_weights.push_back(dataset.at(idx).weight);
  }
  std::vector<double> scores;
  scores.reserve(candidates.size());
  const double inv = 1.0 / static_cast<double>(reference.size());
  for (std::size_t idx : candidates) {
    auto g = last_layer_gradient(model, dataset.at(idx));
    double acc = 0.0;
    for (std::size_t r = 0; r < ref_grads.size(); ++r) acc += ref_weights[r] * g.dot(ref_grads[r]);
    scores.push_back(acc * inv);
  }
  return scores;
}

// Highest-scoring S candidates, descending; ties by ascending sample_id.
inline std::vector<std::size_t> select_top_s(const std::vector<std::size_t>& candidates,
                                             const std::vector<double>& scores,
                                             const std::vector<std::string>& sample_ids, int s) {
  if (candidates.size() != scores.size()) throw InvariantError("select_top_s: score size mismatch");
  if (static_cast<std::size_t>(s) > candidates.size()) {
    throw InvariantError("select_top_s: S exceeds candidate count");
  }
  std::vector<std::size_t> order(candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return sample_ids[candidates[a]] < sample_ids[candidates[b]];
  });
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(s));
  for (int i = 0; i < s; ++i) out.push_back(candidates[order[static_cast<std::size_t>(i)]]);
  return out;
}

// --- Round selection report ----------------------------------------------------

struct SelectionReport {
  int round_index = 0;
  std::vector<std::pair<std::string, double>> candidates;  // (sample_id, d)
  std::vector<std::pair<std::string, double>> selected;    // (sample_id, influence)
  std::size_t reference_size = 0;
  std::vector<std::string> warnings;

  ordered_json to_json() const {
    ordered_json j;
    j["round_index"] = round_index;
    j["reference_size"] = reference_size;
    j["candidates"] = ordered_json::array();
    for (const auto& [id, d] : candidates) j["candidates"].push_back({{"sample_id", id}, {"d", d}});
    j["selected"] = ordered_json::array();
    for (const auto& [id, score] : selected) j["selected"].push_back({{"sample_id", id}, {"influence", score}});
    j["warnings"] = warnings;
    return j;
  }
};

struct IncontextSelection {
  std::vector<Sample> incontext;  // descending influence rank
  SelectionReport report;
};

// The whole per-round quality-evaluation step: variability (or random)
// candidates, reference construction, influence ranking, top-S.
inline IncontextSelection select_incontext(const SyntheticDataset& dataset, const ProbabilityMatrix& matrix,
                                           const StmModel& fused_model, const SelectionConfig& config,
                                           bool random_candidates, SplitMix64& rng, int round_index) {
  config.validate();
  IncontextSelection out;
  out.report.round_index = round_index;

  std::vector<double> d(dataset.size(), 0.0);
  CandidateSelection candidates;
  if (random_candidates) {
    candidates = select_random_candidates(dataset.size(), config, rng);
  } else {
    d = cross_model_variability(matrix, config.use_sample_std);
    candidates = select_candidates(matrix.sample_ids, d, config);
  }
  for (std::size_t idx : candidates.indices) {
    out.report.candidates.emplace_back(dataset.at(idx).sample_id, d[idx]);
  }

  std::vector<double> scores;
  if (config.scorer == InfluenceScorer::gradient_alignment) {
    auto reference = build_reference_set(matrix, config);
    if (reference.relaxed) {
      out.report.warnings.push_back("reference set empty at threshold; relaxed to top-confidence decile");
    }
    out.report.reference_size = reference.indices.size();
    if (!reference.indices.empty()) {
      scores = influence_scores(fused_model, dataset, candidates.indices, reference.indices);
    } else {
      out.report.warnings.push_back("reference set empty after relaxation; using variability-rank ordering");
    }
  }
  if (scores.empty()) {
    // variability_rank scorer, or the gradient scorer's terminal fallback
    scores.reserve(candidates.indices.size());
    for (std::size_t idx : candidates.indices) scores.push_back(d[idx]);
  }

  auto top = select_top_s(candidates.indices, scores, matrix.sample_ids, config.s_incontext);
  for (std::size_t idx : top) {
    out.incontext.push_back(dataset.at(idx));
    // influence of this id as scored above
    for (std::size_t c = 0; c < candidates.indices.size(); ++c) {
      if (candidates.indices[c] == idx) {
        out.report.selected.emplace_back(dataset.at(idx).sample_id, scores[c]);
        break;
      }
    }
  }
  return out;
}

}  // namespace fusegen
