#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fusegen/core.hpp"
#include "fusegen/error.hpp"
#include "fusegen/rng.hpp"

namespace fusegen {

// --- Featurizer --------------------------------------------------------------

struct FeaturizerConfig {
  std::vector<int> ngram_orders = {1, 2};
  std::uint32_t hash_dim = 1u << 18;
  bool lowercase = true;
  bool strip_punctuation = true;

  bool operator==(const FeaturizerConfig&) const = default;

  void validate() const {
    if (hash_dim == 0) throw ConfigError("featurizer hash_dim must be positive");
    if (ngram_orders.empty()) throw ConfigError("featurizer needs at least one n-gram order");
    for (int n : ngram_orders) {
      if (n < 1) throw ConfigError("n-gram order must be >= 1");
    }
  }
};

struct FeatureEntry {
  std::uint32_t index;
  double value;
};

// Sorted by index, unique indices.
using SparseVector = std::vector<FeatureEntry>;

inline double sparse_dot(const SparseVector& a, const SparseVector& b) {
  double acc = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].index == b[j].index) {
      acc += a[i].value * b[j].value;
      ++i;
      ++j;
    } else if (a[i].index < b[j].index) {
      ++i;
    } else {
      ++j;
    }
  }
  return acc;
}

// Hashed n-gram term counts scaled by 1/sqrt(nnz), so the vector norm stays
// bounded. Deterministic: identical text, identical vector.
class Featurizer {
 public:
  explicit Featurizer(FeaturizerConfig config = {}) : config_(std::move(config)) { config_.validate(); }

  const FeaturizerConfig& config() const { return config_; }

  std::vector<std::string> tokenize(const std::string& text) const {
    std::string normalized;
    normalized.reserve(text.size());
    for (char raw : text) {
      unsigned char c = static_cast<unsigned char>(raw);
      if (config_.strip_punctuation && !std::isalnum(c) && c < 128) {
        normalized.push_back(' ');
      } else if (config_.lowercase) {
        normalized.push_back(static_cast<char>(std::tolower(c)));
      } else {
        normalized.push_back(raw);
      }
    }
    std::vector<std::string> tokens;
    std::size_t pos = 0;
    while (pos < normalized.size()) {
      while (pos < normalized.size() && normalized[pos] == ' ') ++pos;
      std::size_t end = pos;
      while (end < normalized.size() && normalized[end] != ' ') ++end;
      if (end > pos) tokens.push_back(normalized.substr(pos, end - pos));
      pos = end;
    }
    return tokens;
  }

  SparseVector featurize(const std::string& text) const {
    auto tokens = tokenize(text);
    std::unordered_map<std::uint32_t, double> counts;
    for (int order : config_.ngram_orders) {
      const std::size_t n = static_cast<std::size_t>(order);
      if (tokens.size() < n) continue;
      for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::uint64_t h = fnv1a64(tokens[i]);
        for (std::size_t j = 1; j < n; ++j) {
          h = fnv1a64("\x1f", h);
          h = fnv1a64(tokens[i + j], h);
        }
        counts[static_cast<std::uint32_t>(h % config_.hash_dim)] += 1.0;
      }
    }
    SparseVector out;
    out.reserve(counts.size());
    for (const auto& [idx, value] : counts) out.push_back({idx, value});
    std::sort(out.begin(), out.end(),
              [](const FeatureEntry& a, const FeatureEntry& b) { return a.index < b.index; });
    if (!out.empty()) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(out.size()));
      for (auto& e : out) e.value *= scale;
    }
    return out;
  }

 private:
  FeaturizerConfig config_;
};

// --- Model -------------------------------------------------------------------

inline std::vector<double> softmax(std::vector<double> logits) {
  double max_logit = logits[0];
  for (double z : logits) max_logit = std::max(max_logit, z);
  double sum = 0.0;
  for (double& z : logits) {
    z = std::exp(z - max_logit);
    sum += z;
  }
  for (double& z : logits) z /= sum;
  return logits;
}

// Argmax with ties broken toward the lower class_id.
inline int argmax_lowest(const std::vector<double>& values) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(values.size()); ++c) {
    if (values[static_cast<std::size_t>(c)] > values[static_cast<std::size_t>(best)]) best = c;
  }
  return best;
}

// Linear softmax classifier over hashed n-gram features. Weight layout is
// feature-major: weights[index * C + c].
struct StmModel {
  Featurizer featurizer;
  int num_classes = 0;
  std::vector<double> weights;
  std::vector<double> bias;
  std::uint64_t training_seed = 0;

  StmModel() : featurizer(FeaturizerConfig{}) {}

  StmModel(FeaturizerConfig fz_config, int classes)
      : featurizer(std::move(fz_config)),
        num_classes(classes),
        weights(static_cast<std::size_t>(featurizer.config().hash_dim) * static_cast<std::size_t>(classes), 0.0),
        bias(static_cast<std::size_t>(classes), 0.0) {
    if (classes < 2) throw ConfigError("model needs at least 2 classes");
  }

  std::vector<double> logits(const SparseVector& features) const {
    std::vector<double> z(bias);
    for (const auto& e : features) {
      const double* w = &weights[static_cast<std::size_t>(e.index) * static_cast<std::size_t>(num_classes)];
      for (int c = 0; c < num_classes; ++c) z[static_cast<std::size_t>(c)] += w[c] * e.value;
    }
    return z;
  }

  std::vector<double> predict_proba(const SparseVector& features) const { return softmax(logits(features)); }

  // Empty text maps to the bias-only prediction.
  std::vector<double> predict_proba(const std::string& text) const {
    return predict_proba(featurizer.featurize(text));
  }

  int predict(const std::string& text) const { return argmax_lowest(predict_proba(text)); }
};

// --- Training ----------------------------------------------------------------

struct TrainingConfig {
  int epochs = 3;  // E2
  // The effective step is learning_rate * sample weight (batch updates are
  // weighted sums), and the pipeline's neutral weight is 0.5, so the default
  // is calibrated for an effective rate of 0.1.
  double learning_rate = 0.2;
  int batch_size = 32;
  std::uint64_t shuffle_seed = 0;

  void validate() const {
    if (epochs < 1) throw ConfigError("training epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  }
};

// End-of-epoch snapshots of the probability each sample's synthetic label
// receives, plus the correctness bit. One record per sample per epoch.
struct TrainingDynamics {
  std::vector<std::string> sample_ids;
  std::vector<std::vector<double>> label_prob;        // [epoch][sample]
  std::vector<std::vector<std::uint8_t>> correct;     // [epoch][sample]

  std::size_t epoch_count() const { return label_prob.size(); }
};

struct TrainResult {
  StmModel model;
  TrainingDynamics dynamics;
};

// Deterministic batch partition for one epoch: seeded shuffle, then
// contiguous chunks. Exposed so tests can reproduce the exact schedule.
inline std::vector<std::vector<std::size_t>> make_batch_schedule(std::size_t n, int batch_size,
                                                                 std::uint64_t seed, int epoch) {
  SplitMix64 rng(hash_combine(seed, static_cast<std::uint64_t>(epoch) + 0x51ull));
  auto order = rng.permutation(n);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

// Mini-batch gradient descent on the weighted cross-entropy sum
// L = sum_i w_i * l(m(x_i), y_i). The per-batch step is
// params -= eta * sum_{i in batch} w_i * grad_i, with no batch-size
// normalization, so a zero weight removes a sample from the arithmetic
// exactly and scalar weight factors commute with the learning rate.
inline TrainResult train_with_schedule(const SyntheticDataset& dataset, const std::vector<double>& weights,
                                       const TrainingConfig& config,
                                       const std::vector<std::vector<std::vector<std::size_t>>>& schedule,
                                       FeaturizerConfig fz_config = {}) {
  config.validate();
  const std::size_t n = dataset.size();
  if (n == 0) throw DataError("cannot train on an empty dataset");
  if (weights.size() != n) {
    throw InvariantError("train: weight vector size " + std::to_string(weights.size()) +
                         " does not match dataset size " + std::to_string(n));
  }
  bool any_positive = false;
  for (double w : weights) {
    if (w < 0.0) throw InvariantError("train: negative sample weight");
    if (w > 0.0) any_positive = true;
  }
  if (!any_positive) throw InvariantError("train: all sample weights are zero (degenerate objective)");
  if (schedule.size() != static_cast<std::size_t>(config.epochs)) {
    throw InvariantError("train: schedule must cover every epoch");
  }

  const int C = dataset.schema().num_classes();
  StmModel model(std::move(fz_config), C);
  model.training_seed = config.shuffle_seed;

  std::vector<SparseVector> features(n);
  for (std::size_t i = 0; i < n; ++i) features[i] = model.featurizer.featurize(dataset.at(i).text);

  TrainingDynamics dynamics;
  dynamics.sample_ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) dynamics.sample_ids.push_back(dataset.at(i).sample_id);

  std::unordered_map<std::uint32_t, std::vector<double>> grad;
  std::vector<double> bias_grad(static_cast<std::size_t>(C));
  std::vector<double> coeff(static_cast<std::size_t>(C));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& batch : schedule[static_cast<std::size_t>(epoch)]) {
      grad.clear();
      std::fill(bias_grad.begin(), bias_grad.end(), 0.0);
      for (std::size_t i : batch) {
        const double w = weights[i];
        auto p = model.predict_proba(features[i]);
        const int y = dataset.at(i).label;
        for (int c = 0; c < C; ++c) {
          coeff[static_cast<std::size_t>(c)] =
              w * (p[static_cast<std::size_t>(c)] - (c == y ? 1.0 : 0.0));
          bias_grad[static_cast<std::size_t>(c)] += coeff[static_cast<std::size_t>(c)];
        }
        for (const auto& e : features[i]) {
          auto& g = grad[e.index];
          if (g.empty()) g.assign(static_cast<std::size_t>(C), 0.0);
          for (int c = 0; c < C; ++c) g[static_cast<std::size_t>(c)] += coeff[static_cast<std::size_t>(c)] * e.value;
        }
      }
      for (const auto& [idx, g] : grad) {
        double* w = &model.weights[static_cast<std::size_t>(idx) * static_cast<std::size_t>(C)];
        for (int c = 0; c < C; ++c) w[c] -= config.learning_rate * g[static_cast<std::size_t>(c)];
      }
      for (int c = 0; c < C; ++c) {
        model.bias[static_cast<std::size_t>(c)] -= config.learning_rate * bias_grad[static_cast<std::size_t>(c)];
      }
    }

    std::vector<double> probs(n);
    std::vector<std::uint8_t> bits(n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto p = model.predict_proba(features[i]);
      const int y = dataset.at(i).label;
      probs[i] = p[static_cast<std::size_t>(y)];
      bits[i] = argmax_lowest(p) == y ? 1 : 0;
      loss += weights[i] * -std::log(std::max(probs[i], 1e-300));
    }
    if (!std::isfinite(loss)) {
      throw InvariantError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           " (learning rate too large or corrupt input)");
    }
    dynamics.label_prob.push_back(std::move(probs));
    dynamics.correct.push_back(std::move(bits));
  }

  return TrainResult{std::move(model), std::move(dynamics)};
}

inline TrainResult train(const SyntheticDataset& dataset, const std::vector<double>& weights,
                         const TrainingConfig& config, FeaturizerConfig fz_config = {}) {
  std::vector<std::vector<std::vector<std::size_t>>> schedule;
  schedule.reserve(static_cast<std::size_t>(config.epochs));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    schedule.push_back(make_batch_schedule(dataset.size(), config.batch_size, config.shuffle_seed, epoch));
  }
  return train_with_schedule(dataset, weights, config, schedule, std::move(fz_config));
}

// --- Evaluation ----------------------------------------------------------------

inline double evaluate(const StmModel& model, const std::vector<LabeledExample>& examples) {
  if (examples.empty()) throw DataError("evaluate: empty test set");
  std::size_t hits = 0;
  for (const auto& ex : examples) {
    if (ex.label < 0 || ex.label >= model.num_classes) {
      throw DataError("evaluate: gold label out of model range");
    }
    if (model.predict(ex.text) == ex.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

inline double evaluate_on_dataset(const StmModel& model, const SyntheticDataset& dataset) {
  if (dataset.empty()) throw DataError("evaluate: empty dataset");
  std::size_t hits = 0;
  for (const auto& s : dataset.samples()) {
    if (model.predict(s.text) == s.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(dataset.size());
}

// --- Last-layer gradient --------------------------------------------------------

// Gradient of the unweighted cross-entropy at one sample w.r.t. (W, b) is the
// rank-one outer product (p - onehot(y)) (x) phi(x), plus (p - onehot(y)) for
// the bias. Stored in factored form; dot products stay cheap.
struct LastLayerGradient {
  std::vector<double> coeff;  // p - onehot(y)
  SparseVector features;

  double dot(const LastLayerGradient& other) const {
    double cdot = 0.0;
    for (std::size_t c = 0; c < coeff.size(); ++c) cdot += coeff[c] * other.coeff[c];
    return cdot * (1.0 + sparse_dot(features, other.features));
  }

  double squared_norm() const { return dot(*this); }
};

inline LastLayerGradient last_layer_gradient(const StmModel& model, const std::string& text, int label) {
  LastLayerGradient g;
  g.features = model.featurizer.featurize(text);
  g.coeff = model.predict_proba(g.features);
  g.coeff[static_cast<std::size_t>(label)] -= 1.0;
  return g;
}

inline LastLayerGradient last_layer_gradient(const StmModel& model, const Sample& sample) {
  return last_layer_gradient(model, sample.text, sample.label);
}

// --- Checkpoint ------------------------------------------------------------------

inline constexpr char kModelMagic[8] = {'F', 'G', 'S', 'T', 'M', '0', '0', '1'};

inline void save_model(const StmModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out.write(kModelMagic, sizeof(kModelMagic));
  const auto& fz = model.featurizer.config();
  auto write_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  auto write_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
  write_u32(static_cast<std::uint32_t>(model.num_classes));
  write_u32(fz.hash_dim);
  write_u32(static_cast<std::uint32_t>(fz.ngram_orders.size()));
  for (int n : fz.ngram_orders) write_u32(static_cast<std::uint32_t>(n));
  write_u32(static_cast<std::uint32_t>(fz.lowercase) | (static_cast<std::uint32_t>(fz.strip_punctuation) << 1));
  write_u64(model.training_seed);
  out.write(reinterpret_cast<const char*>(model.weights.data()),
            static_cast<std::streamsize>(model.weights.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(model.bias.data()),
            static_cast<std::streamsize>(model.bias.size() * sizeof(double)));
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

inline StmModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "' for reading");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0) {
    throw DataError("'" + path + "' is not a model checkpoint (bad format header)");
  }
  auto read_u32 = [&] {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  };
  auto read_u64 = [&] {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  };
  FeaturizerConfig fz;
  const int classes = static_cast<int>(read_u32());
  fz.hash_dim = read_u32();
  fz.ngram_orders.assign(read_u32(), 0);
  for (auto& n : fz.ngram_orders) n = static_cast<int>(read_u32());
  const std::uint32_t flags = read_u32();
  fz.lowercase = (flags & 1u) != 0;
  fz.strip_punctuation = (flags & 2u) != 0;
  StmModel model(fz, classes);
  model.training_seed = read_u64();
  in.read(reinterpret_cast<char*>(model.weights.data()),
          static_cast<std::streamsize>(model.weights.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(model.bias.data()),
          static_cast<std::streamsize>(model.bias.size() * sizeof(double)));
  if (!in) throw DataError("'" + path + "' is truncated");
  return model;
}

}  // namespace fusegen
