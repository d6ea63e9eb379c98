#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "fusegen/core.hpp"
#include "fusegen/error.hpp"
#include "fusegen/stm.hpp"

namespace fusegen {

enum class CartographyCategory { easy_to_learn, ambiguous, hard_to_learn };

inline const char* to_string(CartographyCategory c) {
  switch (c) {
    case CartographyCategory::easy_to_learn: return "easy_to_learn";
    case CartographyCategory::ambiguous: return "ambiguous";
    case CartographyCategory::hard_to_learn: return "hard_to_learn";
  }
  return "unknown";
}

// The category thresholds are configuration, not canon: chosen so that a
// well-separated mock task lands mostly easy-to-learn.
struct CartographyConfig {
  double variability_threshold = 0.25;  // v*: at or above is ambiguous
  double confidence_threshold = 0.5;    // c*: below (and low variability) is hard

  void validate() const {
    if (!(variability_threshold > 0.0)) throw ConfigError("cartography variability threshold must be > 0");
    if (!(confidence_threshold > 0.0 && confidence_threshold < 1.0)) {
      throw ConfigError("cartography confidence threshold must lie in (0,1)");
    }
  }
};

struct CartographyRecord {
  std::string sample_id;
  double confidence = 0.0;   // epoch mean of p[y]
  double variability = 0.0;  // epoch population STD of p[y]
  double correctness = 0.0;  // fraction of epochs with a correct argmax
  CartographyCategory category = CartographyCategory::easy_to_learn;
};

inline std::vector<CartographyRecord> compute_cartography(const TrainingDynamics& dynamics,
                                                          const CartographyConfig& config = {}) {
  config.validate();
  const std::size_t epochs = dynamics.epoch_count();
  if (epochs < 2) {
    throw DataError("cartography needs at least 2 training epochs of dynamics, got " +
                    std::to_string(epochs));
  }
  const std::size_t n = dynamics.sample_ids.size();
  std::vector<CartographyRecord> records(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = records[i];
    r.sample_id = dynamics.sample_ids[i];
    double mean = 0.0, hits = 0.0;
    for (std::size_t e = 0; e < epochs; ++e) {
      mean += dynamics.label_prob[e][i];
      hits += dynamics.correct[e][i] ? 1.0 : 0.0;
    }
    mean /= static_cast<double>(epochs);
    double ss = 0.0;
    for (std::size_t e = 0; e < epochs; ++e) {
      const double dev = dynamics.label_prob[e][i] - mean;
      ss += dev * dev;
    }
    r.confidence = mean;
    r.variability = std::sqrt(ss / static_cast<double>(epochs));
    r.correctness = hits / static_cast<double>(epochs);
    if (r.variability >= config.variability_threshold) {
      r.category = CartographyCategory::ambiguous;
    } else if (r.confidence >= config.confidence_threshold) {
      r.category = CartographyCategory::easy_to_learn;
    } else {
      r.category = CartographyCategory::hard_to_learn;
    }
  }
  return records;
}

using CategoryHistogram = std::map<std::string, std::size_t>;

inline CategoryHistogram category_histogram(const std::vector<CartographyRecord>& records) {
  CategoryHistogram hist = {{"easy_to_learn", 0}, {"ambiguous", 0}, {"hard_to_learn", 0}};
  for (const auto& r : records) ++hist[to_string(r.category)];
  return hist;
}

// CSV consumable by any plotting tool. plm_id comes from the sample_id
// prefix, which the id format guarantees.
inline CategoryHistogram export_plot_data(const std::vector<CartographyRecord>& records,
                                          const std::string& path) {
  if (records.empty()) throw DataError("cartography export: no records");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << "sample_id,plm_id,confidence,variability,correctness,category\n";
  char buffer[96];
  for (const auto& r : records) {
    std::snprintf(buffer, sizeof(buffer), "%.17g,%.17g,%.17g", r.confidence, r.variability, r.correctness);
    out << r.sample_id << "," << plm_of_sample_id(r.sample_id) << "," << buffer << ","
        << to_string(r.category) << "\n";
  }
  if (!out) throw ConfigError("write to '" + path + "' failed");
  return category_histogram(records);
}

}  // namespace fusegen
