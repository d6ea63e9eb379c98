#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "fusegen/error.hpp"
#include "fusegen/rng.hpp"

namespace fusegen {

using ordered_json = nlohmann::ordered_json;

// Weights start at 0.5 and the adjustment loop renormalizes to keep the mean
// there, so a record without an explicit weight deserializes to 0.5.
inline constexpr double kInitialSampleWeight = 0.5;

struct LabelClass {
  int class_id = 0;
  std::string class_key;
  std::string prompt_surface;

  bool operator==(const LabelClass&) const = default;
};

// Ordered label space of a task. class_ids are contiguous from 0.
struct LabelSchema {
  std::string task_name;
  std::vector<LabelClass> classes;

  bool operator==(const LabelSchema&) const = default;

  int num_classes() const { return static_cast<int>(classes.size()); }

  void validate() const {
    if (classes.size() < 2) {
      throw ConfigError("label schema '" + task_name + "' needs at least 2 classes, has " +
                        std::to_string(classes.size()));
    }
    std::unordered_set<std::string> keys;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (classes[i].class_id != static_cast<int>(i)) {
        throw ConfigError("label schema '" + task_name + "': class_ids must be contiguous from 0, got " +
                          std::to_string(classes[i].class_id) + " at position " + std::to_string(i));
      }
      if (classes[i].class_key.empty()) {
        throw ConfigError("label schema '" + task_name + "': empty class_key at position " + std::to_string(i));
      }
      if (!keys.insert(classes[i].class_key).second) {
        throw ConfigError("label schema '" + task_name + "': duplicate class_key '" + classes[i].class_key + "'");
      }
    }
  }

  int class_id_for(const std::string& key) const {
    for (const auto& c : classes) {
      if (c.class_key == key) return c.class_id;
    }
    throw DataError("unknown class_key '" + key + "' for task '" + task_name + "'");
  }

  const LabelClass& class_at(int class_id) const {
    if (class_id < 0 || class_id >= num_classes()) {
      throw InvariantError("class_id " + std::to_string(class_id) + " out of range for task '" + task_name + "'");
    }
    return classes[static_cast<std::size_t>(class_id)];
  }
};

// One generated text with its synthetic label and mutable training weight.
struct Sample {
  std::string sample_id;
  std::string plm_id;
  int round_index = 0;
  std::string text;
  int label = 0;
  double weight = kInitialSampleWeight;

  bool operator==(const Sample&) const = default;
};

// A human-gold-labeled evaluation example.
struct LabeledExample {
  std::string text;
  int label = 0;
};

// sample_id format: "{plm_id}:{round_index}:{ordinal}". Stable, sortable,
// and the plm of origin is recoverable from the id alone.
inline std::string make_sample_id(const std::string& plm_id, int round_index, std::size_t ordinal) {
  return plm_id + ":" + std::to_string(round_index) + ":" + std::to_string(ordinal);
}

inline std::string plm_of_sample_id(const std::string& sample_id) {
  auto pos = sample_id.find(':');
  return pos == std::string::npos ? sample_id : sample_id.substr(0, pos);
}

// Ordered collection of samples sharing one LabelSchema. Tracks provenance
// (which positions came from which plm) and rejects duplicate sample_ids.
class SyntheticDataset {
 public:
  SyntheticDataset() = default;
  explicit SyntheticDataset(LabelSchema schema) : schema_(std::move(schema)) {}

  const LabelSchema& schema() const { return schema_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  const std::vector<Sample>& samples() const { return samples_; }
  const Sample& at(std::size_t i) const { return samples_.at(i); }

  void add(Sample sample) {
    if (sample.text.empty()) {
      throw DataError("sample '" + sample.sample_id + "' has empty text");
    }
    if (sample.weight < 0.0) {
      throw DataError("sample '" + sample.sample_id + "' has negative weight");
    }
    if (sample.label < 0 || sample.label >= schema_.num_classes()) {
      throw DataError("sample '" + sample.sample_id + "' has label out of schema range");
    }
    if (!ids_.insert(sample.sample_id).second) {
      throw DataError("duplicate sample_id '" + sample.sample_id + "'");
    }
    auto it = provenance_.find(sample.plm_id);
    if (it == provenance_.end()) {
      plm_order_.push_back(sample.plm_id);
      it = provenance_.emplace(sample.plm_id, std::vector<std::size_t>{}).first;
    }
    it->second.push_back(samples_.size());
    samples_.push_back(std::move(sample));
  }

  // plm ids in first-seen order.
  const std::vector<std::string>& plm_ids() const { return plm_order_; }

  const std::vector<std::size_t>& positions_of(const std::string& plm_id) const {
    auto it = provenance_.find(plm_id);
    if (it == provenance_.end()) {
      throw DataError("no samples from plm '" + plm_id + "'");
    }
    return it->second;
  }

  SyntheticDataset partition(const std::string& plm_id) const {
    SyntheticDataset out(schema_);
    for (std::size_t pos : positions_of(plm_id)) out.add(samples_[pos]);
    return out;
  }

  bool contains_id(const std::string& sample_id) const { return ids_.count(sample_id) > 0; }

  std::optional<std::size_t> index_of(const std::string& sample_id) const {
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      if (samples_[i].sample_id == sample_id) return i;
    }
    return std::nullopt;
  }

  std::vector<double> weights() const {
    std::vector<double> w;
    w.reserve(samples_.size());
    for (const auto& s : samples_) w.push_back(s.weight);
    return w;
  }

  void set_weights(const std::vector<double>& w) {
    if (w.size() != samples_.size()) {
      throw InvariantError("weight vector size " + std::to_string(w.size()) +
                           " does not match dataset size " + std::to_string(samples_.size()));
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] < 0.0) throw InvariantError("negative weight for sample '" + samples_[i].sample_id + "'");
      samples_[i].weight = w[i];
    }
  }

  // The generators may repeat themselves; duplicates are kept, only counted.
  std::size_t duplicate_text_count() const {
    std::unordered_set<std::string> seen;
    std::size_t dup = 0;
    for (const auto& s : samples_) {
      if (!seen.insert(s.text).second) ++dup;
    }
    return dup;
  }

 private:
  LabelSchema schema_;
  std::vector<Sample> samples_;
  std::unordered_set<std::string> ids_;
  std::unordered_map<std::string, std::vector<std::size_t>> provenance_;
  std::vector<std::string> plm_order_;
};

namespace detail {

inline void require_same_schema(const LabelSchema& a, const LabelSchema& b) {
  if (a.task_name != b.task_name) {
    throw DataError("schema mismatch: task_name ('" + a.task_name + "' vs '" + b.task_name + "')");
  }
  if (a.classes.size() != b.classes.size()) {
    throw DataError("schema mismatch: class count (" + std::to_string(a.classes.size()) + " vs " +
                    std::to_string(b.classes.size()) + ")");
  }
  for (std::size_t i = 0; i < a.classes.size(); ++i) {
    if (a.classes[i].class_key != b.classes[i].class_key) {
      throw DataError("schema mismatch: class_key at position " + std::to_string(i) + " ('" +
                      a.classes[i].class_key + "' vs '" + b.classes[i].class_key + "')");
    }
    if (a.classes[i].prompt_surface != b.classes[i].prompt_surface) {
      throw DataError("schema mismatch: prompt_surface at position " + std::to_string(i) + " ('" +
                      a.classes[i].prompt_surface + "' vs '" + b.classes[i].prompt_surface + "')");
    }
  }
}

}  // namespace detail

// Union of per-plm datasets. Dataset order, then internal order; provenance
// survives the merge. Storage order carries no training semantics (the
// training loop shuffles with the run seed).
inline SyntheticDataset merge(const std::vector<SyntheticDataset>& datasets) {
  if (datasets.empty()) {
    throw DataError("merge of zero datasets");
  }
  for (const auto& d : datasets) detail::require_same_schema(datasets.front().schema(), d.schema());
  SyntheticDataset out(datasets.front().schema());
  for (const auto& d : datasets) {
    for (const auto& s : d.samples()) out.add(s);
  }
  return out;
}

// --- JSONL persistence -----------------------------------------------------
//
// One sample per line: {"sample_id", "plm_id", "round_index", "text",
// "label_key", "weight"}. Serialization is canonical so identical datasets
// produce byte-identical files.

inline void save_jsonl(const SyntheticDataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  for (const auto& s : dataset.samples()) {
    ordered_json line;
    line["sample_id"] = s.sample_id;
    line["plm_id"] = s.plm_id;
    line["round_index"] = s.round_index;
    line["text"] = s.text;
    line["label_key"] = dataset.schema().class_at(s.label).class_key;
    line["weight"] = s.weight;
    out << line.dump() << "\n";
  }
  if (!out) throw ConfigError("write to '" + path + "' failed");
}

inline SyntheticDataset load_jsonl(const std::string& path, const LabelSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "' for reading");
  SyntheticDataset dataset(schema);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed JSONL line: " + e.what());
    }
    Sample s;
    try {
      s.sample_id = j.at("sample_id").get<std::string>();
      s.plm_id = j.at("plm_id").get<std::string>();
      s.round_index = j.at("round_index").get<int>();
      s.text = j.at("text").get<std::string>();
      const auto key = j.at("label_key").get<std::string>();
      s.label = schema.class_id_for(key);
      s.weight = j.value("weight", kInitialSampleWeight);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed sample record: " + e.what());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      dataset.add(std::move(s));
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return dataset;
}

// --- Run manifest ------------------------------------------------------------

struct RoundRecord {
  int round_index = 0;
  std::map<std::string, std::size_t> per_plm_counts;
  std::vector<std::string> selected_ids;
  std::map<std::string, double> metrics;
};

// Append-only record of one run. Replaying the recorded config digest + seed
// with mock backends reproduces identical sample_ids.
struct RunManifest {
  std::string run_id;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::vector<RoundRecord> rounds;
  std::vector<std::string> warnings;
  std::size_t duplicate_texts = 0;
  std::size_t backend_requests = 0;
  std::map<std::string, std::size_t> cartography_histogram;

  void append_round(RoundRecord record) { rounds.push_back(std::move(record)); }
  void warn(std::string message) { warnings.push_back(std::move(message)); }

  ordered_json to_json() const {
    ordered_json j;
    j["run_id"] = run_id;
    j["config_digest"] = config_digest;
    j["seed"] = seed;
    j["duplicate_texts"] = duplicate_texts;
    j["backend_requests"] = backend_requests;
    j["cartography_histogram"] = cartography_histogram;
    j["warnings"] = warnings;
    j["rounds"] = ordered_json::array();
    for (const auto& r : rounds) {
      ordered_json rj;
      rj["round_index"] = r.round_index;
      rj["per_plm_counts"] = r.per_plm_counts;
      rj["selected_ids"] = r.selected_ids;
      rj["metrics"] = r.metrics;
      j["rounds"].push_back(std::move(rj));
    }
    return j;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out << to_json().dump(2) << "\n";
  }
};

}  // namespace fusegen
