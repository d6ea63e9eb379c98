#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "fusegen/backends.hpp"
#include "fusegen/core.hpp"
#include "fusegen/error.hpp"
#include "fusegen/orchestrator.hpp"

namespace fusegen {

// Human-annotated examples used only for evaluation, never for training.
struct TestSet {
  LabelSchema schema;
  std::vector<LabeledExample> examples;
  std::string source_name;

  std::size_t size() const { return examples.size(); }
};

namespace detail {

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace detail

// TSV ("text<TAB>label_key") or JSONL ({"text","label_key"}), schema-checked
// line by line.
inline TestSet load_testset(const std::string& path, const LabelSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open test set '" + path + "'");
  TestSet set;
  set.schema = schema;
  set.source_name = std::filesystem::path(path).filename().string();
  const bool jsonl = detail::ends_with(path, ".jsonl") || detail::ends_with(path, ".json");

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string text, label_key;
    if (jsonl) {
      try {
        auto j = ordered_json::parse(line);
        text = j.at("text").get<std::string>();
        label_key = j.at("label_key").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ":" + std::to_string(line_no) + ": malformed test record: " + e.what());
      }
    } else {
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw DataError(path + ":" + std::to_string(line_no) + ": expected text<TAB>label_key");
      }
      text = line.substr(0, tab);
      label_key = line.substr(tab + 1);
    }
    if (text.empty()) {
      throw DataError(path + ":" + std::to_string(line_no) + ": empty text");
    }
    try {
      set.examples.push_back({std::move(text), schema.class_id_for(label_key)});
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (set.examples.empty()) throw DataError("test set '" + path + "' is empty");
  return set;
}

inline void save_testset_tsv(const std::vector<LabeledExample>& examples, const LabelSchema& schema,
                             const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  for (const auto& ex : examples) {
    out << ex.text << "\t" << schema.class_at(ex.label).class_key << "\n";
  }
}

// Balanced held-out set drawn from every mock backend's full vocabulary.
inline std::vector<LabeledExample> make_mock_testset(const std::vector<BackendSpec>& backends,
                                                     const LabelSchema& schema, std::size_t per_class_per_plm,
                                                     std::uint64_t seed) {
  std::vector<LabeledExample> out;
  for (const auto& spec : backends) {
    if (spec.descriptor.kind != BackendKind::mock) continue;
    MockProfile profile = spec.mock ? *spec.mock
                                    : make_biased_mock_profile(spec.descriptor.plm_id, schema, 0.0, 0.0, 0);
    auto examples = mock_gold_examples(profile, schema, per_class_per_plm,
                                       hash_combine(seed, fnv1a64(spec.descriptor.plm_id)));
    out.insert(out.end(), examples.begin(), examples.end());
  }
  if (out.empty()) throw ConfigError("make_mock_testset: no mock backends to draw from");
  return out;
}

// --- Ablation matrix ------------------------------------------------------------

struct AblationCell {
  std::uint64_t seed = 0;
  std::map<std::string, double> backend_accuracy;
  double final_accuracy = 0.0;
};

struct AblationRow {
  RunMode mode = RunMode::fusegen;
  std::vector<AblationCell> per_seed;
  double mean_final = 0.0;
  std::map<std::string, double> mean_backend;
};

struct AblationTable {
  std::vector<std::string> backend_order;
  std::vector<AblationRow> rows;

  std::string to_csv() const {
    std::string out = "mode,seed";
    for (const auto& plm : backend_order) out += ",m_" + plm;
    out += ",m_fused\n";
    char buffer[48];
    auto append_acc = [&](double v) {
      std::snprintf(buffer, sizeof(buffer), ",%.6f", v);
      out += buffer;
    };
    for (const auto& row : rows) {
      for (const auto& cell : row.per_seed) {
        out += to_string(row.mode);
        out += "," + std::to_string(cell.seed);
        for (const auto& plm : backend_order) {
          append_acc(cell.backend_accuracy.count(plm) ? cell.backend_accuracy.at(plm) : 0.0);
        }
        append_acc(cell.final_accuracy);
        out += "\n";
      }
      out += to_string(row.mode);
      out += ",mean";
      for (const auto& plm : backend_order) append_acc(row.mean_backend.count(plm) ? row.mean_backend.at(plm) : 0.0);
      append_acc(row.mean_final);
      out += "\n";
    }
    return out;
  }

  std::string to_text() const {
    std::string out;
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%-16s", "mode");
    out += buffer;
    for (const auto& plm : backend_order) {
      std::snprintf(buffer, sizeof(buffer), "%12s", ("m_" + plm).c_str());
      out += buffer;
    }
    std::snprintf(buffer, sizeof(buffer), "%12s", "m_fused");
    out += buffer;
    out += "\n";
    for (const auto& row : rows) {
      std::snprintf(buffer, sizeof(buffer), "%-16s", to_string(row.mode));
      out += buffer;
      for (const auto& plm : backend_order) {
        std::snprintf(buffer, sizeof(buffer), "%12.4f", row.mean_backend.count(plm) ? row.mean_backend.at(plm) : 0.0);
        out += buffer;
      }
      std::snprintf(buffer, sizeof(buffer), "%12.4f", row.mean_final);
      out += buffer;
      out += "\n";
    }
    return out;
  }
};

struct AblationResult {
  AblationTable table;
  std::map<std::string, FusegenReport> reports;  // keyed by mode name
};

// Runs every mode over the same seed set, backends and budget, and collects
// the Table-4-shaped comparison.
inline AblationResult run_ablation_matrix(const RunConfig& base, const std::vector<RunMode>& modes,
                                          const TaskSpec& task, const std::vector<LabeledExample>& testset,
                                          const std::string& workdir) {
  if (modes.empty()) throw ConfigError("ablation matrix needs at least one mode");
  AblationResult result;
  for (const auto& spec : base.backends) result.table.backend_order.push_back(spec.descriptor.plm_id);

  for (RunMode mode : modes) {
    RunConfig config = base;
    config.mode = mode;
    config.output_dir = (std::filesystem::path(workdir) / to_string(mode)).string();
    Orchestrator orchestrator(config, task, testset);
    auto report = orchestrator.run_all();

    AblationRow row;
    row.mode = mode;
    for (const auto& seed_result : report.per_seed) {
      row.per_seed.push_back({seed_result.seed, seed_result.backend_accuracy, seed_result.final_accuracy});
    }
    row.mean_final = report.mean_final_accuracy;
    row.mean_backend = report.mean_backend_accuracy;
    result.table.rows.push_back(std::move(row));
    result.reports.emplace(to_string(mode), std::move(report));
  }
  return result;
}

}  // namespace fusegen
