#pragma once

#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fusegen/backends.hpp"
#include "fusegen/cartography.hpp"
#include "fusegen/core.hpp"
#include "fusegen/error.hpp"
#include "fusegen/prompts.hpp"
#include "fusegen/selection.hpp"
#include "fusegen/stm.hpp"
#include "fusegen/swa.hpp"

namespace fusegen {

// --- Run configuration ------------------------------------------------------------

enum class RunMode { fusegen, no_swa, zerogen_mixed, sdg_mixed, single_plm };

inline const char* to_string(RunMode mode) {
  switch (mode) {
    case RunMode::fusegen: return "fusegen";
    case RunMode::no_swa: return "no_swa";
    case RunMode::zerogen_mixed: return "zerogen_mixed";
    case RunMode::sdg_mixed: return "sdg_mixed";
    case RunMode::single_plm: return "single_plm";
  }
  return "unknown";
}

inline RunMode run_mode_from_string(const std::string& s) {
  if (s == "fusegen") return RunMode::fusegen;
  if (s == "no_swa") return RunMode::no_swa;
  if (s == "zerogen_mixed") return RunMode::zerogen_mixed;
  if (s == "sdg_mixed") return RunMode::sdg_mixed;
  if (s == "single_plm") return RunMode::single_plm;
  throw ConfigError("unknown mode '" + s +
                    "' (expected fusegen, no_swa, zerogen_mixed, sdg_mixed or single_plm)");
}

struct BackendSpec {
  BackendDescriptor descriptor;
  std::optional<MockProfile> mock;
};

struct RunConfig {
  std::string task_name;
  std::string template_path;
  std::vector<BackendSpec> backends;
  std::size_t n_per_plm = 1000;  // N
  int j_steps = 4;               // J
  SelectionConfig selection;
  SwaConfig swa;
  TrainingConfig training;
  FeaturizerConfig featurizer;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::string testset_path;
  std::string corpus_path;
  std::string output_dir;
  RunMode mode = RunMode::fusegen;

  std::size_t k_backends() const { return backends.size(); }

  std::vector<std::string> validation_errors() const {
    std::vector<std::string> errors;
    auto guard = [&](auto&& fn) {
      try {
        fn();
      } catch (const Error& e) {
        errors.emplace_back(e.what());
      }
    };
    if (task_name.empty()) errors.emplace_back("task name must be set");
    if (template_path.empty()) errors.emplace_back("template_path must be set");
    if (backends.empty()) errors.emplace_back("at least one backend is required");
    std::unordered_set<std::string> plm_ids;
    for (const auto& b : backends) {
      guard([&] { b.descriptor.validate(); });
      if (!plm_ids.insert(b.descriptor.plm_id).second) {
        errors.emplace_back("duplicate plm_id '" + b.descriptor.plm_id + "'");
      }
    }
    if (mode == RunMode::fusegen || mode == RunMode::no_swa) {
      if (backends.size() < 2) {
        errors.emplace_back(std::string(to_string(mode)) +
                            " mode needs K >= 2 backends (cross-model variability)");
      }
    }
    if (mode == RunMode::single_plm && backends.size() != 1) {
      errors.emplace_back("single_plm mode needs exactly one backend");
    }
    if (n_per_plm == 0) errors.emplace_back("n_per_plm must be positive");
    if (j_steps < 0) errors.emplace_back("j_steps must be >= 0");
    if (mode != RunMode::zerogen_mixed && n_per_plm < static_cast<std::size_t>(j_steps) + 1) {
      errors.emplace_back("n_per_plm must be >= j_steps + 1 so every round generates something");
    }
    if (seeds.empty()) errors.emplace_back("at least one seed is required");
    guard([&] { selection.validate(); });
    guard([&] { swa.validate(); });
    guard([&] { training.validate(); });
    guard([&] { featurizer.validate(); });
    return errors;
  }

  void validate() const {
    auto errors = validation_errors();
    if (!errors.empty()) {
      std::string all = "invalid run configuration:";
      for (const auto& e : errors) all += "\n  - " + e;
      throw ConfigError(all);
    }
  }
};

// Per-round generation quota: base = floor(N / (J+1)); the first N mod (J+1)
// rounds carry one extra so the quotas sum to N exactly.
inline std::size_t round_quota(std::size_t n, int j_steps, int round) {
  if (round < 0 || round > j_steps) throw InvariantError("round index outside 0..J");
  const std::size_t rounds = static_cast<std::size_t>(j_steps) + 1;
  const std::size_t base = n / rounds;
  const std::size_t remainder = n % rounds;
  return base + (static_cast<std::size_t>(round) < remainder ? 1 : 0);
}

// --- Run directory layout ------------------------------------------------------------

struct RunPaths {
  std::filesystem::path root;

  explicit RunPaths(std::filesystem::path dir) : root(std::move(dir)) {}

  std::filesystem::path config() const { return root / "config.json"; }
  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path merged() const { return root / "merged.jsonl"; }
  std::filesystem::path model() const { return root / "model.bin"; }
  std::filesystem::path weight_trace() const { return root / "weight_trace.csv"; }
  std::filesystem::path cartography() const { return root / "cartography.csv"; }
  std::filesystem::path dynamics() const { return root / "dynamics.json"; }
  std::filesystem::path report() const { return root / "report.json"; }
  std::filesystem::path round_dir(int round) const {
    return root / "rounds" / ("round_" + std::to_string(round));
  }
  std::filesystem::path generation(int round, const std::string& plm) const {
    return round_dir(round) / ("gen_" + plm + ".jsonl");
  }
  std::filesystem::path selection(int round) const { return round_dir(round) / "selection.json"; }
};

// --- Results ------------------------------------------------------------------------

struct SeedRunResult {
  std::uint64_t seed = 0;
  std::map<std::string, double> backend_accuracy;  // final-round m_k on the test set
  double fused_pre_swa_accuracy = 0.0;             // plain m-tilde on merged D
  double final_accuracy = 0.0;                     // the run's final model
  std::vector<SelectionReport> selections;
  RunManifest manifest;
  SyntheticDataset merged;  // weights reflect the final state
  CategoryHistogram cartography;
  std::string run_dir;

  ordered_json to_json() const {
    ordered_json j;
    j["seed"] = seed;
    j["backend_accuracy"] = backend_accuracy;
    j["fused_pre_swa_accuracy"] = fused_pre_swa_accuracy;
    j["final_accuracy"] = final_accuracy;
    j["cartography_histogram"] = cartography;
    return j;
  }
};

struct FusegenReport {
  RunMode mode = RunMode::fusegen;
  std::string task_name;
  std::vector<SeedRunResult> per_seed;
  double mean_final_accuracy = 0.0;
  std::map<std::string, double> mean_backend_accuracy;

  void finalize() {
    if (per_seed.empty()) return;
    mean_final_accuracy = 0.0;
    mean_backend_accuracy.clear();
    for (const auto& r : per_seed) {
      mean_final_accuracy += r.final_accuracy;
      for (const auto& [plm, acc] : r.backend_accuracy) mean_backend_accuracy[plm] += acc;
    }
    mean_final_accuracy /= static_cast<double>(per_seed.size());
    for (auto& [plm, acc] : mean_backend_accuracy) acc /= static_cast<double>(per_seed.size());
  }

  ordered_json to_json() const {
    ordered_json j;
    j["mode"] = to_string(mode);
    j["task"] = task_name;
    j["per_seed"] = ordered_json::array();
    for (const auto& r : per_seed) j["per_seed"].push_back(r.to_json());
    j["mean_final_accuracy"] = mean_final_accuracy;
    j["mean_backend_accuracy"] = mean_backend_accuracy;
    return j;
  }

  // Accuracy table: one row per seed plus the mean, columns per backend model
  // and the fused model.
  std::string to_text() const {
    std::vector<std::string> backends;
    if (!per_seed.empty()) {
      for (const auto& [plm, acc] : per_seed.front().backend_accuracy) backends.push_back(plm);
    }
    std::string out = "task: " + task_name + "  mode: " + to_string(mode) + "\n";
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%-8s", "seed");
    out += buffer;
    for (const auto& plm : backends) {
      std::snprintf(buffer, sizeof(buffer), "%14s", ("m_" + plm).c_str());
      out += buffer;
    }
    std::snprintf(buffer, sizeof(buffer), "%14s%14s\n", "m_fused_pre", "final");
    out += buffer;
    for (const auto& r : per_seed) {
      std::snprintf(buffer, sizeof(buffer), "%-8llu", static_cast<unsigned long long>(r.seed));
      out += buffer;
      for (const auto& plm : backends) {
        std::snprintf(buffer, sizeof(buffer), "%14.4f", r.backend_accuracy.at(plm));
        out += buffer;
      }
      std::snprintf(buffer, sizeof(buffer), "%14.4f%14.4f\n", r.fused_pre_swa_accuracy, r.final_accuracy);
      out += buffer;
    }
    std::snprintf(buffer, sizeof(buffer), "%-8s", "mean");
    out += buffer;
    for (const auto& plm : backends) {
      std::snprintf(buffer, sizeof(buffer), "%14.4f", mean_backend_accuracy.at(plm));
      out += buffer;
    }
    std::snprintf(buffer, sizeof(buffer), "%14s%14.4f\n", "", mean_final_accuracy);
    out += buffer;
    return out;
  }
};

// --- Persistence helpers ----------------------------------------------------------------

inline void save_dynamics(const TrainingDynamics& dynamics, const std::string& path) {
  ordered_json j;
  j["sample_ids"] = dynamics.sample_ids;
  j["label_prob"] = dynamics.label_prob;
  j["correct"] = dynamics.correct;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  out << j.dump() << "\n";
}

inline TrainingDynamics load_dynamics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dynamics file '" + path + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
    TrainingDynamics d;
    d.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
    d.label_prob = j.at("label_prob").get<std::vector<std::vector<double>>>();
    d.correct = j.at("correct").get<std::vector<std::vector<std::uint8_t>>>();
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("dynamics file '" + path + "': " + e.what());
  }
}

// --- Orchestrator --------------------------------------------------------------------------

// Drives one configuration end to end: J+1 generation rounds with per-PLM
// parallel generation, per-PLM and fused STM training, cross-model selection
// of the in-context set, then the final (optionally weight-adjusted)
// training. Every (round, backend) generation is checkpointed; re-running a
// directory resumes instead of regenerating.
class Orchestrator {
 public:
  Orchestrator(RunConfig config, TaskSpec task, std::vector<LabeledExample> testset)
      : config_(std::move(config)), task_(std::move(task)), testset_(std::move(testset)) {
    config_.validate();
    if (config_.mode == RunMode::zerogen_mixed && config_.j_steps != 0) {
      forced_zero_j_ = true;
    }
    if (task_.schema.task_name != config_.task_name) {
      throw ConfigError("config task '" + config_.task_name + "' does not match template task '" +
                        task_.schema.task_name + "'");
    }
    if (!config_.corpus_path.empty()) {
      corpus_ = CorpusSource(config_.corpus_path, fnv1a64(config_.task_name));
    }
  }

  const RunConfig& config() const { return config_; }

  SeedRunResult run_seed(std::uint64_t seed, const std::string& run_dir) {
    namespace fs = std::filesystem;
    const int j_steps = effective_j_steps();
    fs::create_directories(run_dir);

    SeedRunResult result;
    result.seed = seed;
    result.run_dir = run_dir;
    RunPaths paths{fs::path(run_dir)};

    result.manifest.seed = seed;
    result.manifest.config_digest = config_digest();
    result.manifest.run_id = config_.task_name + "_" + to_string(config_.mode) + "_" +
                             std::to_string(seed) + "_" + result.manifest.config_digest;
    if (forced_zero_j_) {
      result.manifest.warn("mode zerogen_mixed forces j_steps=0 (configured " +
                           std::to_string(config_.j_steps) + ")");
    }
    write_config_snapshot(paths.config().string());

    TrainingConfig training = config_.training;
    training.shuffle_seed = seed;

    // backends are rebuilt per seed so mock streams depend on the run seed
    std::vector<std::unique_ptr<TextBackend>> backends;
    for (const auto& spec : config_.backends) {
      backends.push_back(make_backend(spec.descriptor, task_.schema, spec.mock, seed));
    }

    std::vector<SyntheticDataset> accumulated(backends.size(), SyntheticDataset(task_.schema));
    std::vector<std::size_t> class_cursor(backends.size(), 0);
    // current D-hat per backend; identical across backends except in sdg mode
    std::map<std::string, std::vector<Sample>> incontext_by_plm;

    StmModel fused_model;
    TrainingDynamics fused_dynamics;
    std::vector<StmModel> backend_models;

    for (int round = 0; round <= j_steps; ++round) {
      fs::create_directories(paths.round_dir(round));
      const std::size_t quota = round_quota(config_.n_per_plm, j_steps, round);

      // fan out generation across backends; join in backend order
      std::vector<std::future<SyntheticDataset>> futures;
      for (std::size_t k = 0; k < backends.size(); ++k) {
        const std::vector<Sample>* incontext = &kNoIncontext;
        auto it = incontext_by_plm.find(backends[k]->plm_id());
        if (it != incontext_by_plm.end()) incontext = &it->second;
        futures.push_back(std::async(std::launch::async, [&, k, round, quota, incontext] {
          return generate_round(*backends[k], round, quota, class_cursor[k], *incontext,
                                paths.generation(round, backends[k]->plm_id()).string(), seed);
        }));
      }
      RoundRecord record;
      record.round_index = round;
      for (std::size_t k = 0; k < backends.size(); ++k) {
        SyntheticDataset batch = futures[k].get();
        record.per_plm_counts[backends[k]->plm_id()] = batch.size();
        class_cursor[k] += batch.size();
        for (const auto& s : batch.samples()) accumulated[k].add(s);
      }

      // fresh per-PLM models on the accumulated D_k, fused model on the union
      backend_models.clear();
      for (std::size_t k = 0; k < backends.size(); ++k) {
        auto trained = train(accumulated[k], std::vector<double>(accumulated[k].size(), kInitialSampleWeight), training,
                             config_.featurizer);
        backend_models.push_back(std::move(trained.model));
      }
      SyntheticDataset merged = merge(accumulated);
      auto fused = train(merged, std::vector<double>(merged.size(), kInitialSampleWeight), training, config_.featurizer);
      fused_model = std::move(fused.model);
      fused_dynamics = std::move(fused.dynamics);

      if (!testset_.empty()) {
        for (std::size_t k = 0; k < backends.size(); ++k) {
          record.metrics["m_" + backends[k]->plm_id() + "_test_accuracy"] =
              evaluate(backend_models[k], testset_);
        }
        record.metrics["m_fused_test_accuracy"] = evaluate(fused_model, testset_);
      }

      if (config_.mode != RunMode::zerogen_mixed) {
        incontext_by_plm = run_selection(merged, backend_models, fused_model, round, seed, result, paths);
        std::unordered_set<std::string> seen;
        for (const auto& [plm, samples] : incontext_by_plm) {
          for (const auto& s : samples) {
            if (seen.insert(s.sample_id).second) record.selected_ids.push_back(s.sample_id);
          }
        }
      }
      result.manifest.append_round(std::move(record));
      result.manifest.save(paths.manifest().string());
    }

    SyntheticDataset merged = merge(accumulated);
    result.manifest.duplicate_texts = merged.duplicate_text_count();
    for (const auto& b : backends) result.manifest.backend_requests += b->request_count();

    if (!testset_.empty()) {
      for (std::size_t k = 0; k < backends.size(); ++k) {
        result.backend_accuracy[backends[k]->plm_id()] = evaluate(backend_models[k], testset_);
      }
      result.fused_pre_swa_accuracy = evaluate(fused_model, testset_);
    }

    StmModel final_model = std::move(fused_model);
    TrainingDynamics final_dynamics = std::move(fused_dynamics);
    if (config_.mode == RunMode::fusegen || config_.mode == RunMode::single_plm) {
      auto swa = swa_train(merged, training, config_.swa, config_.featurizer,
                           testset_.empty() ? nullptr : &testset_);
      merged.set_weights(swa.final_state.w);
      export_weight_trace(swa, merged, paths.weight_trace().string());
      final_model = std::move(swa.model);
      final_dynamics = std::move(swa.final_dynamics);
    }

    if (!testset_.empty()) result.final_accuracy = evaluate(final_model, testset_);

    save_model(final_model, paths.model().string());
    save_jsonl(merged, paths.merged().string());
    save_dynamics(final_dynamics, paths.dynamics().string());
    result.cartography = export_plot_data(compute_cartography(final_dynamics), paths.cartography().string());
    result.manifest.cartography_histogram = result.cartography;

    result.merged = std::move(merged);
    result.manifest.save(paths.manifest().string());
    {
      std::ofstream out(paths.report().string(), std::ios::binary);
      out << result.to_json().dump(2) << "\n";
    }
    return result;
  }

  FusegenReport run_all() {
    FusegenReport report;
    report.mode = config_.mode;
    report.task_name = config_.task_name;
    for (std::uint64_t seed : config_.seeds) {
      const std::string dir =
          (std::filesystem::path(config_.output_dir) / ("seed_" + std::to_string(seed))).string();
      report.per_seed.push_back(run_seed(seed, dir));
    }
    report.finalize();
    return report;
  }

  std::string config_digest() const {
    return hex_digest(fnv1a64(config_snapshot_json().dump()));
  }

 private:
  int effective_j_steps() const { return config_.mode == RunMode::zerogen_mixed ? 0 : config_.j_steps; }

  ordered_json config_snapshot_json() const {
    ordered_json j;
    j["task"] = config_.task_name;
    j["template_path"] = config_.template_path;
    j["mode"] = to_string(config_.mode);
    j["n_per_plm"] = config_.n_per_plm;
    j["j_steps"] = config_.j_steps;
    j["alpha"] = config_.selection.alpha;
    j["r_candidates"] = config_.selection.r_candidates;
    j["s_incontext"] = config_.selection.s_incontext;
    j["e1_weight_epochs"] = config_.swa.weight_epochs;
    j["e2_train_epochs"] = config_.training.epochs;
    j["learning_rate"] = config_.training.learning_rate;
    j["swa_sign_mode"] = to_string(config_.swa.sign_mode);
    j["backends"] = ordered_json::array();
    for (const auto& b : config_.backends) {
      ordered_json bj;
      bj["plm_id"] = b.descriptor.plm_id;
      bj["kind"] = b.descriptor.kind == BackendKind::mock ? "mock" : "http";
      if (b.descriptor.kind == BackendKind::http) {
        bj["endpoint"] = b.descriptor.endpoint;
        bj["model_name"] = b.descriptor.model_name;
      }
      j["backends"].push_back(std::move(bj));
    }
    return j;
  }

  void write_config_snapshot(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out << config_snapshot_json().dump(2) << "\n";
  }

  // One backend's share of one round. Loads the checkpoint when it already
  // exists so interrupted runs resume without regenerating paid samples.
  SyntheticDataset generate_round(TextBackend& backend, int round, std::size_t quota,
                                  std::size_t cursor, const std::vector<Sample>& incontext,
                                  const std::string& checkpoint_path, std::uint64_t seed) {
    if (std::filesystem::exists(checkpoint_path)) {
      return load_jsonl(checkpoint_path, task_.schema);
    }
    const int num_classes = task_.schema.num_classes();
    std::vector<std::size_t> per_class(static_cast<std::size_t>(num_classes), 0);
    for (std::size_t i = 0; i < quota; ++i) {
      ++per_class[(cursor + i) % static_cast<std::size_t>(num_classes)];
    }

    std::optional<CorpusSource::RoundSampler> contexts;
    if (corpus_) {
      contexts.emplace(corpus_->sampler_seeded(hash_combine(
          hash_combine(seed, static_cast<std::uint64_t>(round)), fnv1a64(backend.plm_id()))));
    }

    SyntheticDataset batch(task_.schema);
    std::size_t ordinal = 0;
    for (int cls = 0; cls < num_classes; ++cls) {
      const std::size_t count = per_class[static_cast<std::size_t>(cls)];
      if (count == 0) continue;
      const auto& label = task_.schema.class_at(cls);
      std::vector<std::string> texts;
      if (contexts) {
        // premise-conditioned tasks re-sample a fresh context per generation
        texts.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
          auto prompt = render_prompt(label, round, incontext, contexts->next());
          auto one = backend.generate(prompt.text, 1);
          texts.push_back(std::move(one.front()));
        }
      } else {
        auto prompt = render_prompt(label, round, incontext, std::nullopt);
        texts = backend.generate(prompt.text, count);
      }
      for (auto& text : texts) {
        Sample s;
        s.sample_id = make_sample_id(backend.plm_id(), round, ordinal++);
        s.plm_id = backend.plm_id();
        s.round_index = round;
        s.text = std::move(text);
        s.label = cls;
        s.weight = kInitialSampleWeight;
        batch.add(std::move(s));
      }
    }
    save_jsonl(batch, checkpoint_path);
    return batch;
  }

  RenderedPrompt render_prompt(const LabelClass& label, int round, const std::vector<Sample>& incontext,
                               std::optional<std::string> context) {
    if (round == 0 || incontext.empty()) {
      return render_zero_shot(task_.prompt, label, context);
    }
    return render_few_shot(task_.prompt, incontext, label, context);
  }

  // The per-round quality-evaluation step, dispatching on mode. Returns the
  // in-context set each backend will see next round.
  std::map<std::string, std::vector<Sample>> run_selection(const SyntheticDataset& merged,
                                                           const std::vector<StmModel>& backend_models,
                                                           const StmModel& fused_model, int round,
                                                           std::uint64_t seed, SeedRunResult& result,
                                                           const RunPaths& paths) {
    std::map<std::string, std::vector<Sample>> by_plm;
    if (config_.mode == RunMode::sdg_mixed) {
      // self-guided: each PLM ranks random candidates from its own data under
      // its own model and feeds only itself
      SelectionReport combined;
      combined.round_index = round;
      for (std::size_t k = 0; k < backend_models.size(); ++k) {
        const auto& plm = config_.backends[k].descriptor.plm_id;
        SyntheticDataset own = merged.partition(plm);
        auto matrix = build_probability_matrix({&backend_models[k]}, own);
        SplitMix64 rng(hash_combine(hash_combine(seed, fnv1a64(plm)),
                                    static_cast<std::uint64_t>(round) + 0xc0ffeeull));
        auto selection = select_incontext(own, matrix, backend_models[k], config_.selection,
                                          /*random_candidates=*/true, rng, round);
        combined.candidates.insert(combined.candidates.end(), selection.report.candidates.begin(),
                                   selection.report.candidates.end());
        combined.selected.insert(combined.selected.end(), selection.report.selected.begin(),
                                 selection.report.selected.end());
        combined.reference_size += selection.report.reference_size;
        for (const auto& w : selection.report.warnings) result.manifest.warn(w);
        by_plm[plm] = std::move(selection.incontext);
      }
      write_selection_report(combined, paths.selection(round).string());
      result.selections.push_back(std::move(combined));
      return by_plm;
    }

    std::vector<const StmModel*> scorers;
    for (const auto& m : backend_models) scorers.push_back(&m);
    auto matrix = build_probability_matrix(scorers, merged);
    const bool random_candidates =
        config_.mode == RunMode::single_plm || backend_models.size() < 2;
    SplitMix64 rng(hash_combine(seed, static_cast<std::uint64_t>(round) + 0xc0ffeeull));
    auto selection = select_incontext(merged, matrix, fused_model, config_.selection,
                                      random_candidates, rng, round);
    for (const auto& w : selection.report.warnings) result.manifest.warn(w);
    write_selection_report(selection.report, paths.selection(round).string());
    for (const auto& b : config_.backends) by_plm[b.descriptor.plm_id] = selection.incontext;
    result.selections.push_back(std::move(selection.report));
    return by_plm;
  }

  static void write_selection_report(const SelectionReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open '" + path + "' for writing");
    out << report.to_json().dump(2) << "\n";
  }

  static inline const std::vector<Sample> kNoIncontext{};

  RunConfig config_;
  TaskSpec task_;
  std::vector<LabeledExample> testset_;
  std::optional<CorpusSource> corpus_;
  bool forced_zero_j_ = false;
};

}  // namespace fusegen
