#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fusegen/cli_config.hpp"
#include "fusegen/evalharness.hpp"

namespace fs = std::filesystem;
using namespace fusegen;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;
constexpr int kExitInternal = 4;

bool g_quiet = false;

void say(const std::string& message) {
  if (!g_quiet) std::cout << message << "\n";
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y%m%d_%H%M%S", &tm);
  return buffer;
}

std::vector<LabeledExample> resolve_testset(const CliConfig& config, const TaskSpec& task) {
  if (!config.run.testset_path.empty()) {
    return load_testset(config.run.testset_path, task.schema).examples;
  }
  if (config.mock_testset_per_class > 0) {
    return make_mock_testset(config.run.backends, task.schema, config.mock_testset_per_class,
                             fnv1a64(config.run.task_name));
  }
  return {};
}

std::string run_root_name(const RunConfig& run) {
  std::string seeds;
  for (auto s : run.seeds) seeds += (seeds.empty() ? "" : "-") + std::to_string(s);
  return run.task_name + "_" + to_string(run.mode) + "_" + seeds + "_" + timestamp();
}

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides,
            std::optional<std::uint64_t> seed, const std::string& resume_dir) {
  auto config = load_cli_config(config_path, overrides);
  if (seed) config.run.seeds = {*seed};
  auto task = load_task_file(config.run.template_path);
  auto testset = resolve_testset(config, task);
  if (testset.empty()) {
    say("note: no test set configured; accuracy fields will read 0");
  }

  // --resume reuses an existing run root so completed (round, backend)
  // checkpoints are loaded instead of regenerated
  const fs::path root = resume_dir.empty()
                            ? fs::path(config.run.output_dir) / run_root_name(config.run)
                            : fs::path(resume_dir);
  config.run.output_dir = root.string();
  Orchestrator orchestrator(config.run, task, testset);
  auto report = orchestrator.run_all();

  fs::create_directories(root);
  {
    std::ofstream out(root / "report.json", std::ios::binary);
    out << report.to_json().dump(2) << "\n";
  }
  {
    std::ofstream out(root / "report.txt", std::ios::binary);
    out << report.to_text();
  }
  say(report.to_text());
  std::cout << (root / "report.json").string() << "\n";
  return kExitOk;
}

int cmd_validate(const std::string& config_path, const std::vector<std::string>& overrides) {
  load_cli_config(config_path, overrides);
  say("configuration OK");
  return kExitOk;
}

int cmd_swa(const std::string& config_path, const std::vector<std::string>& overrides,
            const std::string& run_dir) {
  auto config = load_cli_config(config_path, overrides);
  auto task = load_task_file(config.run.template_path);
  auto testset = resolve_testset(config, task);

  RunPaths paths{fs::path(run_dir)};
  auto merged = load_jsonl(paths.merged().string(), task.schema);
  TrainingConfig training = config.run.training;
  training.shuffle_seed = config.run.seeds.front();
  // prefer the seed the run was produced with
  if (std::ifstream manifest_in{paths.manifest().string()}) {
    try {
      training.shuffle_seed = ordered_json::parse(manifest_in).value("seed", training.shuffle_seed);
    } catch (const nlohmann::json::exception&) {
    }
  }

  auto result = swa_train(merged, training, config.run.swa, config.run.featurizer,
                          testset.empty() ? nullptr : &testset);
  merged.set_weights(result.final_state.w);
  save_jsonl(merged, paths.merged().string());
  export_weight_trace(result, merged, paths.weight_trace().string());
  save_dynamics(result.final_dynamics, paths.dynamics().string());
  export_plot_data(compute_cartography(result.final_dynamics), paths.cartography().string());

  char buffer[96];
  std::snprintf(buffer, sizeof(buffer), "beta=%.6f  final train accuracy=%.4f", result.beta,
                result.trace.back().train_accuracy);
  say(buffer);
  if (result.trace.back().test_accuracy) {
    std::snprintf(buffer, sizeof(buffer), "final test accuracy=%.4f", *result.trace.back().test_accuracy);
    say(buffer);
  }
  std::cout << paths.weight_trace().string() << "\n";
  return kExitOk;
}

int cmd_cartography(const std::string& run_dir) {
  RunPaths paths{fs::path(run_dir)};
  auto dynamics = load_dynamics(paths.dynamics().string());
  auto records = compute_cartography(dynamics);
  auto histogram = export_plot_data(records, paths.cartography().string());
  for (const auto& [category, count] : histogram) {
    say(category + ": " + std::to_string(count));
  }
  std::cout << paths.cartography().string() << "\n";
  return kExitOk;
}

int cmd_ablate(const std::string& config_path, const std::vector<std::string>& overrides,
               const std::vector<std::string>& mode_names) {
  auto config = load_cli_config(config_path, overrides);
  auto task = load_task_file(config.run.template_path);
  auto testset = resolve_testset(config, task);

  std::vector<RunMode> modes;
  for (const auto& name : mode_names) modes.push_back(run_mode_from_string(name));
  const fs::path root = fs::path(config.run.output_dir) / ("ablation_" + timestamp());
  auto result = run_ablation_matrix(config.run, modes, task, testset, root.string());

  fs::create_directories(root);
  {
    std::ofstream out(root / "ablation.csv", std::ios::binary);
    out << result.table.to_csv();
  }
  {
    std::ofstream out(root / "ablation.txt", std::ios::binary);
    out << result.table.to_text();
  }
  say(result.table.to_text());
  std::cout << (root / "ablation.csv").string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-backend synthetic dataset generation and distillation pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string run_dir;
  std::vector<std::string> modes = {"fusegen", "no_swa", "zerogen_mixed"};

  app.add_flag("--quiet", g_quiet, "suppress progress output");

  auto* run = app.add_subcommand("run", "execute the full generation + training pipeline");
  run->add_option("--config", config_path, "configuration file")->required();
  run->add_option("--override", overrides, "key=value configuration overrides")->take_all();
  run->add_option("--seed", seed, "run a single seed instead of the configured list");
  run->add_option("--resume", run_dir, "existing run root to resume from its checkpoints");

  auto* validate = app.add_subcommand("validate", "check a configuration without running it");
  validate->add_option("--config", config_path, "configuration file")->required();
  validate->add_option("--override", overrides, "key=value configuration overrides")->take_all();

  auto* swa = app.add_subcommand("swa", "rerun weight adjustment on an existing run directory");
  swa->add_option("--config", config_path, "configuration file")->required();
  swa->add_option("--override", overrides, "key=value configuration overrides")->take_all();
  swa->add_option("--run-dir", run_dir, "existing seed run directory")->required();

  auto* cartography = app.add_subcommand("cartography", "recompute plot data from stored dynamics");
  cartography->add_option("--run-dir", run_dir, "existing seed run directory")->required();

  auto* ablate = app.add_subcommand("ablate", "run the mode-comparison matrix");
  ablate->add_option("--config", config_path, "configuration file")->required();
  ablate->add_option("--override", overrides, "key=value configuration overrides")->take_all();
  ablate->add_option("--modes", modes, "modes to compare")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, overrides, seed, run_dir);
    if (validate->parsed()) return cmd_validate(config_path, overrides);
    if (swa->parsed()) return cmd_swa(config_path, overrides, run_dir);
    if (cartography->parsed()) return cmd_cartography(run_dir);
    if (ablate->parsed()) return cmd_ablate(config_path, overrides, modes);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const BackendError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBackend;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
