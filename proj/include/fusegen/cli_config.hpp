#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fusegen/error.hpp"
#include "fusegen/orchestrator.hpp"

namespace fusegen {

// Configuration file -> RunConfig. One validator serves `run` and `validate`:
// whatever `validate` accepts, `run` accepts, and vice versa.
//
// Recognized keys (everything else is rejected):
//   task, template_path, backends[], n_per_plm, j_steps, alpha, r_candidates,
//   s_incontext, e1_weight_epochs, e2_train_epochs, learning_rate,
//   batch_size, seed | seeds, testset_path, corpus_path, output_dir, mode,
//   mock_testset_per_class, swa{sign_mode, beta},
//   featurizer{hash_dim, ngram_orders, lowercase, strip_punctuation},
//   backends[i]{plm_id, kind, endpoint, model_name, temperature, top_p,
//               max_new_tokens, max_retries, requests_per_minute,
//               mock{label_noise_rate, junk_rate, seed_offset,
//                    zero_shot_coverage, words_per_class}}

struct CliConfig {
  RunConfig run;
  std::size_t mock_testset_per_class = 0;  // build a held-out mock set when no testset_path
};

inline ordered_json parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
}

// "key=value" with dotted paths (swa.sign_mode=paper_literal). Values parse
// as JSON when possible, else as strings, so numbers and bools come out typed.
inline void apply_override(ordered_json& config, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + spec + "' is not of the form key=value");
  }
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  ordered_json value;
  try {
    value = ordered_json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  ordered_json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + spec + "' has an empty path segment");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

namespace detail {

inline void reject_unknown_keys(const ordered_json& j, const std::vector<std::string>& known,
                                const std::string& where, std::vector<std::string>& errors) {
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      errors.push_back("unknown key '" + (where.empty() ? item.key() : where + "." + item.key()) + "'");
    }
  }
}

template <typename T>
T get_or(const ordered_json& j, const std::string& key, T fallback, std::vector<std::string>& errors) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    errors.push_back("key '" + key + "' has the wrong type");
    return fallback;
  }
}

inline BackendSpec parse_backend(const ordered_json& j, const LabelSchema* schema, std::size_t index,
                                 std::vector<std::string>& errors) {
  const std::string where = "backends[" + std::to_string(index) + "]";
  reject_unknown_keys(j,
                      {"plm_id", "kind", "endpoint", "model_name", "temperature", "top_p",
                       "max_new_tokens", "max_retries", "requests_per_minute", "mock"},
                      where, errors);
  BackendSpec spec;
  spec.descriptor.plm_id = get_or<std::string>(j, "plm_id", "", errors);
  const std::string kind = get_or<std::string>(j, "kind", "mock", errors);
  if (kind == "mock") {
    spec.descriptor.kind = BackendKind::mock;
  } else if (kind == "http") {
    spec.descriptor.kind = BackendKind::http;
  } else {
    errors.push_back(where + ": unknown kind '" + kind + "'");
  }
  spec.descriptor.endpoint = get_or<std::string>(j, "endpoint", "", errors);
  spec.descriptor.model_name = get_or<std::string>(j, "model_name", "", errors);
  spec.descriptor.decoding.temperature = get_or<double>(j, "temperature", 1.0, errors);
  spec.descriptor.decoding.top_p = get_or<double>(j, "top_p", 0.9, errors);
  spec.descriptor.decoding.max_new_tokens = get_or<int>(j, "max_new_tokens", 100, errors);
  spec.descriptor.limits.max_retries = get_or<int>(j, "max_retries", 3, errors);
  spec.descriptor.limits.requests_per_minute = get_or<int>(j, "requests_per_minute", 60, errors);

  if (j.contains("mock")) {
    const auto& m = j.at("mock");
    reject_unknown_keys(
        m, {"label_noise_rate", "junk_rate", "seed_offset", "zero_shot_coverage", "words_per_class"},
        where + ".mock", errors);
    if (schema != nullptr && !spec.descriptor.plm_id.empty()) {
      spec.mock = make_biased_mock_profile(
          spec.descriptor.plm_id, *schema, get_or<double>(m, "label_noise_rate", 0.0, errors),
          get_or<double>(m, "junk_rate", 0.0, errors), get_or<std::uint64_t>(m, "seed_offset", 0, errors),
          get_or<double>(m, "zero_shot_coverage", 1.0, errors),
          get_or<std::size_t>(m, "words_per_class", 48, errors));
    }
  }
  return spec;
}

}  // namespace detail

// Builds the run configuration. All problems are collected and reported in
// one exception so a bad file needs a single round trip to fix.
inline CliConfig build_cli_config(const ordered_json& j) {
  std::vector<std::string> errors;
  detail::reject_unknown_keys(
      j,
      {"task", "template_path", "backends", "n_per_plm", "j_steps", "alpha", "r_candidates",
       "s_incontext", "e1_weight_epochs", "e2_train_epochs", "learning_rate", "batch_size", "seed",
       "seeds", "testset_path", "corpus_path", "output_dir", "mode", "mock_testset_per_class", "swa",
       "featurizer"},
      "", errors);

  CliConfig out;
  RunConfig& run = out.run;
  run.task_name = detail::get_or<std::string>(j, "task", "", errors);
  run.template_path = detail::get_or<std::string>(j, "template_path", "", errors);
  run.n_per_plm = detail::get_or<std::size_t>(j, "n_per_plm", 1000, errors);
  run.j_steps = detail::get_or<int>(j, "j_steps", 4, errors);
  run.selection.alpha = detail::get_or<double>(j, "alpha", 0.5, errors);
  run.selection.r_candidates = detail::get_or<int>(j, "r_candidates", 40, errors);
  run.selection.s_incontext = detail::get_or<int>(j, "s_incontext", 8, errors);
  run.swa.weight_epochs = detail::get_or<int>(j, "e1_weight_epochs", 30, errors);
  run.training.epochs = detail::get_or<int>(j, "e2_train_epochs", 3, errors);
  run.training.learning_rate = detail::get_or<double>(j, "learning_rate", 0.2, errors);
  run.training.batch_size = detail::get_or<int>(j, "batch_size", 32, errors);
  run.testset_path = detail::get_or<std::string>(j, "testset_path", "", errors);
  run.corpus_path = detail::get_or<std::string>(j, "corpus_path", "", errors);
  run.output_dir = detail::get_or<std::string>(j, "output_dir", "runs", errors);
  out.mock_testset_per_class = detail::get_or<std::size_t>(j, "mock_testset_per_class", 0, errors);

  if (j.contains("mode")) {
    try {
      run.mode = run_mode_from_string(j.at("mode").get<std::string>());
    } catch (const Error& e) {
      errors.emplace_back(e.what());
    } catch (const nlohmann::json::exception&) {
      errors.push_back("key 'mode' has the wrong type");
    }
  }

  if (j.contains("seed") && j.contains("seeds")) {
    errors.push_back("set either 'seed' or 'seeds', not both");
  } else if (j.contains("seed")) {
    run.seeds = {detail::get_or<std::uint64_t>(j, "seed", 0, errors)};
  } else if (j.contains("seeds")) {
    run.seeds = detail::get_or<std::vector<std::uint64_t>>(j, "seeds", {0, 1, 2}, errors);
  }

  if (j.contains("swa")) {
    const auto& s = j.at("swa");
    detail::reject_unknown_keys(s, {"sign_mode", "beta"}, "swa", errors);
    if (s.contains("sign_mode")) {
      try {
        run.swa.sign_mode = sign_mode_from_string(s.at("sign_mode").get<std::string>());
      } catch (const Error& e) {
        errors.emplace_back(e.what());
      } catch (const nlohmann::json::exception&) {
        errors.push_back("key 'swa.sign_mode' has the wrong type");
      }
    }
    if (s.contains("beta")) {
      run.swa.beta_override = detail::get_or<double>(s, "beta", 0.5, errors);
    }
  }

  if (j.contains("featurizer")) {
    const auto& f = j.at("featurizer");
    detail::reject_unknown_keys(f, {"hash_dim", "ngram_orders", "lowercase", "strip_punctuation"},
                                "featurizer", errors);
    run.featurizer.hash_dim = detail::get_or<std::uint32_t>(f, "hash_dim", run.featurizer.hash_dim, errors);
    run.featurizer.ngram_orders =
        detail::get_or<std::vector<int>>(f, "ngram_orders", run.featurizer.ngram_orders, errors);
    run.featurizer.lowercase = detail::get_or<bool>(f, "lowercase", true, errors);
    run.featurizer.strip_punctuation = detail::get_or<bool>(f, "strip_punctuation", true, errors);
  }

  // schema is needed to materialize mock profiles
  TaskSpec task;
  bool have_task = false;
  if (!run.template_path.empty()) {
    try {
      task = load_task_file(run.template_path);
      have_task = true;
    } catch (const Error& e) {
      errors.emplace_back(e.what());
    }
  }

  if (j.contains("backends")) {
    if (!j.at("backends").is_array()) {
      errors.push_back("key 'backends' must be an array");
    } else {
      std::size_t index = 0;
      for (const auto& bj : j.at("backends")) {
        run.backends.push_back(detail::parse_backend(bj, have_task ? &task.schema : nullptr, index, errors));
        ++index;
      }
    }
  }

  // `validate` must reject exactly what `run` would trip over, so probe the
  // referenced files here rather than at run time
  if (!run.testset_path.empty() && !std::ifstream(run.testset_path)) {
    errors.push_back("testset_path '" + run.testset_path + "' is not readable");
  }
  if (!run.corpus_path.empty() && !std::ifstream(run.corpus_path)) {
    errors.push_back("corpus_path '" + run.corpus_path + "' is not readable");
  }

  auto run_errors = run.validation_errors();
  errors.insert(errors.end(), run_errors.begin(), run_errors.end());
  if (!errors.empty()) {
    std::string all = "invalid configuration:";
    for (const auto& e : errors) all += "\n  - " + e;
    throw ConfigError(all);
  }
  return out;
}

inline CliConfig load_cli_config(const std::string& path, const std::vector<std::string>& overrides) {
  auto j = parse_config_file(path);
  for (const auto& o : overrides) apply_override(j, o);
  return build_cli_config(j);
}

}  // namespace fusegen
