#pragma once

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fusegen/core.hpp"
#include "fusegen/error.hpp"
#include "fusegen/rng.hpp"

namespace fusegen {

inline constexpr const char* kLabelSurfacePlaceholder = "{label_surface}";
inline constexpr const char* kTextPlaceholder = "{text}";
inline constexpr const char* kContextPlaceholder = "{context_sentence}";

struct FewShotTemplate {
  std::string example_line;      // contains {text}, never a label placeholder
  std::string instruction_line;  // contains {label_surface}
  std::string separator = "\n";
};

struct PromptTemplate {
  std::string task_name;
  std::string zero_shot;  // contains {label_surface} exactly once
  FewShotTemplate few_shot;
  std::size_t max_prompt_chars = 6000;

  void validate() const {
    auto count = [](const std::string& s, const std::string& needle) {
      std::size_t n = 0;
      for (std::size_t pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + needle.size()))
        ++n;
      return n;
    };
    if (count(zero_shot, kLabelSurfacePlaceholder) != 1) {
      throw ConfigError("template '" + task_name + "': zero_shot must contain " +
                        std::string(kLabelSurfacePlaceholder) + " exactly once");
    }
    if (count(few_shot.example_line, kTextPlaceholder) != 1) {
      throw ConfigError("template '" + task_name + "': few_shot.example_line must contain " +
                        std::string(kTextPlaceholder) + " exactly once");
    }
    if (count(few_shot.example_line, kLabelSurfacePlaceholder) != 0) {
      throw ConfigError("template '" + task_name +
                        "': few_shot.example_line must not contain a label placeholder");
    }
    if (count(few_shot.instruction_line, kLabelSurfacePlaceholder) != 1) {
      throw ConfigError("template '" + task_name + "': few_shot.instruction_line must contain " +
                        std::string(kLabelSurfacePlaceholder) + " exactly once");
    }
    if (max_prompt_chars == 0) {
      throw ConfigError("template '" + task_name + "': max_prompt_chars must be positive");
    }
  }
};

// A task file bundles the label space with its prompt templates, so adding a
// task needs no rebuild.
struct TaskSpec {
  PromptTemplate prompt;
  LabelSchema schema;
};

inline TaskSpec load_task_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open task file '" + path + "'");
  ordered_json j;
  try {
    j = ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("task file '" + path + "': " + e.what());
  }

  static const std::vector<std::string> known = {"task_name", "labels", "zero_shot",
                                                 "few_shot", "max_prompt_chars"};
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw ConfigError("task file '" + path + "': unknown key '" + item.key() + "'");
    }
  }

  TaskSpec spec;
  try {
    spec.prompt.task_name = j.at("task_name").get<std::string>();
    spec.prompt.zero_shot = j.at("zero_shot").get<std::string>();
    const auto& fs = j.at("few_shot");
    for (const auto& item : fs.items()) {
      if (item.key() != "example_line" && item.key() != "instruction_line" && item.key() != "separator") {
        throw ConfigError("task file '" + path + "': unknown key 'few_shot." + item.key() + "'");
      }
    }
    spec.prompt.few_shot.example_line = fs.at("example_line").get<std::string>();
    spec.prompt.few_shot.instruction_line = fs.at("instruction_line").get<std::string>();
    spec.prompt.few_shot.separator = fs.value("separator", std::string("\n"));
    spec.prompt.max_prompt_chars = j.value("max_prompt_chars", std::size_t{6000});

    spec.schema.task_name = spec.prompt.task_name;
    int next_id = 0;
    for (const auto& lj : j.at("labels")) {
      LabelClass c;
      c.class_id = next_id++;
      c.class_key = lj.at("class_key").get<std::string>();
      c.prompt_surface = lj.at("prompt_surface").get<std::string>();
      spec.schema.classes.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("task file '" + path + "': " + e.what());
  }
  spec.schema.validate();
  spec.prompt.validate();
  return spec;
}

struct RenderedPrompt {
  std::string text;
  std::size_t dropped_incontext = 0;   // in-context samples dropped to fit the budget
  bool downgraded_to_zero_shot = false;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string replace_all(std::string s, const std::string& needle, const std::string& value) {
  std::size_t pos = 0;
  while ((pos = s.find(needle, pos)) != std::string::npos) {
    s.replace(pos, needle.size(), value);
    pos += value.size();
  }
  return s;
}

// Substitutes the label surface, then the context sentence. The surface may
// itself carry the context placeholder (premise-conditioned tasks).
inline std::string fill_instruction(const std::string& tmpl, const std::string& task_name,
                                    const LabelClass& label, const std::optional<std::string>& context,
                                    std::vector<std::string>& warnings) {
  std::string out = replace_all(tmpl, kLabelSurfacePlaceholder, label.prompt_surface);
  const bool wants_context = out.find(kContextPlaceholder) != std::string::npos;
  if (wants_context) {
    if (!context) {
      throw ConfigError("task '" + task_name + "' requires a context sentence for placeholder " +
                        std::string(kContextPlaceholder));
    }
    out = replace_all(out, kContextPlaceholder, *context);
  } else if (context) {
    warnings.push_back("context sentence supplied but task '" + task_name + "' has no " +
                       std::string(kContextPlaceholder) + " placeholder; ignored");
  }
  return out;
}

}  // namespace detail

inline RenderedPrompt render_zero_shot(const PromptTemplate& tmpl, const LabelClass& label,
                                       const std::optional<std::string>& context = std::nullopt) {
  RenderedPrompt out;
  out.text = detail::fill_instruction(tmpl.zero_shot, tmpl.task_name, label, context, out.warnings);
  return out;
}

// Few-shot prompt: one example line per in-context sample in selection-rank
// order (text only, never the sample's label), a blank line, then the
// instruction line for the requested label. Overflowing max_prompt_chars
// drops the lowest-ranked samples until the prompt fits.
inline RenderedPrompt render_few_shot(const PromptTemplate& tmpl, const std::vector<Sample>& incontext,
                                      const LabelClass& label,
                                      const std::optional<std::string>& context = std::nullopt) {
  if (incontext.empty()) {
    auto out = render_zero_shot(tmpl, label, context);
    out.downgraded_to_zero_shot = true;
    return out;
  }
  RenderedPrompt out;
  const std::string instruction =
      detail::fill_instruction(tmpl.few_shot.instruction_line, tmpl.task_name, label, context, out.warnings);
  const std::string& sep = tmpl.few_shot.separator;

  std::vector<std::string> lines;
  lines.reserve(incontext.size());
  for (const auto& s : incontext) {
    lines.push_back(detail::replace_all(tmpl.few_shot.example_line, kTextPlaceholder, s.text));
  }

  auto assemble = [&](std::size_t n) {
    std::string text;
    for (std::size_t i = 0; i < n; ++i) {
      text += lines[i];
      text += sep;
    }
    text += sep;
    text += instruction;
    return text;
  };

  std::size_t keep = lines.size();
  std::string text = assemble(keep);
  while (keep > 0 && text.size() > tmpl.max_prompt_chars) {
    --keep;
    text = keep == 0 ? std::string() : assemble(keep);
  }
  out.dropped_incontext = lines.size() - keep;
  if (keep == 0) {
    auto fallback = render_zero_shot(tmpl, label, context);
    fallback.dropped_incontext = out.dropped_incontext;
    fallback.downgraded_to_zero_shot = true;
    fallback.warnings.insert(fallback.warnings.begin(), out.warnings.begin(), out.warnings.end());
    return fallback;
  }
  out.text = std::move(text);
  return out;
}

// Newline-delimited context sentences, drawn uniformly without replacement
// within each round.
class CorpusSource {
 public:
  CorpusSource() = default;

  CorpusSource(std::string path, std::uint64_t seed) : path_(std::move(path)), seed_(seed) {
    std::ifstream in(path_);
    if (!in) throw ConfigError("cannot open corpus file '" + path_ + "'");
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) sentences_.push_back(line);
    }
    if (sentences_.empty()) throw ConfigError("corpus file '" + path_ + "' has no sentences");
  }

  bool loaded() const { return !sentences_.empty(); }
  std::size_t size() const { return sentences_.size(); }

  class RoundSampler {
   public:
    RoundSampler(const CorpusSource& source, std::uint64_t stream) : source_(source) {
      SplitMix64 rng(hash_combine(source.seed_, stream + 1));
      order_ = rng.permutation(source.sentences_.size());
    }

    const std::string& next() {
      if (cursor_ >= order_.size()) {
        throw ConfigError("corpus '" + source_.path_ + "' exhausted (" + std::to_string(order_.size()) +
                          " sentences); a round needs fewer samples or a larger corpus");
      }
      return source_.sentences_[order_[cursor_++]];
    }

   private:
    const CorpusSource& source_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
  };

  RoundSampler sampler(int round) const {
    return RoundSampler(*this, static_cast<std::uint64_t>(round));
  }
  // Independent without-replacement stream per (round, consumer).
  RoundSampler sampler_seeded(std::uint64_t stream) const { return RoundSampler(*this, stream); }

 private:
  friend class RoundSampler;
  std::string path_;
  std::uint64_t seed_ = 0;
  std::vector<std::string> sentences_;
};

}  // namespace fusegen
