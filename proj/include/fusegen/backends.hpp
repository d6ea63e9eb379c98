#pragma once

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "fusegen/core.hpp"
#include "fusegen/error.hpp"
#include "fusegen/rng.hpp"

namespace fusegen {

// --- Descriptors ------------------------------------------------------------

enum class BackendKind { http, mock };

struct DecodingConfig {
  double temperature = 1.0;
  double top_p = 0.9;
  int max_new_tokens = 100;

  void validate() const {
    if (temperature < 0.0) throw ConfigError("decoding temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("decoding top_p must lie in (0,1]");
    if (max_new_tokens < 1) throw ConfigError("decoding max_new_tokens must be positive");
  }
};

struct RequestLimits {
  int max_retries = 3;
  int requests_per_minute = 60;
  int retry_backoff_ms = 250;

  void validate() const {
    if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (requests_per_minute < 1) throw ConfigError("requests_per_minute must be >= 1");
  }
};

struct BackendDescriptor {
  std::string plm_id;
  BackendKind kind = BackendKind::mock;
  std::string endpoint;    // http only
  std::string model_name;  // http only
  DecodingConfig decoding;
  RequestLimits limits;

  void validate() const {
    if (plm_id.empty()) throw ConfigError("backend plm_id must be nonempty");
    if (plm_id.find(':') != std::string::npos) {
      throw ConfigError("plm_id '" + plm_id + "' must not contain ':' (reserved in sample ids)");
    }
    if (kind == BackendKind::http) {
      if (endpoint.empty()) throw ConfigError("http backend '" + plm_id + "' needs an endpoint");
      if (model_name.empty()) throw ConfigError("http backend '" + plm_id + "' needs a model_name");
    }
    decoding.validate();
    limits.validate();
  }
};

// --- Credentials ------------------------------------------------------------

inline std::string credential_env_name(const std::string& plm_id) {
  std::string name = "FUSEGEN_API_KEY_";
  for (char c : plm_id) {
    unsigned char u = static_cast<unsigned char>(c);
    name.push_back(std::isalnum(u) ? static_cast<char>(std::toupper(u)) : '_');
  }
  return name;
}

// Mock backends need no credential; http backends fail fast at startup when
// the variable is absent.
inline std::optional<std::string> resolve_credentials(const BackendDescriptor& descriptor) {
  if (descriptor.kind == BackendKind::mock) return std::nullopt;
  const std::string name = credential_env_name(descriptor.plm_id);
  const char* value = std::getenv(name.c_str());
  if (value == nullptr || *value == '\0') {
    throw ConfigError("backend '" + descriptor.plm_id + "' needs environment variable " + name);
  }
  return std::string(value);
}

// --- Completion post-processing -----------------------------------------------

// Few-shot prompts are newline-structured and models tend to continue the
// pattern, so everything after the first blank line is discarded.
inline std::string postprocess_completion(const std::string& raw) {
  std::string text;
  text.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] == '\r') {
      if (i + 1 < raw.size() && raw[i + 1] == '\n') continue;
      text.push_back('\n');
    } else {
      text.push_back(raw[i]);
    }
  }
  auto trim = [](std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\n");
    std::size_t end = s.find_last_not_of(" \t\n");
    s = begin == std::string::npos ? std::string() : s.substr(begin, end - begin + 1);
  };
  auto strip_quotes = [&trim](std::string& s) {
    trim(s);
    if (s.size() >= 2) {
      const char first = s.front(), last = s.back();
      if ((first == '"' && last == '"') || (first == '\'' && last == '\'')) {
        s = s.substr(1, s.size() - 2);
        trim(s);
      }
    }
  };
  strip_quotes(text);
  // truncate at the first blank (whitespace-only) line
  std::size_t scan = 0;
  while (true) {
    std::size_t nl = text.find('\n', scan);
    if (nl == std::string::npos) break;
    std::size_t next = text.find('\n', nl + 1);
    std::string_view line(text.data() + nl + 1, (next == std::string::npos ? text.size() : next) - nl - 1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      text = text.substr(0, nl);
      break;
    }
    scan = nl + 1;
  }
  strip_quotes(text);
  return text;
}

// --- Rate limiting --------------------------------------------------------------

// At most `per_minute` admissions in any sliding 60 s window. Clock and sleep
// are injectable so the contract is testable without wall time.
class RateLimiter {
 public:
  using TimePoint = std::chrono::steady_clock::time_point;
  using ClockFn = std::function<TimePoint()>;
  using SleepFn = std::function<void(std::chrono::milliseconds)>;

  explicit RateLimiter(int per_minute, ClockFn clock = nullptr, SleepFn sleep = nullptr)
      : per_minute_(per_minute),
        clock_(clock ? std::move(clock) : [] { return std::chrono::steady_clock::now(); }),
        sleep_(sleep ? std::move(sleep) : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
    if (per_minute < 1) throw ConfigError("rate limit must be >= 1 request per minute");
  }

  void acquire() {
    std::unique_lock<std::mutex> lock(mutex_);
    while (true) {
      const TimePoint now = clock_();
      while (!admitted_.empty() && now - admitted_.front() >= std::chrono::seconds(60)) {
        admitted_.pop_front();
      }
      if (admitted_.size() < static_cast<std::size_t>(per_minute_)) {
        admitted_.push_back(now);
        return;
      }
      const auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(
                            admitted_.front() + std::chrono::seconds(60) - now) +
                        std::chrono::milliseconds(1);
      lock.unlock();
      sleep_(wait);
      lock.lock();
    }
  }

 private:
  int per_minute_;
  ClockFn clock_;
  SleepFn sleep_;
  std::mutex mutex_;
  std::deque<TimePoint> admitted_;
};

// --- Backend interface ------------------------------------------------------------

class TextBackend {
 public:
  virtual ~TextBackend() = default;
  virtual const std::string& plm_id() const = 0;
  // Exactly `count` nonempty post-processed strings.
  virtual std::vector<std::string> generate(const std::string& prompt, std::size_t count) = 0;
  virtual std::size_t request_count() const = 0;
};

// --- Mock backend ------------------------------------------------------------------

// Deterministic stand-in for a PLM. Each profile owns a private content
// vocabulary (emulating per-model distribution bias), emits off-class texts
// at label_noise_rate and irrelevant texts at junk_rate, and sees only a
// prefix of its vocabulary under zero-shot prompts (zero_shot_coverage);
// few-shot prompts, recognized by few_shot_marker, unlock the full pools.
struct MockProfile {
  std::string plm_id;
  std::map<std::string, std::vector<std::string>> template_pools;  // class_key -> phrase skeletons
  std::map<std::string, std::vector<std::string>> lexicons;        // class_key -> content words
  std::vector<std::string> junk_lexicon;
  double label_noise_rate = 0.0;
  double junk_rate = 0.0;
  std::uint64_t seed_offset = 0;
  double zero_shot_coverage = 1.0;
  std::string few_shot_marker = "diverse in the expression";

  void validate(const LabelSchema& schema) const {
    if (!(label_noise_rate >= 0.0 && label_noise_rate < 1.0)) {
      throw ConfigError("mock '" + plm_id + "': label_noise_rate must lie in [0,1)");
    }
    if (!(junk_rate >= 0.0 && junk_rate < 1.0)) {
      throw ConfigError("mock '" + plm_id + "': junk_rate must lie in [0,1)");
    }
    if (!(zero_shot_coverage > 0.0 && zero_shot_coverage <= 1.0)) {
      throw ConfigError("mock '" + plm_id + "': zero_shot_coverage must lie in (0,1]");
    }
    for (const auto& c : schema.classes) {
      auto pool = template_pools.find(c.class_key);
      if (pool == template_pools.end() || pool->second.empty()) {
        throw ConfigError("mock '" + plm_id + "': empty template pool for class '" + c.class_key + "'");
      }
      auto lex = lexicons.find(c.class_key);
      if (lex == lexicons.end() || lex->second.empty()) {
        throw ConfigError("mock '" + plm_id + "': empty lexicon for class '" + c.class_key + "'");
      }
    }
    if (junk_rate > 0.0 && junk_lexicon.empty()) {
      throw ConfigError("mock '" + plm_id + "': junk_rate set but junk lexicon empty");
    }
  }
};

namespace detail {

inline std::string synth_word(const std::string& tag, SplitMix64& rng) {
  static const char* kConsonants = "bdfgklmnprstvz";
  static const char* kVowels = "aeiou";
  std::string word = tag;
  const std::size_t syllables = 2 + rng.below(2);
  for (std::size_t s = 0; s < syllables; ++s) {
    word.push_back(kConsonants[rng.below(14)]);
    word.push_back(kVowels[rng.below(5)]);
  }
  return word;
}

inline std::string sanitize_tag(const std::string& plm_id) {
  std::string tag;
  for (char c : plm_id) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) tag.push_back(static_cast<char>(std::tolower(u)));
  }
  return tag.empty() ? std::string("plm") : tag;
}

inline std::string replace_marker(const std::string& s, const std::string& needle, const std::string& value) {
  std::string out = s;
  std::size_t pos = 0;
  while ((pos = out.find(needle, pos)) != std::string::npos) {
    out.replace(pos, needle.size(), value);
    pos += value.size();
  }
  return out;
}

}  // namespace detail

// Builds a profile whose content words all carry the plm's tag, so two
// profiles never share content vocabulary (function words excepted).
inline MockProfile make_biased_mock_profile(const std::string& plm_id, const LabelSchema& schema,
                                            double label_noise_rate, double junk_rate,
                                            std::uint64_t seed_offset, double zero_shot_coverage = 1.0,
                                            std::size_t words_per_class = 48) {
  MockProfile profile;
  profile.plm_id = plm_id;
  profile.label_noise_rate = label_noise_rate;
  profile.junk_rate = junk_rate;
  profile.seed_offset = seed_offset;
  profile.zero_shot_coverage = zero_shot_coverage;

  const std::string tag = detail::sanitize_tag(plm_id);
  SplitMix64 rng(hash_combine(fnv1a64(plm_id), 0x5eedull));
  std::unordered_set<std::string> used;
  auto draw_words = [&](std::size_t n) {
    std::vector<std::string> words;
    while (words.size() < n) {
      auto w = detail::synth_word(tag, rng);
      if (used.insert(w).second) words.push_back(std::move(w));
    }
    return words;
  };

  const std::vector<std::string> skeletons = {
      "{w0} and {w1}, truly {w2} {w3}",
      "honestly {w0} {w1}, {w2} and {w3}",
      "it felt {w0} {w1} and {w2}, almost {w3}",
      "{w0} {w1} {w2} throughout, a {w3} {task}",
      "{w0}, {w1} and {w2} from start to finish",
  };
  for (const auto& c : schema.classes) {
    std::vector<std::string> pool;
    for (const auto& skeleton : skeletons) {
      pool.push_back(detail::replace_marker(skeleton, "{task}", schema.task_name));
    }
    profile.template_pools[c.class_key] = std::move(pool);
    profile.lexicons[c.class_key] = draw_words(words_per_class);
  }
  profile.junk_lexicon = draw_words(words_per_class / 2 + 1);
  return profile;
}

class MockBackend : public TextBackend {
 public:
  MockBackend(MockProfile profile, LabelSchema schema, std::uint64_t run_seed)
      : profile_(std::move(profile)), schema_(std::move(schema)) {
    profile_.validate(schema_);
    tag_ = detail::sanitize_tag(profile_.plm_id);
    base_seed_ = hash_combine(hash_combine(run_seed, profile_.seed_offset), fnv1a64(profile_.plm_id));
  }

  const std::string& plm_id() const override { return profile_.plm_id; }
  std::size_t request_count() const override { return requests_; }
  const MockProfile& profile() const { return profile_; }

  // Pure function of (seed, plm_id, prompt, ordinal): calling twice with the
  // same arguments yields identical texts.
  std::vector<std::string> generate(const std::string& prompt, std::size_t count) override {
    const int class_id = infer_class(prompt);
    const bool few_shot = prompt.find(profile_.few_shot_marker) != std::string::npos;
    const std::uint64_t prompt_hash = fnv1a64(prompt);
    std::vector<std::string> out;
    out.reserve(count);
    for (std::size_t ordinal = 0; ordinal < count; ++ordinal) {
      SplitMix64 rng(hash_combine(hash_combine(base_seed_, prompt_hash), ordinal));
      out.push_back(postprocess_completion(render(rng, class_id, few_shot)));
    }
    requests_ += count;
    return out;
  }

 private:
  // The requested class is whichever prompt_surface appears in the prompt's
  // final line; the longest match wins so "in" never shadows "not in".
  int infer_class(const std::string& prompt) const {
    const std::size_t last_nl = prompt.rfind('\n');
    const std::string line = last_nl == std::string::npos ? prompt : prompt.substr(last_nl + 1);
    int best = -1;
    std::size_t best_len = 0;
    for (const auto& c : schema_.classes) {
      if (!c.prompt_surface.empty() && line.find(c.prompt_surface) != std::string::npos &&
          c.prompt_surface.size() > best_len) {
        best = c.class_id;
        best_len = c.prompt_surface.size();
      }
    }
    if (best < 0) {
      throw BackendError("mock '" + profile_.plm_id +
                         "' could not infer the requested class from the prompt's final line");
    }
    return best;
  }

  const std::string& pick(const std::vector<std::string>& pool, SplitMix64& rng, double coverage) const {
    const std::size_t visible =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(coverage * static_cast<double>(pool.size()))));
    return pool[rng.below(std::min(visible, pool.size()))];
  }

  std::string fill_slots(const std::string& skeleton, const std::vector<std::string>& lexicon,
                         SplitMix64& rng, double coverage) const {
    std::string text = skeleton;
    for (int slot = 0; slot < 4; ++slot) {
      const std::string marker = "{w" + std::to_string(slot) + "}";
      std::size_t pos;
      while ((pos = text.find(marker)) != std::string::npos) {
        text.replace(pos, marker.size(), pick(lexicon, rng, coverage));
      }
    }
    return text;
  }

  std::string render(SplitMix64& rng, int class_id, bool few_shot) const {
    const double coverage = few_shot ? 1.0 : profile_.zero_shot_coverage;
    if (profile_.junk_rate > 0.0 && rng.next_double() < profile_.junk_rate) {
      // low-relevancy texts are diverse: one anchor from the junk lexicon,
      // the rest fresh words no other sample shares
      std::string junk = profile_.junk_lexicon[rng.below(profile_.junk_lexicon.size())];
      junk += " meanwhile";
      for (int w = 0; w < 3; ++w) junk += " " + detail::synth_word(tag_, rng);
      return junk;
    }
    int emit_class = class_id;
    if (profile_.label_noise_rate > 0.0 && rng.next_double() < profile_.label_noise_rate) {
      const int c = schema_.num_classes();
      int other = static_cast<int>(rng.below(static_cast<std::uint64_t>(c - 1)));
      emit_class = other >= class_id ? other + 1 : other;
    }
    const auto& key = schema_.class_at(emit_class).class_key;
    const auto& pool = profile_.template_pools.at(key);
    const auto& lexicon = profile_.lexicons.at(key);
    return fill_slots(pool[rng.below(pool.size())], lexicon, rng, coverage);
  }

  MockProfile profile_;
  LabelSchema schema_;
  std::string tag_;
  std::uint64_t base_seed_ = 0;
  std::atomic<std::size_t> requests_{0};
};

// Gold-labeled examples drawn from a profile's full vocabulary with noise and
// junk switched off: the held-out evaluation source for mock experiments.
inline std::vector<LabeledExample> mock_gold_examples(const MockProfile& profile, const LabelSchema& schema,
                                                      std::size_t per_class, std::uint64_t seed) {
  MockProfile clean = profile;
  clean.label_noise_rate = 0.0;
  clean.junk_rate = 0.0;
  clean.zero_shot_coverage = 1.0;
  MockBackend backend(std::move(clean), schema, hash_combine(seed, 0x901dull));
  std::vector<LabeledExample> out;
  for (const auto& c : schema.classes) {
    const std::string prompt = "reference sample of " + c.prompt_surface;
    for (auto& text : backend.generate(prompt, per_class)) {
      out.push_back({std::move(text), c.class_id});
    }
  }
  return out;
}

// --- HTTP backend -------------------------------------------------------------------

// Completion-style client: POST {endpoint}/v1/completions with bearer auth,
// one completion per request. Retries transport failures and retryable
// statuses up to max_retries; regenerates empty completions up to 3 times.
class HttpBackend : public TextBackend {
 public:
  HttpBackend(BackendDescriptor descriptor, RateLimiter::ClockFn clock = nullptr,
              RateLimiter::SleepFn sleep = nullptr)
      : descriptor_(std::move(descriptor)),
        limiter_(descriptor_.limits.requests_per_minute, clock, sleep) {
    descriptor_.validate();
    auto credential = resolve_credentials(descriptor_);
    bearer_ = credential ? *credential : "";
  }

  const std::string& plm_id() const override { return descriptor_.plm_id; }
  std::size_t request_count() const override { return requests_; }

  std::vector<std::string> generate(const std::string& prompt, std::size_t count) override {
    std::vector<std::string> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::string text;
      for (int attempt = 0; attempt < 3; ++attempt) {
        text = postprocess_completion(complete_once(prompt));
        if (!text.empty()) break;
      }
      if (text.empty()) {
        throw BackendError("backend '" + descriptor_.plm_id + "' returned empty completions 3 times");
      }
      out.push_back(std::move(text));
    }
    return out;
  }

 private:
  static bool retryable_status(int status) {
    return status == 408 || status == 429 || status >= 500;
  }

  std::string complete_once(const std::string& prompt) {
    nlohmann::json body;
    body["model"] = descriptor_.model_name;
    body["prompt"] = prompt;
    body["temperature"] = descriptor_.decoding.temperature;
    body["top_p"] = descriptor_.decoding.top_p;
    body["max_tokens"] = descriptor_.decoding.max_new_tokens;
    body["n"] = 1;
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= descriptor_.limits.max_retries; ++attempt) {
      if (attempt > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(descriptor_.limits.retry_backoff_ms * attempt));
      }
      limiter_.acquire();
      httplib::Client client(descriptor_.endpoint);
      client.set_connection_timeout(10);
      client.set_read_timeout(120);
      httplib::Headers headers = {{"Authorization", "Bearer " + bearer_}};
      auto res = client.Post("/v1/completions", headers, payload, "application/json");
      ++requests_;
      if (!res) {
        last_error = "transport failure (" + httplib::to_string(res.error()) + ")";
        continue;
      }
      if (res->status >= 200 && res->status < 300) {
        try {
          auto parsed = nlohmann::json::parse(res->body);
          return parsed.at("choices").at(0).at("text").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
          throw BackendError("backend '" + descriptor_.plm_id + "' returned an unparseable completion: " +
                             e.what());
        }
      }
      last_error = "HTTP status " + std::to_string(res->status);
      if (!retryable_status(res->status)) {
        throw BackendError("backend '" + descriptor_.plm_id + "' request failed: " + last_error);
      }
    }
    throw BackendError("backend '" + descriptor_.plm_id + "' failed after " +
                       std::to_string(descriptor_.limits.max_retries + 1) + " attempts: " + last_error);
  }

  BackendDescriptor descriptor_;
  std::string bearer_;
  RateLimiter limiter_;
  std::atomic<std::size_t> requests_{0};
};

inline std::unique_ptr<TextBackend> make_backend(const BackendDescriptor& descriptor,
                                                 const LabelSchema& schema,
                                                 const std::optional<MockProfile>& profile,
                                                 std::uint64_t run_seed) {
  descriptor.validate();
  if (descriptor.kind == BackendKind::mock) {
    MockProfile p = profile ? *profile
                            : make_biased_mock_profile(descriptor.plm_id, schema, 0.0, 0.0, 0);
    return std::make_unique<MockBackend>(std::move(p), schema, run_seed);
  }
  return std::make_unique<HttpBackend>(descriptor);
}

}  // namespace fusegen
