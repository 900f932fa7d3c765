#include "sitrec/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "sitrec/error.hpp"
#include "sitrec/random.hpp"

namespace sitrec::config {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad(std::string_view key, std::string_view value, const char* what) {
  throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key) +
                    " (expected " + what + ")");
}

template <typename T>
T parse_number(std::string_view key, std::string_view v, const char* what) {
  v = trim(v);
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) bad(key, v, what);
  return out;
}

int to_int(std::string_view key, std::string_view v) {
  return parse_number<int>(key, v, "an integer");
}
double to_double(std::string_view key, std::string_view v) {
  const double d = parse_number<double>(key, v, "a number");
  if (!std::isfinite(d)) bad(key, v, "a finite number");
  return d;
}
std::uint64_t to_u64(std::string_view key, std::string_view v) {
  return parse_number<std::uint64_t>(key, v, "a non-negative integer");
}
bool to_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad(key, v, "true or false");
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    auto comma = v.find(',', pos);
    if (comma == std::string_view::npos) comma = v.size();
    auto item = trim(v.substr(pos, comma - pos));
    if (!item.empty()) out.push_back(item);
    pos = comma + 1;
  }
  return out;
}

std::string fmt(double d) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), d);
  return std::string(buf, ptr);
}
std::string fmt(bool b) { return b ? "true" : "false"; }
template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (const auto& x : v) {
    if (!out.empty()) out += ',';
    if constexpr (std::is_same_v<T, double>) {
      out += fmt(x);
    } else {
      out += std::to_string(x);
    }
  }
  return out;
}

struct Entry {
  std::string key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SITREC_INT(name, field)                                                          \
  Entry {                                                                                \
    name, [](RunConfig& c, std::string_view v) { c.field = to_int(name, v); },           \
        [](const RunConfig& c) { return std::to_string(c.field); }                       \
  }
#define SITREC_DOUBLE(name, field)                                                       \
  Entry {                                                                                \
    name, [](RunConfig& c, std::string_view v) { c.field = to_double(name, v); },        \
        [](const RunConfig& c) { return fmt(c.field); }                                  \
  }
#define SITREC_BOOL(name, field)                                                         \
  Entry {                                                                                \
    name, [](RunConfig& c, std::string_view v) { c.field = to_bool(name, v); },          \
        [](const RunConfig& c) { return fmt(static_cast<bool>(c.field)); }               \
  }

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = [] {
    std::vector<Entry> e = {
        Entry{"seed", [](RunConfig& c, std::string_view v) { c.seed = to_u64("seed", v); },
              [](const RunConfig& c) { return std::to_string(c.seed); }},
        Entry{"stopwords",
              [](RunConfig& c, std::string_view v) { c.stopwords = std::string(trim(v)); },
              [](const RunConfig& c) { return c.stopwords; }},

        SITREC_INT("train.embedding_dim", train.embedding_dim),
        SITREC_INT("train.epochs", train.epochs),
        SITREC_DOUBLE("train.learning_rate", train.learning_rate),
        SITREC_DOUBLE("train.lambda_student", train.lambda_student),
        SITREC_DOUBLE("train.lambda_thread", train.lambda_thread),
        SITREC_DOUBLE("train.alpha", train.alpha),
        SITREC_DOUBLE("train.beta", train.beta),
        SITREC_DOUBLE("train.clip_norm", train.clip_norm),
        SITREC_DOUBLE("train.init_stddev", train.init_stddev),
        Entry{"train.activation",
              [](RunConfig& c, std::string_view v) {
                v = trim(v);
                if (v == "sigmoid") {
                  c.train.activation = model::Activation::kSigmoid;
                } else if (v == "tanh") {
                  c.train.activation = model::Activation::kTanh;
                } else {
                  bad("train.activation", v, "sigmoid or tanh");
                }
              },
              [](const RunConfig& c) {
                return std::string(c.train.activation == model::Activation::kTanh ? "tanh"
                                                                                  : "sigmoid");
              }},
        SITREC_BOOL("train.record_trajectories", train.record_trajectories),
        SITREC_BOOL("train.state_lookback", train.state_lookback),
        Entry{"ablation",
              [](RunConfig& c, std::string_view v) {
                c.train.ablation = train::AblationFlags::parse(v);
              },
              [](const RunConfig& c) { return c.train.ablation.to_string(); }},

        SITREC_INT("lda.num_topics", lda.num_topics),
        SITREC_INT("lda.iters", lda.iters),
        SITREC_DOUBLE("lda.alpha", lda.alpha),
        SITREC_DOUBLE("lda.beta", lda.beta),
        SITREC_INT("lda.infer_iters", lda.infer_iters),
        SITREC_INT("lda.min_count", lda.min_count),
        SITREC_BOOL("lda.separate_course_model", lda.separate_course_model),

        SITREC_DOUBLE("eval.train_end_days", eval.train_end_days),
        SITREC_DOUBLE("eval.test_window_days", eval.test_window_days),
        SITREC_INT("eval.n_cutoff", eval.n_cutoff),
        SITREC_BOOL("eval.rec_ascending", eval.rec_ascending),

        Entry{"grid.embedding_dims",
              [](RunConfig& c, std::string_view v) {
                c.grid.embedding_dims.clear();
                for (auto item : split_list(v)) {
                  c.grid.embedding_dims.push_back(to_int("grid.embedding_dims", item));
                }
              },
              [](const RunConfig& c) { return fmt_list(c.grid.embedding_dims); }},
        Entry{"grid.alphas",
              [](RunConfig& c, std::string_view v) {
                c.grid.alphas.clear();
                for (auto item : split_list(v)) {
                  c.grid.alphas.push_back(to_double("grid.alphas", item));
                }
              },
              [](const RunConfig& c) { return fmt_list(c.grid.alphas); }},
        Entry{"grid.betas",
              [](RunConfig& c, std::string_view v) {
                c.grid.betas.clear();
                for (auto item : split_list(v)) {
                  c.grid.betas.push_back(to_double("grid.betas", item));
                }
              },
              [](const RunConfig& c) { return fmt_list(c.grid.betas); }},
        SITREC_DOUBLE("grid.validation_days", grid.validation_days),

        Entry{"synth.scale",
              [](RunConfig& c, std::string_view v) {
                c.synth_scale = to_double("synth.scale", v);
                if (!(c.synth_scale > 0.0)) bad("synth.scale", v, "a positive number");
                const auto preset = synth::algo_like(c.synth_scale, c.synth.seed);
                c.synth.num_students = preset.num_students;
                c.synth.num_threads = preset.num_threads;
                c.synth.mean_posts_per_student = preset.mean_posts_per_student;
              },
              [](const RunConfig& c) { return fmt(c.synth_scale); }},
        SITREC_INT("synth.num_students", synth.num_students),
        SITREC_INT("synth.num_threads", synth.num_threads),
        SITREC_INT("synth.num_weeks", synth.num_weeks),
        SITREC_INT("synth.num_topics", synth.num_topics),
        SITREC_INT("synth.vocab_size", synth.vocab_size),
        SITREC_INT("synth.mean_posts_per_student", synth.mean_posts_per_student),
        SITREC_DOUBLE("synth.drift_strength", synth.drift_strength),
        SITREC_DOUBLE("synth.reply_prob", synth.reply_prob),
        SITREC_DOUBLE("synth.revisit_boost", synth.revisit_boost),
        SITREC_INT("synth.mean_words_per_post", synth.mean_words_per_post),
        SITREC_INT("synth.words_per_week_doc", synth.words_per_week_doc),
        SITREC_DOUBLE("synth.interest_concentration", synth.interest_concentration),
        SITREC_DOUBLE("synth.thread_concentration", synth.thread_concentration),
    };
    for (auto name : train::AblationFlags::kNames) {
      const std::string key = "ablation." + std::string(name);
      e.push_back(Entry{key,
                        [name, key](RunConfig& c, std::string_view v) {
                          c.train.ablation.set(name, to_bool(key, v));
                        },
                        [name](const RunConfig& c) { return fmt(c.train.ablation.get(name)); }});
    }
    std::sort(e.begin(), e.end(), [](const Entry& a, const Entry& b) { return a.key < b.key; });
    return e;
  }();
  return entries;
}

#undef SITREC_INT
#undef SITREC_DOUBLE
#undef SITREC_BOOL

}  // namespace

void RunConfig::propagate_seed() {
  train.seed = seed;
  synth.seed = seed;
}

std::uint64_t RunConfig::lda_seed() const { return derive_seed(seed, 2); }

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : registry()) {
    // The combined list already covers the individual flags.
    if (e.key.rfind("ablation.", 0) == 0) continue;
    out.emplace_back(e.key, e.get(*this));
  }
  return out;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : entries()) out += k + " = " + v + "\n";
  return out;
}

std::vector<std::string> keys() {
  std::vector<std::string> out;
  for (const auto& e : registry()) out.push_back(e.key);
  return out;
}

void apply(RunConfig& cfg, std::string_view key, std::string_view value) {
  key = trim(key);
  const auto& reg = registry();
  auto it = std::lower_bound(reg.begin(), reg.end(), key,
                             [](const Entry& e, std::string_view k) { return e.key < k; });
  if (it == reg.end() || it->key != key) {
    throw ConfigError("unknown configuration key '" + std::string(key) + "'");
  }
  it->set(cfg, trim(value));
  if (key == "seed") cfg.propagate_seed();
}

std::vector<std::pair<std::string, std::string>> parse_text(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    out.emplace_back(std::string(key), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

void apply_all(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& pairs) {
  for (const auto& [k, v] : pairs) {
    if (k == "seed") apply(cfg, k, v);
  }
  for (const auto& [k, v] : pairs) {
    if (k == "synth.scale") apply(cfg, k, v);
  }
  for (const auto& [k, v] : pairs) {
    if (k != "synth.scale" && k != "seed") apply(cfg, k, v);
  }
}

RunConfig load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  apply_all(cfg, parse_text(ss.str()));
  return cfg;
}

}  // namespace sitrec::config
