#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sitrec/synth.hpp"
#include "sitrec/train.hpp"

namespace sitrec::config {

struct LdaConfig {
  int num_topics = 0;  // 0 = one topic per course week
  int iters = 500;
  double alpha = 0.0;  // <= 0 means 50 / K
  double beta = 0.01;
  int infer_iters = 100;
  int min_count = 10;
  // Fit a second model on the week documents alone for the course topics.
  bool separate_course_model = false;

  bool operator==(const LdaConfig&) const = default;
};

struct EvalConfig {
  double train_end_days = 56.0;  // T1, days since course start
  double test_window_days = 1.0;
  int n_cutoff = 5;
  bool rec_ascending = false;

  bool operator==(const EvalConfig&) const = default;
};

struct GridConfig {
  std::vector<int> embedding_dims = {5, 10, 15, 20, 25};
  std::vector<double> alphas = {0.0005, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0};
  std::vector<double> betas = {0.0005, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0};
  double validation_days = 1.0;

  bool operator==(const GridConfig&) const = default;
};

// Every tunable of a run. Keys in files and `--set` overrides use the
// dotted names listed by keys().
struct RunConfig {
  std::uint64_t seed = 42;
  train::TrainConfig train;
  LdaConfig lda;
  EvalConfig eval;
  GridConfig grid;
  synth::SynthConfig synth;
  double synth_scale = synth::kDefaultScale;
  std::string stopwords;  // empty = compiled-in list

  // Pushes `seed` into the module configs. Module streams are derived from
  // it by fixed offsets.
  void propagate_seed();
  std::uint64_t lda_seed() const;

  // Sorted key/value pairs that reproduce this configuration.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string to_text() const;

  bool operator==(const RunConfig&) const = default;
};

// All accepted keys.
std::vector<std::string> keys();

// Sets one key. Throws ConfigError on an unknown key or an unparsable value.
void apply(RunConfig& cfg, std::string_view key, std::string_view value);

// `key = value` lines; '#' starts a comment. Throws ConfigError (with the
// line number) on malformed lines.
std::vector<std::pair<std::string, std::string>> parse_text(std::string_view text);

// Applies pairs in order, except that `synth.scale` goes first so explicit
// synth counts override the scaled preset.
void apply_all(RunConfig& cfg, const std::vector<std::pair<std::string, std::string>>& pairs);

RunConfig load_file(const std::filesystem::path& path);

}  // namespace sitrec::config
