#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sitrec/config.hpp"
#include "sitrec/corpus.hpp"
#include "sitrec/lda.hpp"
#include "sitrec/recommend.hpp"
#include "sitrec/train.hpp"

namespace sitrec::pipeline {

struct TopicArtifacts {
  text::Vocabulary vocab;
  text::LdaModel lda;
  // Present only with lda.separate_course_model.
  std::optional<text::LdaModel> course_lda;
  std::vector<text::TopicDistribution> course;
};

// Vocabulary and topic model over the training posts plus the week
// documents, and one topic distribution per week.
TopicArtifacts fit_topics(const corpus::Dataset& train, const config::LdaConfig& cfg,
                          std::uint64_t seed);

std::vector<text::TopicDistribution> infer_post_topics(const corpus::Dataset& ds,
                                                       const TopicArtifacts& topics,
                                                       const config::LdaConfig& cfg);

// A dataset split at T1 with topics fitted on the training side.
struct Experiment {
  corpus::TimeSplit split;
  corpus::Timestamp train_end = 0.0;
  TopicArtifacts topics;
  std::vector<text::TopicDistribution> train_topics;  // aligned with split.train
};

Experiment prepare(const corpus::Dataset& ds, const config::RunConfig& cfg);

corpus::SplitSpec split_spec(const config::EvalConfig& eval);

struct SitrecRun {
  train::FitResult fit;
  recommend::EvalReport report;
};

// Fits on the training side and evaluates on the test window.
SitrecRun run_sitrec(const Experiment& exp, const train::TrainConfig& cfg, int n_cutoff);

inline constexpr const char* kBaselines[] = {"pop", "rec", "user-rec"};
recommend::EvalReport run_baseline(const Experiment& exp, const std::string& name,
                                   const config::EvalConfig& eval);

// Runs `tasks` on up to `jobs` threads. Each task owns its state, so results
// do not depend on scheduling.
void run_parallel(std::vector<std::function<void()>>& tasks, int jobs);

struct AblationRow {
  std::string variant;  // "full" or a flag name
  double map_at_n = 0.0;
  int users_evaluated = 0;
};

// The full model followed by one row per flag in `variants` (every flag
// when empty). Throws ConfigError on an unknown flag name.
std::vector<AblationRow> run_ablation(const Experiment& exp, const config::RunConfig& cfg,
                                      int jobs, std::vector<std::string> variants = {});

struct GridPoint {
  int embedding_dim = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double validation_map = 0.0;
};

struct GridResult {
  std::vector<GridPoint> points;
  GridPoint best;  // highest validation MAP; first in grid order on ties
};

// Holds out the last grid.validation_days of the training window, fits each
// (d, alpha, beta) combination on the rest and scores it on the held-out part.
GridResult grid_search(const Experiment& exp, const config::RunConfig& cfg, int jobs);

}  // namespace sitrec::pipeline
