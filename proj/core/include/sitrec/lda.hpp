#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "sitrec/corpus.hpp"
#include "sitrec/text.hpp"

namespace sitrec::text {

struct LdaOptions {
  int num_topics = 1;
  int iters = 500;
  // Symmetric document-topic prior; non-positive means 50 / K.
  double alpha = 0.0;
  double beta = 0.01;
  std::uint64_t seed = 1;

  double resolved_alpha() const {
    return alpha > 0.0 ? alpha : 50.0 / static_cast<double>(num_topics);
  }
};

// A fitted topic model. topic_word is K x W, each row a distribution.
struct LdaModel {
  int num_topics = 0;
  int vocab_size = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  Eigen::MatrixXd topic_word;
  // Complete-data log likelihood log p(w | z) after each sweep; not persisted.
  std::vector<double> log_likelihood;

  // CSV: `K,W,alpha,beta,seed` header row, one values row, then K rows of W
  // probabilities written with round-trip precision.
  void save(const std::filesystem::path& path) const;
  static LdaModel load(const std::filesystem::path& path);
};

// Collapsed Gibbs sampling for `opts.iters` sweeps from a seeded random
// assignment. Throws Error when K > W, K < 1, iters < 1 or docs is empty.
LdaModel lda_fit(const std::vector<TermFrequencyVector>& docs, int vocab_size,
                 const LdaOptions& opts);

struct InferOptions {
  int iters = 100;
  // Defaults to the model's seed, so equal documents always map to equal
  // distributions.
  std::optional<std::uint64_t> seed;
};

// Fold-in Gibbs sampling against the fixed topic_word matrix. The result
// averages the smoothed document-topic estimate over the second half of the
// sweeps; an empty document yields the normalized prior.
TopicDistribution lda_infer(const LdaModel& model, const TermFrequencyVector& doc,
                            const InferOptions& opts = {});

// One distribution per course week, inferred from the week's document.
// Throws Error naming the week if its document has no in-vocabulary token.
std::vector<TopicDistribution> course_topics(const corpus::CourseSchedule& schedule,
                                             const LdaModel& model,
                                             const Vocabulary& vocab,
                                             const InferOptions& opts = {});

// Per-event topic distributions, aligned with ds.events().
std::vector<TopicDistribution> post_topics(const corpus::Dataset& ds,
                                           const LdaModel& model,
                                           const Vocabulary& vocab,
                                           const InferOptions& opts = {});

// Writes/reads one row per week: `week,p0,...,p{K-1}`.
void save_topic_rows(const std::vector<TopicDistribution>& rows,
                     const std::filesystem::path& path);
std::vector<TopicDistribution> load_topic_rows(const std::filesystem::path& path);

}  // namespace sitrec::text
