#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sitrec/corpus.hpp"

namespace sitrec::synth {

struct SynthConfig {
  int num_students = 183;
  int num_threads = 132;
  int num_weeks = 9;
  int num_topics = 9;
  int vocab_size = 400;
  int mean_posts_per_student = 5;
  double drift_strength = 0.3;  // per-week pull of interests toward the week topic
  double reply_prob = 0.3;
  double revisit_boost = 4.0;
  std::uint64_t seed = 42;

  // Not part of the latent structure; controls text length only.
  int mean_words_per_post = 25;
  int words_per_week_doc = 200;
  // Sharpness of per-student base interests and per-thread mixtures.
  double interest_concentration = 0.3;
  double thread_concentration = 0.1;

  // Throws ConfigError.
  void validate() const;
  bool operator==(const SynthConfig&) const = default;
};

inline constexpr double kDefaultScale = 0.1;

// Course shaped like the reference algorithms course (1833 students, 1323
// threads, 9274 posts over 9 weeks) shrunk by `scale`.
SynthConfig algo_like(double scale = kDefaultScale, std::uint64_t seed = 42);

struct GroundTruth {
  // [student][week] -> interest over topics.
  std::vector<std::vector<Eigen::VectorXd>> student_interest;
  std::vector<Eigen::VectorXd> thread_mixture;
  std::vector<corpus::Timestamp> thread_created;
  std::vector<int> week_topic;        // topic emphasized in each week
  Eigen::MatrixXd topic_word;         // K x vocab_size
  std::vector<std::string> vocabulary;

  void write_json(const std::filesystem::path& path) const;
};

struct Generated {
  corpus::Dataset dataset;
  GroundTruth truth;
};

// Deterministic per seed. Students and threads without posts are dropped and
// the rest re-indexed densely, so external ids equal dense ids.
Generated generate(const SynthConfig& cfg);

// `count` distinct lowercase pseudo-words that survive preprocessing
// unchanged: alphabetic, not stopwords, fixed points of the stemmer.
std::vector<std::string> make_vocabulary(int count, std::uint64_t seed);

}  // namespace sitrec::synth
