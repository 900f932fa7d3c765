#include "sitrec/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "json.hpp"

#include "sitrec/error.hpp"
#include "sitrec/random.hpp"
#include "sitrec/text.hpp"

namespace sitrec::synth {

void SynthConfig::validate() const {
  auto positive = [](const char* name, long v) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
  };
  positive("num_students", num_students);
  positive("num_threads", num_threads);
  positive("num_weeks", num_weeks);
  positive("num_topics", num_topics);
  positive("vocab_size", vocab_size);
  positive("mean_posts_per_student", mean_posts_per_student);
  positive("mean_words_per_post", mean_words_per_post);
  positive("words_per_week_doc", words_per_week_doc);
  auto unit = [](const char* name, double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  unit("drift_strength", drift_strength);
  unit("reply_prob", reply_prob);
  if (!(revisit_boost >= 0.0)) throw ConfigError("revisit_boost must be >= 0");
  if (!(interest_concentration > 0.0) || !(thread_concentration > 0.0)) {
    throw ConfigError("concentrations must be > 0");
  }
  if (vocab_size < num_topics) {
    throw ConfigError("vocab_size (" + std::to_string(vocab_size) +
                      ") must be at least num_topics (" + std::to_string(num_topics) + ")");
  }
}

SynthConfig algo_like(double scale, std::uint64_t seed) {
  if (!(scale > 0.0)) throw ConfigError("scale must be > 0");
  SynthConfig c;
  c.num_students = std::max(1, static_cast<int>(std::lround(1833 * scale)));
  c.num_threads = std::max(1, static_cast<int>(std::lround(1323 * scale)));
  c.num_weeks = 9;
  c.num_topics = 9;
  c.mean_posts_per_student = std::max(1, static_cast<int>(std::lround(9274.0 / 1833.0)));
  c.seed = seed;
  return c;
}

std::vector<std::string> make_vocabulary(int count, std::uint64_t seed) {
  static constexpr const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p",
                                            "r", "s", "t", "v", "z", "br", "dr", "gr",
                                            "kr", "pl", "tr", "st", "sk"};
  static constexpr const char* kVowels[] = {"a", "o", "u", "i"};
  static constexpr const char* kCodas[] = {"b", "d", "g", "k", "m", "n", "p", "r", "t", "x"};
  Rng rng(seed);
  std::set<std::string> seen;
  std::vector<std::string> out;
  const auto& pre = text::Preprocessor::standard();
  long attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    if (++attempts > 1000L * count + 100000) {
      throw Error("make_vocabulary: cannot find enough distinct words");
    }
    std::string w;
    const int syllables = 2 + static_cast<int>(rng.index(2));
    for (int s = 0; s < syllables; ++s) {
      w += kOnsets[rng.index(std::size(kOnsets))];
      w += kVowels[rng.index(std::size(kVowels))];
    }
    w += kCodas[rng.index(std::size(kCodas))];
    if (seen.count(w)) continue;
    const auto toks = pre(w);
    if (toks.size() != 1 || toks.front() != w) continue;
    seen.insert(w);
    out.push_back(w);
  }
  return out;
}

namespace {

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

int poisson(Rng& rng, double mean) {
  if (mean <= 0.0) return 0;
  return std::poisson_distribution<int>(mean)(rng.engine());
}

std::vector<std::string> sample_words(Rng& rng, const Eigen::VectorXd& topic_mix,
                                      const Eigen::MatrixXd& topic_word,
                                      const std::vector<std::string>& vocab, int n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const auto k = rng.categorical(std::span<const double>(topic_mix.data(), topic_mix.size()));
    const Eigen::VectorXd row = topic_word.row(static_cast<Eigen::Index>(k)).transpose();
    const auto w = rng.categorical(std::span<const double>(row.data(), row.size()));
    out.push_back(vocab[w]);
  }
  return out;
}

}  // namespace

Generated generate(const SynthConfig& cfg) {
  cfg.validate();
  const int K = cfg.num_topics;
  const int S = cfg.num_weeks;
  const int W = cfg.vocab_size;
  const double course_end = S * corpus::kSecondsPerWeek;
  Rng rng(cfg.seed);

  GroundTruth truth;
  truth.vocabulary = make_vocabulary(W, derive_seed(cfg.seed, 100));
  truth.topic_word.resize(K, W);
  for (int k = 0; k < K; ++k) {
    truth.topic_word.row(k) = to_vector(rng.dirichlet(W, 0.05)).transpose();
  }
  truth.week_topic.resize(S);
  for (int s = 0; s < S; ++s) truth.week_topic[s] = s % K;

  // Threads: sparse topic mixtures, creation times spread over the course with
  // the earliest pinned at the start so a thread is always open.
  std::vector<Eigen::VectorXd> mixture(cfg.num_threads);
  std::vector<double> created(cfg.num_threads);
  for (int p = 0; p < cfg.num_threads; ++p) {
    mixture[p] = to_vector(rng.dirichlet(K, cfg.thread_concentration));
    created[p] = std::floor(rng.uniform() * course_end * 0.95);
  }
  *std::min_element(created.begin(), created.end()) = 0.0;

  // Students: a base interest drifting each week toward the week topic.
  std::vector<std::vector<Eigen::VectorXd>> interest(cfg.num_students);
  for (int u = 0; u < cfg.num_students; ++u) {
    Eigen::VectorXd cur = to_vector(rng.dirichlet(K, cfg.interest_concentration));
    for (int s = 0; s < S; ++s) {
      if (s > 0 || cfg.drift_strength > 0.0) {
        Eigen::VectorXd target = Eigen::VectorXd::Zero(K);
        target[truth.week_topic[s]] = 1.0;
        cur = (1.0 - cfg.drift_strength) * cur + cfg.drift_strength * target;
      }
      interest[u].push_back(cur);
    }
  }

  // Post times: every student posts at least once.
  struct Slot {
    double t;
    int student;
  };
  std::vector<Slot> slots;
  for (int u = 0; u < cfg.num_students; ++u) {
    const int n = 1 + poisson(rng, cfg.mean_posts_per_student - 1.0);
    for (int i = 0; i < n; ++i) slots.push_back({std::floor(rng.uniform() * course_end), u});
  }
  std::stable_sort(slots.begin(), slots.end(),
                   [](const Slot& a, const Slot& b) { return a.t < b.t; });

  struct Raw {
    double t;
    int student;
    int thread;
    std::optional<std::size_t> parent;
    std::vector<std::string> tokens;
  };
  std::vector<Raw> raw;
  raw.reserve(slots.size());
  std::vector<std::set<int>> visited(cfg.num_students);
  std::vector<std::vector<std::size_t>> on_thread(cfg.num_threads);
  std::vector<double> weights(cfg.num_threads);
  corpus::CourseSchedule probe;
  for (int s = 0; s < S; ++s) probe.week_boundaries.push_back(s * corpus::kSecondsPerWeek);

  for (const auto& slot : slots) {
    const int u = slot.student;
    const int week = probe.week_at(slot.t);
    const Eigen::VectorXd& pi = interest[u][week];
    double total = 0.0;
    for (int p = 0; p < cfg.num_threads; ++p) {
      double w = 0.0;
      if (created[p] <= slot.t) {
        w = pi.dot(mixture[p]) + 1e-6;
        if (visited[u].count(p)) w *= 1.0 + cfg.revisit_boost;
      }
      weights[p] = w;
      total += w;
    }
    const int p = static_cast<int>(rng.categorical(weights, total));

    std::optional<std::size_t> parent;
    if (rng.uniform() < cfg.reply_prob) {
      std::vector<std::size_t> others, own;
      for (std::size_t i : on_thread[p]) {
        if (raw[i].t >= slot.t) continue;
        (raw[i].student == u ? own : others).push_back(i);
      }
      const auto& pool = others.empty() ? own : others;
      if (!pool.empty()) parent = pool[rng.index(pool.size())];
    }

    const Eigen::VectorXd mix = 0.5 * mixture[p] + 0.5 * pi;
    const int n_words = 1 + poisson(rng, cfg.mean_words_per_post - 1.0);
    raw.push_back({slot.t, u, p, parent,
                   sample_words(rng, mix, truth.topic_word, truth.vocabulary, n_words)});
    on_thread[p].push_back(raw.size() - 1);
    visited[u].insert(p);
  }

  // Compact thread ids to the ones that received posts.
  std::vector<int> thread_map(cfg.num_threads, -1);
  int n_threads = 0;
  for (int p = 0; p < cfg.num_threads; ++p) {
    if (!on_thread[p].empty()) thread_map[p] = n_threads++;
  }
  truth.student_interest = std::move(interest);
  for (int p = 0; p < cfg.num_threads; ++p) {
    if (thread_map[p] < 0) continue;
    truth.thread_mixture.push_back(mixture[p]);
    truth.thread_created.push_back(created[p]);
  }

  corpus::CourseSchedule course = probe;
  for (int s = 0; s < S; ++s) {
    Eigen::VectorXd mix = Eigen::VectorXd::Zero(K);
    mix[truth.week_topic[s]] = 1.0;
    course.week_docs.push_back(
        sample_words(rng, mix, truth.topic_word, truth.vocabulary, cfg.words_per_week_doc));
  }

  std::vector<corpus::PostEvent> events;
  events.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    corpus::PostEvent e;
    e.post_id = static_cast<corpus::PostId>(i + 1);
    e.student = raw[i].student;
    e.thread = thread_map[raw[i].thread];
    e.timestamp = raw[i].t;
    e.tokens = std::move(raw[i].tokens);
    if (raw[i].parent) e.parent_post_id = static_cast<corpus::PostId>(*raw[i].parent + 1);
    events.push_back(std::move(e));
  }
  corpus::IdMap ids;
  for (int u = 0; u < cfg.num_students; ++u) ids.students.push_back(u);
  for (int p = 0; p < n_threads; ++p) ids.threads.push_back(p);
  return {corpus::Dataset(std::move(events), cfg.num_students, n_threads, std::move(course),
                          std::move(ids)),
          std::move(truth)};
}

void GroundTruth::write_json(const std::filesystem::path& path) const {
  auto vec = [](const Eigen::VectorXd& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  nlohmann::ordered_json j;
  nlohmann::ordered_json students = nlohmann::ordered_json::array();
  for (const auto& weeks : student_interest) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& v : weeks) rows.push_back(vec(v));
    students.push_back(rows);
  }
  j["student_interest"] = students;
  nlohmann::ordered_json threads = nlohmann::ordered_json::array();
  for (const auto& v : thread_mixture) threads.push_back(vec(v));
  j["thread_mixture"] = threads;
  j["thread_created"] = thread_created;
  j["week_topic"] = week_topic;
  j["vocabulary"] = vocabulary;
  nlohmann::ordered_json tw = nlohmann::ordered_json::array();
  for (Eigen::Index k = 0; k < topic_word.rows(); ++k) {
    tw.push_back(vec(topic_word.row(k).transpose()));
  }
  j["topic_word"] = tw;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump() << '\n';
}

}  // namespace sitrec::synth
