#include "sitrec/lda.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "sitrec/error.hpp"
#include "sitrec/random.hpp"

namespace sitrec::text {
namespace {

std::vector<int> expand(const TermFrequencyVector& doc) {
  std::vector<int> words;
  for (const auto& [w, c] : doc) words.insert(words.end(), c, w);
  return words;
}

double complete_log_likelihood(const std::vector<int>& topic_word_counts,
                               const std::vector<int>& topic_counts, int K,
                               int W, double beta) {
  const double wb = W * beta;
  double ll = K * (std::lgamma(wb) - W * std::lgamma(beta));
  for (int k = 0; k < K; ++k) {
    const int* row = &topic_word_counts[static_cast<std::size_t>(k) * W];
    for (int w = 0; w < W; ++w) {
      if (row[w] > 0) ll += std::lgamma(row[w] + beta) - std::lgamma(beta);
    }
    ll += W * std::lgamma(beta) - std::lgamma(topic_counts[k] + wb);
  }
  return ll;
}

}  // namespace

LdaModel lda_fit(const std::vector<TermFrequencyVector>& docs, int vocab_size,
                 const LdaOptions& opts) {
  const int K = opts.num_topics;
  const int W = vocab_size;
  if (K < 1) throw Error("lda_fit: num_topics must be >= 1");
  if (W < 1) throw Error("lda_fit: empty vocabulary");
  if (K > W) {
    throw Error("lda_fit: num_topics (" + std::to_string(K) +
                ") exceeds vocabulary size (" + std::to_string(W) + ")");
  }
  if (opts.iters < 1) throw Error("lda_fit: iters must be >= 1");
  if (docs.empty()) throw Error("lda_fit: no documents");
  if (!(opts.beta > 0.0)) throw Error("lda_fit: beta must be positive");

  const double alpha = opts.resolved_alpha();
  const double beta = opts.beta;
  const double wb = W * beta;

  std::vector<std::vector<int>> words;
  words.reserve(docs.size());
  for (const auto& d : docs) {
    words.push_back(expand(d));
    for (int w : words.back()) {
      if (w < 0 || w >= W) throw Error("lda_fit: word index out of range");
    }
  }

  Rng rng(opts.seed);
  std::vector<std::vector<int>> z(words.size());
  std::vector<int> doc_topic(words.size() * K, 0);
  std::vector<int> topic_word(static_cast<std::size_t>(K) * W, 0);
  std::vector<int> topic_total(K, 0);

  for (std::size_t d = 0; d < words.size(); ++d) {
    z[d].resize(words[d].size());
    for (std::size_t i = 0; i < words[d].size(); ++i) {
      const int k = static_cast<int>(rng.index(K));
      z[d][i] = k;
      ++doc_topic[d * K + k];
      ++topic_word[static_cast<std::size_t>(k) * W + words[d][i]];
      ++topic_total[k];
    }
  }

  LdaModel model;
  model.num_topics = K;
  model.vocab_size = W;
  model.alpha = alpha;
  model.beta = beta;
  model.seed = opts.seed;
  model.log_likelihood.reserve(opts.iters);

  std::vector<double> p(K);
  for (int sweep = 0; sweep < opts.iters; ++sweep) {
    for (std::size_t d = 0; d < words.size(); ++d) {
      int* dt = &doc_topic[d * K];
      for (std::size_t i = 0; i < words[d].size(); ++i) {
        const int w = words[d][i];
        const int old = z[d][i];
        --dt[old];
        --topic_word[static_cast<std::size_t>(old) * W + w];
        --topic_total[old];

        double total = 0.0;
        for (int k = 0; k < K; ++k) {
          p[k] = (dt[k] + alpha) *
                 (topic_word[static_cast<std::size_t>(k) * W + w] + beta) /
                 (topic_total[k] + wb);
          total += p[k];
        }
        const int k = static_cast<int>(rng.categorical(p, total));
        z[d][i] = k;
        ++dt[k];
        ++topic_word[static_cast<std::size_t>(k) * W + w];
        ++topic_total[k];
      }
    }
    model.log_likelihood.push_back(
        complete_log_likelihood(topic_word, topic_total, K, W, beta));
  }

  model.topic_word.resize(K, W);
  for (int k = 0; k < K; ++k) {
    const double denom = topic_total[k] + wb;
    for (int w = 0; w < W; ++w) {
      model.topic_word(k, w) =
          (topic_word[static_cast<std::size_t>(k) * W + w] + beta) / denom;
    }
    model.topic_word.row(k) /= model.topic_word.row(k).sum();
  }
  return model;
}

TopicDistribution lda_infer(const LdaModel& model, const TermFrequencyVector& doc,
                            const InferOptions& opts) {
  const int K = model.num_topics;
  const double alpha = model.alpha;
  std::vector<int> words = expand(doc);
  for (int w : words) {
    if (w < 0 || w >= model.vocab_size) throw Error("lda_infer: word index out of range");
  }
  if (words.empty() || K == 1) {
    return TopicDistribution::Constant(K, 1.0 / K);
  }

  Rng rng(opts.seed.value_or(model.seed));
  std::vector<int> z(words.size());
  std::vector<int> counts(K, 0);
  for (std::size_t i = 0; i < words.size(); ++i) {
    z[i] = static_cast<int>(rng.index(K));
    ++counts[z[i]];
  }

  const int iters = std::max(1, opts.iters);
  const int burn_in = iters / 2;
  const double denom = static_cast<double>(words.size()) + K * alpha;
  TopicDistribution acc = TopicDistribution::Zero(K);
  int kept = 0;
  std::vector<double> p(K);
  for (int sweep = 0; sweep < iters; ++sweep) {
    for (std::size_t i = 0; i < words.size(); ++i) {
      --counts[z[i]];
      double total = 0.0;
      for (int k = 0; k < K; ++k) {
        p[k] = (counts[k] + alpha) * model.topic_word(k, words[i]);
        total += p[k];
      }
      z[i] = static_cast<int>(rng.categorical(p, total));
      ++counts[z[i]];
    }
    if (sweep >= burn_in) {
      for (int k = 0; k < K; ++k) acc[k] += (counts[k] + alpha) / denom;
      ++kept;
    }
  }
  acc /= static_cast<double>(kept);
  acc /= acc.sum();
  return acc;
}

std::vector<TopicDistribution> course_topics(const corpus::CourseSchedule& schedule,
                                             const LdaModel& model,
                                             const Vocabulary& vocab,
                                             const InferOptions& opts) {
  std::vector<TopicDistribution> out;
  out.reserve(schedule.week_docs.size());
  for (std::size_t i = 0; i < schedule.week_docs.size(); ++i) {
    const auto tf = term_frequency(schedule.week_docs[i], vocab);
    if (tf.empty()) {
      throw Error("course week " + std::to_string(i) +
                  " has no in-vocabulary words after preprocessing");
    }
    out.push_back(lda_infer(model, tf, opts));
  }
  return out;
}

std::vector<TopicDistribution> post_topics(const corpus::Dataset& ds,
                                           const LdaModel& model,
                                           const Vocabulary& vocab,
                                           const InferOptions& opts) {
  std::vector<TopicDistribution> out;
  out.reserve(ds.size());
  for (const auto& e : ds.events()) {
    out.push_back(lda_infer(model, term_frequency(e.tokens, vocab), opts));
  }
  return out;
}

namespace {

void write_row(std::ostream& out, const Eigen::Ref<const Eigen::VectorXd>& row) {
  for (Eigen::Index i = 0; i < row.size(); ++i) {
    if (i) out << ',';
    out << row[i];
  }
  out << '\n';
}

std::vector<double> parse_csv_doubles(const std::string& line, std::size_t line_no) {
  std::vector<double> vals;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t used = 0;
      vals.push_back(std::stod(cell, &used));
      if (cell.find_first_not_of(" \r", used) != std::string::npos) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw ParseError("bad number '" + cell + "'", line_no);
    }
  }
  return vals;
}

}  // namespace

void LdaModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "K,W,alpha,beta,seed\n";
  out << num_topics << ',' << vocab_size << ',' << alpha << ',' << beta << ','
      << seed << '\n';
  for (int k = 0; k < num_topics; ++k) write_row(out, topic_word.row(k).transpose());
}

LdaModel LdaModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open LDA model " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("K,W,alpha,beta,seed", 0) != 0) {
    throw ParseError("missing LDA header", 1);
  }
  LdaModel m;
  if (!std::getline(in, line)) throw ParseError("missing LDA header values", 2);
  {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw ParseError("expected 5 header values", 2);
    try {
      m.num_topics = std::stoi(cells[0]);
      m.vocab_size = std::stoi(cells[1]);
      m.alpha = std::stod(cells[2]);
      m.beta = std::stod(cells[3]);
      m.seed = std::stoull(cells[4]);
    } catch (const std::exception&) {
      throw ParseError("bad LDA header values", 2);
    }
  }
  if (m.num_topics < 1 || m.vocab_size < 1) throw ParseError("bad LDA dimensions", 2);
  m.topic_word.resize(m.num_topics, m.vocab_size);
  for (int k = 0; k < m.num_topics; ++k) {
    if (!std::getline(in, line)) throw ParseError("missing topic row", 3 + k);
    auto vals = parse_csv_doubles(line, 3 + k);
    if (static_cast<int>(vals.size()) != m.vocab_size) {
      throw ParseError("topic row has wrong width", 3 + k);
    }
    for (int w = 0; w < m.vocab_size; ++w) m.topic_word(k, w) = vals[w];
  }
  return m;
}

void save_topic_rows(const std::vector<TopicDistribution>& rows,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out << i;
    for (Eigen::Index k = 0; k < rows[i].size(); ++k) out << ',' << rows[i][k];
    out << '\n';
  }
}

std::vector<TopicDistribution> load_topic_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<TopicDistribution> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto vals = parse_csv_doubles(line, line_no);
    if (vals.size() < 2) throw ParseError("topic row too short", line_no);
    TopicDistribution t(static_cast<Eigen::Index>(vals.size() - 1));
    for (std::size_t k = 1; k < vals.size(); ++k) t[k - 1] = vals[k];
    rows.push_back(std::move(t));
  }
  return rows;
}

}  // namespace sitrec::text
