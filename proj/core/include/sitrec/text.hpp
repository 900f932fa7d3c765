#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

namespace sitrec::text {

// Porter (1980) suffix stripper on a lowercase ASCII word.
std::string porter_stem(std::string_view word);

// Lowercases, strips URLs and punctuation, drops words containing digits and
// stopwords, and stems the rest. Stemming is iterated to a fixed point and
// stopwords are checked both before and after stemming, so applying the
// preprocessor to its own joined output is a no-op.
class Preprocessor {
 public:
  explicit Preprocessor(std::unordered_set<std::string> stopwords);

  // Compiled-in English list (core/data/stopwords_en.txt).
  static const Preprocessor& standard();
  // One word per line; blank lines and lines starting with '#' are skipped.
  static Preprocessor from_stopword_file(const std::filesystem::path& path);

  std::vector<std::string> operator()(std::string_view raw) const;
  bool is_stopword(std::string_view word) const;
  const std::unordered_set<std::string>& stopwords() const { return stopwords_; }

 private:
  std::unordered_set<std::string> stopwords_;
};

// Uses Preprocessor::standard().
std::vector<std::string> preprocess(std::string_view raw);

std::vector<std::string> default_stopwords();

class Vocabulary {
 public:
  Vocabulary() = default;
  // Words are indexed in the order given.
  Vocabulary(std::vector<std::string> words, std::vector<long> counts);

  std::optional<int> index_of(std::string_view word) const;
  const std::string& word(int index) const { return words_.at(index); }
  long count(int index) const { return counts_.at(index); }
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }
  const std::vector<long>& counts() const { return counts_; }

  // Plain text, one `word<TAB>count` per line in index order.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& o) const {
    return words_ == o.words_ && counts_ == o.counts_;
  }

 private:
  std::vector<std::string> words_;
  std::vector<long> counts_;
  std::unordered_map<std::string, int> index_;
};

inline constexpr int kDefaultMinCount = 10;

// Keeps tokens with corpus frequency >= min_count, indexed alphabetically.
// Throws Error when nothing survives.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs,
                            int min_count = kDefaultMinCount);

// word index -> count (>= 1). Ordered so iteration is deterministic.
using TermFrequencyVector = std::map<int, int>;

TermFrequencyVector term_frequency(const std::vector<std::string>& tokens,
                                   const Vocabulary& vocab);

// A point on the K-simplex.
using TopicDistribution = Eigen::VectorXd;

bool is_simplex(const TopicDistribution& probs, double tol = 1e-9);

}  // namespace sitrec::text
