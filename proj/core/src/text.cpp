#include "sitrec/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "sitrec/error.hpp"

namespace sitrec::text {
namespace detail {
const std::vector<std::string_view>& default_stopword_list();
}  // namespace detail

namespace {

bool is_url(std::string_view token) {
  return token.find("://") != std::string_view::npos ||
         token.starts_with("www.") || token.starts_with("WWW.");
}

std::string stem_to_fixed_point(std::string word) {
  // Porter is not idempotent on a handful of inputs ("agreed" -> "agre" ->
  // "agr"); a few rounds always settle.
  for (int round = 0; round < 8; ++round) {
    std::string next = porter_stem(word);
    if (next == word) break;
    word = std::move(next);
  }
  return word;
}

}  // namespace

std::vector<std::string> default_stopwords() {
  const auto& list = detail::default_stopword_list();
  return {list.begin(), list.end()};
}

Preprocessor::Preprocessor(std::unordered_set<std::string> stopwords)
    : stopwords_(std::move(stopwords)) {}

const Preprocessor& Preprocessor::standard() {
  static const Preprocessor instance([] {
    const auto& list = detail::default_stopword_list();
    std::unordered_set<std::string> words;
    for (auto w : list) words.emplace(w);
    return words;
  }());
  return instance;
}

Preprocessor Preprocessor::from_stopword_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open stopword file " + path.string());
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    auto last = line.find_last_not_of(" \t\r");
    std::string w = line.substr(first, last - first + 1);
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    words.insert(std::move(w));
  }
  return Preprocessor(std::move(words));
}

bool Preprocessor::is_stopword(std::string_view word) const {
  return stopwords_.count(std::string(word)) > 0;
}

std::vector<std::string> Preprocessor::operator()(std::string_view raw) const {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < raw.size()) {
    auto start = raw.find_first_not_of(" \t\r\n\f\v", pos);
    if (start == std::string_view::npos) break;
    auto end = raw.find_first_of(" \t\r\n\f\v", start);
    if (end == std::string_view::npos) end = raw.size();
    std::string_view chunk = raw.substr(start, end - start);
    pos = end;
    if (is_url(chunk)) continue;

    // Apostrophes join ("don't" -> "dont"); other punctuation separates.
    std::string cleaned;
    cleaned.reserve(chunk.size());
    for (char ch : chunk) {
      const auto c = static_cast<unsigned char>(ch);
      if (c == '\'') continue;
      if (c < 128 && std::isalnum(c)) {
        cleaned.push_back(static_cast<char>(std::tolower(c)));
      } else {
        cleaned.push_back(' ');
      }
    }

    std::size_t p = 0;
    while (p < cleaned.size()) {
      auto s = cleaned.find_first_not_of(' ', p);
      if (s == std::string::npos) break;
      auto e = cleaned.find(' ', s);
      if (e == std::string::npos) e = cleaned.size();
      std::string word = cleaned.substr(s, e - s);
      p = e;
      if (std::any_of(word.begin(), word.end(),
                      [](unsigned char c) { return std::isdigit(c); })) {
        continue;
      }
      if (is_stopword(word)) continue;
      word = stem_to_fixed_point(std::move(word));
      if (word.empty() || is_stopword(word)) continue;
      out.push_back(std::move(word));
    }
  }
  return out;
}

std::vector<std::string> preprocess(std::string_view raw) {
  return Preprocessor::standard()(raw);
}

Vocabulary::Vocabulary(std::vector<std::string> words, std::vector<long> counts)
    : words_(std::move(words)), counts_(std::move(counts)) {
  if (words_.size() != counts_.size()) {
    throw Error("vocabulary: words and counts differ in length");
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<int>(i)).second) {
      throw Error("vocabulary: duplicate word '" + words_[i] + "'");
    }
  }
}

std::optional<int> Vocabulary::index_of(std::string_view word) const {
  auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    out << words_[i] << '\t' << counts_[i] << '\n';
  }
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary " + path.string());
  std::vector<std::string> words;
  std::vector<long> counts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("expected word<TAB>count", line_no);
    words.push_back(line.substr(0, tab));
    try {
      counts.push_back(std::stol(line.substr(tab + 1)));
    } catch (const std::exception&) {
      throw ParseError("bad count", line_no);
    }
  }
  return Vocabulary(std::move(words), std::move(counts));
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& docs,
                            int min_count) {
  if (docs.empty()) throw Error("build_vocabulary: no documents");
  std::map<std::string, long> freq;
  for (const auto& doc : docs) {
    for (const auto& tok : doc) ++freq[tok];
  }
  std::vector<std::string> words;
  std::vector<long> counts;
  for (const auto& [w, c] : freq) {
    if (c >= min_count) {
      words.push_back(w);
      counts.push_back(c);
    }
  }
  if (words.empty()) {
    throw Error("build_vocabulary: no token reaches min_count=" +
                std::to_string(min_count));
  }
  return Vocabulary(std::move(words), std::move(counts));
}

TermFrequencyVector term_frequency(const std::vector<std::string>& tokens,
                                   const Vocabulary& vocab) {
  TermFrequencyVector tf;
  for (const auto& t : tokens) {
    if (auto idx = vocab.index_of(t)) ++tf[*idx];
  }
  return tf;
}

bool is_simplex(const TopicDistribution& probs, double tol) {
  if (probs.size() == 0) return false;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (!std::isfinite(probs[i]) || probs[i] < 0.0) return false;
  }
  return std::abs(probs.sum() - 1.0) <= tol;
}

}  // namespace sitrec::text
