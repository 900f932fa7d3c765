#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sitrec/corpus.hpp"
#include "sitrec/model.hpp"

namespace sitrec::testing {

// (student, thread, timestamp[, parent]) shorthand for hand-built logs.
struct Ev {
  int student;
  int thread;
  double t;
  std::optional<corpus::PostId> parent = std::nullopt;
};

inline corpus::CourseSchedule one_week_course() {
  return {{{"lectur"}}, {0.0}};
}

// Post ids are 1-based positions in `evs`.
inline corpus::Dataset make_dataset(const std::vector<Ev>& evs, int m, int n,
                                    corpus::CourseSchedule course = one_week_course()) {
  std::vector<corpus::PostEvent> events;
  for (std::size_t i = 0; i < evs.size(); ++i) {
    corpus::PostEvent e;
    e.post_id = static_cast<corpus::PostId>(i + 1);
    e.student = evs[i].student;
    e.thread = evs[i].thread;
    e.timestamp = evs[i].t;
    e.parent_post_id = evs[i].parent;
    events.push_back(e);
  }
  return corpus::Dataset(std::move(events), m, n, std::move(course));
}

// Random chronological log over m students and n threads, no replies.
inline std::vector<corpus::PostEvent> random_events(std::mt19937_64& rng, std::size_t count,
                                                    int m, int n) {
  std::uniform_int_distribution<int> su(0, m - 1), th(0, n - 1);
  std::uniform_real_distribution<double> gap(0.0, 10.0);
  std::vector<corpus::PostEvent> out;
  double t = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    t += gap(rng);
    corpus::PostEvent e;
    e.post_id = static_cast<corpus::PostId>(i + 1);
    e.student = su(rng);
    e.thread = th(rng);
    e.timestamp = t;
    out.push_back(e);
  }
  return out;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, int size, double lo = -1.0,
                                     double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v[i] = u(rng);
  return v;
}

inline Eigen::VectorXd random_simplex(std::mt19937_64& rng, int k) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd v(k);
  for (int i = 0; i < k; ++i) v[i] = e(rng);
  return v / v.sum();
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("sitrec_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace sitrec::testing
