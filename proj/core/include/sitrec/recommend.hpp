#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sitrec/corpus.hpp"
#include "sitrec/model.hpp"
#include "sitrec/train.hpp"

namespace sitrec::recommend {

using corpus::StudentId;
using corpus::ThreadId;
using corpus::Timestamp;

inline constexpr std::size_t kAll = std::numeric_limits<std::size_t>::max();

// Ordered thread list. `distances` is parallel to `thread_ids` for
// embedding-based rankings and empty for the heuristic baselines.
struct RankedRecommendation {
  std::vector<ThreadId> thread_ids;
  std::vector<double> distances;
};

struct Candidate {
  ThreadId thread = 0;
  Eigen::VectorXd target;  // [onehot_n(thread), projected thread embedding]
};

// Exhaustive L2 scan, ascending distance, ties to the smaller thread id.
RankedRecommendation rank_threads(const Eigen::VectorXd& predicted,
                                  std::span<const Candidate> candidates,
                                  std::size_t top_k = kAll);

// Average precision at `n_cutoff`, normalized by min(|relevant|, n_cutoff).
// Zero for an empty relevant set.
double average_precision(std::span<const ThreadId> ranked,
                         const std::set<ThreadId>& relevant, int n_cutoff);

struct EvalReport {
  double map_at_n = 0.0;
  std::map<StudentId, double> per_user_ap;
  int n_cutoff = 5;
  int users_evaluated = 0;

  std::string to_json() const;
  void write_json(const std::filesystem::path& path) const;
  // `student,ap` rows, one per evaluated student.
  void write_csv(const std::filesystem::path& path) const;
};

// Ranking for one student at the start of the test window.
using Recommender = std::function<RankedRecommendation(StudentId)>;

// Threads each student posted on inside `test`.
std::map<StudentId, std::set<ThreadId>> relevant_threads(const corpus::Dataset& test);

// Ranks once per student with at least one test post and averages AP.
// Throws EmptyDatasetError when no student can be evaluated.
EvalReport evaluate(const Recommender& recommender, const corpus::Dataset& test,
                    int n_cutoff = 5);

// Every thread by descending training post count, ties by id.
RankedRecommendation baseline_pop(const corpus::Dataset& train);
// Every thread by last activity, most recent first (oldest first when
// `ascending`). Threads without posts go last, by id.
RankedRecommendation baseline_rec(const corpus::Dataset& train, bool ascending = false);
// The student's own threads by the time of their last post there, most
// recent first, then the remaining threads in baseline_rec order.
RankedRecommendation baseline_user_rec(const corpus::Dataset& train, StudentId student,
                                       bool ascending = false);

// Ranks with a trained model frozen at time `at` (normally the end of the
// training window). Candidates are the threads with at least one post in
// `history`, and the excitation term only sees `history`. Holds references
// to its arguments.
class SitrecRecommender {
 public:
  SitrecRecommender(const model::ModelParams& params, const train::ReplayState& state,
                    const corpus::Dataset& history, Timestamp at,
                    const train::AblationFlags& flags = {});

  Eigen::VectorXd predicted(StudentId student) const;
  std::vector<Candidate> candidates(StudentId student) const;
  RankedRecommendation operator()(StudentId student, std::size_t top_k = kAll) const;

  Timestamp at() const { return at_; }

 private:
  const model::ModelParams& params_;
  const train::ReplayState& state_;
  const corpus::Dataset& history_;
  Timestamp at_;
  train::AblationFlags flags_;
  std::vector<ThreadId> active_threads_;
};

// CSV `kind,id,timestamp,e0..e{d-1}`, kind is `student` or `thread`.
void write_trajectories(const std::vector<train::TrajectoryPoint>& points,
                        const std::filesystem::path& path);

}  // namespace sitrec::recommend
