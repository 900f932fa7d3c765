#include "sitrec/recommend.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "json.hpp"

#include "sitrec/error.hpp"

namespace sitrec::recommend {

RankedRecommendation rank_threads(const Eigen::VectorXd& predicted,
                                  std::span<const Candidate> candidates,
                                  std::size_t top_k) {
  std::vector<std::pair<double, ThreadId>> scored;
  scored.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (c.target.size() != predicted.size()) {
      throw ShapeError("rank_threads: candidate length differs from the prediction");
    }
    scored.emplace_back((c.target - predicted).norm(), c.thread);
  }
  std::sort(scored.begin(), scored.end());
  // A thread listed twice keeps its closest entry.
  std::set<ThreadId> seen;
  RankedRecommendation out;
  for (const auto& [dist, thread] : scored) {
    if (out.thread_ids.size() >= top_k) break;
    if (!seen.insert(thread).second) continue;
    out.distances.push_back(dist);
    out.thread_ids.push_back(thread);
  }
  return out;
}

double average_precision(std::span<const ThreadId> ranked,
                         const std::set<ThreadId>& relevant, int n_cutoff) {
  if (n_cutoff < 1) throw Error("average_precision: cutoff must be >= 1");
  if (relevant.empty()) return 0.0;
  const std::size_t n = std::min<std::size_t>(ranked.size(), n_cutoff);
  double sum = 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (relevant.count(ranked[i])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(std::min<std::size_t>(relevant.size(), n_cutoff));
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["map_at_n"] = map_at_n;
  j["n_cutoff"] = n_cutoff;
  j["users_evaluated"] = users_evaluated;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [u, ap] : per_user_ap) per[std::to_string(u)] = ap;
  j["per_user_ap"] = per;
  return j.dump(2);
}

void EvalReport::write_json(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json() << '\n';
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setprecision(17) << "student,ap\n";
  for (const auto& [u, ap] : per_user_ap) out << u << ',' << ap << '\n';
}

std::map<StudentId, std::set<ThreadId>> relevant_threads(const corpus::Dataset& test) {
  std::map<StudentId, std::set<ThreadId>> rel;
  for (const auto& e : test.events()) rel[e.student].insert(e.thread);
  return rel;
}

EvalReport evaluate(const Recommender& recommender, const corpus::Dataset& test,
                    int n_cutoff) {
  if (n_cutoff < 1) throw ConfigError("evaluate: cutoff must be >= 1");
  EvalReport report;
  report.n_cutoff = n_cutoff;
  double sum = 0.0;
  for (const auto& [u, rel] : relevant_threads(test)) {
    const auto ranked = recommender(u);
    const double ap = average_precision(ranked.thread_ids, rel, n_cutoff);
    report.per_user_ap[u] = ap;
    sum += ap;
  }
  report.users_evaluated = static_cast<int>(report.per_user_ap.size());
  if (report.users_evaluated == 0) {
    throw EmptyDatasetError("evaluate: no student has a post in the test window");
  }
  report.map_at_n = sum / report.users_evaluated;
  return report;
}

namespace {

// Threads sorted by a per-thread key (larger first unless `ascending`);
// threads without a key go last by id.
RankedRecommendation order_by(const std::vector<std::optional<double>>& key, bool ascending) {
  std::vector<ThreadId> ids(key.size());
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](ThreadId a, ThreadId b) {
    const auto& ka = key[a];
    const auto& kb = key[b];
    if (ka.has_value() != kb.has_value()) return ka.has_value();
    if (!ka || *ka == *kb) return a < b;
    return ascending ? *ka < *kb : *ka > *kb;
  });
  return {std::move(ids), {}};
}

std::vector<std::optional<double>> last_activity(const corpus::Dataset& train) {
  std::vector<std::optional<double>> last(train.num_threads());
  for (const auto& e : train.events()) last[e.thread] = e.timestamp;
  return last;
}

}  // namespace

RankedRecommendation baseline_pop(const corpus::Dataset& train) {
  std::vector<std::optional<double>> count(train.num_threads(), 0.0);
  for (const auto& e : train.events()) *count[e.thread] += 1.0;
  return order_by(count, false);
}

RankedRecommendation baseline_rec(const corpus::Dataset& train, bool ascending) {
  return order_by(last_activity(train), ascending);
}

RankedRecommendation baseline_user_rec(const corpus::Dataset& train, StudentId student,
                                       bool ascending) {
  std::vector<std::optional<double>> own(train.num_threads());
  for (const auto& e : train.events()) {
    if (e.student == student) own[e.thread] = e.timestamp;
  }
  auto mine = order_by(own, ascending);
  RankedRecommendation out;
  for (ThreadId p : mine.thread_ids) {
    if (own[p]) out.thread_ids.push_back(p);
  }
  for (ThreadId p : baseline_rec(train, ascending).thread_ids) {
    if (!own[p]) out.thread_ids.push_back(p);
  }
  return out;
}

SitrecRecommender::SitrecRecommender(const model::ModelParams& params,
                                     const train::ReplayState& state,
                                     const corpus::Dataset& history, Timestamp at,
                                     const train::AblationFlags& flags)
    : params_(params), state_(state), history_(history), at_(at), flags_(flags) {
  if (static_cast<int>(state.students.size()) != params.dims.students ||
      static_cast<int>(state.threads.size()) != params.dims.threads) {
    throw ShapeError("SitrecRecommender: replay state does not match the model");
  }
  if (history.num_threads() != params.dims.threads ||
      history.num_students() != params.dims.students) {
    throw ShapeError("SitrecRecommender: dataset registry does not match the model");
  }
  for (ThreadId p = 0; p < history.num_threads(); ++p) {
    if (!history.thread_events(p).empty()) active_threads_.push_back(p);
  }
}

Eigen::VectorXd SitrecRecommender::predicted(StudentId student) const {
  const auto& s = state_.students.at(student);
  const double gap = (at_ - s.state.last_update.value_or(0.0)) / state_.time_scale;
  const int week = s.last_week ? *s.last_week : history_.course().week_at(at_);
  const Eigen::VectorXd u_hat =
      flags_.no_student_projection
          ? s.state.embedding
          : model::project_student(s.state.embedding, gap, week, params_);
  const Eigen::VectorXd last = s.last_thread
                                   ? state_.threads.at(*s.last_thread).embedding
                                   : Eigen::VectorXd::Zero(params_.dims.embedding);
  return model::predict_next(u_hat, student, last, s.last_thread, params_);
}

std::vector<Candidate> SitrecRecommender::candidates(StudentId student) const {
  const auto& u = state_.students.at(student).state.embedding;
  std::vector<Candidate> out;
  out.reserve(active_threads_.size());
  for (ThreadId p : active_threads_) {
    const auto& emb = state_.threads[p].embedding;
    Eigen::VectorXd proj;
    if (flags_.no_thread_projection) {
      proj = emb;
    } else {
      const auto hist = corpus::reply_history(history_, student, p, at_);
      const double z = model::zeta(hist, at_, params_.hyper.alpha, params_.hyper.beta,
                                   state_.time_scale);
      proj = model::project_thread(u, emb, z);
    }
    out.push_back({p, model::thread_target(p, proj, params_.dims.threads)});
  }
  return out;
}

RankedRecommendation SitrecRecommender::operator()(StudentId student,
                                                   std::size_t top_k) const {
  if (student < 0 || student >= params_.dims.students) {
    throw Error("recommend: student " + std::to_string(student) + " out of range");
  }
  const auto cands = candidates(student);
  if (cands.empty()) throw EmptyDatasetError("recommend: no candidate threads");
  return rank_threads(predicted(student), cands, top_k);
}

void write_trajectories(const std::vector<train::TrajectoryPoint>& points,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setprecision(17);
  const Eigen::Index d = points.empty() ? 0 : points.front().embedding.size();
  out << "kind,id,timestamp";
  for (Eigen::Index i = 0; i < d; ++i) out << ",e" << i;
  out << '\n';
  for (const auto& p : points) {
    out << (p.kind == 's' ? "student" : "thread") << ',' << p.id << ',' << p.timestamp;
    for (Eigen::Index i = 0; i < p.embedding.size(); ++i) out << ',' << p.embedding[i];
    out << '\n';
  }
}

}  // namespace sitrec::recommend
