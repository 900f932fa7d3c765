#include "sitrec/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "sitrec/error.hpp"
#include "sitrec/log.hpp"
#include "sitrec/random.hpp"

namespace sitrec::train {

// ---------------------------------------------------------------------------
// Ablation flags

void AblationFlags::set(std::string_view name, bool value) {
  if (name == "no_dynamic_student") {
    no_dynamic_student = value;
  } else if (name == "no_dynamic_thread") {
    no_dynamic_thread = value;
  } else if (name == "no_student_projection") {
    no_student_projection = value;
  } else if (name == "no_thread_projection") {
    no_thread_projection = value;
  } else if (name == "no_text_features") {
    no_text_features = value;
  } else {
    throw ConfigError("unknown ablation flag '" + std::string(name) + "'");
  }
}

bool AblationFlags::get(std::string_view name) const {
  if (name == "no_dynamic_student") return no_dynamic_student;
  if (name == "no_dynamic_thread") return no_dynamic_thread;
  if (name == "no_student_projection") return no_student_projection;
  if (name == "no_thread_projection") return no_thread_projection;
  if (name == "no_text_features") return no_text_features;
  throw ConfigError("unknown ablation flag '" + std::string(name) + "'");
}

AblationFlags AblationFlags::parse(std::string_view list) {
  AblationFlags flags;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    auto comma = list.find(',', pos);
    if (comma == std::string_view::npos) comma = list.size();
    std::string_view item = list.substr(pos, comma - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (!item.empty() && item != "none") flags.set(item);
    pos = comma + 1;
  }
  return flags;
}

std::string AblationFlags::to_string() const {
  std::string out;
  for (auto name : kNames) {
    if (!get(name)) continue;
    if (!out.empty()) out += ',';
    out += name;
  }
  return out.empty() ? "none" : out;
}

bool AblationFlags::any() const {
  return no_dynamic_student || no_dynamic_thread || no_student_projection ||
         no_thread_projection || no_text_features;
}

// ---------------------------------------------------------------------------
// t-batching

std::vector<TBatch> t_batch(std::span<const corpus::PostEvent> events) {
  std::unordered_map<corpus::StudentId, std::size_t> student_batch;
  std::unordered_map<corpus::ThreadId, std::size_t> thread_batch;
  std::vector<TBatch> batches;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto& e = events[i];
    std::size_t idx = 0;
    if (auto it = student_batch.find(e.student); it != student_batch.end()) {
      idx = std::max(idx, it->second + 1);
    }
    if (auto it = thread_batch.find(e.thread); it != thread_batch.end()) {
      idx = std::max(idx, it->second + 1);
    }
    if (idx >= batches.size()) batches.resize(idx + 1);
    batches[idx].events.push_back(i);
    student_batch[e.student] = idx;
    thread_batch[e.thread] = idx;
  }
  return batches;
}

// ---------------------------------------------------------------------------
// Per-event computation graph

EventForward forward_event(const EventInputs& in, const ModelParams& params,
                           const AblationFlags& flags) {
  const auto& D = params.dims;
  const int d = D.embedding;
  const int K = D.topics;
  const auto act = params.hyper.activation;
  EventForward f;

  model::TopicDistribution theta =
      flags.no_text_features ? model::TopicDistribution::Zero(K) : in.theta;

  auto recurrent = [&](const Eigen::MatrixXd& W, const Eigen::VectorXd& self,
                       const Eigen::VectorXd& other, double gap, Eigen::VectorXd& input) {
    input.resize(D.update_input());
    input << self, other, theta, gap;
    Eigen::VectorXd out = W.transpose() * input;
    for (int i = 0; i < d; ++i) out[i] = model::activate(out[i], act);
    return out;
  };

  if (flags.no_dynamic_student) {
    f.student_new = in.student_prev;
  } else {
    f.student_new = recurrent(params.weights.student_update, in.student_prev,
                              in.thread_prev, in.student_gap, f.student_input);
  }
  if (flags.no_dynamic_thread) {
    f.thread_new = in.thread_prev;
  } else {
    f.thread_new = recurrent(params.weights.thread_update, in.thread_prev,
                             in.student_prev, in.thread_gap, f.thread_input);
  }

  f.student_projection =
      flags.no_student_projection
          ? in.student_prev
          : model::project_student(in.student_prev, in.student_gap, in.week, params);
  f.prediction = model::predict_next(f.student_projection, in.student,
                                     in.last_thread_state, in.last_thread, params);
  f.residual = f.prediction - model::thread_target(in.thread, in.target_projection, D.threads);

  f.prediction_loss = f.residual.norm();
  f.student_smoothness = (f.student_new - in.student_prev).norm();
  f.thread_smoothness = (f.thread_new - in.thread_prev).norm();
  f.total = f.prediction_loss + params.hyper.lambda_student * f.student_smoothness +
            params.hyper.lambda_thread * f.thread_smoothness;
  return f;
}

void backward_event(const EventInputs& in, const EventForward& f, const ModelParams& params,
                    const AblationFlags& flags, ParamTensors& grads) {
  const auto& D = params.dims;
  const int d = D.embedding;
  const int m = D.students;
  const auto act = params.hyper.activation;
  const auto& W = params.weights.predictor;

  // Prediction head. The subgradient of a norm at zero is taken as zero.
  if (f.prediction_loss > 0.0) {
    const Eigen::VectorXd g = f.residual / f.prediction_loss;
    grads.predictor_bias += g;
    grads.predictor.topRows(d).noalias() += f.student_projection * g.transpose();
    grads.predictor.row(d + in.student) += g.transpose();
    grads.predictor.middleRows(d + m, d).noalias() += in.last_thread_state * g.transpose();
    if (in.last_thread) grads.predictor.row(2 * d + m + *in.last_thread) += g.transpose();

    if (!flags.no_student_projection) {
      const Eigen::VectorXd g_proj = W.topRows(d) * g;
      const Eigen::VectorXd g_scale = g_proj.cwiseProduct(in.student_prev);
      grads.time_context += g_scale * in.student_gap;
      grads.course_context.col(in.week) += g_scale;
    }
  }

  auto smoothness = [&](double lambda, double norm, const Eigen::VectorXd& out,
                        const Eigen::VectorXd& prev, const Eigen::VectorXd& input,
                        Eigen::MatrixXd& gW) {
    if (lambda == 0.0 || norm == 0.0) return;
    Eigen::VectorXd g_pre = (lambda / norm) * (out - prev);
    for (int i = 0; i < d; ++i) g_pre[i] *= model::activate_grad_from_output(out[i], act);
    gW.noalias() += input * g_pre.transpose();
  };
  if (!flags.no_dynamic_student) {
    smoothness(params.hyper.lambda_student, f.student_smoothness, f.student_new,
               in.student_prev, f.student_input, grads.student_update);
  }
  if (!flags.no_dynamic_thread) {
    smoothness(params.hyper.lambda_thread, f.thread_smoothness, f.thread_new,
               in.thread_prev, f.thread_input, grads.thread_update);
  }
}

void backward_lookback(const EventInputs& in, const EventForward& f,
                       const ModelParams& params, const AblationFlags& flags,
                       const UpdateRecord* student, const UpdateRecord* thread,
                       const UpdateRecord* last_thread, ParamTensors& grads) {
  if (f.prediction_loss == 0.0) return;
  const auto& D = params.dims;
  const int d = D.embedding;
  const int m = D.students;
  const auto act = params.hyper.activation;
  const auto& W = params.weights.predictor;
  const Eigen::VectorXd g = f.residual / f.prediction_loss;
  const auto g_dyn = g.tail(d);

  // d(prediction loss) / d(student_prev), d(thread_prev), d(last_thread_state).
  Eigen::VectorXd g_proj = W.topRows(d) * g;
  Eigen::VectorXd g_student =
      flags.no_student_projection
          ? g_proj
          : Eigen::VectorXd(g_proj.cwiseProduct(
                Eigen::VectorXd::Ones(d) + params.weights.time_context * in.student_gap +
                params.weights.course_context.col(in.week)));
  g_student -= in.target_pull * g_dyn;
  const Eigen::VectorXd g_thread = -(1.0 - in.target_pull) * g_dyn;
  const Eigen::VectorXd g_last = W.middleRows(d + m, d) * g;

  auto push = [&](const UpdateRecord* rec, const Eigen::VectorXd& g_out, Eigen::MatrixXd& gW) {
    if (!rec || !rec->valid) return;
    Eigen::VectorXd g_pre = g_out;
    for (int i = 0; i < d; ++i) g_pre[i] *= model::activate_grad_from_output(rec->output[i], act);
    gW.noalias() += rec->input * g_pre.transpose();
  };
  if (!flags.no_dynamic_student) push(student, g_student, grads.student_update);
  if (!flags.no_dynamic_thread) {
    push(thread, g_thread, grads.thread_update);
    if (in.last_thread) push(last_thread, g_last, grads.thread_update);
  }
}

// ---------------------------------------------------------------------------
// Configuration

void TrainConfig::validate() const {
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (lambda_student < 0 || lambda_thread < 0) throw ConfigError("lambdas must be >= 0");
  if (alpha < 0 || beta < 0) throw ConfigError("alpha and beta must be >= 0");
  if (init_stddev < 0) throw ConfigError("init_stddev must be >= 0");
}

model::Hyperparams TrainConfig::hyperparams() const {
  return {alpha, beta, lambda_student, lambda_thread, activation};
}

// ---------------------------------------------------------------------------
// Replay

ReplayState ReplayState::initial(int num_students, int num_threads, int d,
                                 double time_scale) {
  ReplayState s;
  s.students.assign(num_students, StudentReplay{model::DynamicState::initial(d), {}, {}});
  s.threads.assign(num_threads, model::DynamicState::initial(d));
  s.time_scale = time_scale;
  return s;
}

double mean_inter_event_gap(const corpus::Dataset& ds) {
  if (ds.size() < 2) return 1.0;
  const double span = ds.events().back().timestamp - ds.events().front().timestamp;
  const double gap = span / static_cast<double>(ds.size() - 1);
  return gap > 0.0 ? gap : 1.0;
}

EventInputs make_event_inputs(const corpus::Dataset& ds, const corpus::PostEvent& event,
                              const model::TopicDistribution& theta,
                              const ReplayState& state, const model::Hyperparams& hyper,
                              const AblationFlags& flags) {
  const auto& student = state.students.at(event.student);
  const auto& thread = state.threads.at(event.thread);
  const double scale = state.time_scale;

  EventInputs in;
  in.student = event.student;
  in.thread = event.thread;
  in.student_prev = student.state.embedding;
  in.thread_prev = thread.embedding;
  in.theta = theta;
  in.student_gap = (event.timestamp - student.state.last_update.value_or(0.0)) / scale;
  in.thread_gap = (event.timestamp - thread.last_update.value_or(0.0)) / scale;
  in.week = student.last_week ? *student.last_week
                              : ds.course().week_at(event.timestamp);
  in.last_thread = student.last_thread;
  in.last_thread_state = student.last_thread
                             ? state.threads.at(*student.last_thread).embedding
                             : Eigen::VectorXd::Zero(in.student_prev.size());
  if (flags.no_thread_projection) {
    in.target_projection = thread.embedding;
  } else {
    const auto history =
        corpus::reply_history(ds, event.student, event.thread, event.timestamp);
    const double z = model::zeta(history, event.timestamp, hyper.alpha, hyper.beta, scale);
    in.target_projection = model::project_thread(student.state.embedding, thread.embedding, z);
    in.target_pull = z / (1.0 + z);
  }
  return in;
}

void commit_event(const corpus::PostEvent& event, const model::TopicDistribution& theta,
                  const EventForward& fwd,
                  const std::vector<model::TopicDistribution>& course,
                  const AblationFlags& flags, ReplayState& state) {
  auto& student = state.students.at(event.student);
  auto& thread = state.threads.at(event.thread);
  if (!flags.no_dynamic_student) student.state.embedding = fwd.student_new;
  if (!flags.no_dynamic_thread) thread.embedding = fwd.thread_new;
  student.state.last_update = event.timestamp;
  thread.last_update = event.timestamp;
  student.last_thread = event.thread;
  student.last_week = model::assign_course_topic(theta, course);
}

// ---------------------------------------------------------------------------
// Optimizer

Adam::Adam(const model::Dimensions& dims, double learning_rate, double beta1,
           double beta2, double epsilon)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon),
      m_(ParamTensors::zeros(dims)),
      v_(ParamTensors::zeros(dims)) {}

void Adam::step(ParamTensors& weights, const ParamTensors& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::vector<std::span<double>> w, m, v;
  std::vector<std::span<const double>> g;
  weights.for_each([&](const char*, std::span<double> s) { w.push_back(s); });
  m_.for_each([&](const char*, std::span<double> s) { m.push_back(s); });
  v_.for_each([&](const char*, std::span<double> s) { v.push_back(s); });
  grads.for_each([&](const char*, std::span<const double> s) { g.push_back(s); });
  for (std::size_t t = 0; t < w.size(); ++t) {
    for (std::size_t i = 0; i < w[t].size(); ++i) {
      const double gi = g[t][i];
      m[t][i] = beta1_ * m[t][i] + (1.0 - beta1_) * gi;
      v[t][i] = beta2_ * v[t][i] + (1.0 - beta2_) * gi * gi;
      const double mhat = m[t][i] / c1;
      const double vhat = v[t][i] / c2;
      w[t][i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

double clip_global_norm(ParamTensors& grads, double max_norm) {
  double sq = 0.0;
  grads.for_each([&](const char*, std::span<const double> s) {
    for (double x : s) sq += x * x;
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    grads.for_each([&](const char*, std::span<double> s) {
      for (double& x : s) x *= scale;
    });
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Training loop

FitResult fit(const corpus::Dataset& train, const TextArtifacts& text,
              const TrainConfig& config) {
  return fit(train, text::post_topics(train, text.lda, text.vocab), text.course, config);
}

FitResult fit(const corpus::Dataset& train,
              const std::vector<model::TopicDistribution>& post_topics,
              const std::vector<model::TopicDistribution>& course,
              const TrainConfig& config) {
  config.validate();
  if (train.empty()) throw EmptyDatasetError("fit: training set is empty");
  if (post_topics.size() != train.size()) {
    throw ShapeError("fit: one topic distribution per training event is required");
  }
  if (course.empty()) throw ShapeError("fit: no course topic distributions");
  const int K = static_cast<int>(course.front().size());
  if (static_cast<int>(course.size()) != train.course().num_weeks()) {
    throw ShapeError("fit: course topic count does not match the schedule's weeks");
  }

  model::Dimensions dims{config.embedding_dim, K, train.course().num_weeks(),
                         train.num_students(), train.num_threads()};
  FitResult result;
  result.params = ModelParams::gaussian(dims, config.hyperparams(),
                                        derive_seed(config.seed, 1), config.init_stddev);
  const double scale = mean_inter_event_gap(train);
  const auto batches = t_batch(train.events());
  const auto& flags = config.ablation;

  Adam adam(dims, config.learning_rate);
  ParamTensors grads = ParamTensors::zeros(dims);
  std::vector<UpdateRecord> student_records, thread_records;
  std::vector<EventInputs> inputs;
  std::vector<EventForward> forwards;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const bool last_epoch = epoch == config.epochs;
    ReplayState state = ReplayState::initial(dims.students, dims.threads, dims.embedding, scale);
    if (last_epoch) result.trajectories.clear();
    student_records.assign(dims.students, {});
    thread_records.assign(dims.threads, {});
    double epoch_loss = 0.0;

    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& batch = batches[b].events;
      inputs.clear();
      forwards.clear();
      grads.set_zero();
      for (std::size_t idx : batch) {
        const auto& e = train.events()[idx];
        inputs.push_back(make_event_inputs(train, e, post_topics[idx], state,
                                           result.params.hyper, flags));
        forwards.push_back(forward_event(inputs.back(), result.params, flags));
        const double l = forwards.back().total;
        if (!std::isfinite(l)) {
          std::ostringstream msg;
          msg << "non-finite loss at epoch " << epoch << ", batch " << b << ", event "
              << idx << " (post " << e.post_id << ")";
          throw NumericalError(msg.str());
        }
        epoch_loss += l;
        backward_event(inputs.back(), forwards.back(), result.params, flags, grads);
        if (config.state_lookback) {
          const UpdateRecord* last =
              inputs.back().last_thread ? &thread_records[*inputs.back().last_thread] : nullptr;
          backward_lookback(inputs.back(), forwards.back(), result.params, flags,
                            &student_records[e.student], &thread_records[e.thread], last, grads);
        }
      }
      for (std::size_t j = 0; j < batch.size(); ++j) {
        const auto& e = train.events()[batch[j]];
        commit_event(e, post_topics[batch[j]], forwards[j], course, flags, state);
        if (config.state_lookback) {
          student_records[e.student] = {forwards[j].student_input, forwards[j].student_new,
                                        !flags.no_dynamic_student};
          thread_records[e.thread] = {forwards[j].thread_input, forwards[j].thread_new,
                                      !flags.no_dynamic_thread};
        }
        if (last_epoch && config.record_trajectories) {
          result.trajectories.push_back(
              {'s', e.student, e.timestamp, state.students[e.student].state.embedding});
          result.trajectories.push_back(
              {'t', e.thread, e.timestamp, state.threads[e.thread].embedding});
        }
      }
      clip_global_norm(grads, config.clip_norm);
      adam.step(result.params.weights, grads);
    }

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back({epoch, epoch_loss / static_cast<double>(train.size()), secs});
    if (log::level() <= log::Level::kDebug) {
      std::ostringstream msg;
      msg << "epoch " << epoch << " mean loss " << result.log.back().mean_loss;
      log::debug(msg.str());
    }
    if (last_epoch) result.state = std::move(state);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Gradient checking

GradCheckReport grad_check(const ModelParams& params, const EventInputs& inputs,
                           const AblationFlags& flags, double eps,
                           const std::function<void(ParamTensors&)>& tamper) {
  ParamTensors analytic = ParamTensors::zeros(params.dims);
  const EventForward fwd = forward_event(inputs, params, flags);
  backward_event(inputs, fwd, params, flags, analytic);
  if (tamper) tamper(analytic);

  std::vector<std::span<const double>> grads;
  analytic.for_each([&](const char*, std::span<const double> s) { grads.push_back(s); });

  GradCheckReport report;
  ModelParams probe = params;
  std::size_t tensor = 0;
  probe.weights.for_each([&](const char* name, std::span<double> s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double saved = s[i];
      s[i] = saved + eps;
      const double up = forward_event(inputs, probe, flags).total;
      s[i] = saved - eps;
      const double down = forward_event(inputs, probe, flags).total;
      s[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double exact = grads[tensor][i];
      const double denom = std::max({std::abs(numeric), std::abs(exact), kGradCheckFloor});
      const double rel = std::abs(numeric - exact) / denom;
      ++report.entries_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = name;
        report.worst_index = i;
      }
    }
    ++tensor;
  });
  return report;
}

}  // namespace sitrec::train
