#include "sitrec/model.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <string_view>

#include "sitrec/error.hpp"
#include "sitrec/random.hpp"

namespace sitrec::model {

ParamTensors ParamTensors::zeros(const Dimensions& dims) {
  const int d = dims.embedding;
  ParamTensors t;
  t.student_update = Eigen::MatrixXd::Zero(dims.update_input(), d);
  t.thread_update = Eigen::MatrixXd::Zero(dims.update_input(), d);
  t.time_context = Eigen::VectorXd::Zero(d);
  t.course_context = Eigen::MatrixXd::Zero(d, dims.weeks);
  t.predictor = Eigen::MatrixXd::Zero(dims.predictor_input(), dims.predictor_output());
  t.predictor_bias = Eigen::VectorXd::Zero(dims.predictor_output());
  return t;
}

std::size_t ParamTensors::total_size() const {
  std::size_t n = 0;
  for_each([&](const char*, std::span<const double> s) { n += s.size(); });
  return n;
}

void ParamTensors::set_zero() {
  for_each([](const char*, std::span<double> s) { std::fill(s.begin(), s.end(), 0.0); });
}

bool ParamTensors::operator==(const ParamTensors& o) const {
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && a == b;
  };
  return same(student_update, o.student_update) && same(thread_update, o.thread_update) &&
         same(time_context, o.time_context) && same(course_context, o.course_context) &&
         same(predictor, o.predictor) && same(predictor_bias, o.predictor_bias);
}

ModelParams ModelParams::zeros(const Dimensions& dims, const Hyperparams& hyper) {
  ModelParams p{dims, hyper, ParamTensors::zeros(dims)};
  p.validate();
  return p;
}

ModelParams ModelParams::gaussian(const Dimensions& dims, const Hyperparams& hyper,
                                  std::uint64_t seed, double stddev) {
  ModelParams p = zeros(dims, hyper);
  Rng rng(seed);
  p.weights.for_each([&](const char* name, std::span<double> s) {
    if (std::string_view(name) == "predictor_bias") return;
    for (double& x : s) x = rng.normal(0.0, stddev);
  });
  return p;
}

void ModelParams::validate() const {
  const auto& D = dims;
  if (D.embedding < 1 || D.topics < 0 || D.weeks < 1 || D.students < 1 || D.threads < 1) {
    throw ShapeError("model dimensions must be positive (d, S, m, n >= 1; K >= 0)");
  }
  auto check = [](const char* name, const auto& t, Eigen::Index rows, Eigen::Index cols) {
    if (t.rows() != rows || t.cols() != cols) {
      throw ShapeError(std::string(name) + ": expected " + std::to_string(rows) + "x" +
                       std::to_string(cols) + ", got " + std::to_string(t.rows()) + "x" +
                       std::to_string(t.cols()));
    }
  };
  const auto& w = weights;
  check("student_update", w.student_update, D.update_input(), D.embedding);
  check("thread_update", w.thread_update, D.update_input(), D.embedding);
  check("time_context", w.time_context, D.embedding, 1);
  check("course_context", w.course_context, D.embedding, D.weeks);
  check("predictor", w.predictor, D.predictor_input(), D.predictor_output());
  check("predictor_bias", w.predictor_bias, D.predictor_output(), 1);
  w.for_each([](const char* name, std::span<const double> s) {
    for (double x : s) {
      if (!std::isfinite(x)) throw NumericalError(std::string(name) + " has a non-finite entry");
    }
  });
  if (hyper.alpha < 0 || hyper.beta < 0 || hyper.lambda_student < 0 || hyper.lambda_thread < 0) {
    throw ConfigError("alpha, beta, lambda_student and lambda_thread must be >= 0");
  }
}

double activate(double x, Activation act) {
  if (act == Activation::kTanh) return std::tanh(x);
  return 1.0 / (1.0 + std::exp(-x));
}

double activate_grad_from_output(double y, Activation act) {
  if (act == Activation::kTanh) return 1.0 - y * y;
  return y * (1.0 - y);
}

namespace {

void require_size(const char* what, Eigen::Index got, Eigen::Index want) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected length " + std::to_string(want) +
                     ", got " + std::to_string(got));
  }
}

Eigen::VectorXd recurrent_step(const Eigen::MatrixXd& weights, const Eigen::VectorXd& self,
                               const Eigen::VectorXd& other, const TopicDistribution& theta,
                               double gap, Activation act) {
  const Eigen::Index d = self.size();
  const Eigen::Index K = theta.size();
  Eigen::VectorXd out = weights.topRows(d).transpose() * self;
  out.noalias() += weights.middleRows(d, d).transpose() * other;
  if (K > 0) out.noalias() += weights.middleRows(2 * d, K).transpose() * theta;
  out += weights.row(2 * d + K).transpose() * gap;
  for (Eigen::Index i = 0; i < d; ++i) out[i] = activate(out[i], act);
  return out;
}

}  // namespace

UpdatedPair update(const Eigen::VectorXd& student, const Eigen::VectorXd& thread,
                   const TopicDistribution& theta, double student_gap,
                   double thread_gap, const ModelParams& params) {
  const auto& D = params.dims;
  require_size("student embedding", student.size(), D.embedding);
  require_size("thread embedding", thread.size(), D.embedding);
  require_size("topic distribution", theta.size(), D.topics);
  const auto act = params.hyper.activation;
  return {recurrent_step(params.weights.student_update, student, thread, theta,
                         student_gap, act),
          recurrent_step(params.weights.thread_update, thread, student, theta,
                         thread_gap, act)};
}

int assign_course_topic(const TopicDistribution& theta,
                        std::span<const TopicDistribution> course_thetas) {
  if (course_thetas.empty()) throw Error("assign_course_topic: no course weeks");
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < course_thetas.size(); ++i) {
    require_size("course topic distribution", course_thetas[i].size(), theta.size());
    const double dist = (course_thetas[i] - theta).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<int>(i);
    }
  }
  return best;
}

Eigen::VectorXd project_student(const Eigen::VectorXd& student, double gap, int week,
                                const ModelParams& params) {
  const auto& D = params.dims;
  require_size("student embedding", student.size(), D.embedding);
  if (week < 0 || week >= D.weeks) {
    throw Error("project_student: week " + std::to_string(week) + " out of range");
  }
  const Eigen::VectorXd scale = Eigen::VectorXd::Ones(D.embedding) +
                                params.weights.time_context * gap +
                                params.weights.course_context.col(week);
  return scale.cwiseProduct(student);
}

double zeta(const corpus::ReplyHistory& history, corpus::Timestamp t_query,
            double alpha, double beta, double time_scale) {
  if (!history.last_own_post) return 0.0;
  const double t_up = *history.last_own_post;
  auto gap = [&](corpus::Timestamp t) {
    if (t < t_up || t > t_query) {
      throw IntegrityError("zeta: event time lies outside (last own post, query time)");
    }
    return (t - t_up) / time_scale;
  };
  double z = 0.0;
  for (auto t : history.post_times) z += std::exp(-alpha * gap(t));
  for (auto t : history.reply_times) z += std::exp(-beta * gap(t));
  return z;
}

Eigen::VectorXd project_thread(const Eigen::VectorXd& student,
                               const Eigen::VectorXd& thread, double zeta_value) {
  if (student.size() != thread.size()) {
    throw ShapeError("project_thread: embeddings differ in length");
  }
  if (zeta_value == 0.0) return thread;
  const double pull = zeta_value / (1.0 + zeta_value);
  const double keep = 1.0 / (1.0 + zeta_value);
  return pull * student + keep * thread;
}

Eigen::VectorXd predict_next(const Eigen::VectorXd& student_projection,
                             corpus::StudentId student,
                             const Eigen::VectorXd& last_thread_state,
                             OptionalThread last_thread, const ModelParams& params) {
  const auto& D = params.dims;
  const int d = D.embedding;
  require_size("student projection", student_projection.size(), d);
  require_size("last thread embedding", last_thread_state.size(), d);
  if (student < 0 || student >= D.students) throw ShapeError("predict_next: student out of range");
  if (last_thread && (*last_thread < 0 || *last_thread >= D.threads)) {
    throw ShapeError("predict_next: thread out of range");
  }
  const auto& W = params.weights.predictor;
  Eigen::VectorXd q = params.weights.predictor_bias;
  q.noalias() += W.topRows(d).transpose() * student_projection;
  q += W.row(d + student).transpose();
  q.noalias() += W.middleRows(d + D.students, d).transpose() * last_thread_state;
  if (last_thread) q += W.row(2 * d + D.students + *last_thread).transpose();
  return q;
}

Eigen::VectorXd thread_target(corpus::ThreadId thread, const Eigen::VectorXd& projection,
                              int num_threads) {
  Eigen::VectorXd t = Eigen::VectorXd::Zero(num_threads + projection.size());
  t[thread] = 1.0;
  t.tail(projection.size()) = projection;
  return t;
}

double loss(const Eigen::VectorXd& prediction, corpus::ThreadId target_thread,
            const Eigen::VectorXd& target_projection,
            const Eigen::VectorXd& student_new, const Eigen::VectorXd& student_prev,
            const Eigen::VectorXd& thread_new, const Eigen::VectorXd& thread_prev,
            const ModelParams& params) {
  const auto& D = params.dims;
  require_size("prediction", prediction.size(), D.predictor_output());
  require_size("target projection", target_projection.size(), D.embedding);
  if (target_thread < 0 || target_thread >= D.threads) throw ShapeError("loss: target out of range");
  const Eigen::VectorXd target = thread_target(target_thread, target_projection, D.threads);
  return (prediction - target).norm() +
         params.hyper.lambda_student * (student_new - student_prev).norm() +
         params.hyper.lambda_thread * (thread_new - thread_prev).norm();
}

}  // namespace sitrec::model
