#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>

#include <Eigen/Core>

#include "sitrec/corpus.hpp"
#include "sitrec/text.hpp"

namespace sitrec::model {

using text::TopicDistribution;

enum class Activation { kSigmoid, kTanh };

struct Dimensions {
  int embedding = 0;   // d
  int topics = 0;      // K
  int weeks = 0;       // S
  int students = 0;    // m
  int threads = 0;     // n

  // Rows of either recurrent weight matrix: [self, other, theta, gap].
  int update_input() const { return 2 * embedding + topics + 1; }
  // Rows of the prediction weights: [u_hat, student one-hot, p, thread one-hot].
  int predictor_input() const { return students + threads + 2 * embedding; }
  // Length of a predicted/target thread embedding: [static one-hot, dynamic].
  int predictor_output() const { return threads + embedding; }

  bool operator==(const Dimensions&) const = default;
};

struct Hyperparams {
  double alpha = 0.5;       // decay for generic posts in the excitation sum
  double beta = 0.001;      // decay for replies to the student's own posts
  double lambda_student = 1.0;
  double lambda_thread = 1.0;
  Activation activation = Activation::kSigmoid;

  bool operator==(const Hyperparams&) const = default;
};

// Every trainable tensor. Gradients and optimizer moments reuse this shape.
struct ParamTensors {
  Eigen::MatrixXd student_update;  // (2d+K+1) x d
  Eigen::MatrixXd thread_update;   // (2d+K+1) x d
  Eigen::VectorXd time_context;    // d   (a d x 1 matrix)
  Eigen::MatrixXd course_context;  // d x S
  Eigen::MatrixXd predictor;       // (m+n+2d) x (n+d)
  Eigen::VectorXd predictor_bias;  // n+d

  static ParamTensors zeros(const Dimensions& dims);

  // Visits the tensors in a fixed order as flat column-major coefficient
  // arrays: fn(name, span).
  template <typename Fn>
  void for_each(Fn&& fn) {
    fn("student_update", flat(student_update));
    fn("thread_update", flat(thread_update));
    fn("time_context", flat(time_context));
    fn("course_context", flat(course_context));
    fn("predictor", flat(predictor));
    fn("predictor_bias", flat(predictor_bias));
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    fn("student_update", flat(student_update));
    fn("thread_update", flat(thread_update));
    fn("time_context", flat(time_context));
    fn("course_context", flat(course_context));
    fn("predictor", flat(predictor));
    fn("predictor_bias", flat(predictor_bias));
  }

  std::size_t total_size() const;
  void set_zero();

  bool operator==(const ParamTensors& o) const;

 private:
  template <typename Dense>
  static std::span<double> flat(Dense& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
  }
  template <typename Dense>
  static std::span<const double> flat(const Dense& m) {
    return {m.data(), static_cast<std::size_t>(m.size())};
  }
};

struct ModelParams {
  Dimensions dims;
  Hyperparams hyper;
  ParamTensors weights;

  // All-zero tensors of the right shape.
  static ModelParams zeros(const Dimensions& dims, const Hyperparams& hyper = {});
  // Zero-mean Gaussian entries with the given deviation for every weight
  // matrix; the prediction bias starts at zero.
  static ModelParams gaussian(const Dimensions& dims, const Hyperparams& hyper,
                              std::uint64_t seed, double stddev = 0.1);

  // Throws ShapeError on any shape mismatch, NumericalError on non-finite
  // entries, ConfigError on negative hyperparameters.
  void validate() const;

  bool operator==(const ModelParams& o) const {
    return dims == o.dims && hyper == o.hyper && weights == o.weights;
  }
};

// u(t) / p(t) plus the time of the last update (absent before the first).
struct DynamicState {
  Eigen::VectorXd embedding;
  std::optional<corpus::Timestamp> last_update;

  static DynamicState initial(int d) { return {Eigen::VectorXd::Zero(d), std::nullopt}; }
  bool operator==(const DynamicState& o) const {
    return embedding == o.embedding && last_update == o.last_update;
  }
};

double activate(double x, Activation act);
// Derivative expressed through the activation's output value.
double activate_grad_from_output(double y, Activation act);

struct UpdatedPair {
  Eigen::VectorXd student;
  Eigen::VectorXd thread;
};

// Coupled recurrent step. Both outputs read only the pre-update values:
//   student' = act(W_su^T [u, p, theta, gap_u])
//   thread'  = act(W_tu^T [p, u, theta, gap_p])
// Gaps are already time-normalized.
UpdatedPair update(const Eigen::VectorXd& student, const Eigen::VectorXd& thread,
                   const TopicDistribution& theta, double student_gap,
                   double thread_gap, const ModelParams& params);

// Index of the course week whose topic distribution is L2-closest to
// `theta`, smallest index on ties.
int assign_course_topic(const TopicDistribution& theta,
                        std::span<const TopicDistribution> course_thetas);

// (1 + w_time * gap + w_course[:, week]) ⊙ student.
Eigen::VectorXd project_student(const Eigen::VectorXd& student, double gap,
                                int week, const ModelParams& params);

// Excitation score for a student on a thread: zero when the student never
// posted there, otherwise exponentially decayed counts of other students'
// posts (rate alpha) and of replies to the student (rate beta), measured from
// the student's last own post. Gaps are divided by `time_scale`. Throws
// IntegrityError on a negative gap.
double zeta(const corpus::ReplyHistory& history, corpus::Timestamp t_query,
            double alpha, double beta, double time_scale = 1.0);

// Convex pull of the thread embedding towards the student embedding.
Eigen::VectorXd project_thread(const Eigen::VectorXd& student,
                               const Eigen::VectorXd& thread, double zeta_value);

// Identifies a thread for the one-hot part of the predictor input. An empty
// value contributes the zero vector (cold start).
using OptionalThread = std::optional<corpus::ThreadId>;

// Linear head over [u_hat, onehot(student), p_last, onehot(last_thread)].
// One-hot blocks select predictor rows directly.
Eigen::VectorXd predict_next(const Eigen::VectorXd& student_projection,
                             corpus::StudentId student,
                             const Eigen::VectorXd& last_thread_state,
                             OptionalThread last_thread, const ModelParams& params);

// [onehot_n(thread), projection].
Eigen::VectorXd thread_target(corpus::ThreadId thread,
                              const Eigen::VectorXd& projection, int num_threads);

// Per-event loss with unsquared L2 norms:
//   ||pred - [onehot(target), target_projection]||
//     + lambda_s ||student_new - student_prev|| + lambda_t ||thread_new - thread_prev||
double loss(const Eigen::VectorXd& prediction, corpus::ThreadId target_thread,
            const Eigen::VectorXd& target_projection,
            const Eigen::VectorXd& student_new, const Eigen::VectorXd& student_prev,
            const Eigen::VectorXd& thread_new, const Eigen::VectorXd& thread_prev,
            const ModelParams& params);

}  // namespace sitrec::model
