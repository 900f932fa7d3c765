#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "sitrec/corpus.hpp"
#include "sitrec/lda.hpp"
#include "sitrec/model.hpp"

namespace sitrec::train {

using corpus::Timestamp;
using model::ModelParams;
using model::ParamTensors;

// Component switches for the ablation study. All off = the full model.
struct AblationFlags {
  bool no_dynamic_student = false;     // u(t) stays at its initial value
  bool no_dynamic_thread = false;      // p(t) stays at its initial value
  bool no_student_projection = false;  // u_hat = u(t)
  bool no_thread_projection = false;   // projected thread = p(t)
  bool no_text_features = false;       // zero topic block in the update inputs

  static constexpr std::array<std::string_view, 5> kNames = {
      "no_dynamic_student", "no_dynamic_thread", "no_student_projection",
      "no_thread_projection", "no_text_features"};

  // Throws ConfigError on an unknown name.
  void set(std::string_view name, bool value = true);
  bool get(std::string_view name) const;
  // Comma-separated flag names; empty string and "none" mean no flags.
  static AblationFlags parse(std::string_view list);
  std::string to_string() const;
  bool any() const;

  bool operator==(const AblationFlags&) const = default;
};

struct TBatch {
  std::vector<std::size_t> events;
};

// Assigns each event to batch 1 + max(last batch of its student, last batch
// of its thread), 0 for unseen entities. `events` must be chronological.
std::vector<TBatch> t_batch(std::span<const corpus::PostEvent> events);

// Everything the per-event computation reads besides the parameters. Dynamic
// states are constants here: gradients stop at batch boundaries.
struct EventInputs {
  corpus::StudentId student = 0;
  corpus::ThreadId thread = 0;
  model::OptionalThread last_thread;
  Eigen::VectorXd student_prev;
  Eigen::VectorXd thread_prev;
  Eigen::VectorXd last_thread_state;
  model::TopicDistribution theta;
  double student_gap = 0.0;  // normalized; also the projection horizon
  double thread_gap = 0.0;
  int week = 0;
  Eigen::VectorXd target_projection;
  // Weight of student_prev in target_projection (zeta / (1 + zeta)); the
  // thread's own weight is 1 minus this.
  double target_pull = 0.0;
};

struct EventForward {
  Eigen::VectorXd student_input;
  Eigen::VectorXd thread_input;
  Eigen::VectorXd student_new;
  Eigen::VectorXd thread_new;
  Eigen::VectorXd student_projection;
  Eigen::VectorXd prediction;
  Eigen::VectorXd residual;
  double prediction_loss = 0.0;
  double student_smoothness = 0.0;
  double thread_smoothness = 0.0;
  double total = 0.0;
};

EventForward forward_event(const EventInputs& in, const ModelParams& params,
                           const AblationFlags& flags);

// Reverse pass of forward_event; adds d(total)/d(weights) into `grads`.
void backward_event(const EventInputs& in, const EventForward& fwd,
                    const ModelParams& params, const AblationFlags& flags,
                    ParamTensors& grads);

// Input and output of an entity's most recent recurrent update.
struct UpdateRecord {
  Eigen::VectorXd input;
  Eigen::VectorXd output;
  bool valid = false;
};

// Gradient of the event's prediction loss with respect to the states it
// read, pushed one step further through the updates that produced them and
// added to the update weights. Records that are invalid or null are skipped.
void backward_lookback(const EventInputs& in, const EventForward& fwd,
                       const ModelParams& params, const AblationFlags& flags,
                       const UpdateRecord* student, const UpdateRecord* thread,
                       const UpdateRecord* last_thread, ParamTensors& grads);

struct TrainConfig {
  int embedding_dim = 10;
  int epochs = 30;
  double learning_rate = 0.001;
  double lambda_student = 1.0;
  double lambda_thread = 1.0;
  double alpha = 0.5;
  double beta = 0.001;
  std::uint64_t seed = 42;
  double clip_norm = 5.0;  // <= 0 disables clipping
  double init_stddev = 0.1;
  model::Activation activation = model::Activation::kSigmoid;
  AblationFlags ablation;
  bool record_trajectories = false;
  // Also send the prediction loss one update back (see backward_lookback).
  // Off means states entering a batch are pure constants.
  bool state_lookback = true;

  // Throws ConfigError.
  void validate() const;
  model::Hyperparams hyperparams() const;
  bool operator==(const TrainConfig&) const = default;
};

struct TextArtifacts {
  text::LdaModel lda;
  text::Vocabulary vocab;
  std::vector<model::TopicDistribution> course;
};

struct StudentReplay {
  model::DynamicState state;
  std::optional<corpus::ThreadId> last_thread;
  std::optional<int> last_week;  // course week of the latest post's topic
  bool operator==(const StudentReplay&) const = default;
};

// Dynamic state of every entity after replaying a prefix of the log.
struct ReplayState {
  std::vector<StudentReplay> students;
  std::vector<model::DynamicState> threads;
  double time_scale = 1.0;

  static ReplayState initial(int num_students, int num_threads, int d, double time_scale);
  bool operator==(const ReplayState&) const = default;
};

// Mean gap between consecutive events, 1.0 when undefined or zero.
double mean_inter_event_gap(const corpus::Dataset& ds);

// Builds the inputs for `event` (with topic `theta`) from the current replay
// state and the thread history in `ds` strictly before the event.
EventInputs make_event_inputs(const corpus::Dataset& ds, const corpus::PostEvent& event,
                              const model::TopicDistribution& theta,
                              const ReplayState& state, const model::Hyperparams& hyper,
                              const AblationFlags& flags);

// Writes the event's outcome into the replay state.
void commit_event(const corpus::PostEvent& event, const model::TopicDistribution& theta,
                  const EventForward& fwd,
                  const std::vector<model::TopicDistribution>& course,
                  const AblationFlags& flags, ReplayState& state);

// Adaptive moment estimation with bias correction.
class Adam {
 public:
  Adam(const model::Dimensions& dims, double learning_rate, double beta1 = 0.9,
       double beta2 = 0.999, double epsilon = 1e-8);
  void step(ParamTensors& weights, const ParamTensors& grads);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  ParamTensors m_, v_;
};

// Scales `grads` so its global L2 norm is at most `max_norm`; returns the
// norm before clipping.
double clip_global_norm(ParamTensors& grads, double max_norm);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrajectoryPoint {
  char kind = 's';  // 's' student, 't' thread
  int id = 0;
  Timestamp timestamp = 0.0;
  Eigen::VectorXd embedding;
};

struct FitResult {
  ModelParams params;
  ReplayState state;
  std::vector<EpochLog> log;
  std::vector<TrajectoryPoint> trajectories;  // last epoch, when requested
};

// Chronological replay training. Each epoch resets the dynamic states,
// walks the t-batches, accumulates reverse-mode gradients per batch and
// takes one Adam step per batch. Throws NumericalError on a non-finite loss.
FitResult fit(const corpus::Dataset& train, const TextArtifacts& text,
              const TrainConfig& config);
// Same, with per-event topics supplied (aligned with train.events()).
FitResult fit(const corpus::Dataset& train,
              const std::vector<model::TopicDistribution>& post_topics,
              const std::vector<model::TopicDistribution>& course,
              const TrainConfig& config);

// Below this magnitude the relative error is measured against the floor
// instead, so exactly-zero gradients do not amplify round-off.
inline constexpr double kGradCheckFloor = 1e-6;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t entries_checked = 0;
};

// Compares backward_event against central differences of forward_event's
// total for every parameter entry. `tamper`, when set, edits the analytic
// gradient before comparison.
GradCheckReport grad_check(const ModelParams& params, const EventInputs& inputs,
                           const AblationFlags& flags = {}, double eps = 1e-5,
                           const std::function<void(ParamTensors&)>& tamper = {});

}  // namespace sitrec::train
