#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "event_fixture.hpp"
#include "fixtures.hpp"
#include "sitrec/error.hpp"
#include "sitrec/random.hpp"
#include "sitrec/train.hpp"

namespace sitrec {
namespace {

using Eigen::VectorXd;
using testing::Ev;
using testing::make_dataset;

std::vector<corpus::PostEvent> events_of(const std::vector<Ev>& evs, int m, int n) {
  return make_dataset(evs, m, n).events();
}

TEST(TBatch, ManualTrace) {
  const auto evs = events_of({{1, 1, 1.0}, {1, 2, 2.0}, {2, 1, 3.0}}, 3, 3);
  const auto b = train::t_batch(evs);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0].events, (std::vector<std::size_t>{0}));
  EXPECT_EQ(b[1].events, (std::vector<std::size_t>{1, 2}));
}

TEST(TBatch, OneStudentMeansOneEventPerBatch) {
  const auto evs = events_of({{0, 0, 1.0}, {0, 1, 2.0}, {0, 2, 3.0}, {0, 0, 4.0}}, 1, 3);
  const auto b = train::t_batch(evs);
  ASSERT_EQ(b.size(), 4u);
  for (const auto& batch : b) EXPECT_EQ(batch.events.size(), 1u);
}

TEST(TBatch, EmptyInput) { EXPECT_TRUE(train::t_batch({}).empty()); }

TEST(TBatch, PartitionsRandomLogs) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const auto evs = testing::random_events(rng, 500, 30, 20);
    const auto batches = train::t_batch(evs);
    std::vector<int> seen(evs.size(), 0);
    for (const auto& b : batches) {
      for (auto i : b.events) ++seen[i];
    }
    for (int s : seen) EXPECT_EQ(s, 1);
  }
}

TEST(TrainConfig, Validation) {
  train::TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.embedding_dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.alpha = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Ablation, ParseAndNames) {
  const auto f = train::AblationFlags::parse("no_text_features, no_dynamic_thread");
  EXPECT_TRUE(f.no_text_features);
  EXPECT_TRUE(f.no_dynamic_thread);
  EXPECT_FALSE(f.no_dynamic_student);
  EXPECT_EQ(f.to_string(), "no_dynamic_thread,no_text_features");
  EXPECT_EQ(train::AblationFlags::parse("none").to_string(), "none");
  EXPECT_FALSE(train::AblationFlags::parse("").any());
  EXPECT_THROW(train::AblationFlags::parse("no_such_flag"), ConfigError);
  train::AblationFlags g;
  EXPECT_THROW(g.set("bogus"), ConfigError);
}

TEST(GradCheck, FullPathWithinTolerance) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = testing::random_instance(seed);
    const auto rep = train::grad_check(r.params, r.inputs);
    EXPECT_LE(rep.max_rel_error, 1e-4) << "seed " << seed << " worst " << rep.worst_tensor;
    EXPECT_EQ(rep.entries_checked, r.params.weights.total_size());
  }
}

TEST(GradCheck, LinearPathIsNearExact) {
  train::AblationFlags frozen;
  frozen.no_dynamic_student = frozen.no_dynamic_thread = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto r = testing::random_instance(seed);
    r.params.hyper.lambda_student = r.params.hyper.lambda_thread = 0.0;
    EXPECT_LE(train::grad_check(r.params, r.inputs, frozen).max_rel_error, 1e-6);
  }
}

TEST(GradCheck, EveryAblationVariant) {
  for (auto name : train::AblationFlags::kNames) {
    train::AblationFlags f;
    f.set(name);
    const auto r = testing::random_instance(77);
    EXPECT_LE(train::grad_check(r.params, r.inputs, f).max_rel_error, 1e-4) << name;
  }
}

TEST(GradCheck, TanhActivation) {
  auto r = testing::random_instance(5);
  r.params.hyper.activation = model::Activation::kTanh;
  EXPECT_LE(train::grad_check(r.params, r.inputs).max_rel_error, 1e-4);
}

TEST(GradCheck, DetectsASignFlip) {
  const auto r = testing::random_instance(3);
  const auto rep = train::grad_check(r.params, r.inputs, {}, 1e-5,
                                     [](model::ParamTensors& g) { g.predictor *= -1.0; });
  EXPECT_GT(rep.max_rel_error, 1e-2);
  EXPECT_EQ(rep.worst_tensor, "predictor");
}

// Finite differences through one recorded update per state: the states the
// event reads are recomputed from fixed record inputs under the perturbed
// weights. With zero smoothness weights, the event's gradient plus the
// lookback gradient is the full derivative of this composition.
TEST(Lookback, MatchesTwoStepFiniteDifferences) {
  std::mt19937_64 rng(31);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto r = testing::random_instance(seed);
    r.params.hyper.lambda_student = r.params.hyper.lambda_thread = 0.0;
    r.inputs.last_thread = 1;
    const auto& D = r.params.dims;
    const VectorXd xs = testing::random_vector(rng, D.update_input());
    const VectorXd xt = testing::random_vector(rng, D.update_input());
    const VectorXd xl = testing::random_vector(rng, D.update_input());
    const double pull = r.inputs.target_pull;

    auto rebuild = [&](const model::ModelParams& p) {
      auto in = r.inputs;
      auto sig = [&](const Eigen::MatrixXd& W, const VectorXd& x) {
        VectorXd y = W.transpose() * x;
        for (int i = 0; i < y.size(); ++i) y[i] = model::activate(y[i], p.hyper.activation);
        return y;
      };
      in.student_prev = sig(p.weights.student_update, xs);
      in.thread_prev = sig(p.weights.thread_update, xt);
      in.last_thread_state = sig(p.weights.thread_update, xl);
      in.target_projection = pull * in.student_prev + (1.0 - pull) * in.thread_prev;
      return in;
    };

    const auto in = rebuild(r.params);
    const auto fwd = train::forward_event(in, r.params, {});
    auto grads = model::ParamTensors::zeros(D);
    train::backward_event(in, fwd, r.params, {}, grads);
    const train::UpdateRecord rs{xs, in.student_prev, true};
    const train::UpdateRecord rt{xt, in.thread_prev, true};
    const train::UpdateRecord rl{xl, in.last_thread_state, true};
    train::backward_lookback(in, fwd, r.params, {}, &rs, &rt, &rl, grads);

    std::vector<std::span<const double>> analytic;
    grads.for_each([&](const char*, std::span<const double> s) { analytic.push_back(s); });
    auto probe = r.params;
    std::size_t tensor = 0;
    double worst = 0.0;
    probe.weights.for_each([&](const char*, std::span<double> s) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double saved = s[i];
        s[i] = saved + 1e-5;
        const double up = train::forward_event(rebuild(probe), probe, {}).total;
        s[i] = saved - 1e-5;
        const double down = train::forward_event(rebuild(probe), probe, {}).total;
        s[i] = saved;
        const double numeric = (up - down) / 2e-5;
        const double exact = analytic[tensor][i];
        worst = std::max(worst, std::abs(numeric - exact) /
                                    std::max({std::abs(numeric), std::abs(exact), 1e-6}));
      }
      ++tensor;
    });
    EXPECT_LE(worst, 1e-4) << "seed " << seed;
  }
}

TEST(Lookback, InvalidRecordsContributeNothing) {
  const auto r = testing::random_instance(4);
  const auto fwd = train::forward_event(r.inputs, r.params, {});
  auto grads = model::ParamTensors::zeros(r.params.dims);
  const train::UpdateRecord invalid;
  train::backward_lookback(r.inputs, fwd, r.params, {}, &invalid, nullptr, &invalid, grads);
  EXPECT_TRUE(grads == model::ParamTensors::zeros(r.params.dims));
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  const model::Dimensions d{1, 1, 1, 1, 1};
  auto w = model::ParamTensors::zeros(d);
  auto g = model::ParamTensors::zeros(d);
  g.predictor_bias << 0.3, -2.0;
  train::Adam adam(d, 0.01);
  adam.step(w, g);
  EXPECT_NEAR(w.predictor_bias[0], -0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(w.predictor_bias[1], 0.01 * 2.0 / (2.0 + 1e-8), 1e-15);
  EXPECT_EQ(w.predictor(0, 0), 0.0);
  EXPECT_EQ(adam.steps(), 1);
}

TEST(Clip, ScalesToMaxNorm) {
  const model::Dimensions d{1, 1, 1, 1, 1};
  auto g = model::ParamTensors::zeros(d);
  g.predictor_bias << 6.0, 8.0;
  EXPECT_DOUBLE_EQ(train::clip_global_norm(g, 5.0), 10.0);
  EXPECT_NEAR(g.predictor_bias[0], 3.0, 1e-15);
  EXPECT_NEAR(g.predictor_bias[1], 4.0, 1e-15);
  g.predictor_bias << 6.0, 8.0;
  train::clip_global_norm(g, 0.0);
  EXPECT_EQ(g.predictor_bias[0], 6.0);
}

TEST(TimeScale, MeanGap) {
  EXPECT_DOUBLE_EQ(train::mean_inter_event_gap(make_dataset({{0, 0, 0.0}, {0, 0, 2.0}, {0, 0, 6.0}}, 1, 1)), 3.0);
  EXPECT_DOUBLE_EQ(train::mean_inter_event_gap(make_dataset({{0, 0, 4.0}}, 1, 1)), 1.0);
  EXPECT_DOUBLE_EQ(train::mean_inter_event_gap(make_dataset({{0, 0, 4.0}, {0, 0, 4.0}}, 1, 1)), 1.0);
}

corpus::CourseSchedule two_weeks() { return {{{"a"}, {"b"}}, {0.0, 100.0}}; }

std::vector<VectorXd> course_thetas() {
  VectorXd a(2), b(2);
  a << 0.9, 0.1;
  b << 0.1, 0.9;
  return {a, b};
}

TEST(Replay, InputsUseExcitationFromHistory) {
  // Student 0 posts at 10, student 1 posts at 20 and replies at 30; the
  // event under test is student 0 posting again at 40.
  const auto ds = make_dataset({{0, 0, 10.0}, {1, 0, 20.0}, {1, 0, 30.0, 1}, {0, 0, 40.0}}, 2, 1,
                               two_weeks());
  auto state = train::ReplayState::initial(2, 1, 2, 10.0);
  state.students[0].state = {VectorXd::Constant(2, 0.8), 10.0};
  state.students[0].last_week = 1;
  state.threads[0] = {VectorXd::Constant(2, 0.2), 30.0};
  model::Hyperparams h;
  h.alpha = 0.5;
  h.beta = 0.1;
  const VectorXd theta = course_thetas()[0];
  const auto in = train::make_event_inputs(ds, ds.events()[3], theta, state, h, {});
  const double z = std::exp(-0.5 * 1.0) + std::exp(-0.1 * 2.0);
  EXPECT_NEAR(in.target_pull, z / (1.0 + z), 1e-15);
  EXPECT_NEAR(in.target_projection[0], (z * 0.8 + 0.2) / (1.0 + z), 1e-15);
  EXPECT_DOUBLE_EQ(in.student_gap, 3.0);
  EXPECT_DOUBLE_EQ(in.thread_gap, 1.0);
  EXPECT_EQ(in.week, 1);
  EXPECT_FALSE(in.last_thread);

  train::AblationFlags flags;
  flags.no_thread_projection = true;
  const auto plain = train::make_event_inputs(ds, ds.events()[3], theta, state, h, flags);
  EXPECT_TRUE(plain.target_projection == state.threads[0].embedding);
}

TEST(Replay, FirstEventUsesCalendarWeekAndZeroState) {
  const auto ds = make_dataset({{0, 0, 150.0}}, 1, 1, two_weeks());
  const auto state = train::ReplayState::initial(1, 1, 3, 50.0);
  const auto in = train::make_event_inputs(ds, ds.events()[0], course_thetas()[0], state, {}, {});
  EXPECT_EQ(in.week, 1);
  EXPECT_DOUBLE_EQ(in.student_gap, 3.0);
  EXPECT_TRUE(in.student_prev.isZero());
  EXPECT_TRUE(in.last_thread_state.isZero());
  EXPECT_EQ(in.target_pull, 0.0);
}

TEST(Replay, CommitRecordsStateWeekAndLastThread) {
  const auto ds = make_dataset({{0, 1, 5.0}}, 1, 2, two_weeks());
  auto state = train::ReplayState::initial(1, 2, 2, 1.0);
  const auto r = testing::random_instance(2, {2, 2, 2, 1, 2});
  const auto in = train::make_event_inputs(ds, ds.events()[0], course_thetas()[1], state,
                                           r.params.hyper, {});
  const auto fwd = train::forward_event(in, r.params, {});
  train::commit_event(ds.events()[0], course_thetas()[1], fwd, course_thetas(), {}, state);
  EXPECT_TRUE(state.students[0].state.embedding == fwd.student_new);
  EXPECT_EQ(state.students[0].state.last_update, 5.0);
  EXPECT_EQ(state.students[0].last_thread, 1);
  EXPECT_EQ(state.students[0].last_week, 1);
  EXPECT_TRUE(state.threads[1].embedding == fwd.thread_new);
  EXPECT_FALSE(state.threads[0].last_update);
}

TEST(Ablation, NoTextFeaturesZeroesTheTopicBlock) {
  const auto r = testing::random_instance(6);
  train::AblationFlags f;
  f.no_text_features = true;
  const auto fwd = train::forward_event(r.inputs, r.params, f);
  EXPECT_TRUE(fwd.student_input.segment(6, 2).isZero());
  EXPECT_TRUE(fwd.thread_input.segment(6, 2).isZero());
  EXPECT_FALSE(train::forward_event(r.inputs, r.params, {}).student_input.segment(6, 2).isZero());
}

TEST(Ablation, FrozenStatesAndPlainProjection) {
  const auto r = testing::random_instance(8);
  train::AblationFlags f;
  f.no_dynamic_student = f.no_dynamic_thread = f.no_student_projection = true;
  const auto fwd = train::forward_event(r.inputs, r.params, f);
  EXPECT_TRUE(fwd.student_new == r.inputs.student_prev);
  EXPECT_TRUE(fwd.thread_new == r.inputs.thread_prev);
  EXPECT_TRUE(fwd.student_projection == r.inputs.student_prev);
}

// Small two-week course with a couple of repeat visits.
struct TinyCourse {
  corpus::Dataset ds;
  std::vector<VectorXd> post_topics;
};

TinyCourse tiny_course() {
  std::vector<Ev> evs = {{0, 0, 1.0}, {1, 0, 2.0, 1}, {2, 1, 3.0}, {0, 1, 5.0},
                         {1, 2, 7.0}, {2, 0, 8.0},    {0, 0, 9.0}, {1, 1, 120.0},
                         {2, 2, 130.0}, {0, 2, 140.0}};
  TinyCourse c{make_dataset(evs, 3, 3, two_weeks()), {}};
  for (std::size_t i = 0; i < evs.size(); ++i) c.post_topics.push_back(course_thetas()[i % 2]);
  return c;
}

train::TrainConfig tiny_config() {
  train::TrainConfig cfg;
  cfg.embedding_dim = 3;
  cfg.epochs = 3;
  cfg.learning_rate = 0.01;
  cfg.seed = 5;
  return cfg;
}

TEST(Fit, ZeroEpochsRejected) {
  const auto c = tiny_course();
  auto cfg = tiny_config();
  cfg.epochs = 0;
  EXPECT_THROW(train::fit(c.ds, c.post_topics, course_thetas(), cfg), ConfigError);
}

TEST(Fit, MisalignedTopicsRejected) {
  const auto c = tiny_course();
  auto topics = c.post_topics;
  topics.pop_back();
  EXPECT_THROW(train::fit(c.ds, topics, course_thetas(), tiny_config()), ShapeError);
}

TEST(Fit, SingleEventLossDropsAfterOneStep) {
  const auto ds = make_dataset({{0, 0, 3.0}}, 1, 1, two_weeks());
  auto cfg = tiny_config();
  cfg.epochs = 2;
  const auto r = train::fit(ds, {course_thetas()[0]}, course_thetas(), cfg);
  ASSERT_EQ(r.log.size(), 2u);
  EXPECT_LT(r.log[1].mean_loss, r.log[0].mean_loss);
}

TEST(Fit, DeterministicPerSeed) {
  const auto c = tiny_course();
  const auto a = train::fit(c.ds, c.post_topics, course_thetas(), tiny_config());
  const auto b = train::fit(c.ds, c.post_topics, course_thetas(), tiny_config());
  EXPECT_TRUE(a.params == b.params);
  EXPECT_TRUE(a.state == b.state);
  auto other = tiny_config();
  other.seed = 6;
  EXPECT_FALSE(train::fit(c.ds, c.post_topics, course_thetas(), other).params == a.params);
}

TEST(Fit, AllFlagsOffEqualsDefault) {
  const auto c = tiny_course();
  auto cfg = tiny_config();
  for (auto name : train::AblationFlags::kNames) cfg.ablation.set(name, false);
  EXPECT_TRUE(train::fit(c.ds, c.post_topics, course_thetas(), cfg).params ==
              train::fit(c.ds, c.post_topics, course_thetas(), tiny_config()).params);
}

TEST(Fit, VanishingLearningRateKeepsInitialisation) {
  const auto c = tiny_course();
  auto cfg = tiny_config();
  cfg.learning_rate = 1e-15;
  const auto r = train::fit(c.ds, c.post_topics, course_thetas(), cfg);
  const auto init = model::ModelParams::gaussian(r.params.dims, cfg.hyperparams(),
                                                 derive_seed(cfg.seed, 1), cfg.init_stddev);
  std::vector<std::span<const double>> a;
  r.params.weights.for_each([&](const char*, std::span<const double> s) { a.push_back(s); });
  std::size_t t = 0;
  init.weights.for_each([&](const char*, std::span<const double> s) {
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(a[t][i], s[i], 1e-12);
    ++t;
  });
}

TEST(Fit, FinalStateMatchesReplayOfLastEpoch) {
  const auto c = tiny_course();
  const auto r = train::fit(c.ds, c.post_topics, course_thetas(), tiny_config());
  EXPECT_DOUBLE_EQ(r.state.time_scale, train::mean_inter_event_gap(c.ds));
  EXPECT_EQ(r.state.students[0].last_thread, 2);
  EXPECT_EQ(r.state.threads[2].last_update, 140.0);
  for (const auto& s : r.state.students) {
    EXPECT_TRUE(s.state.embedding.allFinite());
    EXPECT_GT(s.state.embedding.minCoeff(), 0.0);
  }
  EXPECT_EQ(r.log.size(), 3u);
  EXPECT_TRUE(r.trajectories.empty());
}

TEST(Fit, TrajectoriesCoverTheLastEpoch) {
  const auto c = tiny_course();
  auto cfg = tiny_config();
  cfg.record_trajectories = true;
  const auto r = train::fit(c.ds, c.post_topics, course_thetas(), cfg);
  EXPECT_EQ(r.trajectories.size(), 2 * c.ds.size());
  EXPECT_TRUE(r.trajectories.back().embedding ==
              r.state.threads[r.trajectories.back().id].embedding);
}

TEST(Fit, NonFiniteLossAborts) {
  const auto c = tiny_course();
  auto topics = c.post_topics;
  topics[4][0] = std::nan("");
  try {
    train::fit(c.ds, topics, course_thetas(), tiny_config());
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch 1"), std::string::npos);
  }
}

}  // namespace
}  // namespace sitrec
