#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "sitrec/error.hpp"
#include "sitrec/model.hpp"

namespace sitrec {
namespace {

using Eigen::VectorXd;
using model::ModelParams;

model::Dimensions small_dims(int d = 3, int K = 2, int S = 2, int m = 4, int n = 4) {
  return {d, K, S, m, n};
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

TEST(Update, ZeroWeightsGiveOneHalf) {
  const auto p = ModelParams::zeros(small_dims());
  std::mt19937_64 rng(1);
  const auto out = model::update(testing::random_vector(rng, 3), testing::random_vector(rng, 3),
                                 testing::random_simplex(rng, 2), 1.5, 0.2, p);
  EXPECT_TRUE(out.student == VectorXd::Constant(3, 0.5));
  EXPECT_TRUE(out.thread == VectorXd::Constant(3, 0.5));
}

TEST(Update, MatchesLoopOracle) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = ModelParams::gaussian(small_dims(), {}, 100 + trial, 1.0);
    const VectorXd u = testing::random_vector(rng, 3), q = testing::random_vector(rng, 3);
    const VectorXd th = testing::random_simplex(rng, 2);
    const double gu = 0.7, gp = 2.5;
    const auto out = model::update(u, q, th, gu, gp, p);
    // Input layout [self, other, theta, gap]; output j = sigmoid(sum_i W(i,j) x_i).
    auto oracle = [&](const Eigen::MatrixXd& W, const VectorXd& self, const VectorXd& other,
                      double gap, int j) {
      double s = 0.0;
      for (int i = 0; i < 3; ++i) s += W(i, j) * self[i];
      for (int i = 0; i < 3; ++i) s += W(3 + i, j) * other[i];
      for (int i = 0; i < 2; ++i) s += W(6 + i, j) * th[i];
      s += W(8, j) * gap;
      return sigmoid(s);
    };
    for (int j = 0; j < 3; ++j) {
      EXPECT_NEAR(out.student[j], oracle(p.weights.student_update, u, q, gu, j), 1e-14);
      EXPECT_NEAR(out.thread[j], oracle(p.weights.thread_update, q, u, gp, j), 1e-14);
    }
  }
}

TEST(Update, OutputsStayInsideUnitInterval) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = ModelParams::gaussian(small_dims(), {}, trial, 3.0);
    const auto out =
        model::update(testing::random_vector(rng, 3, -5, 5), testing::random_vector(rng, 3, -5, 5),
                      testing::random_simplex(rng, 2), 1.0 * (rng() % 5), 0.0, p);
    for (int j = 0; j < 3; ++j) {
      EXPECT_GT(out.student[j], 0.0);
      EXPECT_LE(out.student[j], 1.0);  // sigmoid saturates to 1.0 in double
      EXPECT_GE(out.thread[j], 0.0);
    }
  }
}

TEST(Update, TanhOption) {
  model::Hyperparams h;
  h.activation = model::Activation::kTanh;
  const auto p = ModelParams::zeros(small_dims(), h);
  const auto out = model::update(VectorXd::Ones(3), VectorXd::Ones(3), VectorXd::Constant(2, 0.5),
                                 1.0, 1.0, p);
  EXPECT_TRUE(out.student == VectorXd::Zero(3));
}

TEST(Update, ShapeMismatchThrows) {
  const auto p = ModelParams::zeros(small_dims());
  EXPECT_THROW(model::update(VectorXd::Zero(2), VectorXd::Zero(3), VectorXd::Constant(2, 0.5), 0,
                             0, p),
               ShapeError);
  EXPECT_THROW(model::update(VectorXd::Zero(3), VectorXd::Zero(3), VectorXd::Constant(3, 1. / 3),
                             0, 0, p),
               ShapeError);
}

TEST(CourseTopic, ExactMatchAndTies) {
  std::vector<VectorXd> weeks = {VectorXd::Unit(3, 0), VectorXd::Unit(3, 1), VectorXd::Unit(3, 2)};
  EXPECT_EQ(model::assign_course_topic(VectorXd::Unit(3, 2), weeks), 2);
  VectorXd mid(3);
  mid << 0.5, 0.5, 0.0;
  EXPECT_EQ(model::assign_course_topic(mid, weeks), 0);
}

TEST(CourseTopic, MatchesBruteForceAndFollowsPermutations) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<VectorXd> weeks;
    for (int i = 0; i < 5; ++i) weeks.push_back(testing::random_simplex(rng, 4));
    const VectorXd theta = testing::random_simplex(rng, 4);
    int best = 0;
    for (int i = 1; i < 5; ++i) {
      if ((weeks[i] - theta).norm() < (weeks[best] - theta).norm()) best = i;
    }
    const int got = model::assign_course_topic(theta, weeks);
    EXPECT_EQ(got, best);
    std::vector<int> perm = {0, 1, 2, 3, 4};
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<VectorXd> shuffled;
    for (int i : perm) shuffled.push_back(weeks[i]);
    EXPECT_TRUE(shuffled[model::assign_course_topic(theta, shuffled)] == weeks[got]);
  }
}

TEST(ProjectStudent, ZeroContextIsIdentity) {
  const auto p = ModelParams::zeros(small_dims());
  std::mt19937_64 rng(5);
  const VectorXd u = testing::random_vector(rng, 3);
  EXPECT_TRUE(model::project_student(u, 7.3, 1, p) == u);
}

TEST(ProjectStudent, ZeroGapIgnoresTimeContext) {
  auto p = ModelParams::gaussian(small_dims(), {}, 5);
  p.weights.course_context.setZero();
  std::mt19937_64 rng(6);
  const VectorXd u = testing::random_vector(rng, 3);
  EXPECT_TRUE(model::project_student(u, 0.0, 0, p) == u);
}

TEST(ProjectStudent, HandEvaluation) {
  auto p = ModelParams::zeros(small_dims(2, 2, 2, 1, 1));
  p.weights.time_context << 1.0, 0.0;
  p.weights.course_context.col(1) << 0.0, 1.0;
  VectorXd u(2);
  u << 0.5, 0.5;
  const auto got = model::project_student(u, 2.0, 1, p);
  EXPECT_DOUBLE_EQ(got[0], 1.5);
  EXPECT_DOUBLE_EQ(got[1], 1.0);
}

TEST(Zeta, ClosedForms) {
  corpus::ReplyHistory none;
  EXPECT_EQ(model::zeta(none, 10.0, 0.5, 0.001), 0.0);

  corpus::ReplyHistory one{{2.0}, {}, 0.0};
  EXPECT_NEAR(model::zeta(one, 5.0, 0.5, 0.001), std::exp(-1.0), 1e-12);

  corpus::ReplyHistory both{{2.0}, {3.0}, 0.0};
  EXPECT_NEAR(model::zeta(both, 5.0, 0.5, 0.001), std::exp(-1.0) + std::exp(-0.003), 1e-12);
  EXPECT_NEAR(model::zeta(both, 5.0, 0.5, 0.001), 1.364884, 1e-6);
}

TEST(Zeta, TimeScaleDividesGaps) {
  corpus::ReplyHistory h{{20.0}, {30.0}, 0.0};
  EXPECT_NEAR(model::zeta(h, 50.0, 0.5, 0.001, 10.0), std::exp(-1.0) + std::exp(-0.003), 1e-12);
}

TEST(Zeta, NegativeGapThrows) {
  corpus::ReplyHistory h{{1.0}, {}, 2.0};
  EXPECT_THROW(model::zeta(h, 5.0, 0.5, 0.5), IntegrityError);
}

TEST(Zeta, MonotoneNonNegativeAndAdditive) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> gap(0.0, 5.0);
  for (int trial = 0; trial < 100; ++trial) {
    corpus::ReplyHistory a{{}, {}, 1.0}, b{{}, {}, 1.0}, ab{{}, {}, 1.0};
    for (int i = 0; i < 3; ++i) {
      a.post_times.push_back(1.0 + gap(rng));
      b.reply_times.push_back(1.0 + gap(rng));
    }
    ab.post_times = a.post_times;
    ab.reply_times = b.reply_times;
    const double za = model::zeta(a, 10.0, 0.3, 0.05), zb = model::zeta(b, 10.0, 0.3, 0.05);
    EXPECT_GE(za, 0.0);
    EXPECT_NEAR(model::zeta(ab, 10.0, 0.3, 0.05), za + zb, 1e-12);
    auto later = a;
    later.post_times[0] += 1.0;
    EXPECT_LE(model::zeta(later, 10.0, 0.3, 0.05), za);
  }
}

TEST(ProjectThread, Identities) {
  std::mt19937_64 rng(8);
  const VectorXd u = testing::random_vector(rng, 4), p = testing::random_vector(rng, 4);
  EXPECT_TRUE(model::project_thread(u, p, 0.0) == p);
  EXPECT_TRUE(model::project_thread(u, p, 1.0) == (u + p) / 2.0);
  VectorXd a(2), b(2);
  a << 1, 0;
  b << 0, 1;
  const auto got = model::project_thread(a, b, 3.0);
  EXPECT_DOUBLE_EQ(got[0], 0.75);
  EXPECT_DOUBLE_EQ(got[1], 0.25);
}

TEST(ProjectThread, IsCoordinatewiseConvex) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const VectorXd u = testing::random_vector(rng, 5), p = testing::random_vector(rng, 5);
    const double z = std::uniform_real_distribution<double>(0.0, 50.0)(rng);
    const auto r = model::project_thread(u, p, z);
    for (int i = 0; i < 5; ++i) {
      EXPECT_GE(r[i], std::min(u[i], p[i]) - 1e-15);
      EXPECT_LE(r[i], std::max(u[i], p[i]) + 1e-15);
    }
  }
}

TEST(Predict, ZeroWeightsAndBiasPassthrough) {
  auto p = ModelParams::zeros(small_dims());
  std::mt19937_64 rng(10);
  const VectorXd uh = testing::random_vector(rng, 3), pl = testing::random_vector(rng, 3);
  EXPECT_TRUE(model::predict_next(uh, 1, pl, 2, p) == VectorXd::Zero(7));
  p.weights.predictor_bias = testing::random_vector(rng, 7);
  EXPECT_TRUE(model::predict_next(uh, 1, pl, 2, p) == p.weights.predictor_bias);
}

TEST(Predict, SparsePathMatchesDenseOneHots) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    auto p = ModelParams::gaussian(small_dims(1, 2, 2, 2, 2), {}, trial);
    p.weights.predictor_bias = testing::random_vector(rng, 3);
    const VectorXd uh = testing::random_vector(rng, 1), pl = testing::random_vector(rng, 1);
    const int u = static_cast<int>(rng() % 2);
    const model::OptionalThread last =
        trial % 3 == 0 ? model::OptionalThread{} : model::OptionalThread(static_cast<int>(rng() % 2));
    VectorXd x = VectorXd::Zero(6);
    x[0] = uh[0];
    x[1 + u] = 1.0;
    x[3] = pl[0];
    if (last) x[4 + *last] = 1.0;
    const VectorXd dense = p.weights.predictor.transpose() * x + p.weights.predictor_bias;
    const VectorXd got = model::predict_next(uh, u, pl, last, p);
    EXPECT_LT((got - dense).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Loss, ZeroAtTargetAndPythagorean) {
  const auto p = ModelParams::zeros(small_dims(1, 2, 2, 1, 1));
  VectorXd proj(1);
  proj << 0.25;
  const VectorXd target = model::thread_target(0, proj, 1);
  const VectorXd s = VectorXd::Constant(1, 0.3);
  EXPECT_EQ(model::loss(target, 0, proj, s, s, s, s, p), 0.0);

  model::Hyperparams h;
  h.lambda_student = h.lambda_thread = 0.0;
  const auto p0 = ModelParams::zeros(small_dims(1, 2, 2, 1, 1), h);
  VectorXd pred = target;
  pred[0] += 3.0;
  pred[1] += 4.0;
  EXPECT_DOUBLE_EQ(model::loss(pred, 0, proj, s, VectorXd::Zero(1), s, VectorXd::Zero(1), p0), 5.0);
}

TEST(Loss, LinearInLambdaStudent) {
  model::Hyperparams h;
  h.lambda_thread = 0.0;
  h.lambda_student = 1.0;
  const auto d = small_dims(2, 2, 2, 1, 1);
  const auto p1 = ModelParams::zeros(d, h);
  h.lambda_student = 2.0;
  const auto p2 = ModelParams::zeros(d, h);
  VectorXd proj = VectorXd::Zero(2), un(2), up(2);
  un << 1.0, 2.0;
  up << 0.0, 0.5;
  const VectorXd pred = model::thread_target(0, proj, 1);
  const double l1 = model::loss(pred, 0, proj, un, up, proj, proj, p1);
  const double l2 = model::loss(pred, 0, proj, un, up, proj, proj, p2);
  EXPECT_DOUBLE_EQ(l2, 2.0 * l1);
  EXPECT_DOUBLE_EQ(l1, (un - up).norm());
}

TEST(Params, ShapesAndValidation) {
  const auto d = small_dims(3, 2, 2, 4, 5);
  auto p = ModelParams::gaussian(d, {}, 1);
  EXPECT_EQ(p.weights.student_update.rows(), 9);
  EXPECT_EQ(p.weights.predictor.rows(), 4 + 5 + 6);
  EXPECT_EQ(p.weights.predictor.cols(), 5 + 3);
  EXPECT_TRUE(p.weights.predictor_bias.isZero());
  EXPECT_NO_THROW(p.validate());
  EXPECT_TRUE(p == ModelParams::gaussian(d, {}, 1));
  EXPECT_FALSE(p == ModelParams::gaussian(d, {}, 2));
  p.weights.course_context.resize(3, 3);
  EXPECT_THROW(p.validate(), ShapeError);
  p = ModelParams::gaussian(d, {}, 1);
  p.weights.thread_update(0, 0) = std::nan("");
  EXPECT_THROW(p.validate(), NumericalError);
  p = ModelParams::gaussian(d, {}, 1);
  p.hyper.alpha = -1.0;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Params, GaussianInitHasRequestedSpread) {
  const auto p = ModelParams::gaussian(small_dims(10, 5, 9, 50, 50), {}, 3, 0.1);
  const auto& W = p.weights.predictor;
  const double mean = W.mean();
  const double sd = std::sqrt((W.array() - mean).square().mean());
  EXPECT_NEAR(mean, 0.0, 0.01);
  EXPECT_NEAR(sd, 0.1, 0.01);
}

}  // namespace
}  // namespace sitrec
