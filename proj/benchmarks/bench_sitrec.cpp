#include <random>

#include "benchmark/benchmark.h"
#include "sitrec/lda.hpp"
#include "sitrec/model.hpp"
#include "sitrec/recommend.hpp"
#include "sitrec/synth.hpp"
#include "sitrec/train.hpp"

namespace sitrec {
namespace {

Eigen::VectorXd uniform(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// algo-like sizes at scale 0.1 with d from the range.
train::EventInputs event_for(const model::Dimensions& dims, std::mt19937_64& rng) {
  train::EventInputs in;
  in.student = 3;
  in.thread = 5;
  in.last_thread = 7;
  in.student_prev = uniform(rng, dims.embedding);
  in.thread_prev = uniform(rng, dims.embedding);
  in.last_thread_state = uniform(rng, dims.embedding);
  in.theta = Eigen::VectorXd::Constant(dims.topics, 1.0 / dims.topics);
  in.student_gap = 1.5;
  in.thread_gap = 0.5;
  in.week = 2;
  in.target_pull = 0.4;
  in.target_projection = 0.4 * in.student_prev + 0.6 * in.thread_prev;
  return in;
}

void BM_ForwardEvent(benchmark::State& state) {
  const model::Dimensions dims{static_cast<int>(state.range(0)), 9, 9, 183, 132};
  const auto params = model::ModelParams::gaussian(dims, {}, 1);
  std::mt19937_64 rng(1);
  const auto in = event_for(dims, rng);
  for (auto _ : state) benchmark::DoNotOptimize(train::forward_event(in, params, {}).total);
}
BENCHMARK(BM_ForwardEvent)->Arg(5)->Arg(10)->Arg(25);

void BM_ForwardBackwardEvent(benchmark::State& state) {
  const model::Dimensions dims{static_cast<int>(state.range(0)), 9, 9, 183, 132};
  const auto params = model::ModelParams::gaussian(dims, {}, 1);
  std::mt19937_64 rng(1);
  const auto in = event_for(dims, rng);
  auto grads = model::ParamTensors::zeros(dims);
  for (auto _ : state) {
    const auto fwd = train::forward_event(in, params, {});
    train::backward_event(in, fwd, params, {}, grads);
    benchmark::ClobberMemory();
  }
}
BENCHMARK(BM_ForwardBackwardEvent)->Arg(5)->Arg(10)->Arg(25);

void BM_TBatch(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::vector<corpus::PostEvent> events(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < events.size(); ++i) {
    events[i].post_id = static_cast<corpus::PostId>(i + 1);
    events[i].student = static_cast<int>(rng() % 1833);
    events[i].thread = static_cast<int>(rng() % 1323);
    events[i].timestamp = static_cast<double>(i);
  }
  for (auto _ : state) benchmark::DoNotOptimize(train::t_batch(events).size());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TBatch)->Arg(1000)->Arg(10000);

void BM_RankThreads(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int d = 10;
  std::mt19937_64 rng(3);
  std::vector<recommend::Candidate> cands;
  for (int p = 0; p < n; ++p) cands.push_back({p, model::thread_target(p, uniform(rng, d), n)});
  const Eigen::VectorXd q = uniform(rng, n + d);
  for (auto _ : state) benchmark::DoNotOptimize(recommend::rank_threads(q, cands, 5));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_RankThreads)->Arg(132)->Arg(1323);

std::vector<text::TermFrequencyVector> synthetic_docs(int vocab) {
  auto cfg = synth::algo_like(0.1, 4);
  cfg.vocab_size = vocab;
  const auto gen = synth::generate(cfg);
  std::vector<text::TermFrequencyVector> docs;
  std::map<std::string, int> index;
  for (int w = 0; w < vocab; ++w) index[gen.truth.vocabulary[w]] = w;
  for (const auto& e : gen.dataset.events()) {
    text::TermFrequencyVector tf;
    for (const auto& t : e.tokens) ++tf[index.at(t)];
    docs.push_back(tf);
  }
  return docs;
}

void BM_LdaSweeps(benchmark::State& state) {
  const auto docs = synthetic_docs(400);
  text::LdaOptions o;
  o.num_topics = 9;
  o.iters = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(text::lda_fit(docs, 400, o).topic_word.sum());
}
BENCHMARK(BM_LdaSweeps)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_LdaInfer(benchmark::State& state) {
  const auto docs = synthetic_docs(400);
  text::LdaOptions o;
  o.num_topics = 9;
  o.iters = 50;
  const auto model = text::lda_fit(docs, 400, o);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(text::lda_infer(model, docs[i++ % docs.size()]).sum());
  }
}
BENCHMARK(BM_LdaInfer);

}  // namespace
}  // namespace sitrec

BENCHMARK_MAIN();
