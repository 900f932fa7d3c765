#include "sitrec/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "sitrec/error.hpp"
#include "sitrec/random.hpp"

namespace sitrec::pipeline {

TopicArtifacts fit_topics(const corpus::Dataset& train, const config::LdaConfig& cfg,
                          std::uint64_t seed) {
  const auto& course = train.course();
  std::vector<std::vector<std::string>> token_docs;
  token_docs.reserve(train.size() + course.week_docs.size());
  for (const auto& e : train.events()) token_docs.push_back(e.tokens);
  for (const auto& w : course.week_docs) token_docs.push_back(w);

  TopicArtifacts out;
  out.vocab = text::build_vocabulary(token_docs, cfg.min_count);
  text::LdaOptions opts;
  opts.num_topics = cfg.num_topics > 0 ? cfg.num_topics : course.num_weeks();
  opts.iters = cfg.iters;
  opts.alpha = cfg.alpha;
  opts.beta = cfg.beta;
  opts.seed = seed;

  const text::InferOptions infer{cfg.infer_iters, std::nullopt};
  if (cfg.separate_course_model) {
    std::vector<text::TermFrequencyVector> posts, weeks;
    for (const auto& e : train.events()) posts.push_back(text::term_frequency(e.tokens, out.vocab));
    for (const auto& w : course.week_docs) weeks.push_back(text::term_frequency(w, out.vocab));
    out.lda = text::lda_fit(posts, out.vocab.size(), opts);
    text::LdaOptions course_opts = opts;
    course_opts.seed = derive_seed(seed, 1);
    out.course_lda = text::lda_fit(weeks, out.vocab.size(), course_opts);
    out.course = text::course_topics(course, *out.course_lda, out.vocab, infer);
  } else {
    std::vector<text::TermFrequencyVector> docs;
    docs.reserve(token_docs.size());
    for (const auto& d : token_docs) docs.push_back(text::term_frequency(d, out.vocab));
    out.lda = text::lda_fit(docs, out.vocab.size(), opts);
    out.course = text::course_topics(course, out.lda, out.vocab, infer);
  }
  return out;
}

std::vector<text::TopicDistribution> infer_post_topics(const corpus::Dataset& ds,
                                                       const TopicArtifacts& topics,
                                                       const config::LdaConfig& cfg) {
  return text::post_topics(ds, topics.lda, topics.vocab, {cfg.infer_iters, std::nullopt});
}

corpus::SplitSpec split_spec(const config::EvalConfig& eval) {
  corpus::SplitSpec spec;
  spec.train_end = eval.train_end_days * corpus::kSecondsPerDay;
  spec.test_end = spec.train_end + eval.test_window_days * corpus::kSecondsPerDay;
  spec.validate();
  return spec;
}

Experiment prepare(const corpus::Dataset& ds, const config::RunConfig& cfg) {
  Experiment exp;
  const auto spec = split_spec(cfg.eval);
  exp.split = corpus::split_by_time(ds, spec);
  exp.train_end = spec.train_end;
  exp.topics = fit_topics(exp.split.train, cfg.lda, cfg.lda_seed());
  exp.train_topics = infer_post_topics(exp.split.train, exp.topics, cfg.lda);
  return exp;
}

SitrecRun run_sitrec(const Experiment& exp, const train::TrainConfig& cfg, int n_cutoff) {
  SitrecRun run;
  run.fit = train::fit(exp.split.train, exp.train_topics, exp.topics.course, cfg);
  const recommend::SitrecRecommender rec(run.fit.params, run.fit.state, exp.split.train,
                                         exp.train_end, cfg.ablation);
  run.report = recommend::evaluate([&](corpus::StudentId u) { return rec(u); },
                                   exp.split.test, n_cutoff);
  return run;
}

recommend::EvalReport run_baseline(const Experiment& exp, const std::string& name,
                                   const config::EvalConfig& eval) {
  const auto& train = exp.split.train;
  if (name == "pop") {
    const auto ranking = recommend::baseline_pop(train);
    return recommend::evaluate([&](corpus::StudentId) { return ranking; }, exp.split.test,
                               eval.n_cutoff);
  }
  if (name == "rec") {
    const auto ranking = recommend::baseline_rec(train, eval.rec_ascending);
    return recommend::evaluate([&](corpus::StudentId) { return ranking; }, exp.split.test,
                               eval.n_cutoff);
  }
  if (name == "user-rec") {
    return recommend::evaluate(
        [&](corpus::StudentId u) {
          return recommend::baseline_user_rec(train, u, eval.rec_ascending);
        },
        exp.split.test, eval.n_cutoff);
  }
  throw ConfigError("unknown baseline '" + name + "' (expected pop, rec or user-rec)");
}

void run_parallel(std::vector<std::function<void()>>& tasks, int jobs) {
  const std::size_t workers =
      std::min<std::size_t>(std::max(1, jobs), std::max<std::size_t>(1, tasks.size()));
  if (workers <= 1) {
    for (auto& t : tasks) t();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < tasks.size(); i = next++) {
        try {
          tasks[i]();
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<AblationRow> run_ablation(const Experiment& exp, const config::RunConfig& cfg,
                                      int jobs, std::vector<std::string> variants) {
  if (variants.empty()) {
    for (auto name : train::AblationFlags::kNames) variants.emplace_back(name);
  }
  for (const auto& v : variants) {
    train::AblationFlags probe;
    probe.set(v);  // rejects unknown names before any training starts
  }
  std::vector<AblationRow> rows(1 + variants.size());
  std::vector<std::function<void()>> tasks;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    tasks.emplace_back([&, i] {
      train::TrainConfig tc = cfg.train;
      tc.ablation = {};
      tc.record_trajectories = false;
      std::string name = "full";
      if (i > 0) {
        name = variants[i - 1];
        tc.ablation.set(name);
      }
      const auto run = run_sitrec(exp, tc, cfg.eval.n_cutoff);
      rows[i] = {name, run.report.map_at_n, run.report.users_evaluated};
    });
  }
  run_parallel(tasks, jobs);
  return rows;
}

GridResult grid_search(const Experiment& exp, const config::RunConfig& cfg, int jobs) {
  const auto& g = cfg.grid;
  if (g.embedding_dims.empty() || g.alphas.empty() || g.betas.empty()) {
    throw ConfigError("grid search needs at least one value per axis");
  }
  if (!(g.validation_days > 0.0)) throw ConfigError("grid.validation_days must be > 0");

  // The fit side is a chronological prefix of the training window, so its
  // topics are a prefix of the training topics.
  Experiment inner;
  inner.train_end = exp.train_end - g.validation_days * corpus::kSecondsPerDay;
  inner.split.train = exp.split.train.filter(
      [&](const corpus::PostEvent& e) { return e.timestamp < inner.train_end; });
  inner.split.test = exp.split.train.filter(
      [&](const corpus::PostEvent& e) { return e.timestamp >= inner.train_end; });
  if (inner.split.train.empty() || inner.split.test.empty()) {
    throw EmptyDatasetError("grid search: validation split leaves an empty side");
  }
  inner.topics = exp.topics;
  inner.train_topics.assign(exp.train_topics.begin(),
                            exp.train_topics.begin() + inner.split.train.size());

  GridResult result;
  for (int d : g.embedding_dims) {
    for (double a : g.alphas) {
      for (double b : g.betas) result.points.push_back({d, a, b, 0.0});
    }
  }
  std::vector<std::function<void()>> tasks;
  for (auto& point : result.points) {
    tasks.emplace_back([&inner, &cfg, &point] {
      train::TrainConfig tc = cfg.train;
      tc.embedding_dim = point.embedding_dim;
      tc.alpha = point.alpha;
      tc.beta = point.beta;
      tc.record_trajectories = false;
      point.validation_map = run_sitrec(inner, tc, cfg.eval.n_cutoff).report.map_at_n;
    });
  }
  run_parallel(tasks, jobs);
  result.best = result.points.front();
  for (const auto& p : result.points) {
    if (p.validation_map > result.best.validation_map) result.best = p;
  }
  return result;
}

}  // namespace sitrec::pipeline
