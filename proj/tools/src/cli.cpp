#include "sitrec_cli/cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "sitrec/checkpoint.hpp"
#include "sitrec/config.hpp"
#include "sitrec/corpus.hpp"
#include "sitrec/error.hpp"
#include "sitrec/lda.hpp"
#include "sitrec/log.hpp"
#include "sitrec/pipeline.hpp"
#include "sitrec/recommend.hpp"
#include "sitrec/synth.hpp"
#include "sitrec/text.hpp"
#include "sitrec_cli/manifest.hpp"

namespace sitrec::cli {
namespace fs = std::filesystem;

namespace {

// Options every subcommand accepts.
struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  std::string out_dir;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out) {
  cmd->add_option("--config", c.config_path, "key = value configuration file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "override one key (key=value), repeatable");
  cmd->add_option("--seed", c.seed, "master seed for every stochastic stage");
  cmd->add_option("--jobs", c.jobs, "parallel runs for ablate/grid")->check(CLI::PositiveNumber);
  auto* out = cmd->add_option("--out", c.out_dir, "output directory");
  if (needs_out) out->required();
}

config::RunConfig build_config(const Common& c) {
  std::vector<std::pair<std::string, std::string>> pairs;
  if (!c.config_path.empty()) {
    std::ifstream in(c.config_path);
    if (!in) throw ConfigError("cannot open config file " + c.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    pairs = config::parse_text(ss.str());
  }
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("--set expects key=value, got '" + s + "'");
    }
    pairs.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) pairs.emplace_back("seed", std::to_string(*c.seed));
  config::RunConfig cfg;
  config::apply_all(cfg, pairs);
  cfg.train.validate();
  return cfg;
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

RunManifest start_manifest(const std::string& command, const config::RunConfig& cfg) {
  RunManifest m;
  m.command = command;
  m.config = cfg.entries();
  m.seed = cfg.seed;
  return m;
}

void finish_manifest(RunManifest& m, const fs::path& out_dir, const Stopwatch& clock) {
  m.wall_seconds = clock.seconds();
  m.write(out_dir / kManifestName);
}

corpus::Dataset load_dataset(const fs::path& dir, const config::RunConfig& cfg,
                             RunManifest& m) {
  const auto posts = dir / kPostsFile;
  const auto schedule = dir / kScheduleFile;
  corpus::Dataset ds =
      cfg.stopwords.empty()
          ? corpus::ingest_jsonl(posts, schedule)
          : corpus::ingest_jsonl(posts, schedule,
                                 text::Preprocessor::from_stopword_file(cfg.stopwords));
  m.add_input(posts);
  m.add_input(schedule);
  if (!cfg.stopwords.empty()) m.add_input(cfg.stopwords);
  return ds;
}

// Post and week topics written by `sitrec lda`.
struct TopicFiles {
  std::vector<text::TopicDistribution> posts;
  std::vector<text::TopicDistribution> course;
};

TopicFiles load_topics(const fs::path& dir, const corpus::Dataset& ds, RunManifest& m) {
  TopicFiles t;
  t.posts = text::load_topic_rows(dir / kPostTopicsFile);
  t.course = text::load_topic_rows(dir / kCourseTopicsFile);
  m.add_input(dir / kPostTopicsFile);
  m.add_input(dir / kCourseTopicsFile);
  if (t.posts.size() != ds.size()) {
    throw IntegrityError("topic file has " + std::to_string(t.posts.size()) +
                         " rows but the dataset has " + std::to_string(ds.size()) +
                         " posts; rerun `sitrec lda` on this dataset");
  }
  if (static_cast<int>(t.course.size()) != ds.course().num_weeks()) {
    throw IntegrityError("course topic file does not match the schedule");
  }
  return t;
}

// Training side of the split plus its topics. The training events are a
// chronological prefix of the dataset, so their topics are a prefix too.
pipeline::Experiment experiment_from_files(const corpus::Dataset& ds, const TopicFiles& t,
                                           const config::EvalConfig& eval) {
  pipeline::Experiment exp;
  const auto spec = pipeline::split_spec(eval);
  exp.split = corpus::split_by_time(ds, spec);
  exp.train_end = spec.train_end;
  exp.topics.course = t.course;
  exp.train_topics.assign(t.posts.begin(), t.posts.begin() + exp.split.train.size());
  return exp;
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

// ---- subcommands ----------------------------------------------------------

int cmd_synth(const Common& c, std::ostream& out) {
  Stopwatch clock;
  const auto cfg = build_config(c);
  const auto dir = prepare_out(c.out_dir);
  auto m = start_manifest("synth", cfg);

  const auto gen = synth::generate(cfg.synth);
  corpus::write_jsonl(gen.dataset, dir / kPostsFile, dir / kScheduleFile);
  gen.truth.write_json(dir / "truth.json");
  corpus::write_id_map(gen.dataset.ids(), dir / "ids.csv");
  for (const char* f : {kPostsFile, kScheduleFile, "truth.json", "ids.csv"}) {
    m.add_output(dir, dir / f);
  }
  finish_manifest(m, dir, clock);
  out << "wrote " << gen.dataset.size() << " posts, " << gen.dataset.num_students()
      << " students, " << gen.dataset.num_threads() << " threads to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_lda(const Common& c, const std::string& data, std::optional<int> topics,
            std::optional<int> iters, std::ostream& out) {
  Stopwatch clock;
  auto cfg = build_config(c);
  if (topics) cfg.lda.num_topics = *topics;
  if (iters) cfg.lda.iters = *iters;
  if (cfg.lda.num_topics < 0 || cfg.lda.iters < 1) throw ConfigError("invalid topic count or iterations");
  const auto dir = prepare_out(c.out_dir);
  auto m = start_manifest("lda", cfg);

  const auto ds = load_dataset(data, cfg, m);
  const auto split = corpus::split_by_time(ds, pipeline::split_spec(cfg.eval));
  const auto topics_out = pipeline::fit_topics(split.train, cfg.lda, cfg.lda_seed());
  const auto post_topics = pipeline::infer_post_topics(ds, topics_out, cfg.lda);

  topics_out.lda.save(dir / kLdaFile);
  topics_out.vocab.save(dir / kVocabFile);
  text::save_topic_rows(topics_out.course, dir / kCourseTopicsFile);
  text::save_topic_rows(post_topics, dir / kPostTopicsFile);
  std::vector<const char*> files = {kLdaFile, kVocabFile, kCourseTopicsFile, kPostTopicsFile};
  if (topics_out.course_lda) {
    topics_out.course_lda->save(dir / kCourseLdaFile);
    files.push_back(kCourseLdaFile);
  }
  for (const char* f : files) m.add_output(dir, dir / f);
  finish_manifest(m, dir, clock);
  out << "fitted " << topics_out.lda.num_topics << " topics over "
      << topics_out.vocab.size() << " words from " << split.train.size() << " posts\n";
  return kExitOk;
}

int cmd_train(const Common& c, const std::string& data, const std::string& lda_dir,
              bool export_trajectories, std::ostream& out) {
  Stopwatch clock;
  auto cfg = build_config(c);
  if (export_trajectories) cfg.train.record_trajectories = true;
  const auto dir = prepare_out(c.out_dir);
  auto m = start_manifest("train", cfg);

  const auto ds = load_dataset(data, cfg, m);
  const auto topics = load_topics(lda_dir, ds, m);
  const auto exp = experiment_from_files(ds, topics, cfg.eval);
  const auto fit = train::fit(exp.split.train, exp.train_topics, exp.topics.course, cfg.train);

  checkpoint::save({fit.params, cfg.train, fit.state, exp.train_end}, dir / kCheckpointFile);
  {
    std::ofstream log_out(dir / "train_log.csv");
    log_out << "epoch,mean_loss,wall_seconds\n" << std::setprecision(17);
    for (const auto& e : fit.log) {
      log_out << e.epoch << ',' << e.mean_loss << ',' << e.wall_seconds << '\n';
    }
    if (!log_out) throw Error("cannot write training log");
  }
  m.add_output(dir, dir / kCheckpointFile);
  m.add_output(dir, dir / "train_log.csv", /*reproducible=*/false);
  if (cfg.train.record_trajectories) {
    recommend::write_trajectories(fit.trajectories, dir / "trajectories.csv");
    m.add_output(dir, dir / "trajectories.csv");
  }
  finish_manifest(m, dir, clock);
  out << "trained " << cfg.train.epochs << " epochs on " << exp.split.train.size()
      << " posts, final loss " << fmt(fit.log.empty() ? 0.0 : fit.log.back().mean_loss) << '\n';
  return kExitOk;
}

int cmd_eval(const Common& c, const std::string& data, const std::string& ckpt_path,
             const std::string& baseline, std::optional<double> t1, std::optional<double> t2,
             std::optional<int> n, bool rec_ascending, std::ostream& out) {
  Stopwatch clock;
  auto cfg = build_config(c);
  if (ckpt_path.empty() == baseline.empty()) {
    throw ConfigError("eval needs exactly one of --checkpoint or --baseline");
  }
  if (t1) cfg.eval.train_end_days = *t1;
  if (n) cfg.eval.n_cutoff = *n;
  if (rec_ascending) cfg.eval.rec_ascending = true;

  std::optional<checkpoint::Checkpoint> ckpt;
  if (!ckpt_path.empty()) {
    ckpt = checkpoint::load(ckpt_path);
    if (t1 && std::abs(*t1 * corpus::kSecondsPerDay - ckpt->train_end) > 1e-6) {
      throw ConfigError("--t1 disagrees with the checkpoint's training window end");
    }
    cfg.eval.train_end_days = ckpt->train_end / corpus::kSecondsPerDay;
  }
  if (t2) cfg.eval.test_window_days = *t2 - cfg.eval.train_end_days;
  if (cfg.eval.n_cutoff < 1) throw ConfigError("-n must be at least 1");
  if (!(cfg.eval.test_window_days > 0.0)) throw ConfigError("--t2 must be after T1");

  const auto dir = prepare_out(c.out_dir);
  auto m = start_manifest("eval", cfg);
  const auto ds = load_dataset(data, cfg, m);
  const auto spec = pipeline::split_spec(cfg.eval);
  const auto split = corpus::split_by_time(ds, spec);

  recommend::EvalReport report;
  std::string label = baseline;
  if (ckpt) {
    m.add_input(ckpt_path);
    if (ckpt->params.dims.students != ds.num_students() ||
        ckpt->params.dims.threads != ds.num_threads()) {
      throw IntegrityError("checkpoint was trained on a different registry");
    }
    const recommend::SitrecRecommender rec(ckpt->params, ckpt->state, split.train,
                                           ckpt->train_end, ckpt->config.ablation);
    report = recommend::evaluate([&](corpus::StudentId u) { return rec(u); }, split.test,
                                 cfg.eval.n_cutoff);
    label = "sitrec";
  } else {
    pipeline::Experiment exp;
    exp.split = split;
    exp.train_end = spec.train_end;
    report = pipeline::run_baseline(exp, baseline, cfg.eval);
  }
  report.write_json(dir / "report.json");
  report.write_csv(dir / "report.csv");
  m.add_output(dir, dir / "report.json");
  m.add_output(dir, dir / "report.csv");
  finish_manifest(m, dir, clock);
  out << label << " MAP@" << report.n_cutoff << " = " << fmt(report.map_at_n) << " over "
      << report.users_evaluated << " students\n";
  return kExitOk;
}

int cmd_ablate(const Common& c, const std::string& data, const std::string& lda_dir,
               const std::vector<std::string>& variants, std::ostream& out) {
  Stopwatch clock;
  const auto cfg = build_config(c);
  const auto dir = prepare_out(c.out_dir);
  auto m = start_manifest("ablate", cfg);
  const auto ds = load_dataset(data, cfg, m);
  const auto topics = load_topics(lda_dir, ds, m);
  const auto exp = experiment_from_files(ds, topics, cfg.eval);
  const auto rows = pipeline::run_ablation(exp, cfg, c.jobs, variants);

  {
    std::ofstream csv(dir / "ablation.csv");
    csv << "variant,map_at_n,users_evaluated\n" << std::setprecision(17);
    for (const auto& r : rows) csv << r.variant << ',' << r.map_at_n << ',' << r.users_evaluated << '\n';
    if (!csv) throw Error("cannot write ablation table");
  }
  m.add_output(dir, dir / "ablation.csv");
  finish_manifest(m, dir, clock);
  out << std::left << std::setw(24) << "variant" << "MAP@" << cfg.eval.n_cutoff << '\n';
  for (const auto& r : rows) out << std::setw(24) << r.variant << fmt(r.map_at_n) << '\n';
  return kExitOk;
}

int cmd_grid(const Common& c, const std::string& data, const std::string& lda_dir,
             std::ostream& out) {
  Stopwatch clock;
  const auto cfg = build_config(c);
  const auto dir = prepare_out(c.out_dir);
  auto m = start_manifest("grid", cfg);
  const auto ds = load_dataset(data, cfg, m);
  const auto topics = load_topics(lda_dir, ds, m);
  const auto exp = experiment_from_files(ds, topics, cfg.eval);
  const auto result = pipeline::grid_search(exp, cfg, c.jobs);

  {
    std::ofstream csv(dir / "grid.csv");
    csv << "embedding_dim,alpha,beta,validation_map\n" << std::setprecision(17);
    for (const auto& p : result.points) {
      csv << p.embedding_dim << ',' << p.alpha << ',' << p.beta << ',' << p.validation_map << '\n';
    }
    if (!csv) throw Error("cannot write grid table");
  }
  m.add_output(dir, dir / "grid.csv");
  finish_manifest(m, dir, clock);
  out << "best: train.embedding_dim=" << result.best.embedding_dim
      << " train.alpha=" << result.best.alpha << " train.beta=" << result.best.beta
      << " (validation MAP " << fmt(result.best.validation_map) << ")\n";
  return kExitOk;
}

int cmd_recommend(const Common& c, const std::string& data, const std::string& ckpt_path,
                  std::int64_t student_ext, std::optional<double> at, std::size_t top_k,
                  std::ostream& out) {
  Stopwatch clock;
  const auto cfg = build_config(c);
  RunManifest m = start_manifest("recommend", cfg);
  const auto ds = load_dataset(data, cfg, m);
  const auto ckpt = checkpoint::load(ckpt_path);
  m.add_input(ckpt_path);
  if (ckpt.params.dims.students != ds.num_students() ||
      ckpt.params.dims.threads != ds.num_threads()) {
    throw IntegrityError("checkpoint was trained on a different registry");
  }
  const double when = at.value_or(ckpt.train_end);
  if (when < ckpt.train_end) {
    throw ConfigError("--at must not precede the checkpoint's training window end (" +
                      fmt(ckpt.train_end, 0) + ")");
  }
  const auto& ids = ds.ids().students;
  const auto it = std::find(ids.begin(), ids.end(), student_ext);
  if (it == ids.end()) throw ConfigError("unknown student id " + std::to_string(student_ext));
  const auto student = static_cast<corpus::StudentId>(it - ids.begin());

  const auto history = ds.filter([&](const corpus::PostEvent& e) { return e.timestamp < when; });
  const recommend::SitrecRecommender rec(ckpt.params, ckpt.state, history, when,
                                         ckpt.config.ablation);
  const auto ranked = rec(student, top_k);

  std::ostringstream table;
  table << "rank,thread,distance\n" << std::setprecision(17);
  for (std::size_t i = 0; i < ranked.thread_ids.size(); ++i) {
    table << i + 1 << ',' << ds.ids().threads.at(ranked.thread_ids[i]) << ','
          << ranked.distances[i] << '\n';
  }
  out << table.str();
  if (!c.out_dir.empty()) {
    const auto dir = prepare_out(c.out_dir);
    std::ofstream(dir / "recommendations.csv") << table.str();
    m.add_output(dir, dir / "recommendations.csv");
    finish_manifest(m, dir, clock);
  }
  return kExitOk;
}

int cmd_verify(const std::string& manifest, std::ostream& out, std::ostream& err) {
  const auto result = verify_manifest(manifest);
  for (const auto& p : result.missing) err << "missing: " << p << '\n';
  for (const auto& p : result.mismatched) err << "checksum mismatch: " << p << '\n';
  if (!result.ok()) return kExitRuntime;
  out << "ok\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Thread recommendation for course discussion forums"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "only log warnings and errors");

  Common common;
  std::string data, lda_dir, ckpt_path, baseline, manifest;
  std::optional<int> topics, iters, n_cutoff;
  std::optional<double> t1, t2, at;
  bool export_trajectories = false, rec_ascending = false;
  std::vector<std::string> variants;
  std::int64_t student = 0;
  std::size_t top_k = 5;

  auto* synth = app.add_subcommand("synth", "generate a synthetic course forum");
  add_common(synth, common, true);

  auto* lda = app.add_subcommand("lda", "fit the topic model on the training window");
  add_common(lda, common, true);
  lda->add_option("--data", data, "dataset directory")->required();
  lda->add_option("--topics,-K", topics, "number of topics (default: course weeks)");
  lda->add_option("--iters", iters, "Gibbs sweeps");

  auto* trn = app.add_subcommand("train", "train the recommender on the training window");
  add_common(trn, common, true);
  trn->add_option("--data", data, "dataset directory")->required();
  trn->add_option("--lda", lda_dir, "directory written by `sitrec lda`")->required();
  trn->add_flag("--export-trajectories", export_trajectories,
                "write last-epoch embedding trajectories");

  auto* eval = app.add_subcommand("eval", "score a checkpoint or a baseline by MAP@N");
  add_common(eval, common, true);
  eval->add_option("--data", data, "dataset directory")->required();
  auto* ck = eval->add_option("--checkpoint", ckpt_path, "checkpoint from `sitrec train`");
  eval->add_option("--baseline", baseline, "pop, rec or user-rec")->excludes(ck);
  eval->add_option("--t1", t1, "end of the training window, days");
  eval->add_option("--t2", t2, "end of the test window, days");
  eval->add_option("-n,--n-cutoff", n_cutoff, "MAP cutoff N");
  eval->add_flag("--rec-ascending", rec_ascending, "REC baselines rank oldest first");

  auto* ablate = app.add_subcommand("ablate", "MAP of the full model and each ablation");
  add_common(ablate, common, true);
  ablate->add_option("--data", data, "dataset directory")->required();
  ablate->add_option("--lda", lda_dir, "directory written by `sitrec lda`")->required();
  ablate->add_option("--variants", variants, "subset of ablation flags")->delimiter(',');

  auto* grid = app.add_subcommand("grid", "grid search over d, alpha and beta");
  add_common(grid, common, true);
  grid->add_option("--data", data, "dataset directory")->required();
  grid->add_option("--lda", lda_dir, "directory written by `sitrec lda`")->required();

  auto* rec = app.add_subcommand("recommend", "rank threads for one student");
  add_common(rec, common, false);
  rec->add_option("--data", data, "dataset directory")->required();
  rec->add_option("--checkpoint", ckpt_path, "checkpoint from `sitrec train`")->required();
  rec->add_option("--student", student, "external student id")->required();
  rec->add_option("--at", at, "query time in seconds (default: end of training window)");
  rec->add_option("--top-k,-k", top_k, "list length")->check(CLI::PositiveNumber);

  auto* verify = app.add_subcommand("verify", "recompute the checksums in a manifest");
  verify->add_option("manifest", manifest, "manifest.json")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const auto saved_level = log::level();
  if (quiet) log::set_level(log::Level::kWarn);
  int code = kExitOk;
  try {
    if (synth->parsed()) code = cmd_synth(common, out);
    else if (lda->parsed()) code = cmd_lda(common, data, topics, iters, out);
    else if (trn->parsed()) code = cmd_train(common, data, lda_dir, export_trajectories, out);
    else if (eval->parsed())
      code = cmd_eval(common, data, ckpt_path, baseline, t1, t2, n_cutoff, rec_ascending, out);
    else if (ablate->parsed()) code = cmd_ablate(common, data, lda_dir, variants, out);
    else if (grid->parsed()) code = cmd_grid(common, data, lda_dir, out);
    else if (rec->parsed())
      code = cmd_recommend(common, data, ckpt_path, student, at, top_k, out);
    else if (verify->parsed()) code = cmd_verify(manifest, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    code = kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    code = kExitRuntime;
  }
  log::set_level(saved_level);
  return code;
}

}  // namespace sitrec::cli
