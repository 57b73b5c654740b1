// coldstart: operator entry point for the interview recommender pipeline.
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "coldstart/bpmf.hpp"
#include "coldstart/bundle.hpp"
#include "coldstart/config.hpp"
#include "coldstart/dataset.hpp"
#include "coldstart/error.hpp"
#include "coldstart/eval.hpp"
#include "coldstart/service.hpp"
#include "coldstart/trainer.hpp"

namespace fs = std::filesystem;
using namespace coldstart;
using nlohmann::json;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string data_dir;
  std::string run_dir;
  std::vector<std::string> assignments;
};

std::string timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  localtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

void require(const fs::path& path, const std::string& what, const std::string& producer) {
  if (!fs::exists(path)) {
    throw ArtifactError(what + " not found at " + path.string() + "; run `coldstart " + producer + "` first");
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ArtifactError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

class Context {
 public:
  Context(const GlobalOptions& opts) : opts_(opts) {
    if (!opts.config_path.empty()) config.merge_file(opts.config_path);
    for (const auto& a : opts.assignments) config.set_assignment(a);
    if (opts.seed) config.set("seed", *opts.seed);
    if (!opts.data_dir.empty()) config.set("data_dir", opts.data_dir);
  }

  Config config;

  // The explicit --run-dir, else the newest run whose name carries the current
  // pipeline hash, else a fresh timestamped one.
  fs::path run_dir() {
    if (run_dir_) return *run_dir_;
    if (!opts_.run_dir.empty()) {
      run_dir_ = fs::path(opts_.run_dir);
      return *run_dir_;
    }
    const fs::path root = config.get_string("runs_root");
    const std::string suffix = "-" + config.pipeline_hash();
    std::optional<fs::path> latest;
    if (fs::is_directory(root)) {
      for (const auto& entry : fs::directory_iterator(root)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_directory() && name.ends_with(suffix) && (!latest || name > latest->filename().string())) {
          latest = entry.path();
        }
      }
    }
    run_dir_ = latest ? *latest : root / (timestamp() + suffix);
    return *run_dir_;
  }

  fs::path writable_run_dir() {
    const fs::path dir = run_dir();
    fs::create_directories(dir);
    return dir;
  }

  fs::path dataset_path() { return run_dir() / "dataset.cache"; }
  fs::path split_path() { return run_dir() / "split.json"; }
  fs::path factors_path() { return run_dir() / "factors.bin"; }
  fs::path model_dir() {
    return run_dir() / "models" / (to_string(config.train_config().model) + "-" + config.training_hash());
  }

  RatingsDataset dataset() {
    require(dataset_path(), "dataset cache", "ingest");
    return load_dataset_cache(dataset_path());
  }
  EvaluationSplit split(const RatingsDataset& d) {
    require(split_path(), "split file", "split");
    return load_split(split_path(), d);
  }
  FactorSet factors() {
    require(factors_path(), "factor checkpoint", "bpmf-train");
    return load_factors(factors_path());
  }
  ModelBundle bundle(const std::string& explicit_path) {
    const fs::path p = explicit_path.empty() ? model_dir() / "best.bundle" : fs::path(explicit_path);
    require(p, "model bundle", "train");
    return load_bundle(p);
  }

 private:
  GlobalOptions opts_;
  std::optional<fs::path> run_dir_;
};

std::vector<MovieInfo> catalog_of(const RatingsDataset& d) {
  std::vector<MovieInfo> out;
  out.reserve(static_cast<std::size_t>(d.movie_count()));
  for (int m = 0; m < d.movie_count(); ++m) out.push_back(d.movie(m));
  return out;
}

int cmd_ingest(Context& ctx) {
  std::string dir = ctx.config.get_string("data_dir");
  if (dir.empty()) {
    if (const char* env = std::getenv("COLDSTART_DATA_DIR")) dir = env;
  }
  if (dir.empty()) throw ConfigError("no data directory: pass --data-dir or set COLDSTART_DATA_DIR");
  const fs::path ratings = fs::path(dir) / ctx.config.get_string("ratings_file");
  const fs::path movies = fs::path(dir) / ctx.config.get_string("movies_file");
  if (!fs::exists(ratings)) throw DataError("ratings file not found: " + ratings.string());
  const RatingsDataset d = load_movielens(ratings, fs::exists(movies) ? movies : fs::path());
  const fs::path run = ctx.writable_run_dir();
  save_dataset_cache(d, ctx.dataset_path());
  save_index_mapping(d, run / "index_mapping.tsv");
  write_json(run / "config.json", ctx.config.to_json());
  std::cout << "run directory: " << run.string() << '\n'
            << "users: " << d.user_count() << "\nmovies: " << d.movie_count() << "\nratings: " << d.rating_count()
            << '\n';
  return 0;
}

int cmd_split(Context& ctx) {
  const RatingsDataset d = ctx.dataset();
  const EvaluationSplit s = make_split(d, ctx.config.seed(), ctx.config.get_double("split.user_fraction"),
                                       ctx.config.get_double("split.movie_fraction"));
  save_split(s, d.fingerprint(), ctx.split_path());
  std::cout << "train users: " << s.train_users.size() << "\ntest users: " << s.test_users.size()
            << "\ninterview movies: " << s.interview_movies.size() << "\ntest movies: " << s.test_movies.size()
            << '\n';
  return 0;
}

int cmd_bpmf(Context& ctx) {
  const RatingsDataset d = ctx.dataset();
  const EvaluationSplit s = ctx.split(d);
  BpmfStats stats;
  const FactorSet f = train_bpmf(d, s, ctx.config.bpmf_config(), &stats);
  save_factors(f, ctx.factors_path());
  std::cout << "factors: " << ctx.factors_path().string() << "\naveraged train RMSE: " << std::fixed
            << std::setprecision(4) << stats.averaged_train_rmse << "\nuser scale: " << f.user_scale
            << "\nregularised draws: " << stats.regularized_draws << '\n';
  return 0;
}

int cmd_train(Context& ctx) {
  const TrainConfig cfg = ctx.config.train_config();
  const RatingsDataset d = ctx.dataset();
  const EvaluationSplit s = ctx.split(d);
  FactorSet f = ctx.factors();
  const fs::path out = ctx.model_dir();
  fs::create_directories(out);
  write_json(out / "config.json", ctx.config.to_json());
  TrainOptions options;
  options.output_dir = out;
  options.on_epoch = [](const EpochMetrics& m, const ModelBundle&) {
    std::cout << "epoch " << m.epoch << "  test_rmse " << std::fixed << std::setprecision(4) << m.test_rmse
              << "  reward " << m.train_reward_mean << "  epsilon " << std::setprecision(2) << m.epsilon
              << (m.restarted_after ? "  restart" : "") << '\n'
              << std::flush;
  };
  const TrainResult r = train(cfg, d, s, std::move(f), options);
  if (!fs::exists(out / "best.bundle")) save_bundle(r.best, out / "best.bundle");
  std::cout << "model directory: " << out.string() << "\nbest test RMSE: " << std::setprecision(4)
            << r.best.best_test_rmse << " (epoch " << r.best.epoch_of_best << ")\nrestarts: " << r.restarts << '\n';
  return 0;
}

int cmd_eval(Context& ctx, int questions, const std::string& bundle_path) {
  const RatingsDataset d = ctx.dataset();
  const EvaluationSplit s = ctx.split(d);
  const ModelBundle b = ctx.bundle(bundle_path);
  const EvalReport report = evaluate(b, d, s, questions);
  const fs::path out = bundle_path.empty() ? ctx.model_dir() : fs::path(bundle_path).parent_path();
  const std::string stem = "eval-q" + std::to_string(questions);
  {
    std::ofstream text(out / (stem + ".txt"));
    write_report_text(report, text);
  }
  write_json(out / (stem + ".json"), report_records(report));
  write_report_text(report, std::cout);
  return 0;
}

int cmd_interview(Context& ctx, const std::string& bundle_path) {
  const RatingsDataset d = ctx.dataset();
  auto bundle = std::make_shared<const ModelBundle>(ctx.bundle(bundle_path));
  InterviewService service(bundle, catalog_of(d), {});
  const int k = ctx.config.get_int("interview.questions");
  ServiceResponse r = service.create_session({{"k", k}});
  if (r.status != 200) throw InterviewError(r.body.value("error", "cannot start interview"));
  const std::string id = r.body.at("session_id");
  while (!r.body.value("finished", false)) {
    const json& q = r.body.at("question");
    std::string genres;
    for (const auto& g : q.at("genres")) genres += (genres.empty() ? "" : ", ") + g.get<std::string>();
    const int asked = r.body.at("progress").at("asked").get<int>();
    std::cout << "[" << asked + 1 << "/" << k << "] Do you like " << q.at("title").get<std::string>() << " ("
              << genres << ")? Rate 1-5, or 0 if you haven't seen it: " << std::flush;
    std::string line;
    int rating = -1;
    while (rating < 0) {
      if (!std::getline(std::cin, line)) throw InterviewError("input ended before the interview finished");
      try {
        std::size_t used = 0;
        const int v = std::stoi(line, &used);
        if (line.find_first_not_of(" \t\r", used) == std::string::npos && v >= 0 && v <= 5) rating = v;
      } catch (const std::exception&) {
      }
      if (rating < 0) std::cout << "please answer with a number from 0 to 5: " << std::flush;
    }
    r = service.answer(id, {{"rating", rating}});
    if (r.status != 200) throw InterviewError(r.body.value("error", "answer rejected"));
  }
  const ServiceResponse recs = service.recommendations(id, ctx.config.get_int("interview.top_n"));
  std::cout << "\nRecommended for you:\n";
  int rank = 0;
  for (const auto& item : recs.body.at("recommendations")) {
    std::cout << std::setw(3) << ++rank << ". " << std::fixed << std::setprecision(2)
              << item.at("predicted_rating").get<double>() << "  " << item.at("title").get<std::string>() << '\n';
  }
  return 0;
}

int cmd_serve(Context& ctx, const std::string& bundle_path) {
  const RatingsDataset d = ctx.dataset();
  auto bundle = std::make_shared<const ModelBundle>(ctx.bundle(bundle_path));
  ServiceOptions options;
  options.session_ttl_seconds = ctx.config.get_double("service.session_ttl_seconds");
  if (const std::string j = ctx.config.get_string("service.journal"); !j.empty()) options.journal = j;
  InterviewService service(bundle, catalog_of(d), options);
  HttpFrontend http(service, ctx.config.get_string("service.cors_origin"));
  const std::string host = ctx.config.get_string("service.host");
  const int port = http.bind(host, ctx.config.get_int("service.port"));
  std::cout << "serving " << to_string(bundle->kind()) << " on http://" << host << ":" << port << '\n' << std::flush;
  http.listen();
  return 0;
}

int cmd_report(Context& ctx, const std::string& bundle_path) {
  const fs::path dir = bundle_path.empty() ? ctx.model_dir() : fs::path(bundle_path).parent_path();
  const fs::path metrics_path = dir / "metrics.csv";
  require(metrics_path, "metrics file", "train");
  const MetricsLog log = read_metrics(metrics_path);
  json series = {{"epoch", json::array()},
                 {"test_rmse", json::array()},
                 {"train_reward_mean", json::array()},
                 {"epsilon", json::array()},
                 {"dqn_lr", json::array()}};
  for (const EpochMetrics& m : log.records) {
    series["epoch"].push_back(m.epoch);
    series["test_rmse"].push_back(std::isnan(m.test_rmse) ? json() : json(m.test_rmse));
    series["train_reward_mean"].push_back(m.train_reward_mean);
    series["epsilon"].push_back(m.epsilon);
    series["dqn_lr"].push_back(m.dqn_lr);
  }
  const fs::path out = dir / "report";
  fs::create_directories(out);
  write_json(out / "series.json", series);

  const RatingsDataset d = ctx.dataset();
  const EvaluationSplit s = ctx.split(d);
  const ModelBundle b = ctx.bundle(bundle_path);
  const int sample = std::min<int>(ctx.config.get_int("eval.sample_users"), static_cast<int>(s.test_users.size()));
  const std::vector<int> users(s.test_users.begin(), s.test_users.begin() + sample);
  const int k = ctx.config.get_int("eval.questions");
  const auto rows = sample_interviews(b, d, s, users, k);
  {
    std::ofstream text(out / "interviews.txt");
    write_interview_rows(rows, text);
  }
  const auto all_rows = sample_interviews(b, d, s, s.test_users, k);
  const double diversity = genre_diversity(all_rows, d);
  write_json(out / "summary.json", {{"epochs", log.records.size()},
                                    {"best_test_rmse", b.best_test_rmse},
                                    {"epoch_of_best", b.epoch_of_best},
                                    {"questions", k},
                                    {"distinct_primary_genre_fraction", diversity}});
  write_interview_rows(rows, std::cout);
  std::cout << "\ndistinct primary genres across test interviews: " << std::fixed << std::setprecision(3)
            << diversity << "\nreport written to " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cold-start interview recommender: ingest, split, bpmf-train, train, eval, interview, serve, report"};
  app.require_subcommand(1);
  app.footer(config_help());

  GlobalOptions g;
  app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "seed for split, BPMF and training");
  app.add_option("--data-dir", g.data_dir, "MovieLens 1M directory (default: $COLDSTART_DATA_DIR)");
  app.add_option("--run-dir", g.run_dir, "run directory (default: newest runs/<timestamp>-<hash> for this config)");
  app.add_option("--set", g.assignments, "override a config key: --set train.epochs=100");

  std::string model;
  int questions = 0;
  int port = 0;
  int top_n = 0;
  std::string bundle_path;

  auto* ingest = app.add_subcommand("ingest", "parse ratings.dat/movies.dat into the dataset cache");
  auto* split = app.add_subcommand("split", "draw the train/test user and interview/test movie split");
  auto* bpmf = app.add_subcommand("bpmf-train", "fit BPMF factors on the training users");
  auto* train_cmd = app.add_subcommand("train", "train the DQN interviewer and its head");
  train_cmd->add_option("--model", model, "q-embedding or q-rating");
  auto* eval_cmd = app.add_subcommand("eval", "test RMSE after a cold-start interview");
  eval_cmd->add_option("--questions", questions, "interview length (default eval.questions)");
  auto* interview = app.add_subcommand("interview", "answer questions on stdin, get recommendations");
  interview->add_option("--questions", questions, "interview length (default interview.questions)");
  interview->add_option("--top-n", top_n, "recommendations to print (default interview.top_n)");
  auto* serve = app.add_subcommand("serve", "HTTP JSON interview service");
  serve->add_option("--port", port, "port (default service.port)");
  auto* report = app.add_subcommand("report", "plot-ready metric series and sample interviews");
  for (auto* sub : {eval_cmd, interview, serve, report}) {
    sub->add_option("--bundle", bundle_path, "model bundle (default: best.bundle of the configured model)");
  }
  for (auto* sub : app.get_subcommands({})) {
    sub->fallthrough();
    sub->footer(config_help());
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    Context ctx(g);
    if (!model.empty()) ctx.config.set("train.model", to_string(parse_model_kind(model)));
    if (port) ctx.config.set("service.port", port);
    if (top_n) ctx.config.set("interview.top_n", top_n);
    if (*ingest) return cmd_ingest(ctx);
    if (*split) return cmd_split(ctx);
    if (*bpmf) return cmd_bpmf(ctx);
    if (*train_cmd) return cmd_train(ctx);
    if (*eval_cmd) return cmd_eval(ctx, questions ? questions : ctx.config.get_int("eval.questions"), bundle_path);
    if (*interview) {
      if (questions) ctx.config.set("interview.questions", questions);
      return cmd_interview(ctx, bundle_path);
    }
    if (*serve) return cmd_serve(ctx, bundle_path);
    if (*report) return cmd_report(ctx, bundle_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
