#include "coldstart/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>

#include "coldstart/error.hpp"

namespace coldstart {

namespace {

std::string join_genres(const MovieInfo& info) {
  std::string s;
  for (std::size_t i = 0; i < info.genres.size(); ++i) s += (i ? ", " : "") + info.genres[i];
  return s;
}

int random_choice(std::uint64_t seed, int user, const InterviewState& state) {
  Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(user + 1)) ^
          static_cast<std::uint64_t>(state.asked_count()) << 48);
  std::vector<int> open;
  for (int s = 0; s < state.action_count(); ++s)
    if (!state.asked(s)) open.push_back(s);
  return open[uniform_index(rng, open.size())];
}

}  // namespace

EvalModel eval_model(const ModelBundle& bundle) {
  EvalModel m;
  m.name = bundle.kind() == ModelKind::q_embedding ? "Q-Embedding" : "Q-Rating";
  if (bundle.config.policy == PolicyKind::random) {
    m.name += " (random questions)";
    const std::uint64_t seed = bundle.config.seed;
    m.choose = [seed](int user, const InterviewState& s) { return random_choice(seed, user, s); };
  } else {
    m.choose = [&bundle](int, const InterviewState& s) { return bundle.greedy_action(s); };
  }
  m.predict = [&bundle](int, const InterviewState& terminal, std::span<const int> movies) {
    const Vector profile = bundle.user_profile(terminal);
    std::vector<double> out;
    out.reserve(movies.size());
    for (int movie : movies) out.push_back(bundle.predict(profile, movie));
    return out;
  };
  return m;
}

EvalReport evaluate(const EvalModel& model, const ActionSpace& actions, const RatingsDataset& dataset,
                    const EvaluationSplit& split, int k) {
  if (k < 1) throw InterviewError("evaluate: at least one question is required");
  EvalReport report;
  report.model = model.name;
  report.questions = k;
  double squared = 0.0;
  std::vector<double> per_user;
  for (int user : split.test_users) {
    std::vector<int> movies;
    std::vector<int> truth;
    for (const RatingRecord& r : dataset.user_ratings(user)) {
      if (split.is_test_movie(r.movie)) {
        movies.push_back(r.movie);
        truth.push_back(r.rating);
      }
    }
    if (movies.empty()) {
      ++report.users_excluded;
      continue;
    }
    const Trajectory t = run_interview(
        actions, [&](const InterviewState& s) { return model.choose(user, s); },
        [&](int movie) { return simulate_answer(dataset, split, user, movie, AnswerMode::test); }, k);
    UserInterview record{user, {}, {}};
    for (const auto& step : t.steps) {
      record.movies.push_back(actions.movie_at(step.slot));
      record.answers.push_back(step.rating);
    }
    report.interviews.push_back(std::move(record));

    const std::vector<double> predicted = model.predict(user, t.terminal_state, movies);
    if (predicted.size() != movies.size()) throw InterviewError("evaluate: predictor returned wrong count");
    double user_sq = 0.0;
    for (std::size_t i = 0; i < movies.size(); ++i) {
      const double d = predicted[i] - truth[i];
      user_sq += d * d;
    }
    squared += user_sq;
    report.n_test_pairs += movies.size();
    per_user.push_back(std::sqrt(user_sq / static_cast<double>(movies.size())));
    ++report.users_evaluated;
  }
  if (report.n_test_pairs == 0) throw InterviewError("evaluate: no (test user, test movie) ratings to score");
  report.pooled_rmse = std::sqrt(squared / static_cast<double>(report.n_test_pairs));
  double sum = 0.0;
  for (double v : per_user) sum += v;
  report.per_user_rmse_mean = sum / static_cast<double>(per_user.size());
  std::sort(per_user.begin(), per_user.end());
  const std::size_t n = per_user.size();
  report.per_user_rmse_median = n % 2 ? per_user[n / 2] : 0.5 * (per_user[n / 2 - 1] + per_user[n / 2]);
  return report;
}

EvalReport evaluate(const ModelBundle& bundle, const RatingsDataset& dataset, const EvaluationSplit& split, int k) {
  if (bundle.dataset_fingerprint != dataset.fingerprint()) {
    throw ArtifactError("model bundle was trained on a different dataset");
  }
  return evaluate(eval_model(bundle), bundle.action_space, dataset, split, k);
}

std::vector<InterviewRow> sample_interviews(const ModelBundle& bundle, const RatingsDataset& dataset,
                                            const EvaluationSplit& split, std::span<const int> users, int k) {
  const EvalModel model = eval_model(bundle);
  std::vector<InterviewRow> rows;
  for (int user : users) {
    const Trajectory t = run_interview(
        bundle.action_space, [&](const InterviewState& s) { return model.choose(user, s); },
        [&](int movie) { return simulate_answer(dataset, split, user, movie, AnswerMode::test); }, k);
    int turn = 0;
    for (const auto& step : t.steps) {
      const int movie = bundle.action_space.movie_at(step.slot);
      const MovieInfo& info = dataset.movie(movie);
      rows.push_back({user, ++turn, movie, info.title, join_genres(info), step.rating});
    }
  }
  return rows;
}

double genre_diversity(std::span<const InterviewRow> rows, const RatingsDataset& dataset) {
  std::map<int, std::vector<int>> by_user;
  std::vector<int> order;
  for (const InterviewRow& r : rows) {
    if (!by_user.contains(r.user)) order.push_back(r.user);
    by_user[r.user].push_back(r.movie);
  }
  if (by_user.empty()) return 0.0;
  int distinct = 0;
  for (int user : order) {
    std::set<std::string> primaries;
    bool ok = true;
    for (int movie : by_user[user]) {
      const auto& genres = dataset.movie(movie).genres;
      const std::string primary = genres.empty() ? "" : genres.front();
      if (!primaries.insert(primary).second) ok = false;
    }
    distinct += ok ? 1 : 0;
  }
  return static_cast<double>(distinct) / static_cast<double>(by_user.size());
}

void write_report_text(const EvalReport& report, std::ostream& out) {
  out << std::fixed << std::setprecision(4);
  out << "model:               " << report.model << '\n';
  out << "questions:           " << report.questions << '\n';
  out << "pooled RMSE:         " << report.pooled_rmse << '\n';
  out << "per-user RMSE mean:  " << report.per_user_rmse_mean << '\n';
  out << "per-user RMSE median:" << ' ' << report.per_user_rmse_median << '\n';
  out << "test pairs:          " << report.n_test_pairs << '\n';
  out << "users evaluated:     " << report.users_evaluated << " (" << report.users_excluded
      << " without test ratings excluded)\n\n";
  out << "reference results (MovieLens 1M)   3 questions   4 questions\n";
  for (const auto& b : kReferenceResults) {
    out << "  " << std::left << std::setw(32) << b.model << std::right << std::setw(12) << b.rmse_3_questions
        << std::setw(14) << b.rmse_4_questions << '\n';
  }
  out.unsetf(std::ios::fixed);
}

nlohmann::json report_records(const EvalReport& report) {
  nlohmann::json records = nlohmann::json::array();
  auto add = [&](const std::string& metric, const nlohmann::json& value) {
    records.push_back({{"model", report.model}, {"questions", report.questions}, {"metric", metric}, {"value", value}});
  };
  add("pooled_rmse", report.pooled_rmse);
  add("per_user_rmse_mean", report.per_user_rmse_mean);
  add("per_user_rmse_median", report.per_user_rmse_median);
  add("n_test_pairs", report.n_test_pairs);
  add("users_evaluated", report.users_evaluated);
  add("users_excluded", report.users_excluded);
  for (const auto& b : kReferenceResults) {
    const double v = report.questions == 4 ? b.rmse_4_questions : b.rmse_3_questions;
    if (report.questions == 3 || report.questions == 4) {
      records.push_back({{"model", std::string(b.model)}, {"questions", report.questions}, {"metric", "reference_rmse"},
                         {"value", v}});
    }
  }
  return records;
}

void write_interview_rows(std::span<const InterviewRow> rows, std::ostream& out) {
  int current = -1;
  for (const InterviewRow& r : rows) {
    if (r.user != current) {
      if (current != -1) out << '\n';
      out << "user " << r.user << "\nTurn\tMovie\tGenre\tRating\n";
      current = r.user;
    }
    out << r.turn << '\t' << r.title << '\t' << r.genres << '\t' << r.rating << '\n';
  }
}

}  // namespace coldstart
