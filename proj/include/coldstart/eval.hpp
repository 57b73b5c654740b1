#pragma once

#include <array>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "coldstart/bundle.hpp"
#include "coldstart/dataset.hpp"
#include "coldstart/interview.hpp"

namespace coldstart {

struct BaselineResult {
  std::string_view model;
  double rmse_3_questions;
  double rmse_4_questions;
};

// Published cold-start interview results on MovieLens 1M, kept as reference values.
inline constexpr std::array<BaselineResult, 5> kReferenceResults{{
    {"Tree", 0.9767, 0.9683},
    {"TreeU", 0.9913, 0.9887},
    {"fMF", 0.9509, 0.9480},
    {"Q-Embedding (reference)", 0.9507, 0.9486},
    {"Q-Rating (reference)", 0.9472, 0.9469},
}};

struct InterviewRow {
  int user = 0;
  int turn = 0;  // 1-based
  int movie = 0;
  std::string title;
  std::string genres;  // comma separated
  int rating = 0;
};

struct UserInterview {
  int user = 0;
  std::vector<int> movies;
  std::vector<int> answers;
};

struct EvalReport {
  std::string model;
  int questions = 0;
  double pooled_rmse = 0.0;
  double per_user_rmse_mean = 0.0;
  double per_user_rmse_median = 0.0;
  std::size_t n_test_pairs = 0;
  int users_evaluated = 0;
  int users_excluded = 0;  // test users without any test-movie rating
  std::vector<UserInterview> interviews;
};

// What evaluation needs from a model; stubs let tests bypass the networks.
struct EvalModel {
  std::string name;
  std::function<int(int user, const InterviewState& state)> choose;
  // Predictions for `movies`, given the terminal state of the user's interview.
  std::function<std::vector<double>(int user, const InterviewState& terminal, std::span<const int> movies)> predict;
};

EvalModel eval_model(const ModelBundle& bundle);

// Greedy interviews for every test user with test-mode answers, then rating
// prediction on each (user, test movie) pair the user rated.
EvalReport evaluate(const EvalModel& model, const ActionSpace& actions, const RatingsDataset& dataset,
                    const EvaluationSplit& split, int k);
EvalReport evaluate(const ModelBundle& bundle, const RatingsDataset& dataset, const EvaluationSplit& split, int k);

std::vector<InterviewRow> sample_interviews(const ModelBundle& bundle, const RatingsDataset& dataset,
                                            const EvaluationSplit& split, std::span<const int> users, int k);

// Fraction of interviews whose questions all have different primary (first
// listed) genres. Rows are grouped by user.
double genre_diversity(std::span<const InterviewRow> rows, const RatingsDataset& dataset);

void write_report_text(const EvalReport& report, std::ostream& out);
// One record per metric.
nlohmann::json report_records(const EvalReport& report);
void write_interview_rows(std::span<const InterviewRow> rows, std::ostream& out);

}  // namespace coldstart
