#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <vector>

#include "coldstart/bundle.hpp"
#include "coldstart/dataset.hpp"
#include "coldstart/interview.hpp"

namespace coldstart {

inline constexpr double kRmseFloor = 1e-6;

struct EpochMetrics {
  int epoch = 0;
  double test_rmse = 0.0;  // NaN when the epoch was not evaluated
  double train_reward_mean = 0.0;
  double epsilon = 0.0;
  double dqn_lr = 0.0;
  double wall_seconds = 0.0;
  // Not part of the metrics file.
  double head_loss = 0.0;
  double dqn_loss = 0.0;
  int skipped_users = 0;
  int interviews = 0;
  bool restarted_after = false;
};

struct MetricsLog {
  std::vector<EpochMetrics> records;

  // Throws if epochs would stop increasing.
  void append(const EpochMetrics& m);
};

inline constexpr const char* kMetricsHeader = "epoch,test_rmse,train_reward_mean,epsilon,dqn_lr,wall_seconds";

// Appends one CSV row per epoch and flushes it immediately.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void write(const EpochMetrics& m);

 private:
  std::ofstream out_;
};

std::string metrics_row(const EpochMetrics& m);
MetricsLog read_metrics(const std::filesystem::path& path);

// RMSE of `predict` against the user's observed ratings, skipping the movies
// asked in the interview unless `set` says otherwise; floored at kRmseFloor.
// Throws TrainingError when no rating is eligible.
double reward_rmse(const RatingsDataset& dataset, int user, const Trajectory& trajectory, const ActionSpace& actions,
                   const std::function<double(int movie)>& predict, RewardSet set = RewardSet::non_interviewed);
// 1 / reward_rmse.
double training_reward(const RatingsDataset& dataset, const EvaluationSplit& split, int user,
                       const Trajectory& trajectory, const ActionSpace& actions,
                       const std::function<double(int movie)>& predict, RewardSet set = RewardSet::non_interviewed);

// One pass over the training users in shuffled batches: ε-greedy interviews,
// head update, rewards from the updated head, DQN update.
EpochMetrics train_epoch(ModelBundle& bundle, const RatingsDataset& dataset, const EvaluationSplit& split, int epoch,
                         double epsilon, Rng& rng);

struct TrainOptions {
  std::optional<std::filesystem::path> output_dir;  // best.bundle, last.bundle, metrics.csv
  std::function<void(const EpochMetrics&, const ModelBundle&)> on_epoch;
  // Evaluate with this many questions (defaults to config.k).
  std::optional<int> eval_questions;
};

struct TrainResult {
  ModelBundle best;
  MetricsLog log;
  int restarts = 0;
};

// Trains with per-epoch test evaluation. When more than `retrain_patience`
// consecutive evaluations fail to improve, training restarts from the best
// bundle with ε back at its start value and the DQN learning rate lowered.
TrainResult train(const TrainConfig& config, const RatingsDataset& dataset, const EvaluationSplit& split,
                  FactorSet factors, const TrainOptions& options = {});

}  // namespace coldstart
