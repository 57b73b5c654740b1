#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <variant>

#include <json.hpp>

#include "coldstart/bpmf.hpp"
#include "coldstart/heads.hpp"
#include "coldstart/interview.hpp"
#include "coldstart/qnet.hpp"

namespace coldstart {

enum class ModelKind { q_embedding, q_rating };
// `random` replaces the DQN by uniform question choice; the head still trains.
enum class PolicyKind { dqn, random };
// Which of a user's observed ratings enter the training reward.
enum class RewardSet { non_interviewed, all_observed };

std::string to_string(ModelKind m);
ModelKind parse_model_kind(std::string_view text);  // accepts q_embedding / q-embedding etc.
std::string to_string(PolicyKind p);
PolicyKind parse_policy_kind(std::string_view text);
std::string to_string(RewardSet r);
RewardSet parse_reward_set(std::string_view text);

struct TrainConfig {
  ModelKind model = ModelKind::q_rating;
  PolicyKind policy = PolicyKind::dqn;
  int k = 3;
  int epochs = 600;
  int users_per_batch = 100;
  double gamma = 1.0;
  EpsilonSchedule epsilon;
  double dqn_lr = 5e-4;
  double dqn_restart_lr = 1e-5;
  double head_lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int retrain_patience = 50;
  int eval_stride = 1;
  int checkpoint_every = 25;
  int rating_samples = 32;
  RewardSet reward_set = RewardSet::non_interviewed;
  QLoss dqn_loss = QLoss::mse;
  double dropout = 0.5;
  int action_count = kDefaultActionCount;
  std::uint64_t seed = 7;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

using Head = std::variant<EmbeddingHead, RatingHead>;

// Everything needed to interview a user and score movies.
struct ModelBundle {
  TrainConfig config;
  ActionSpace action_space;
  FactorSet factors;
  QNetwork dqn;
  Head head;
  double mean_rating = 0.0;
  std::uint64_t dataset_fingerprint = 0;
  double best_test_rmse = std::numeric_limits<double>::infinity();
  int epoch_of_best = -1;

  ModelKind kind() const { return std::holds_alternative<EmbeddingHead>(head) ? ModelKind::q_embedding : ModelKind::q_rating; }

  // Inference-mode q-values for a state.
  Vector q_values(const InterviewState& state) const;
  // Greedy (ε = 0) unasked slot.
  int greedy_action(const InterviewState& state) const;
  // Head output for a terminal state: the (scaled) embedding for Q-Embedding,
  // the tower embedding for Q-Rating.
  Vector user_profile(const InterviewState& terminal_state) const;
  // Rating in [1, 5] for a profile returned by user_profile.
  double predict(std::span<const double> profile, int movie) const;
  int movie_count() const { return factors.movie_count(); }
};

ModelBundle create_bundle(const TrainConfig& config, const RatingsDataset& dataset, FactorSet factors);

// FNV-1a over every trainable parameter (DQN and head).
std::uint64_t parameter_hash(const ModelBundle& bundle);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace coldstart
