#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "coldstart/dataset.hpp"
#include "coldstart/numerics.hpp"

namespace coldstart {

enum class BpmfInit {
  noise,  // N(0, init_sigma²) entries
  map,    // a few alternating ridge (PMF MAP) sweeps started from noise
};

// Normal-Wishart hyperprior (μ₀ = 0, β₀, ν₀, W₀ = I) and sampler settings.
struct BpmfConfig {
  int dim = 10;
  int gibbs_iterations = 200;
  int burn_in = 50;
  double beta0 = 2.0;
  double nu0 = 0.0;  // 0 means "use dim"
  double observation_precision = 2.0;
  BpmfInit init = BpmfInit::map;
  double init_sigma = 0.1;
  int map_sweeps = 10;
  double map_lambda = 1.0;
  std::uint64_t seed = 1;

  double effective_nu0() const { return nu0 > 0.0 ? nu0 : static_cast<double>(dim); }
  void validate() const;

  friend bool operator==(const BpmfConfig&, const BpmfConfig&) = default;
};

nlohmann::json bpmf_config_to_json(const BpmfConfig& c);
BpmfConfig bpmf_config_from_json(const nlohmann::json& j);

std::string to_string(BpmfInit init);
BpmfInit parse_bpmf_init(std::string_view text);

struct FactorSet {
  int dim = 0;
  Matrix user_factors;   // user_count × dim; rows of users outside the training set are zero
  Matrix movie_factors;  // movie_count × dim; movies with no training ratings stay at the prior mean 0
  double user_scale = 1.0;
  std::vector<std::uint8_t> user_trained;
  BpmfConfig config;

  int user_count() const { return static_cast<int>(user_factors.rows()); }
  int movie_count() const { return static_cast<int>(movie_factors.rows()); }

  friend bool operator==(const FactorSet&, const FactorSet&) = default;
};

struct BpmfStats {
  int regularized_draws = 0;             // conditionals whose precision needed the 1e-8 diagonal fix
  std::vector<double> sample_train_rmse;  // per iteration, of the current (not averaged) sample
  double averaged_train_rmse = 0.0;
};

// Gibbs sampler over the given observations. Returned factors are the mean of
// the post-burn-in samples.
FactorSet train_bpmf(std::span<const RatingRecord> ratings, int user_count, int movie_count,
                     const BpmfConfig& config, BpmfStats* stats = nullptr);
// Uses only the ratings of the split's training users.
FactorSet train_bpmf(const RatingsDataset& dataset, const EvaluationSplit& split, const BpmfConfig& config,
                     BpmfStats* stats = nullptr);

// clip(user_vector · movie_factor, 1, 5)
double predict_rating(const FactorSet& factors, std::span<const double> user_vector, int movie);
// user factor / user_scale, guaranteed inside [-1, 1].
Vector scaled_user_target(const FactorSet& factors, int user);

double clip_rating(double r);

void save_factors(const FactorSet& factors, const std::filesystem::path& path);
FactorSet load_factors(const std::filesystem::path& path);

}  // namespace coldstart
