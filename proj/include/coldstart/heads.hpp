#pragma once

#include <span>
#include <vector>

#include "coldstart/bpmf.hpp"
#include "coldstart/dataset.hpp"
#include "coldstart/layers.hpp"

namespace coldstart {

// Terminal state → user embedding: 2·actions → 32 relu → 32 relu → dim tanh,
// dropout on the outputs of both hidden layers.
struct UserTower {
  DenseLayer hidden1;
  DenseLayer hidden2;
  DenseLayer output;
  double dropout_rate = 0.5;

  static constexpr std::size_t kHidden = 32;

  static UserTower create(int state_dim, int embedding_dim, Rng& rng, double dropout_rate = 0.5);

  int state_dim() const { return static_cast<int>(hidden1.in_dim()); }
  int embedding_dim() const { return static_cast<int>(output.out_dim()); }
  ParameterList parameters();

  friend bool operator==(const UserTower&, const UserTower&) = default;
};

struct TowerForward {
  Vector embedding;
  DenseCache hidden1;
  DenseCache hidden2;
  DenseCache output;
};

TowerForward tower_forward(const UserTower& tower, std::span<const double> state, bool training, Rng& rng);
GradientList tower_backward(const UserTower& tower, const TowerForward& fwd, std::span<const double> embedding_gradient);

// Q-Embedding head, supervised by scaled BPMF user factors.
struct EmbeddingHead {
  UserTower tower;
  AdamState adam;

  static EmbeddingHead create(int action_count, int embedding_dim, Rng& rng, double learning_rate = 1e-4,
                              double dropout_rate = 0.5);
  ParameterList parameters() { return tower.parameters(); }

  friend bool operator==(const EmbeddingHead&, const EmbeddingHead&) = default;
};

// Output lies strictly inside (−1, 1).
Vector embed_user(const EmbeddingHead& head, std::span<const double> terminal_state, bool training, Rng& rng);
// Mean of squared componentwise differences.
double embedding_loss(std::span<const double> predicted, std::span<const double> target);
// clip((output · user_scale) · movie_factor, 1, 5)
double predict_rating_qembedding(std::span<const double> head_output, const FactorSet& factors, int movie);

struct EmbeddingSample {
  Vector state;
  Vector target;
};

double embedding_head_loss_and_gradients(const EmbeddingHead& head, std::span<const EmbeddingSample> batch,
                                         bool training, Rng& rng, GradientList* gradients);
double update_embedding_head(EmbeddingHead& head, std::span<const EmbeddingSample> batch, Rng& rng);

// Q-Rating head: mean_rating + ⟨tower(state), movie_table[movie]⟩. The movie
// table starts from the BPMF movie factors and is trained with the tower.
struct RatingHead {
  UserTower tower;
  Matrix movie_table;
  double mean_rating = 0.0;
  AdamState adam;

  static RatingHead create(int action_count, const FactorSet& factors, double mean_rating, Rng& rng,
                           double learning_rate = 1e-4, double dropout_rate = 0.5);
  ParameterList parameters();

  friend bool operator==(const RatingHead&, const RatingHead&) = default;
};

// Unclipped prediction.
double predict_rating_qrating(const RatingHead& head, std::span<const double> terminal_state, int movie, bool training,
                              Rng& rng);
// Same, for a precomputed user embedding.
double rating_from_embedding(const RatingHead& head, std::span<const double> user_embedding, int movie);

// (clip(predicted, 1, 5) − truth)²
double clipped_rating_loss(double predicted, int truth);
// d/dpredicted of clipped_rating_loss; zero wherever the clamp is active, boundaries included.
double clipped_rating_loss_gradient(double predicted, int truth);

struct RatingSample {
  Vector state;
  std::vector<MovieRating> ratings;
};

// Mean clipped loss over every (movie, rating) pair of the batch.
double rating_head_loss_and_gradients(const RatingHead& head, std::span<const RatingSample> batch, bool training,
                                      Rng& rng, GradientList* gradients);
double update_rating_head(RatingHead& head, std::span<const RatingSample> batch, Rng& rng);

}  // namespace coldstart
