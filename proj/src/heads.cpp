#include "coldstart/heads.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "coldstart/error.hpp"

namespace coldstart {

namespace {

void add_dense(GradientList& into, const DenseGradients& g, std::size_t offset) {
  auto w = g.weights.values();
  for (std::size_t i = 0; i < w.size(); ++i) into[offset][i] += w[i];
  for (std::size_t i = 0; i < g.bias.size(); ++i) into[offset + 1][i] += g.bias[i];
}

GradientList tower_zeros(const UserTower& t) {
  return {Vector(t.hidden1.weights.size(), 0.0), Vector(t.hidden1.bias.size(), 0.0),
          Vector(t.hidden2.weights.size(), 0.0), Vector(t.hidden2.bias.size(), 0.0),
          Vector(t.output.weights.size(), 0.0),  Vector(t.output.bias.size(), 0.0)};
}

void add_into(GradientList& into, const GradientList& g) {
  for (std::size_t p = 0; p < g.size(); ++p)
    for (std::size_t i = 0; i < g[p].size(); ++i) into[p][i] += g[p][i];
}

}  // namespace

UserTower UserTower::create(int state_dim, int embedding_dim, Rng& rng, double dropout_rate) {
  if (state_dim < 1 || embedding_dim < 1) throw NumericsError("UserTower: dimensions must be positive");
  UserTower t;
  t.hidden1 = DenseLayer::glorot(static_cast<std::size_t>(state_dim), kHidden, Activation::relu, rng);
  t.hidden2 = DenseLayer::glorot(kHidden, kHidden, Activation::relu, rng);
  t.output = DenseLayer::glorot(kHidden, static_cast<std::size_t>(embedding_dim), Activation::tanh, rng);
  t.dropout_rate = dropout_rate;
  return t;
}

ParameterList UserTower::parameters() {
  return {hidden1.weights.values(), hidden1.bias, hidden2.weights.values(), hidden2.bias,
          output.weights.values(),  output.bias};
}

TowerForward tower_forward(const UserTower& tower, std::span<const double> state, bool training, Rng& rng) {
  if (static_cast<int>(state.size()) != tower.state_dim()) {
    throw NumericsError("user tower: state length " + std::to_string(state.size()) + " != " +
                        std::to_string(tower.state_dim()));
  }
  TowerForward f;
  f.hidden1 = dense_forward(tower.hidden1, state, 0.0, training, rng);
  f.hidden2 = dense_forward(tower.hidden2, f.hidden1.output, tower.dropout_rate, training, rng);
  f.output = dense_forward(tower.output, f.hidden2.output, tower.dropout_rate, training, rng);
  f.embedding = f.output.output;
  return f;
}

GradientList tower_backward(const UserTower& tower, const TowerForward& fwd,
                            std::span<const double> embedding_gradient) {
  GradientList grads = tower_zeros(tower);
  const DenseGradients g3 = dense_backward(tower.output, fwd.output, embedding_gradient);
  const DenseGradients g2 = dense_backward(tower.hidden2, fwd.hidden2, g3.input);
  const DenseGradients g1 = dense_backward(tower.hidden1, fwd.hidden1, g2.input);
  add_dense(grads, g1, 0);
  add_dense(grads, g2, 2);
  add_dense(grads, g3, 4);
  return grads;
}

EmbeddingHead EmbeddingHead::create(int action_count, int embedding_dim, Rng& rng, double learning_rate,
                                    double dropout_rate) {
  EmbeddingHead h;
  h.tower = UserTower::create(2 * action_count, embedding_dim, rng, dropout_rate);
  h.adam = AdamState::for_parameters(h.parameters(), learning_rate);
  return h;
}

Vector embed_user(const EmbeddingHead& head, std::span<const double> terminal_state, bool training, Rng& rng) {
  return tower_forward(head.tower, terminal_state, training, rng).embedding;
}

double embedding_loss(std::span<const double> predicted, std::span<const double> target) {
  if (predicted.size() != target.size() || predicted.empty()) {
    throw NumericsError("embedding_loss: length mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) s += (predicted[i] - target[i]) * (predicted[i] - target[i]);
  return s / static_cast<double>(predicted.size());
}

double predict_rating_qembedding(std::span<const double> head_output, const FactorSet& factors, int movie) {
  if (movie < 0 || movie >= factors.movie_count()) {
    throw DataError("predict_rating_qembedding: unknown movie index " + std::to_string(movie));
  }
  const auto v = factors.movie_factors.row(static_cast<std::size_t>(movie));
  if (head_output.size() != v.size()) throw NumericsError("predict_rating_qembedding: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += head_output[i] * factors.user_scale * v[i];
  return clip_rating(s);
}

double embedding_head_loss_and_gradients(const EmbeddingHead& head, std::span<const EmbeddingSample> batch,
                                         bool training, Rng& rng, GradientList* gradients) {
  if (batch.empty()) throw TrainingError("embedding head update: empty batch");
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  if (gradients) *gradients = tower_zeros(head.tower);
  double total = 0.0;
  for (const EmbeddingSample& s : batch) {
    const TowerForward fwd = tower_forward(head.tower, s.state, training, rng);
    total += embedding_loss(fwd.embedding, s.target);
    if (gradients) {
      const double n = static_cast<double>(fwd.embedding.size());
      Vector g(fwd.embedding.size());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * (fwd.embedding[i] - s.target[i]) / n * inv_batch;
      add_into(*gradients, tower_backward(head.tower, fwd, g));
    }
  }
  return total * inv_batch;
}

double update_embedding_head(EmbeddingHead& head, std::span<const EmbeddingSample> batch, Rng& rng) {
  GradientList grads;
  const double loss = embedding_head_loss_and_gradients(head, batch, true, rng, &grads);
  if (!std::isfinite(loss)) throw TrainingError("embedding head update: non-finite loss");
  if (!adam_step(head.parameters(), grads, head.adam)) throw TrainingError("embedding head update: non-finite gradient");
  return loss;
}

RatingHead RatingHead::create(int action_count, const FactorSet& factors, double mean_rating, Rng& rng,
                              double learning_rate, double dropout_rate) {
  RatingHead h;
  h.tower = UserTower::create(2 * action_count, factors.dim, rng, dropout_rate);
  h.movie_table = factors.movie_factors;
  h.mean_rating = mean_rating;
  h.adam = AdamState::for_parameters(h.parameters(), learning_rate);
  return h;
}

ParameterList RatingHead::parameters() {
  ParameterList p = tower.parameters();
  p.push_back(movie_table.values());
  return p;
}

double rating_from_embedding(const RatingHead& head, std::span<const double> user_embedding, int movie) {
  if (movie < 0 || static_cast<std::size_t>(movie) >= head.movie_table.rows()) {
    throw DataError("Q-Rating head: unknown movie index " + std::to_string(movie));
  }
  return head.mean_rating + dot(user_embedding, head.movie_table.row(static_cast<std::size_t>(movie)));
}

double predict_rating_qrating(const RatingHead& head, std::span<const double> terminal_state, int movie, bool training,
                              Rng& rng) {
  if (movie < 0 || static_cast<std::size_t>(movie) >= head.movie_table.rows()) {
    throw DataError("Q-Rating head: unknown movie index " + std::to_string(movie));
  }
  const TowerForward fwd = tower_forward(head.tower, terminal_state, training, rng);
  return rating_from_embedding(head, fwd.embedding, movie);
}

double clipped_rating_loss(double predicted, int truth) {
  const double d = clip_rating(predicted) - truth;
  return d * d;
}

double clipped_rating_loss_gradient(double predicted, int truth) {
  if (predicted <= 1.0 || predicted >= 5.0) return 0.0;
  return 2.0 * (predicted - truth);
}

double rating_head_loss_and_gradients(const RatingHead& head, std::span<const RatingSample> batch, bool training,
                                      Rng& rng, GradientList* gradients) {
  std::size_t pairs = 0;
  for (const RatingSample& s : batch) pairs += s.ratings.size();
  if (pairs == 0) throw TrainingError("rating head update: batch has no ratings");
  const double inv_pairs = 1.0 / static_cast<double>(pairs);
  const std::size_t dim = head.movie_table.cols();
  if (gradients) {
    *gradients = tower_zeros(head.tower);
    gradients->emplace_back(head.movie_table.size(), 0.0);
  }
  double total = 0.0;
  for (const RatingSample& s : batch) {
    if (s.ratings.empty()) continue;
    const TowerForward fwd = tower_forward(head.tower, s.state, training, rng);
    Vector grad_embedding(dim, 0.0);
    for (const MovieRating& mr : s.ratings) {
      const double pred = rating_from_embedding(head, fwd.embedding, mr.movie);
      total += clipped_rating_loss(pred, mr.rating);
      if (!gradients) continue;
      const double g = clipped_rating_loss_gradient(pred, mr.rating) * inv_pairs;
      if (g == 0.0) continue;
      auto row = head.movie_table.row(static_cast<std::size_t>(mr.movie));
      Vector& table_grad = gradients->back();
      for (std::size_t i = 0; i < dim; ++i) {
        grad_embedding[i] += g * row[i];
        table_grad[static_cast<std::size_t>(mr.movie) * dim + i] += g * fwd.embedding[i];
      }
    }
    if (gradients) {
      const GradientList tg = tower_backward(head.tower, fwd, grad_embedding);
      for (std::size_t p = 0; p < tg.size(); ++p)
        for (std::size_t i = 0; i < tg[p].size(); ++i) (*gradients)[p][i] += tg[p][i];
    }
  }
  return total * inv_pairs;
}

double update_rating_head(RatingHead& head, std::span<const RatingSample> batch, Rng& rng) {
  GradientList grads;
  const double loss = rating_head_loss_and_gradients(head, batch, true, rng, &grads);
  if (!std::isfinite(loss)) throw TrainingError("rating head update: non-finite loss");
  if (!adam_step(head.parameters(), grads, head.adam)) throw TrainingError("rating head update: non-finite gradient");
  return loss;
}

}  // namespace coldstart
