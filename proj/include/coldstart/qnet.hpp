#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "coldstart/interview.hpp"
#include "coldstart/layers.hpp"

namespace coldstart {

// state (2·actions) → 64 → 32 → actions, relu output. Dropout acts on the
// outputs of both hidden layers.
struct QNetwork {
  DenseLayer hidden1;
  DenseLayer hidden2;
  DenseLayer output;
  double dropout_rate = 0.5;
  AdamState adam;

  static constexpr std::size_t kHidden1 = 64;
  static constexpr std::size_t kHidden2 = 32;

  static QNetwork create(int action_count, Activation hidden_activation, Rng& rng, double learning_rate = 5e-4,
                         double dropout_rate = 0.5);

  int action_count() const { return static_cast<int>(output.out_dim()); }
  int state_dim() const { return static_cast<int>(hidden1.in_dim()); }
  Activation hidden_activation() const { return hidden1.activation; }

  ParameterList parameters();

  friend bool operator==(const QNetwork&, const QNetwork&) = default;
};

struct QForward {
  Vector q;
  DenseCache hidden1;
  DenseCache hidden2;
  DenseCache output;
};

QForward q_forward_cached(const QNetwork& net, std::span<const double> state, bool training, Rng& rng);
// q ≥ 0 elementwise; deterministic when training is false.
Vector q_forward(const QNetwork& net, std::span<const double> state, bool training, Rng& rng);
// Parameter gradients (in `parameters()` order) for upstream gradient dL/dq.
GradientList q_backward(const QNetwork& net, const QForward& fwd, std::span<const double> q_gradient);

// ε(e) = max(floor, start − decrement·e)
struct EpsilonSchedule {
  double start = 1.0;
  double decrement = 0.05;
  double floor = 0.2;

  double at(int epoch) const;
};

// ε-greedy over unasked slots; greedy ties resolve to the lowest slot.
int select_action(std::span<const double> q, const std::vector<bool>& asked_mask, double epsilon, Rng& rng);

struct QTarget {
  Vector values;                 // per action
  std::vector<bool> supervised;  // entries that carry a learning signal
};

// Monte-Carlo targets: the action taken at step t (1-based) gets γ^(k−t)/rmse,
// actions asked before step t get 0, the rest keep the current prediction.
std::vector<QTarget> build_targets(const Trajectory& trajectory, double rmse, double gamma,
                                   const std::vector<Vector>& current_q);

enum class QLoss { mse, softmax_cross_entropy };

std::string_view to_string(QLoss loss);
QLoss parse_qloss(std::string_view text);

struct QSample {
  Vector state;
  QTarget target;
};

// One Adam step on the batch. Entries that are not supervised are compared to
// the network's own output, so they contribute nothing under MSE. Throws
// TrainingError on a non-finite loss without touching the parameters.
double dqn_update(QNetwork& net, std::span<const QSample> batch, QLoss loss, Rng& rng);

// Loss and gradients without the parameter update (used by dqn_update and the gradient checks).
double dqn_loss_and_gradients(const QNetwork& net, std::span<const QSample> batch, QLoss loss, bool training,
                              Rng& rng, GradientList* gradients);

}  // namespace coldstart
