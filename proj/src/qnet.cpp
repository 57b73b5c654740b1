#include "coldstart/qnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "coldstart/error.hpp"

namespace coldstart {

namespace {

void accumulate(GradientList& into, const DenseGradients& g, std::size_t offset) {
  auto w = g.weights.values();
  for (std::size_t i = 0; i < w.size(); ++i) into[offset][i] += w[i];
  for (std::size_t i = 0; i < g.bias.size(); ++i) into[offset + 1][i] += g.bias[i];
}

GradientList zero_gradients(const QNetwork& net) {
  return {Vector(net.hidden1.weights.size(), 0.0), Vector(net.hidden1.bias.size(), 0.0),
          Vector(net.hidden2.weights.size(), 0.0), Vector(net.hidden2.bias.size(), 0.0),
          Vector(net.output.weights.size(), 0.0),  Vector(net.output.bias.size(), 0.0)};
}

}  // namespace

QNetwork QNetwork::create(int action_count, Activation hidden_activation, Rng& rng, double learning_rate,
                          double dropout_rate) {
  if (action_count < 1) throw NumericsError("QNetwork: action count must be positive");
  QNetwork net;
  const auto actions = static_cast<std::size_t>(action_count);
  net.hidden1 = DenseLayer::glorot(2 * actions, kHidden1, hidden_activation, rng);
  net.hidden2 = DenseLayer::glorot(kHidden1, kHidden2, hidden_activation, rng);
  net.output = DenseLayer::glorot(kHidden2, actions, Activation::relu, rng);
  net.dropout_rate = dropout_rate;
  net.adam = AdamState::for_parameters(net.parameters(), learning_rate);
  return net;
}

ParameterList QNetwork::parameters() {
  return {hidden1.weights.values(), hidden1.bias, hidden2.weights.values(), hidden2.bias,
          output.weights.values(),  output.bias};
}

QForward q_forward_cached(const QNetwork& net, std::span<const double> state, bool training, Rng& rng) {
  if (static_cast<int>(state.size()) != net.state_dim()) {
    throw NumericsError("q_forward: state length " + std::to_string(state.size()) + " != " +
                        std::to_string(net.state_dim()));
  }
  QForward f;
  f.hidden1 = dense_forward(net.hidden1, state, 0.0, training, rng);
  f.hidden2 = dense_forward(net.hidden2, f.hidden1.output, net.dropout_rate, training, rng);
  f.output = dense_forward(net.output, f.hidden2.output, net.dropout_rate, training, rng);
  f.q = f.output.output;
  return f;
}

Vector q_forward(const QNetwork& net, std::span<const double> state, bool training, Rng& rng) {
  return q_forward_cached(net, state, training, rng).q;
}

GradientList q_backward(const QNetwork& net, const QForward& fwd, std::span<const double> q_gradient) {
  GradientList grads = zero_gradients(net);
  const DenseGradients g3 = dense_backward(net.output, fwd.output, q_gradient);
  const DenseGradients g2 = dense_backward(net.hidden2, fwd.hidden2, g3.input);
  const DenseGradients g1 = dense_backward(net.hidden1, fwd.hidden1, g2.input);
  accumulate(grads, g1, 0);
  accumulate(grads, g2, 2);
  accumulate(grads, g3, 4);
  return grads;
}

double EpsilonSchedule::at(int epoch) const { return std::max(floor, start - decrement * epoch); }

int select_action(std::span<const double> q, const std::vector<bool>& asked_mask, double epsilon, Rng& rng) {
  if (q.size() != asked_mask.size()) throw InterviewError("select_action: q and mask lengths differ");
  std::vector<int> open;
  open.reserve(q.size());
  for (std::size_t s = 0; s < q.size(); ++s)
    if (!asked_mask[s]) open.push_back(static_cast<int>(s));
  if (open.empty()) throw InterviewError("select_action: every slot has been asked");

  if (epsilon > 0.0 && uniform01(rng) < epsilon) return open[uniform_index(rng, open.size())];
  int best = open.front();
  for (int s : open)
    if (q[static_cast<std::size_t>(s)] > q[static_cast<std::size_t>(best)]) best = s;
  return best;
}

std::vector<QTarget> build_targets(const Trajectory& trajectory, double rmse, double gamma,
                                   const std::vector<Vector>& current_q) {
  if (!(rmse > 0.0)) throw TrainingError("build_targets: rmse must be positive");
  if (current_q.size() != trajectory.steps.size()) {
    throw TrainingError("build_targets: need one q-vector per trajectory step");
  }
  const int k = static_cast<int>(trajectory.steps.size());
  std::vector<QTarget> targets;
  targets.reserve(trajectory.steps.size());
  for (int t = 1; t <= k; ++t) {
    const Vector& q = current_q[static_cast<std::size_t>(t - 1)];
    QTarget target{q, std::vector<bool>(q.size(), false)};
    for (int prev = 0; prev < t - 1; ++prev) {
      const auto slot = static_cast<std::size_t>(trajectory.steps[static_cast<std::size_t>(prev)].slot);
      target.values[slot] = 0.0;
      target.supervised[slot] = true;
    }
    const auto taken = static_cast<std::size_t>(trajectory.steps[static_cast<std::size_t>(t - 1)].slot);
    target.values[taken] = std::pow(gamma, k - t) / rmse;
    target.supervised[taken] = true;
    targets.push_back(std::move(target));
  }
  return targets;
}

std::string_view to_string(QLoss loss) { return loss == QLoss::mse ? "mse" : "softmax_cross_entropy"; }

QLoss parse_qloss(std::string_view text) {
  if (text == "mse") return QLoss::mse;
  if (text == "softmax_cross_entropy") return QLoss::softmax_cross_entropy;
  throw ConfigError("dqn loss must be 'mse' or 'softmax_cross_entropy', got '" + std::string(text) + "'");
}

double dqn_loss_and_gradients(const QNetwork& net, std::span<const QSample> batch, QLoss loss, bool training,
                              Rng& rng, GradientList* gradients) {
  if (batch.empty()) throw TrainingError("dqn_update: empty batch");
  const auto actions = static_cast<std::size_t>(net.action_count());
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  if (gradients) *gradients = zero_gradients(net);
  double total = 0.0;
  for (const QSample& sample : batch) {
    if (sample.target.values.size() != actions || sample.target.supervised.size() != actions) {
      throw TrainingError("dqn_update: target length does not match the action count");
    }
    const QForward fwd = q_forward_cached(net, sample.state, training, rng);
    Vector target(actions);
    for (std::size_t a = 0; a < actions; ++a) {
      target[a] = sample.target.supervised[a] ? sample.target.values[a] : fwd.q[a];
    }
    Vector grad_q(actions, 0.0);
    if (loss == QLoss::mse) {
      double l = 0.0;
      for (std::size_t a = 0; a < actions; ++a) {
        const double diff = fwd.q[a] - target[a];
        l += diff * diff;
        grad_q[a] = 2.0 * diff / static_cast<double>(actions) * inv_batch;
      }
      total += l / static_cast<double>(actions);
    } else {
      // target distribution over supervised entries only
      double mass = 0.0;
      for (std::size_t a = 0; a < actions; ++a) {
        target[a] = sample.target.supervised[a] ? std::max(sample.target.values[a], 0.0) : 0.0;
        mass += target[a];
      }
      if (mass <= 0.0) continue;
      const double peak = *std::max_element(fwd.q.begin(), fwd.q.end());
      double z = 0.0;
      for (double v : fwd.q) z += std::exp(v - peak);
      const double log_z = peak + std::log(z);
      double l = 0.0;
      for (std::size_t a = 0; a < actions; ++a) {
        const double p = target[a] / mass;
        const double log_softmax = fwd.q[a] - log_z;
        l -= p * log_softmax;
        grad_q[a] = (std::exp(log_softmax) - p) * inv_batch;
      }
      total += l;
    }
    if (gradients) {
      const GradientList g = q_backward(net, fwd, grad_q);
      for (std::size_t p = 0; p < g.size(); ++p)
        for (std::size_t i = 0; i < g[p].size(); ++i) (*gradients)[p][i] += g[p][i];
    }
  }
  return total * inv_batch;
}

double dqn_update(QNetwork& net, std::span<const QSample> batch, QLoss loss, Rng& rng) {
  GradientList grads;
  const double value = dqn_loss_and_gradients(net, batch, loss, true, rng, &grads);
  if (!std::isfinite(value)) throw TrainingError("dqn_update: non-finite loss");
  if (!adam_step(net.parameters(), grads, net.adam)) throw TrainingError("dqn_update: non-finite gradient");
  return value;
}

}  // namespace coldstart
