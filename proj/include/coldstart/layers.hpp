#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "coldstart/numerics.hpp"

namespace coldstart {

enum class Activation { relu, tanh, linear };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

// Fully connected layer y = act(W·x + b), W is out × in.
struct DenseLayer {
  Matrix weights;
  Vector bias;
  Activation activation = Activation::linear;

  std::size_t in_dim() const { return weights.cols(); }
  std::size_t out_dim() const { return weights.rows(); }

  // Glorot-uniform weights, zero bias.
  static DenseLayer glorot(std::size_t in, std::size_t out, Activation act, Rng& rng);

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct DenseCache {
  Vector input;           // as given, before dropout
  Vector input_scale;     // 0 for dropped units, 1/keep for kept ones; empty when no dropout
  Vector pre_activation;
  Vector output;
};

struct DenseGradients {
  Vector input;
  Matrix weights;
  Vector bias;
};

// Dropout (inverted) acts on the layer input and only when training.
DenseCache dense_forward(const DenseLayer& layer, std::span<const double> input, double dropout_rate,
                         bool training, Rng& rng);
DenseGradients dense_backward(const DenseLayer& layer, const DenseCache& cache,
                              std::span<const double> output_gradient);

using ParameterList = std::vector<std::span<double>>;
using GradientList = std::vector<Vector>;

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step_count = 0;
  std::vector<Vector> first_moment;
  std::vector<Vector> second_moment;

  static AdamState for_parameters(const ParameterList& params, double learning_rate);

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// Bias-corrected Adam update. Returns false and leaves everything untouched
// when any gradient entry is non-finite.
bool adam_step(const ParameterList& params, const GradientList& grads, AdamState& state);

}  // namespace coldstart
