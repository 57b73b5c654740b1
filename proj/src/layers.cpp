#include "coldstart/layers.hpp"

#include <cmath>
#include <string>

#include "coldstart/error.hpp"

namespace coldstart {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::linear: return "linear";
  }
  return "linear";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "linear") return Activation::linear;
  throw NumericsError("unknown activation '" + std::string(name) + "'");
}

DenseLayer DenseLayer::glorot(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  DenseLayer layer;
  layer.weights = Matrix(out, in);
  layer.bias.assign(out, 0.0);
  layer.activation = act;
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : layer.weights.values()) w = (2.0 * uniform01(rng) - 1.0) * limit;
  return layer;
}

DenseCache dense_forward(const DenseLayer& layer, std::span<const double> input, double dropout_rate,
                         bool training, Rng& rng) {
  if (input.size() != layer.in_dim()) {
    throw NumericsError("dense_forward: input length " + std::to_string(input.size()) +
                        " != layer input dimension " + std::to_string(layer.in_dim()));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw NumericsError("dense_forward: dropout rate must lie in [0, 1)");
  }
  DenseCache cache;
  cache.input.assign(input.begin(), input.end());

  Vector effective = cache.input;
  if (training && dropout_rate > 0.0) {
    const double keep = 1.0 - dropout_rate;
    cache.input_scale.resize(input.size());
    for (std::size_t i = 0; i < input.size(); ++i) {
      cache.input_scale[i] = uniform01(rng) < keep ? 1.0 / keep : 0.0;
      effective[i] *= cache.input_scale[i];
    }
  }

  cache.pre_activation = matvec(layer.weights, effective);
  cache.output.resize(cache.pre_activation.size());
  for (std::size_t i = 0; i < cache.pre_activation.size(); ++i) {
    const double z = cache.pre_activation[i] + layer.bias[i];
    cache.pre_activation[i] = z;
    switch (layer.activation) {
      case Activation::relu: cache.output[i] = z > 0.0 ? z : 0.0; break;
      case Activation::tanh: cache.output[i] = std::tanh(z); break;
      case Activation::linear: cache.output[i] = z; break;
    }
  }
  return cache;
}

DenseGradients dense_backward(const DenseLayer& layer, const DenseCache& cache,
                              std::span<const double> output_gradient) {
  const std::size_t out = layer.out_dim();
  const std::size_t in = layer.in_dim();
  if (output_gradient.size() != out || cache.pre_activation.size() != out || cache.input.size() != in) {
    throw NumericsError("dense_backward: gradient or cache shape does not match layer");
  }

  Vector delta(out);
  for (std::size_t i = 0; i < out; ++i) {
    double d = 1.0;
    switch (layer.activation) {
      case Activation::relu: d = cache.pre_activation[i] > 0.0 ? 1.0 : 0.0; break;
      case Activation::tanh: d = 1.0 - cache.output[i] * cache.output[i]; break;
      case Activation::linear: break;
    }
    delta[i] = output_gradient[i] * d;
  }

  const bool dropped = !cache.input_scale.empty();
  DenseGradients g;
  g.bias = delta;
  g.weights = Matrix(out, in);
  for (std::size_t r = 0; r < out; ++r) {
    const double dr = delta[r];
    if (dr == 0.0) continue;
    auto row = g.weights.row(r);
    for (std::size_t c = 0; c < in; ++c) {
      const double x = dropped ? cache.input[c] * cache.input_scale[c] : cache.input[c];
      row[c] = dr * x;
    }
  }
  g.input = matvec_transposed(layer.weights, delta);
  if (dropped)
    for (std::size_t c = 0; c < in; ++c) g.input[c] *= cache.input_scale[c];
  return g;
}

AdamState AdamState::for_parameters(const ParameterList& params, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.size(), 0.0);
    s.second_moment.emplace_back(p.size(), 0.0);
  }
  return s;
}

bool adam_step(const ParameterList& params, const GradientList& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw NumericsError("adam_step: parameter/gradient/state group count mismatch");
  }
  for (std::size_t g = 0; g < params.size(); ++g) {
    if (params[g].size() != grads[g].size() || params[g].size() != state.first_moment[g].size()) {
      throw NumericsError("adam_step: shape mismatch in parameter group " + std::to_string(g));
    }
    for (double v : grads[g])
      if (!std::isfinite(v)) return false;
  }

  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t g = 0; g < params.size(); ++g) {
    auto p = params[g];
    const Vector& grad = grads[g];
    Vector& m = state.first_moment[g];
    Vector& v = state.second_moment[g];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
  return true;
}

}  // namespace coldstart
