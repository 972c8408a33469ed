#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sparse_reptile/error.hpp"
#include "sparse_reptile/rng.hpp"
#include "sparse_reptile/tensor.hpp"

namespace sparse_reptile {

enum class LayerKind : std::uint8_t { Linear = 0, ReLU = 1 };

struct LayerSpec {
  LayerKind kind = LayerKind::Linear;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;

  static LayerSpec linear(std::size_t in, std::size_t out) { return {LayerKind::Linear, in, out}; }
  static LayerSpec relu() { return {LayerKind::ReLU, 0, 0}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Feed-forward stack of Linear and ReLU layers. weights[l] is [out, in] and
/// biases[l] is [out] for the l-th Linear spec.
struct Network {
  std::vector<LayerSpec> specs;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  /// Zero-initialized parameters for the given layer stack.
  static Network zeros(std::vector<LayerSpec> layer_specs) {
    Network net;
    net.specs = std::move(layer_specs);
    for (const auto& s : net.specs) {
      if (s.kind == LayerKind::Linear) {
        net.weights.emplace_back(Shape{s.out_dim, s.in_dim});
        net.biases.emplace_back(Shape{s.out_dim});
      }
    }
    net.validate();
    return net;
  }

  [[nodiscard]] std::size_t layer_count() const noexcept { return weights.size(); }

  [[nodiscard]] std::size_t parameter_count() const noexcept {
    std::size_t p = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      p += weights[l].size() + biases[l].size();
    }
    return p;
  }

  [[nodiscard]] std::size_t input_dim() const {
    for (const auto& s : specs) {
      if (s.kind == LayerKind::Linear) {
        return s.in_dim;
      }
    }
    throw DimensionError("network has no Linear layer");
  }

  [[nodiscard]] std::size_t output_dim() const {
    for (auto it = specs.rbegin(); it != specs.rend(); ++it) {
      if (it->kind == LayerKind::Linear) {
        return it->out_dim;
      }
    }
    throw DimensionError("network has no Linear layer");
  }

  void validate() const {
    std::size_t linear = 0;
    std::size_t prev_out = 0;
    for (const auto& s : specs) {
      if (s.kind != LayerKind::Linear) {
        continue;
      }
      if (s.in_dim == 0 || s.out_dim == 0) {
        throw DimensionError("Linear layer dimensions must be positive");
      }
      if (linear > 0 && s.in_dim != prev_out) {
        throw DimensionError("Linear layer " + std::to_string(linear) + " expects in_dim " +
                             std::to_string(s.in_dim) + " but previous out_dim is " +
                             std::to_string(prev_out));
      }
      if (linear >= weights.size() || linear >= biases.size()) {
        throw DimensionError("missing parameters for Linear layer " + std::to_string(linear));
      }
      if (weights[linear].shape() != Shape{s.out_dim, s.in_dim} ||
          biases[linear].shape() != Shape{s.out_dim}) {
        throw DimensionError("parameter shapes of Linear layer " + std::to_string(linear) +
                             " do not match its spec");
      }
      prev_out = s.out_dim;
      ++linear;
    }
    if (linear == 0) {
      throw DimensionError("network has no Linear layer");
    }
    if (linear != weights.size() || linear != biases.size()) {
      throw DimensionError("parameter tensor count does not match Linear layer count");
    }
  }

  friend bool operator==(const Network&, const Network&) = default;
};

/// Parameter tensors in canonical order w0, b0, w1, b1, ...
inline std::vector<const Tensor*> parameter_tensors(const Network& net) {
  std::vector<const Tensor*> out;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    out.push_back(&net.weights[l]);
    out.push_back(&net.biases[l]);
  }
  return out;
}

inline std::vector<Tensor*> parameter_tensors(Network& net) {
  std::vector<Tensor*> out;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    out.push_back(&net.weights[l]);
    out.push_back(&net.biases[l]);
  }
  return out;
}

inline bool bitwise_equal(const Network& a, const Network& b) {
  if (a.specs != b.specs || a.weights.size() != b.weights.size()) {
    return false;
  }
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    if (!bitwise_equal(a.weights[l], b.weights[l]) || !bitwise_equal(a.biases[l], b.biases[l])) {
      return false;
    }
  }
  return true;
}

/// Gradients congruent with a Network's parameters.
struct GradientSet {
  std::vector<Tensor> d_weights;
  std::vector<Tensor> d_biases;

  static GradientSet zeros_like(const Network& net) {
    GradientSet g;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      g.d_weights.emplace_back(net.weights[l].shape());
      g.d_biases.emplace_back(net.biases[l].shape());
    }
    return g;
  }
};

inline void require_congruent(const Network& net, const GradientSet& g) {
  if (g.d_weights.size() != net.weights.size() || g.d_biases.size() != net.biases.size()) {
    throw DimensionError("gradient set has a different layer count than the network");
  }
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    require_same_shape(net.weights[l], g.d_weights[l], "weight gradient");
    require_same_shape(net.biases[l], g.d_biases[l], "bias gradient");
  }
}

inline void require_congruent(const Network& a, const Network& b) {
  if (a.specs != b.specs) {
    throw DimensionError("networks have different layer specs");
  }
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    require_same_shape(a.weights[l], b.weights[l], "weight");
    require_same_shape(a.biases[l], b.biases[l], "bias");
  }
}

/// Linear layers with ReLU between them (none after the last).
inline std::vector<LayerSpec> mlp_specs(std::span<const std::size_t> dims) {
  if (dims.size() < 2) {
    throw DimensionError("an MLP needs at least input and output dimensions");
  }
  std::vector<LayerSpec> specs;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (i > 0) {
      specs.push_back(LayerSpec::relu());
    }
    specs.push_back(LayerSpec::linear(dims[i], dims[i + 1]));
  }
  return specs;
}

/// Weights uniform in +-sqrt(6 / (in + out)), biases zero.
inline Network initialize(std::vector<LayerSpec> specs, Rng& rng) {
  Network net = Network::zeros(std::move(specs));
  for (auto& w : net.weights) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.shape()[0] + w.shape()[1]));
    for (double& v : w.data()) {
      v = rng.uniform(-limit, limit);
    }
  }
  return net;
}

inline Network make_mlp(std::span<const std::size_t> dims, Rng& rng) {
  return initialize(mlp_specs(dims), rng);
}

inline Network make_mlp(std::initializer_list<std::size_t> dims, Rng& rng) {
  const std::vector<std::size_t> v(dims);
  return make_mlp(std::span<const std::size_t>(v), rng);
}

}  // namespace sparse_reptile
