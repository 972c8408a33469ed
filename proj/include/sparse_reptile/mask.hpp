#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sparse_reptile/error.hpp"
#include "sparse_reptile/network.hpp"
#include "sparse_reptile/tensor.hpp"

namespace sparse_reptile {

/// Zero-one tensors congruent with a Network's weights and biases.
struct SparsityMask {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  static SparsityMask ones_like(const Network& net) {
    SparsityMask m;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      m.weights.emplace_back(net.weights[l].shape(), 1.0);
      m.biases.emplace_back(net.biases[l].shape(), 1.0);
    }
    return m;
  }

  static SparsityMask zeros_like(const Network& net) {
    SparsityMask m;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      m.weights.emplace_back(net.weights[l].shape(), 0.0);
      m.biases.emplace_back(net.biases[l].shape(), 0.0);
    }
    return m;
  }

  /// Canonical order w0, b0, w1, b1, ...
  [[nodiscard]] std::vector<const Tensor*> tensors() const {
    std::vector<const Tensor*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }

  friend bool operator==(const SparsityMask&, const SparsityMask&) = default;
};

inline void require_congruent(const Network& net, const SparsityMask& mask) {
  if (mask.weights.size() != net.weights.size() || mask.biases.size() != net.biases.size()) {
    throw DimensionError("mask has a different layer count than the network");
  }
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    require_same_shape(net.weights[l], mask.weights[l], "weight mask");
    require_same_shape(net.biases[l], mask.biases[l], "bias mask");
  }
  for (const Tensor* t : mask.tensors()) {
    for (double v : t->data()) {
      if (v != 0.0 && v != 1.0) {
        throw DomainError("mask entries must be 0 or 1");
      }
    }
  }
}

/// True when every coordinate outside the mask is exactly zero.
inline bool respects_mask(const Network& net, const SparsityMask& mask) {
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    for (std::size_t i = 0; i < net.weights[l].size(); ++i) {
      if (mask.weights[l][i] == 0.0 && net.weights[l][i] != 0.0) {
        return false;
      }
    }
    for (std::size_t i = 0; i < net.biases[l].size(); ++i) {
      if (mask.biases[l][i] == 0.0 && net.biases[l][i] != 0.0) {
        return false;
      }
    }
  }
  return true;
}

namespace detail {

/// param -= lr * grad wherever the mask is 1 (everywhere for a null mask).
inline void masked_sgd_inplace(Network& net, const GradientSet& grads, double lr,
                               const SparsityMask* mask) {
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    auto w = net.weights[l].data();
    auto gw = grads.d_weights[l].data();
    auto b = net.biases[l].data();
    auto gb = grads.d_biases[l].data();
    if (mask == nullptr) {
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] -= lr * gw[i];
      }
      for (std::size_t i = 0; i < b.size(); ++i) {
        b[i] -= lr * gb[i];
      }
    } else {
      auto mw = mask->weights[l].data();
      auto mb = mask->biases[l].data();
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (mw[i] != 0.0) {
          w[i] -= lr * gw[i];
        }
      }
      for (std::size_t i = 0; i < b.size(); ++i) {
        if (mb[i] != 0.0) {
          b[i] -= lr * gb[i];
        }
      }
    }
    require_finite(net.weights[l], "sgd update");
    require_finite(net.biases[l], "sgd update");
  }
}

}  // namespace detail

}  // namespace sparse_reptile
