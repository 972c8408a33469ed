#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "sparse_reptile/error.hpp"
#include "sparse_reptile/loss.hpp"
#include "sparse_reptile/network.hpp"
#include "sparse_reptile/tensor.hpp"

namespace sparse_reptile {

namespace detail {

/// y = x W^T + b for x [batch x in], W [out x in].
inline Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t batch = x.rows();
  const std::size_t out_dim = w.rows();
  const std::size_t in_dim = w.cols();
  Tensor y({batch, out_dim});
  for (std::size_t i = 0; i < batch; ++i) {
    const double* xi = x.row(i).data();
    double* yi = y.row(i).data();
    for (std::size_t o = 0; o < out_dim; ++o) {
      const double* wo = w.row(o).data();
      double s = b[o];
      for (std::size_t j = 0; j < in_dim; ++j) {
        s += xi[j] * wo[j];
      }
      yi[o] = s;
    }
  }
  return y;
}

inline void relu_inplace(Tensor& t) {
  for (double& v : t.data()) {
    v = v > 0.0 ? v : 0.0;
  }
}

inline void check_inputs(const Network& net, const Tensor& inputs) {
  if (inputs.rank() != 2) {
    throw DimensionError("inputs must be [batch x in_dim], got " + shape_string(inputs.shape()));
  }
  if (inputs.cols() != net.input_dim()) {
    throw DimensionError("input width " + std::to_string(inputs.cols()) +
                         " does not match network in_dim " + std::to_string(net.input_dim()));
  }
}

/// Activations entering every layer plus the final output.
inline std::vector<Tensor> forward_trace(const Network& net, const Tensor& inputs) {
  check_inputs(net, inputs);
  std::vector<Tensor> acts;
  acts.reserve(net.specs.size() + 1);
  acts.push_back(inputs);
  std::size_t l = 0;
  for (const auto& spec : net.specs) {
    Tensor next = acts.back();
    if (spec.kind == LayerKind::Linear) {
      next = linear_forward(acts.back(), net.weights[l], net.biases[l]);
      ++l;
    } else {
      relu_inplace(next);
    }
    acts.push_back(std::move(next));
  }
  return acts;
}

}  // namespace detail

/// Logits/predictions for a batch of inputs.
inline Tensor forward(const Network& net, const Tensor& inputs) {
  auto acts = detail::forward_trace(net, inputs);
  require_finite(acts.back(), "forward");
  return std::move(acts.back());
}

struct LossAndGradients {
  double loss = 0.0;
  GradientSet grads;
};

/// Reverse-mode gradient of the mean loss w.r.t. every weight and bias.
/// ReLU uses derivative 0 at 0.
inline LossAndGradients backward(const Network& net, const Tensor& inputs, const Targets& targets,
                                 const LossKind& kind) {
  const auto acts = detail::forward_trace(net, inputs);
  require_finite(acts.back(), "forward");
  LossValue lv = loss_and_grad(kind, acts.back(), targets);

  LossAndGradients out{lv.value, GradientSet::zeros_like(net)};
  Tensor delta = std::move(lv.d_outputs);
  std::size_t l = net.weights.size();
  for (std::size_t s = net.specs.size(); s-- > 0;) {
    const Tensor& in = acts[s];
    if (net.specs[s].kind == LayerKind::ReLU) {
      for (std::size_t i = 0; i < delta.size(); ++i) {
        if (!(in[i] > 0.0)) {
          delta[i] = 0.0;
        }
      }
      continue;
    }
    --l;
    const Tensor& w = net.weights[l];
    Tensor& dw = out.grads.d_weights[l];
    Tensor& db = out.grads.d_biases[l];
    const std::size_t batch = in.rows();
    const std::size_t out_dim = w.rows();
    const std::size_t in_dim = w.cols();
    const bool need_input_grad = (s > 0);
    Tensor dx = need_input_grad ? Tensor({batch, in_dim}) : Tensor();
    for (std::size_t i = 0; i < batch; ++i) {
      const double* xi = in.row(i).data();
      const double* gi = delta.row(i).data();
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double g = gi[o];
        if (g == 0.0) {
          continue;
        }
        db[o] += g;
        double* dwo = dw.row(o).data();
        for (std::size_t j = 0; j < in_dim; ++j) {
          dwo[j] += g * xi[j];
        }
        if (need_input_grad) {
          const double* wo = w.row(o).data();
          double* dxi = dx.row(i).data();
          for (std::size_t j = 0; j < in_dim; ++j) {
            dxi[j] += g * wo[j];
          }
        }
      }
    }
    if (need_input_grad) {
      delta = std::move(dx);
    }
  }
  for (std::size_t i = 0; i < out.grads.d_weights.size(); ++i) {
    require_finite(out.grads.d_weights[i], "backward");
    require_finite(out.grads.d_biases[i], "backward");
  }
  return out;
}

/// Central-difference gradient estimate; the test oracle for backward().
inline GradientSet finite_diff_grad(const Network& net, const Tensor& inputs, const Targets& targets,
                                    const LossKind& kind, double step) {
  if (!(step > 0.0)) {
    throw DomainError("finite-difference step must be positive");
  }
  Network probe = net;
  GradientSet g = GradientSet::zeros_like(net);
  auto params = parameter_tensors(probe);
  std::vector<Tensor*> grads;
  for (std::size_t l = 0; l < g.d_weights.size(); ++l) {
    grads.push_back(&g.d_weights[l]);
    grads.push_back(&g.d_biases[l]);
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = *params[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + step;
      const double up = loss(kind, forward(probe, inputs), targets);
      p[i] = saved - step;
      const double down = loss(kind, forward(probe, inputs), targets);
      p[i] = saved;
      (*grads[t])[i] = (up - down) / (2.0 * step);
    }
  }
  return g;
}

/// param - lr * grad for every parameter.
inline Network sgd_step(const Network& net, const GradientSet& grads, double lr) {
  if (!(lr > 0.0)) {
    throw DomainError("learning rate must be positive");
  }
  require_congruent(net, grads);
  Network next = net;
  for (std::size_t l = 0; l < next.weights.size(); ++l) {
    auto w = next.weights[l].data();
    auto gw = grads.d_weights[l].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] -= lr * gw[i];
    }
    auto b = next.biases[l].data();
    auto gb = grads.d_biases[l].data();
    for (std::size_t i = 0; i < b.size(); ++i) {
      b[i] -= lr * gb[i];
    }
    require_finite(next.weights[l], "sgd_step");
    require_finite(next.biases[l], "sgd_step");
  }
  return next;
}

}  // namespace sparse_reptile
