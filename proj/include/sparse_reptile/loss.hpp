#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "sparse_reptile/error.hpp"
#include "sparse_reptile/tensor.hpp"

namespace sparse_reptile {

using Labels = std::vector<std::size_t>;

/// Class indices for classification losses, a congruent tensor for MSE.
using Targets = std::variant<Labels, Tensor>;

struct LossKind {
  enum class Kind { CrossEntropy, MSE, MarginRamp };

  Kind kind = Kind::CrossEntropy;
  double gamma = 1.0;  // MarginRamp only

  static LossKind cross_entropy() { return {Kind::CrossEntropy, 1.0}; }
  static LossKind mse() { return {Kind::MSE, 1.0}; }
  static LossKind margin_ramp(double gamma) {
    LossKind k{Kind::MarginRamp, gamma};
    k.validate();
    return k;
  }

  void validate() const {
    if (kind == Kind::MarginRamp && !(gamma > 0.0 && std::isfinite(gamma))) {
      throw DomainError("margin ramp gamma must be positive, got " + std::to_string(gamma));
    }
  }

  [[nodiscard]] bool is_classification() const noexcept { return kind != Kind::MSE; }

  friend bool operator==(const LossKind&, const LossKind&) = default;
};

/// First index of the maximum.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j) {
    if (v[j] > v[best]) {
      best = j;
    }
  }
  return best;
}

/// Largest competitor score: index of max_{j != y} v_j, lowest index on ties.
inline std::size_t strongest_rival(std::span<const double> v, std::size_t y) {
  std::size_t best = (y == 0) ? 1 : 0;
  for (std::size_t j = best + 1; j < v.size(); ++j) {
    if (j != y && v[j] > v[best]) {
      best = j;
    }
  }
  return best;
}

/// Margin operator max_{j != y} v_j - v_y. Negative iff y wins strictly.
inline double margin(std::span<const double> v, std::size_t y) {
  if (v.size() < 2) {
    throw DimensionError("margin needs at least two classes");
  }
  return v[strongest_rival(v, y)] - v[y];
}

/// Ramp h_gamma: 0 for m <= -gamma, 1 + m/gamma on (-gamma, 0), 1 for m >= 0.
inline double ramp(double m, double gamma) {
  if (m <= -gamma) {
    return 0.0;
  }
  if (m >= 0.0) {
    return 1.0;
  }
  return 1.0 + m / gamma;
}

struct LossValue {
  double value = 0.0;
  Tensor d_outputs;  // gradient of the mean loss w.r.t. outputs
};

namespace detail {

inline const Labels& require_labels(const Tensor& outputs, const Targets& targets) {
  const auto* labels = std::get_if<Labels>(&targets);
  if (labels == nullptr) {
    throw DimensionError("classification loss needs class-index targets");
  }
  if (outputs.rank() != 2) {
    throw DimensionError("classification outputs must be [batch x classes]");
  }
  if (labels->size() != outputs.rows()) {
    throw DimensionError("label count " + std::to_string(labels->size()) +
                         " does not match batch size " + std::to_string(outputs.rows()));
  }
  for (std::size_t y : *labels) {
    if (y >= outputs.cols()) {
      throw DomainError("label " + std::to_string(y) + " out of range [0, " +
                        std::to_string(outputs.cols()) + ")");
    }
  }
  return *labels;
}

}  // namespace detail

/// Mean loss over the batch (MSE: mean over all elements) and its gradient.
inline LossValue loss_and_grad(const LossKind& kind, const Tensor& outputs, const Targets& targets) {
  kind.validate();
  LossValue out{0.0, Tensor(outputs.shape())};
  switch (kind.kind) {
    case LossKind::Kind::MSE: {
      const auto* t = std::get_if<Tensor>(&targets);
      if (t == nullptr) {
        throw DimensionError("MSE needs tensor targets");
      }
      require_same_shape(outputs, *t, "MSE targets");
      const double n = static_cast<double>(outputs.size());
      double sum = 0.0;
      for (std::size_t i = 0; i < outputs.size(); ++i) {
        const double diff = outputs[i] - (*t)[i];
        sum += diff * diff;
        out.d_outputs[i] = 2.0 * diff / n;
      }
      out.value = sum / n;
      break;
    }
    case LossKind::Kind::CrossEntropy: {
      const Labels& labels = detail::require_labels(outputs, targets);
      const std::size_t batch = outputs.rows();
      const double inv_batch = 1.0 / static_cast<double>(batch);
      double sum = 0.0;
      for (std::size_t i = 0; i < batch; ++i) {
        const auto v = outputs.row(i);
        const double vmax = *std::max_element(v.begin(), v.end());
        double z = 0.0;
        for (double x : v) {
          z += std::exp(x - vmax);
        }
        const std::size_t y = labels[i];
        sum += (vmax - v[y]) + std::log(z);
        auto g = out.d_outputs.row(i);
        for (std::size_t j = 0; j < v.size(); ++j) {
          g[j] = std::exp(v[j] - vmax) / z * inv_batch;
        }
        g[y] -= inv_batch;
      }
      out.value = sum * inv_batch;
      break;
    }
    case LossKind::Kind::MarginRamp: {
      const Labels& labels = detail::require_labels(outputs, targets);
      const std::size_t batch = outputs.rows();
      const double inv_batch = 1.0 / static_cast<double>(batch);
      double sum = 0.0;
      for (std::size_t i = 0; i < batch; ++i) {
        const auto v = outputs.row(i);
        const std::size_t y = labels[i];
        const std::size_t rival = strongest_rival(v, y);
        const double m = v[rival] - v[y];
        sum += ramp(m, kind.gamma);
        if (m > -kind.gamma && m < 0.0) {
          auto g = out.d_outputs.row(i);
          g[rival] += inv_batch / kind.gamma;
          g[y] -= inv_batch / kind.gamma;
        }
      }
      out.value = sum * inv_batch;
      break;
    }
  }
  require_finite(out.value, "loss");
  require_finite(out.d_outputs, "loss gradient");
  return out;
}

inline double loss(const LossKind& kind, const Tensor& outputs, const Targets& targets) {
  return loss_and_grad(kind, outputs, targets).value;
}

/// Fraction of rows whose argmax equals the label.
inline double accuracy(const Tensor& outputs, const Labels& labels) {
  if (outputs.rank() != 2 || labels.size() != outputs.rows() || labels.empty()) {
    throw DimensionError("accuracy needs [batch x classes] outputs and one label per row");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    hits += (argmax(outputs.row(i)) == labels[i]);
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace sparse_reptile
