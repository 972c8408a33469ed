#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "sparse_reptile/error.hpp"
#include "sparse_reptile/loss.hpp"
#include "sparse_reptile/mask.hpp"
#include "sparse_reptile/network.hpp"
#include "sparse_reptile/ops.hpp"
#include "sparse_reptile/rng.hpp"
#include "sparse_reptile/tasks.hpp"

namespace sparse_reptile {

/// Reptile hyperparameters. Defaults follow the few-shot image settings:
/// inner lr 0.001, outer lr 1.0 (decayed), meta batch 5, 8 inner iterations
/// of batch 10.
struct MetaConfig {
  double inner_lr = 0.001;
  double outer_lr = 1.0;
  std::size_t meta_batch = 5;
  std::size_t inner_iterations = 8;
  std::size_t inner_batch = 10;
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t queries = 15;
  LossKind loss = LossKind::cross_entropy();
  std::size_t total_meta_iterations = 1;

  void validate() const {
    if (!(inner_lr > 0.0) || !(outer_lr > 0.0)) {
      throw DomainError("learning rates must be positive");
    }
    if (meta_batch == 0 || inner_batch == 0 || ways == 0 || shots == 0 || queries == 0) {
      throw DomainError("meta_batch, inner_batch, ways, shots and queries must be positive");
    }
    if (total_meta_iterations == 0) {
      throw DomainError("total_meta_iterations must be positive");
    }
    loss.validate();
  }
};

/// One adapted network per task of the meta-batch.
using AdaptedParams = std::vector<Network>;

namespace detail {

inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  Tensor out({rows.size(), x.cols()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = x.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

inline Targets gather_targets(const Targets& y, const std::vector<std::size_t>& rows) {
  if (const auto* labels = std::get_if<Labels>(&y)) {
    Labels out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out[i] = (*labels)[rows[i]];
    }
    return out;
  }
  return gather_rows(std::get<Tensor>(y), rows);
}

}  // namespace detail

/// SGD on the support set only. Minibatches are drawn without replacement and
/// reshuffled once the remaining support cannot fill a batch; a batch at
/// least as large as the support uses the full support in order.
/// A non-null mask multiplies every update, keeping masked coordinates fixed.
inline Network inner_adapt(const Network& net, const TaskEpisode& episode, const MetaConfig& cfg, Rng& rng,
                           const SparsityMask* mask = nullptr) {
  Network adapted = net;
  if (cfg.inner_iterations == 0) {
    return adapted;
  }
  const std::size_t n = episode.support_size();
  const bool full_batch = cfg.inner_batch >= n;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t pos = n;

  Tensor full_x;
  Targets full_y;
  if (full_batch) {
    full_x = episode.support_x;
    full_y = episode.support_y;
  }
  std::vector<std::size_t> rows(full_batch ? 0 : cfg.inner_batch);
  for (std::size_t it = 0; it < cfg.inner_iterations; ++it) {
    LossAndGradients step;
    if (full_batch) {
      step = backward(adapted, full_x, full_y, cfg.loss);
    } else {
      if (pos + cfg.inner_batch > n) {
        rng.shuffle(order);
        pos = 0;
      }
      std::copy(order.begin() + static_cast<std::ptrdiff_t>(pos),
                order.begin() + static_cast<std::ptrdiff_t>(pos + cfg.inner_batch), rows.begin());
      pos += cfg.inner_batch;
      step = backward(adapted, detail::gather_rows(episode.support_x, rows),
                      detail::gather_targets(episode.support_y, rows), cfg.loss);
    }
    detail::masked_sgd_inplace(adapted, step.grads, cfg.inner_lr, mask);
  }
  return adapted;
}

/// phi + beta * (mean(adapted) - phi), optionally masked. The differences
/// are summed in ascending task order.
inline Network outer_update(const Network& net, const AdaptedParams& adapted, double beta,
                            const SparsityMask* mask = nullptr) {
  if (adapted.empty()) {
    throw DomainError("outer update needs at least one adapted network");
  }
  for (const auto& a : adapted) {
    require_congruent(net, a);
  }
  if (mask != nullptr) {
    require_congruent(net, *mask);
  }
  const auto s = static_cast<double>(adapted.size());
  Network next = net;
  auto params = parameter_tensors(next);
  std::vector<std::vector<const Tensor*>> task_params;
  task_params.reserve(adapted.size());
  for (const auto& a : adapted) {
    task_params.push_back(parameter_tensors(a));
  }
  const auto mask_tensors = mask ? mask->tensors() : std::vector<const Tensor*>{};
  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = *params[t];
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (mask && (*mask_tensors[t])[i] == 0.0) {
        continue;
      }
      double sum = 0.0;
      for (const auto& tp : task_params) {
        sum += (*tp[t])[i] - p[i];
      }
      p[i] += beta * (sum / s);
    }
    require_finite(p, "outer_update");
  }
  return next;
}

/// Outer step size decayed linearly from beta0 toward 0.
inline double lr_schedule(double beta0, std::size_t iter, std::size_t total) {
  if (total == 0) {
    throw DomainError("lr_schedule: total iterations must be positive");
  }
  if (iter >= total) {
    throw DomainError("lr_schedule: iteration " + std::to_string(iter) + " outside [0, " +
                      std::to_string(total) + ")");
  }
  return beta0 * (1.0 - static_cast<double>(iter) / static_cast<double>(total));
}

/// Random stream for task `task` of meta-iteration `iter`.
inline Rng task_stream(const SeedTree& train_seeds, std::size_t iter, std::size_t task) {
  return train_seeds.child(iter).child(task).rng();
}

/// One Reptile meta-iteration. All tasks adapt from the same snapshot of
/// `net`; task i samples and shuffles from task_stream(seeds, iter, i).
inline Network reptile_round(const Network& net, const TaskSource& source, const MetaConfig& cfg,
                             std::size_t iter, const SeedTree& seeds, const SparsityMask* mask = nullptr) {
  cfg.validate();
  const double beta = lr_schedule(cfg.outer_lr, iter, cfg.total_meta_iterations);
  AdaptedParams adapted;
  adapted.reserve(cfg.meta_batch);
  for (std::size_t i = 0; i < cfg.meta_batch; ++i) {
    Rng rng = task_stream(seeds, iter, i);
    const TaskEpisode ep = sample_episode(source, cfg.ways, cfg.shots, cfg.queries, rng);
    adapted.push_back(inner_adapt(net, ep, cfg, rng, mask));
  }
  return outer_update(net, adapted, beta, mask);
}

}  // namespace sparse_reptile
