#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sparse_reptile/error.hpp"
#include "sparse_reptile/mask.hpp"
#include "sparse_reptile/network.hpp"
#include "sparse_reptile/reptile.hpp"
#include "sparse_reptile/rng.hpp"
#include "sparse_reptile/tasks.hpp"

namespace sparse_reptile {

/// Per-tensor kept-entry budgets k_l.
struct SparsityPlan {
  double rate = 0.0;
  bool prune_biases = false;
  std::vector<std::size_t> weight_budgets;
  std::vector<std::size_t> bias_budgets;

  [[nodiscard]] std::size_t total_budget() const noexcept {
    return std::accumulate(weight_budgets.begin(), weight_budgets.end(), std::size_t{0}) +
           std::accumulate(bias_budgets.begin(), bias_budgets.end(), std::size_t{0});
  }
};

/// k_l = p_l - floor(rate * p_l) for prunable tensors, p_l otherwise.
inline SparsityPlan budgets_from_rate(const Network& net, double rate, bool prune_biases = false) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw DomainError("pruning rate must lie in [0, 1), got " + std::to_string(rate));
  }
  auto keep = [rate](std::size_t p) {
    return p - static_cast<std::size_t>(std::floor(rate * static_cast<double>(p)));
  };
  SparsityPlan plan{rate, prune_biases, {}, {}};
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    plan.weight_budgets.push_back(keep(net.weights[l].size()));
    const std::size_t pb = net.biases[l].size();
    plan.bias_budgets.push_back(prune_biases ? keep(pb) : pb);
  }
  return plan;
}

namespace detail {

/// Ones at the k largest |value| positions, ties toward the lower index.
inline Tensor topk_magnitude(const Tensor& t, std::size_t k) {
  Tensor mask(t.shape(), 0.0);
  if (k >= t.size()) {
    std::fill(mask.data().begin(), mask.data().end(), 1.0);
    return mask;
  }
  if (k == 0) {
    return mask;
  }
  std::vector<std::size_t> idx(t.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto before = [&t](std::size_t a, std::size_t b) {
    const double ma = std::fabs(t[a]);
    const double mb = std::fabs(t[b]);
    return ma > mb || (ma == mb && a < b);
  };
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k - 1), idx.end(), before);
  for (std::size_t i = 0; i < k; ++i) {
    mask[idx[i]] = 1.0;
  }
  return mask;
}

}  // namespace detail

inline SparsityMask topk_mask(const Network& net, const SparsityPlan& plan) {
  if (plan.weight_budgets.size() != net.weights.size() || plan.bias_budgets.size() != net.biases.size()) {
    throw DimensionError("sparsity plan does not match the network's layer count");
  }
  SparsityMask mask;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    if (plan.weight_budgets[l] > net.weights[l].size() || plan.bias_budgets[l] > net.biases[l].size()) {
      throw DomainError("sparsity budget exceeds tensor size in layer " + std::to_string(l));
    }
    mask.weights.push_back(detail::topk_magnitude(net.weights[l], plan.weight_budgets[l]));
    mask.biases.push_back(detail::topk_magnitude(net.biases[l], plan.bias_budgets[l]));
  }
  return mask;
}

inline Network apply_mask(const Network& net, const SparsityMask& mask) {
  require_congruent(net, mask);
  Network out = net;
  for (std::size_t l = 0; l < out.weights.size(); ++l) {
    for (std::size_t i = 0; i < out.weights[l].size(); ++i) {
      if (mask.weights[l][i] == 0.0) {
        out.weights[l][i] = 0.0;
      }
    }
    for (std::size_t i = 0; i < out.biases[l].size(); ++i) {
      if (mask.biases[l][i] == 0.0) {
        out.biases[l][i] = 0.0;
      }
    }
  }
  return out;
}

/// Reptile restricted to the mask: inner SGD steps and the outer move are
/// both multiplied by the mask, so pruned coordinates stay exactly zero.
inline Network masked_reptile_round(const Network& net, const SparsityMask& mask, const TaskSource& source,
                                    const MetaConfig& cfg, std::size_t iter, const SeedTree& seeds) {
  require_congruent(net, mask);
  if (!respects_mask(net, mask)) {
    throw InvariantError("masked Reptile round: network has nonzero entries outside the mask");
  }
  return reptile_round(net, source, cfg, iter, seeds, &mask);
}

enum class Phase { Pretrain, Prune, Retrain };

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::Pretrain:
      return "pretrain";
    case Phase::Prune:
      return "prune";
    case Phase::Retrain:
      return "retrain";
  }
  return "?";
}

/// Iteration counts of the pretrain / (prune, retrain) x rounds schedule.
/// rounds == 1 is dense-sparse-dense; rounds > 1 is iterative hard thresholding.
struct PruneSchedule {
  std::size_t pretrain_iters = 300;
  std::size_t prune_iters = 500;
  std::size_t retrain_iters = 200;
  std::size_t rounds = 1;

  static PruneSchedule dsd(std::size_t pretrain, std::size_t prune, std::size_t retrain) {
    return {pretrain, prune, retrain, 1};
  }

  /// prune_iters = round(ratio * interval), retrain_iters = the rest.
  static PruneSchedule iht(std::size_t pretrain, std::size_t interval, double ratio, std::size_t rounds) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
      throw DomainError("IHT ratio must lie in (0, 1)");
    }
    const auto prune = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(interval)));
    PruneSchedule s{pretrain, prune, interval - prune, rounds};
    s.validate();
    return s;
  }

  void validate() const {
    if (rounds == 0) {
      throw DomainError("prune schedule needs at least one round");
    }
  }

  [[nodiscard]] bool is_dsd() const noexcept { return rounds == 1; }
  [[nodiscard]] std::size_t interval_iters() const noexcept { return prune_iters + retrain_iters; }

  /// Fraction of each interval spent in the pruning phase.
  [[nodiscard]] double ratio() const noexcept {
    return interval_iters() == 0 ? 0.0
                                 : static_cast<double>(prune_iters) / static_cast<double>(interval_iters());
  }

  [[nodiscard]] std::size_t total_iterations() const noexcept {
    return pretrain_iters + rounds * interval_iters();
  }

  struct Position {
    Phase phase;
    std::size_t round;   // 0 during pretraining
    std::size_t offset;  // iterations already done in this phase
  };

  /// Phase of global meta-iteration `iter` (< total_iterations()).
  [[nodiscard]] Position position(std::size_t iter) const {
    if (iter < pretrain_iters) {
      return {Phase::Pretrain, 0, iter};
    }
    const std::size_t o = iter - pretrain_iters;
    const std::size_t round = o / interval_iters();
    const std::size_t within = o % interval_iters();
    if (within < prune_iters) {
      return {Phase::Prune, round + 1, within};
    }
    return {Phase::Retrain, round + 1, within - prune_iters};
  }
};

struct PhaseSpan {
  Phase phase;
  std::size_t round;
  std::size_t begin;  // first global iteration
  std::size_t end;    // one past the last
};

struct ScheduleHistory {
  std::vector<PhaseSpan> phases;
  std::vector<std::size_t> mask_recomputed_at;  // global iteration at which each mask was built
};

/// Reported after every completed meta-iteration.
struct IterationEvent {
  std::size_t iter;       // global index of the iteration just completed
  std::size_t completed;  // iter + 1
  Phase phase;
  std::size_t round;
  const Network& net;
  const SparsityMask* mask;  // active mask during pruning phases
};

/// Optional controls for partial runs and observation.
struct ScheduleControl {
  std::size_t begin = 0;                     // first global iteration to execute
  std::optional<std::size_t> end;            // stop before this iteration
  std::optional<SparsityMask> resume_mask;   // needed when `begin` is inside a pruning phase
  std::function<void(const IterationEvent&)> on_iteration;
};

struct ScheduleResult {
  Network net;
  ScheduleHistory history;
  std::optional<SparsityMask> active_mask;  // set when stopped inside a pruning phase
  std::size_t next_iter = 0;
};

/// Pretraining, then `rounds` x (fresh top-k mask from the current
/// parameters, masked fine-tuning, dense retraining). A round with
/// prune_iters == 0 has no pruning phase and builds no mask.
/// cfg.total_meta_iterations is overwritten with the schedule length so the
/// outer step size decays over the whole run.
inline ScheduleResult run_schedule(const Network& net0, const PruneSchedule& sched, const SparsityPlan& plan,
                                   const TaskSource& source, MetaConfig cfg, const SeedTree& seeds,
                                   const ScheduleControl& control = {}) {
  sched.validate();
  const std::size_t total = sched.total_iterations();
  cfg.total_meta_iterations = std::max<std::size_t>(total, 1);
  cfg.validate();
  const std::size_t end = std::min(control.end.value_or(total), total);
  if (control.begin > end) {
    throw DomainError("schedule start lies past its end");
  }

  ScheduleResult result{net0, {}, std::nullopt, control.begin};
  Network& net = result.net;
  std::optional<SparsityMask>& mask = result.active_mask;

  if (control.begin < end) {
    const auto pos = sched.position(control.begin);
    if (pos.phase == Phase::Prune && pos.offset > 0) {
      if (!control.resume_mask) {
        throw InvariantError("resuming inside a pruning phase requires the active mask");
      }
      require_congruent(net, *control.resume_mask);
      mask = control.resume_mask;
    }
  }

  auto open_span = [&](Phase phase, std::size_t round, std::size_t iter) {
    auto& spans = result.history.phases;
    if (spans.empty() || spans.back().phase != phase || spans.back().round != round) {
      spans.push_back({phase, round, iter, iter});
    }
  };

  for (std::size_t iter = control.begin; iter < end; ++iter) {
    const auto pos = sched.position(iter);
    open_span(pos.phase, pos.round, iter);
    if (pos.phase == Phase::Prune) {
      if (pos.offset == 0) {
        mask = topk_mask(net, plan);
        net = apply_mask(net, *mask);
        result.history.mask_recomputed_at.push_back(iter);
      }
      net = masked_reptile_round(net, *mask, source, cfg, iter, seeds);
    } else {
      mask.reset();
      net = reptile_round(net, source, cfg, iter, seeds);
    }
    result.history.phases.back().end = iter + 1;
    result.next_iter = iter + 1;
    if (control.on_iteration) {
      control.on_iteration(
          IterationEvent{iter, iter + 1, pos.phase, pos.round, net, mask ? &*mask : nullptr});
    }
  }
  if (result.next_iter < total) {
    const auto pos = sched.position(result.next_iter);
    if (!(pos.phase == Phase::Prune && pos.offset > 0)) {
      mask.reset();
    }
  } else {
    mask.reset();
  }
  return result;
}

/// Fraction of exactly-zero entries across the plan's prunable tensors.
inline double measured_sparsity(const Network& net, bool include_biases = false) {
  std::size_t zeros = 0;
  std::size_t total = 0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    total += net.weights[l].size();
    zeros += net.weights[l].size() - net.weights[l].count_nonzero();
    if (include_biases) {
      total += net.biases[l].size();
      zeros += net.biases[l].size() - net.biases[l].count_nonzero();
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
}

}  // namespace sparse_reptile
