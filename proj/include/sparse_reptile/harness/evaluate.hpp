#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "sparse_reptile/error.hpp"
#include "sparse_reptile/harness/metrics.hpp"
#include "sparse_reptile/loss.hpp"
#include "sparse_reptile/network.hpp"
#include "sparse_reptile/ops.hpp"
#include "sparse_reptile/reptile.hpp"
#include "sparse_reptile/rng.hpp"
#include "sparse_reptile/tasks.hpp"

namespace sparse_reptile::harness {

/// Episodic evaluation protocol: adapt a copy of the network on each
/// episode's support set, then score its query set.
struct EvalSettings {
  MetaConfig meta;  // inner_lr, loss, ways, shots, queries
  std::size_t tasks = 600;
  std::size_t inner_iterations = 50;
  std::size_t inner_batch = 5;
};

/// Episode e draws from seeds.child(e). Classification reports query
/// accuracy; regression reports negative query MSE in `accuracy`.
/// meta_iter, phase and rate are left for the caller.
inline MetricsRecord evaluate(const Network& net, const TaskSource& source, const EvalSettings& settings,
                              const SeedTree& seeds) {
  if (settings.tasks < 2) {
    throw DomainError("evaluation needs at least two episodes");
  }
  MetaConfig adapt = settings.meta;
  adapt.inner_iterations = settings.inner_iterations;
  adapt.inner_batch = settings.inner_batch;
  adapt.total_meta_iterations = 1;
  adapt.validate();

  std::vector<double> scores(settings.tasks);
  double loss_sum = 0.0;
  for (std::size_t e = 0; e < settings.tasks; ++e) {
    Rng rng = seeds.child(e).rng();
    const TaskEpisode ep = sample_episode(source, adapt.ways, adapt.shots, adapt.queries, rng);
    const Network tuned = inner_adapt(net, ep, adapt, rng);
    const Tensor out = forward(tuned, ep.query_x);
    const double l = loss(adapt.loss, out, ep.query_y);
    loss_sum += l;
    if (const auto* labels = std::get_if<Labels>(&ep.query_y)) {
      scores[e] = accuracy(out, *labels);
    } else {
      scores[e] = -l;
    }
  }
  const Interval ci = confidence_interval(scores);
  MetricsRecord r;
  r.split = source.split();
  r.accuracy = ci.mean;
  r.ci_halfwidth = ci.halfwidth;
  r.loss = loss_sum / static_cast<double>(settings.tasks);
  return r;
}

}  // namespace sparse_reptile::harness
