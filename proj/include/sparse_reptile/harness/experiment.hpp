#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sparse_reptile/error.hpp"
#include "sparse_reptile/harness/checkpoint.hpp"
#include "sparse_reptile/harness/config.hpp"
#include "sparse_reptile/harness/evaluate.hpp"
#include "sparse_reptile/harness/metrics.hpp"
#include "sparse_reptile/network.hpp"
#include "sparse_reptile/pruning.hpp"
#include "sparse_reptile/reptile.hpp"
#include "sparse_reptile/rng.hpp"
#include "sparse_reptile/tasks.hpp"

namespace sparse_reptile::harness {

inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kFinalCheckpoint = "final.ckpt";

/// Meta-train/meta-test sources drawn from the config's source stream.
inline SourcePair build_sources(const ExperimentConfig& cfg) {
  Rng rng = SeedTree(cfg.master_seed()).child(streams::kSource).rng();
  switch (cfg.source) {
    case SourceKind::Blobs:
      return make_blobs_source(cfg.blobs, cfg.split_fraction, rng);
    case SourceKind::Sinusoid:
      return make_sinusoid_source();
    case SourceKind::ImageDir: {
      const TaskSource all = make_imagedir_source(cfg.image_dir, cfg.meta.shots + cfg.meta.queries);
      return split_classes(all, cfg.split_fraction, rng);
    }
  }
  throw DomainError("unknown source kind");
}

inline Network build_network(const ExperimentConfig& cfg, std::size_t input_dim) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(cfg.classification() ? cfg.meta.ways : 1);
  Rng rng = SeedTree(cfg.master_seed()).child(streams::kInit).rng();
  return make_mlp(std::span<const std::size_t>(dims), rng);
}

inline EvalSettings eval_settings(const ExperimentConfig& cfg) {
  return {cfg.meta, cfg.eval_tasks, cfg.eval_inner_iterations, cfg.eval_inner_batch};
}

/// Evaluation episodes are fixed per split, so curves compare like with like.
inline SeedTree eval_seeds(const ExperimentConfig& cfg, Split split) {
  return SeedTree(cfg.master_seed()).child(streams::kEval).child(split == Split::MetaTrain ? 0 : 1);
}

struct RunOptions {
  std::optional<Checkpoint> resume;  // continue from this checkpoint's meta_iter
  std::optional<std::size_t> until;  // stop before this global meta-iteration
  bool pretrain_only = false;        // equivalent to until = pretrain_iters
  bool write_outputs = true;
};

struct ExperimentResult {
  Network net;
  ScheduleHistory history;
  std::vector<MetricsRecord> metrics;
  std::optional<SparsityMask> active_mask;
  std::size_t next_iter = 0;
};

/// Runs (part of) the pretrain/prune/retrain schedule, evaluating both
/// splits every eval_every iterations and at the end of the schedule.
/// Writes metrics.csv and final.ckpt into cfg.out_dir.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  cfg.validate();
  const std::uint64_t seed = cfg.master_seed();
  const SourcePair sources = build_sources(cfg);
  const std::size_t total = cfg.schedule.total_iterations();

  Network init = build_network(cfg, sources.train.input_dim());
  ScheduleControl control;
  if (opts.resume) {
    if (opts.resume->seed != seed) {
      throw ConfigError("seed: checkpoint was written with seed " + std::to_string(opts.resume->seed) +
                        ", run uses " + std::to_string(seed));
    }
    try {
      require_congruent(init, opts.resume->net);
    } catch (const DimensionError&) {
      throw ConfigError("hidden: checkpoint architecture does not match the config");
    }
    if (opts.resume->meta_iter > total) {
      throw ConfigError("checkpoint meta_iter lies past the end of the schedule");
    }
    init = opts.resume->net;
    control.begin = opts.resume->meta_iter;
    control.resume_mask = opts.resume->mask;
  }
  if (opts.pretrain_only) {
    control.end = cfg.schedule.pretrain_iters;
  }
  if (opts.until) {
    control.end = std::min(control.end.value_or(total), *opts.until);
  }
  if (control.end && *control.end < control.begin) {
    throw ConfigError("until: stops before the checkpoint's meta_iter");
  }

  std::optional<MetricsWriter> writer;
  const std::filesystem::path out_dir(cfg.out_dir);
  if (opts.write_outputs) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
      throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    }
    writer.emplace((out_dir / kMetricsFile).string());
  }

  const SparsityPlan plan = budgets_from_rate(init, cfg.rate, cfg.prune_biases);
  const EvalSettings es = eval_settings(cfg);
  const SeedTree train_seeds = SeedTree(seed).child(streams::kTrain);
  const SeedTree train_eval = eval_seeds(cfg, Split::MetaTrain);
  const SeedTree test_eval = eval_seeds(cfg, Split::MetaTest);

  ExperimentResult result;
  control.on_iteration = [&](const IterationEvent& ev) {
    if (ev.completed % cfg.eval_every != 0 && ev.completed != total) {
      return;
    }
    const double sparsity = measured_sparsity(ev.net, cfg.prune_biases);
    for (const auto* src : {&sources.train, &sources.test}) {
      MetricsRecord r = evaluate(ev.net, *src, es, src->split() == Split::MetaTrain ? train_eval : test_eval);
      r.meta_iter = ev.completed;
      r.phase = ev.phase;
      r.rate = sparsity;
      result.metrics.push_back(r);
      if (writer) {
        writer->write(r);
      }
    }
  };

  ScheduleResult run = run_schedule(init, cfg.schedule, plan, sources.train, cfg.meta, train_seeds, control);
  result.net = std::move(run.net);
  result.history = std::move(run.history);
  result.active_mask = std::move(run.active_mask);
  result.next_iter = run.next_iter;

  if (opts.write_outputs) {
    save_checkpoint(out_dir / kFinalCheckpoint,
                    Checkpoint{kCheckpointVersion, result.net, result.active_mask, seed, result.next_iter});
  }
  return result;
}

/// Scores a checkpoint on both splits with the config's evaluation protocol.
inline std::vector<MetricsRecord> evaluate_checkpoint(const ExperimentConfig& cfg, const Checkpoint& ck) {
  cfg.validate();
  const SourcePair sources = build_sources(cfg);
  const EvalSettings es = eval_settings(cfg);
  std::vector<MetricsRecord> out;
  const std::size_t total = cfg.schedule.total_iterations();
  const Phase phase = ck.meta_iter == 0 ? Phase::Pretrain
                                        : cfg.schedule.position(std::min<std::size_t>(ck.meta_iter, total) - 1).phase;
  for (const auto* src : {&sources.train, &sources.test}) {
    MetricsRecord r = evaluate(ck.net, *src, es, eval_seeds(cfg, src->split()));
    r.meta_iter = ck.meta_iter;
    r.phase = phase;
    r.rate = measured_sparsity(ck.net, cfg.prune_biases);
    out.push_back(r);
  }
  return out;
}

}  // namespace sparse_reptile::harness
