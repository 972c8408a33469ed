// sparse-reptile: command-line driver for Reptile with iterative pruning.
//
//   sparse-reptile pretrain --config FILE [--seed N] [--out DIR]
//   sparse-reptile run      --config FILE [--seed N] [--out DIR] [--resume CKPT] [--until ITER]
//   sparse-reptile eval     --config FILE --checkpoint CKPT [--seed N] [--out DIR]
//   sparse-reptile bound    --B .. --G .. --H .. --R .. --eta .. --p .. --k .. --M .. --delta .. [--margin-risk ..]
//   sparse-reptile gapcurve --metrics CSV [--out FILE]

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sparse_reptile/sparse_reptile.hpp"

namespace sr = sparse_reptile;
namespace harness = sparse_reptile::harness;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "experiment config (key = value lines)")->required();
  cmd->add_option("--seed", flags.seed, "master seed; overrides the config");
  cmd->add_option("--out", flags.out, "output directory; overrides out_dir");
}

harness::ExperimentConfig load(const CommonFlags& flags) {
  auto cfg = harness::load_config(flags.config);
  if (flags.seed) {
    cfg.seed = *flags.seed;
  }
  if (flags.out) {
    cfg.out_dir = *flags.out;
  }
  cfg.validate();
  return cfg;
}

void print_summary(const harness::ExperimentResult& r, const harness::ExperimentConfig& cfg) {
  std::printf("completed meta-iterations: %zu / %zu\n", r.next_iter, cfg.schedule.total_iterations());
  std::printf("mask recomputations: %zu\n", r.history.mask_recomputed_at.size());
  if (!r.metrics.empty()) {
    for (std::size_t i = r.metrics.size() >= 2 ? r.metrics.size() - 2 : 0; i < r.metrics.size(); ++i) {
      std::printf("%s\n", harness::format_metrics_row(r.metrics[i]).c_str());
    }
  }
  std::printf("outputs: %s/%s, %s/%s\n", cfg.out_dir.c_str(), harness::kMetricsFile, cfg.out_dir.c_str(),
              harness::kFinalCheckpoint);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse Reptile: meta-learning with iterative network pruning"};
  app.require_subcommand(1);

  CommonFlags pre_flags;
  auto* pretrain = app.add_subcommand("pretrain", "run only the dense pretraining phase");
  add_common(pretrain, pre_flags);

  CommonFlags run_flags;
  std::optional<std::string> resume;
  std::optional<std::size_t> until;
  auto* run = app.add_subcommand("run", "run the pretrain / prune / retrain schedule");
  add_common(run, run_flags);
  run->add_option("--resume", resume, "continue from a checkpoint");
  run->add_option("--until", until, "stop before this global meta-iteration");

  CommonFlags eval_flags;
  std::string eval_ckpt;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on both meta-splits");
  add_common(eval, eval_flags);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate")->required();

  sr::bounds::BoundInputs bin;
  std::optional<double> margin_risk;
  auto* bound = app.add_subcommand("bound", "print dense, sparse and margin generalization-gap bounds");
  bound->add_option("--B", bin.B, "loss upper bound")->required();
  bound->add_option("--G", bin.G, "Lipschitz constant")->required();
  bound->add_option("--H", bin.H, "smoothness constant")->required();
  bound->add_option("--R", bin.R, "parameter domain radius")->required();
  bound->add_option("--eta", bin.eta, "inner learning rate")->required();
  bound->add_option("--p", bin.p, "total parameter count")->required();
  bound->add_option("--k", bin.k, "total kept parameters")->required();
  bound->add_option("--M", bin.M, "number of training tasks")->required();
  bound->add_option("--delta", bin.delta, "failure probability")->required();
  bound->add_option("--margin-risk", margin_risk, "empirical margin risk for the margin bound");

  std::string gap_in;
  std::optional<std::string> gap_out;
  auto* gapcurve = app.add_subcommand("gapcurve", "train minus test accuracy per evaluated iteration");
  gapcurve->add_option("--metrics", gap_in, "metrics CSV written by run")->required();
  gapcurve->add_option("--out", gap_out, "write the gap table here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pretrain) {
      const auto cfg = load(pre_flags);
      harness::RunOptions opts;
      opts.pretrain_only = true;
      print_summary(harness::run_experiment(cfg, opts), cfg);
    } else if (*run) {
      const auto cfg = load(run_flags);
      harness::RunOptions opts;
      if (resume) {
        opts.resume = harness::load_checkpoint(*resume);
      }
      opts.until = until;
      print_summary(harness::run_experiment(cfg, opts), cfg);
    } else if (*eval) {
      const auto cfg = load(eval_flags);
      const auto rows = harness::evaluate_checkpoint(cfg, harness::load_checkpoint(eval_ckpt));
      std::string text = std::string(harness::kMetricsHeader) + "\n";
      for (const auto& r : rows) {
        text += harness::format_metrics_row(r) + "\n";
      }
      std::cout << text;
      if (eval_flags.out) {
        std::filesystem::create_directories(*eval_flags.out);
        std::ofstream(std::filesystem::path(*eval_flags.out) / "eval.csv", std::ios::binary) << text;
      }
    } else if (*bound) {
      bin.validate();
      std::printf("task_lipschitz %.10g\n", sr::bounds::task_lipschitz(bin.G, bin.eta, bin.H));
      std::printf("dense_gap %.10g\n", sr::bounds::dense_gap_bound(bin));
      std::printf("sparse_gap %.10g\n", sr::bounds::sparse_gap_bound(bin));
      std::printf("support_union_term %.10g\n", sr::bounds::sparse_union_term(bin));
      if (margin_risk) {
        std::printf("margin_risk_bound %.10g\n", sr::bounds::margin_risk_bound(bin, *margin_risk));
      }
    } else if (*gapcurve) {
      const auto text = harness::format_gap_curve(harness::gap_curve(harness::read_metrics_csv(gap_in)));
      if (gap_out) {
        std::ofstream out(*gap_out, std::ios::binary);
        if (!out) {
          throw sr::IoError("cannot write " + *gap_out);
        }
        out << text;
      } else {
        std::cout << text;
      }
    }
  } catch (const sr::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
