#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "sparse_reptile/sparse_reptile.hpp"
#include "test_helpers.hpp"

using namespace sparse_reptile;
using namespace sparse_reptile::harness;
namespace ts = sparse_reptile::test_support;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MetricsRecord row(std::size_t iter, Split split, double acc) {
  MetricsRecord r;
  r.meta_iter = iter;
  r.split = split;
  r.accuracy = acc;
  return r;
}

const char* kTinyConfig = R"(# tiny blobs run
seed = 17
source = blobs
classes = 8
dim = 4
noise_sigma = 1.5
hidden = 8
ways = 3
shots = 1
queries = 2
inner_lr = 0.02
meta_batch = 2
inner_iterations = 3
inner_batch = 2
pretrain_iters = 4
prune_iters = 3
retrain_iters = 3
rate = 0.5
eval_tasks = 4
eval_inner_iterations = 2
eval_inner_batch = 2
eval_every = 2
)";

ExperimentConfig tiny_config(const std::string& name) {
  auto cfg = parse_config(kTinyConfig);
  cfg.out_dir = ts::scratch_dir(name).string();
  return cfg;
}

}  // namespace

TEST(ConfidenceInterval, Examples) {
  const std::vector<double> two{0, 1};
  const auto ci = confidence_interval(two);
  EXPECT_DOUBLE_EQ(ci.mean, 0.5);
  EXPECT_NEAR(ci.halfwidth, 0.98, 1e-12);
  const std::vector<double> flat(4, 0.5);
  EXPECT_EQ(confidence_interval(flat).halfwidth, 0.0);
  EXPECT_THROW((void)confidence_interval(std::vector<double>{1.0}), DomainError);
}

TEST(ConfidenceInterval, ClosedForm) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> v(2 + rng.below(50));
    for (double& x : v) {
      x = rng.uniform(-3, 3);
    }
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double n = static_cast<double>(v.size());
    const auto ci = confidence_interval(v);
    EXPECT_NEAR(ci.mean, mean, 1e-12);
    EXPECT_NEAR(ci.halfwidth, 1.96 * std::sqrt(ss / (n - 1)) / std::sqrt(n), 1e-12);
  }
}

TEST(ConfidenceInterval, UnitDeviationLargeSample) {
  // Alternating +-1 around 0 has sample deviation sqrt(n / (n - 1)).
  std::vector<double> v(10000);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = (i % 2 == 0) ? 1.0 : -1.0;
  }
  EXPECT_NEAR(confidence_interval(v).halfwidth, 0.0196 * std::sqrt(10000.0 / 9999.0), 1e-12);
}

TEST(GapCurve, Examples) {
  const auto equal = gap_curve({row(0, Split::MetaTrain, 0.5), row(0, Split::MetaTest, 0.5)});
  ASSERT_EQ(equal.size(), 1u);
  EXPECT_EQ(equal[0].gap, 0.0);

  const auto g = gap_curve({row(50, Split::MetaTest, 0.5), row(50, Split::MetaTrain, 0.7),
                            row(100, Split::MetaTrain, 0.9), row(100, Split::MetaTest, 0.6)});
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[0].meta_iter, 50u);
  EXPECT_NEAR(g[0].gap, 0.2, 1e-12);
  EXPECT_EQ(g[1].meta_iter, 100u);
  EXPECT_NEAR(g[1].gap, 0.3, 1e-12);
  EXPECT_EQ(format_gap_curve(g), "meta_iter,gap\n50,0.2\n100,0.3\n");
}

TEST(GapCurve, Unpaired) {
  EXPECT_THROW((void)gap_curve({row(0, Split::MetaTrain, 0.5)}), FormatError);
  EXPECT_THROW((void)gap_curve({row(0, Split::MetaTrain, 0.5), row(0, Split::MetaTrain, 0.5),
                                row(0, Split::MetaTest, 0.5)}),
               FormatError);
}

TEST(MetricsCsv, RoundTrip) {
  MetricsRecord r = row(150, Split::MetaTest, 0.6123456789);
  r.phase = Phase::Retrain;
  r.ci_halfwidth = 0.0125;
  r.loss = 1.25;
  r.rate = 0.5;
  EXPECT_EQ(format_metrics_row(r), "150,retrain,test,0.6123456789,0.0125,1.25,0.5");
  std::istringstream in(std::string(kMetricsHeader) + "\n" + format_metrics_row(r) + "\n");
  const auto rows = parse_metrics_csv(in);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].meta_iter, 150u);
  EXPECT_EQ(rows[0].phase, Phase::Retrain);
  EXPECT_EQ(rows[0].split, Split::MetaTest);
  EXPECT_EQ(rows[0].accuracy, 0.6123456789);

  std::istringstream bad_header("iter,acc\n");
  EXPECT_THROW((void)parse_metrics_csv(bad_header), FormatError);
  std::istringstream bad_row(std::string(kMetricsHeader) + "\n1,prune,train,x,0,0,0\n");
  EXPECT_THROW((void)parse_metrics_csv(bad_row), FormatError);
}

TEST(Checkpoint, RoundTripBitwise) {
  Rng rng(2);
  Checkpoint ck;
  ck.net = ts::random_network(rng, {5, 7, 3});
  ck.net.weights[0][0] = -0.0;
  ck.net.weights[1][2] = std::nextafter(1.0, 2.0);
  ck.mask = topk_mask(ck.net, budgets_from_rate(ck.net, 0.3));
  ck.seed = 0xdeadbeefcafef00dULL;
  ck.meta_iter = 1234;
  const auto dir = ts::scratch_dir("ckpt");
  save_checkpoint(dir / "a.ckpt", ck);
  const Checkpoint back = load_checkpoint(dir / "a.ckpt");
  EXPECT_TRUE(bitwise_equal(back.net, ck.net));
  ASSERT_TRUE(back.mask.has_value());
  EXPECT_EQ(*back.mask, *ck.mask);
  EXPECT_EQ(back.seed, ck.seed);
  EXPECT_EQ(back.meta_iter, ck.meta_iter);

  ck.mask.reset();
  EXPECT_FALSE(decode_checkpoint(encode_checkpoint(ck)).mask.has_value());
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, HeaderLayout) {
  Checkpoint ck;
  ck.net = Network::zeros({LayerSpec::linear(2, 1)});
  const auto bytes = encode_checkpoint(ck);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SMLR");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
  // magic, version, spec count, one spec, tensor count, w (ndim + 2 dims + 2 f64),
  // b (ndim + 1 dim + 1 f64), mask flag, seed, meta_iter
  EXPECT_EQ(bytes.size(), 4u + 4 + 4 + 9 + 4 + (4 + 8 + 16) + (4 + 4 + 8) + 1 + 8 + 8);
}

TEST(Checkpoint, DistinctErrors) {
  Rng rng(3);
  Checkpoint ck;
  ck.net = ts::random_network(rng, {3, 4, 2});
  const auto good = encode_checkpoint(ck);
  auto kind_of = [](std::vector<std::uint8_t> bytes) {
    try {
      (void)decode_checkpoint(bytes);
    } catch (const FormatError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "decoded without error";
    return FormatError::Kind::Malformed;
  };
  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(kind_of(bad_magic), FormatError::Kind::BadMagic);
  auto bad_version = good;
  bad_version[4] = 2;
  EXPECT_EQ(kind_of(bad_version), FormatError::Kind::VersionMismatch);
  auto truncated = good;
  truncated.resize(good.size() / 2);
  EXPECT_EQ(kind_of(truncated), FormatError::Kind::Truncated);
  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(kind_of(trailing), FormatError::Kind::Malformed);
  EXPECT_THROW((void)load_checkpoint("/nonexistent/dir/x.ckpt"), IoError);
}

TEST(Config, ParsesAndDerives) {
  const auto cfg = parse_config(kTinyConfig);
  EXPECT_EQ(cfg.master_seed(), 17u);
  EXPECT_EQ(cfg.hidden, (std::vector<std::size_t>{8}));
  EXPECT_EQ(cfg.meta.loss.kind, LossKind::Kind::CrossEntropy);
  EXPECT_EQ(cfg.metric, Metric::Accuracy);
  EXPECT_EQ(cfg.schedule.total_iterations(), 10u);
  EXPECT_NO_THROW(cfg.validate());

  const auto iht = parse_config("seed = 1\npretrain_iters = 10\ninterval_iters = 200\nratio = 0.75\nrounds = 4\n");
  EXPECT_EQ(iht.schedule.prune_iters, 150u);
  EXPECT_EQ(iht.schedule.retrain_iters, 50u);
  EXPECT_EQ(iht.schedule.rounds, 4u);

  const auto sine = parse_config("seed = 2\nsource = sinusoid\nhidden = 40, 40\n");
  EXPECT_EQ(sine.meta.loss.kind, LossKind::Kind::MSE);
  EXPECT_EQ(sine.metric, Metric::Mse);
  EXPECT_EQ(sine.meta.ways, 1u);
  EXPECT_EQ(sine.hidden, (std::vector<std::size_t>{40, 40}));
  EXPECT_NO_THROW(sine.validate());

  const auto ramp = parse_config("seed = 3\nloss = margin_ramp\nmargin_gamma = 2.5\n");
  EXPECT_EQ(ramp.meta.loss.gamma, 2.5);
}

TEST(Config, ErrorsNameTheKey) {
  auto message = [](const std::string& text) -> std::string {
    try {
      parse_config(text).validate();
    } catch (const ConfigError& e) {
      return e.what();
    }
    return "";
  };
  EXPECT_NE(message("seed = 1\nlearning_rate = 0.1\n").find("learning_rate"), std::string::npos);
  EXPECT_NE(message("source = blobs\n").find("seed"), std::string::npos);
  EXPECT_NE(message("seed = 1\nseed = 2\n").find("seed"), std::string::npos);
  EXPECT_NE(message("seed = x\n").find("seed"), std::string::npos);
  EXPECT_NE(message("seed = 1\nrate = 1.5\n").find("rate"), std::string::npos);
  EXPECT_NE(message("seed = 1\nsource = sinusoid\nloss = cross_entropy\n").find("loss"), std::string::npos);
  EXPECT_NE(message("seed = 1\nsource = imagedir\nimage_dir = /no/such/dir\n").find("image_dir"),
            std::string::npos);
  EXPECT_NE(message("seed = 1\nratio = 0.5\n").find("interval_iters"), std::string::npos);
  EXPECT_NE(message("seed = 1\nways = 50\n").find("ways"), std::string::npos);
  EXPECT_NE(message("seed = 1\nno equals sign\n").find("line 2"), std::string::npos);
  EXPECT_THROW((void)load_config("/no/such/config.cfg"), IoError);
}

TEST(Evaluate, DoesNotMutateAndIsDeterministic) {
  Rng rng(4);
  const auto src = TaskSource::blobs({10, 4, 1.0}, rng);
  const Network net = make_mlp({4, 6, 3}, rng);
  const Network copy = net;
  EvalSettings es;
  es.meta.ways = 3;
  es.meta.shots = 2;
  es.meta.queries = 3;
  es.meta.inner_lr = 0.05;
  es.tasks = 20;
  es.inner_iterations = 10;
  es.inner_batch = 3;
  const auto a = evaluate(net, src, es, SeedTree(5));
  EXPECT_TRUE(bitwise_equal(net, copy));
  const auto b = evaluate(net, src, es, SeedTree(5));
  EXPECT_EQ(a.accuracy, b.accuracy);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_GE(a.ci_halfwidth, 0.0);
  EXPECT_GE(a.accuracy, 0.0);
  EXPECT_LE(a.accuracy, 1.0);
  es.tasks = 1;
  EXPECT_THROW((void)evaluate(net, src, es, SeedTree(5)), DomainError);
}

TEST(Evaluate, ChanceLevelWithoutAdaptation) {
  Rng rng(6);
  const auto src = TaskSource::blobs({20, 8, 1.0}, rng);
  const Network net = make_mlp({8, 16, 5}, rng);
  EvalSettings es;
  es.meta.ways = 5;
  es.meta.shots = 1;
  es.meta.queries = 4;
  es.tasks = 3000;
  es.inner_iterations = 0;
  const auto r = evaluate(net, src, es, SeedTree(7));
  EXPECT_NEAR(r.accuracy, 0.2, 3 * r.ci_halfwidth);
}

TEST(Evaluate, SeparableBlobsAreSolved) {
  Rng rng(8);
  const auto src = TaskSource::blobs({20, 16, 1e-6}, rng);
  const Network net = make_mlp({16, 5}, rng);
  EvalSettings es;
  es.meta.ways = 5;
  es.meta.shots = 1;
  es.meta.queries = 5;
  es.meta.inner_lr = 0.05;
  es.tasks = 50;
  es.inner_iterations = 100;
  es.inner_batch = 5;
  const auto r = evaluate(net, src, es, SeedTree(9));
  EXPECT_GT(r.accuracy, 0.99);
  EXPECT_LT(r.ci_halfwidth, 0.02);
}

TEST(Evaluate, RegressionReportsNegativeMse) {
  const auto src = TaskSource::sinusoid();
  Rng rng(10);
  const Network net = make_mlp({1, 8, 1}, rng);
  EvalSettings es;
  es.meta.ways = 1;
  es.meta.shots = 5;
  es.meta.queries = 5;
  es.meta.loss = LossKind::mse();
  es.tasks = 10;
  es.inner_iterations = 1;
  const auto r = evaluate(net, src, es, SeedTree(11));
  EXPECT_LT(r.accuracy, 0.0);
  EXPECT_NEAR(r.accuracy, -r.loss, 1e-12);
}

TEST(Experiment, RerunGivesIdenticalCsv) {
  auto a = tiny_config("rerun_a");
  auto b = tiny_config("rerun_b");
  const auto ra = run_experiment(a);
  run_experiment(b);
  const std::string csv = slurp(std::filesystem::path(a.out_dir) / kMetricsFile);
  EXPECT_EQ(csv, slurp(std::filesystem::path(b.out_dir) / kMetricsFile));
  EXPECT_EQ(slurp(std::filesystem::path(a.out_dir) / kFinalCheckpoint),
            slurp(std::filesystem::path(b.out_dir) / kFinalCheckpoint));
  // evaluations after iterations 2, 4, 6, 8, 10 on both splits
  EXPECT_EQ(ra.metrics.size(), 10u);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
  EXPECT_EQ(gap_curve(read_metrics_csv((std::filesystem::path(a.out_dir) / kMetricsFile).string())).size(), 5u);
  for (const auto& r : ra.metrics) {
    if (r.phase == Phase::Prune) {
      EXPECT_GE(r.rate, 0.5);
    }
  }
  EXPECT_EQ(ra.history.mask_recomputed_at, (std::vector<std::size_t>{4}));
}

TEST(Experiment, CheckpointHandoffMatchesFullRun) {
  auto cfg = tiny_config("handoff_full");
  const auto full = run_experiment(cfg);

  auto staged = tiny_config("handoff_staged");
  RunOptions pre;
  pre.pretrain_only = true;
  const auto p = run_experiment(staged, pre);
  EXPECT_EQ(p.next_iter, 4u);

  RunOptions mid;
  mid.resume = load_checkpoint(std::filesystem::path(staged.out_dir) / kFinalCheckpoint);
  mid.until = 6;
  const auto m = run_experiment(staged, mid);
  EXPECT_EQ(m.next_iter, 6u);
  ASSERT_TRUE(m.active_mask.has_value());

  RunOptions last;
  last.resume = load_checkpoint(std::filesystem::path(staged.out_dir) / kFinalCheckpoint);
  ASSERT_TRUE(last.resume->mask.has_value());
  const auto f = run_experiment(staged, last);
  EXPECT_TRUE(bitwise_equal(f.net, full.net));

  auto other = staged;
  other.seed = 18;
  EXPECT_THROW((void)run_experiment(other, last), ConfigError);
}

TEST(Experiment, EvaluateCheckpointUsesFixedEpisodes) {
  auto cfg = tiny_config("eval_ckpt");
  const auto r = run_experiment(cfg);
  const auto ck = load_checkpoint(std::filesystem::path(cfg.out_dir) / kFinalCheckpoint);
  const auto rows = evaluate_checkpoint(cfg, ck);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].accuracy, r.metrics[r.metrics.size() - 2].accuracy);
  EXPECT_EQ(rows[1].accuracy, r.metrics.back().accuracy);
  EXPECT_EQ(rows[1].phase, Phase::Retrain);
}

TEST(Experiment, SinusoidRun) {
  auto cfg = parse_config(
      "seed = 5\nsource = sinusoid\nhidden = 16\nshots = 5\nqueries = 5\ninner_lr = 0.01\n"
      "pretrain_iters = 3\nprune_iters = 2\nretrain_iters = 1\nrate = 0.3\n"
      "eval_tasks = 3\neval_inner_iterations = 2\neval_every = 3\n");
  cfg.out_dir = ts::scratch_dir("sine_run").string();
  const auto r = run_experiment(cfg);
  ASSERT_EQ(r.metrics.size(), 4u);
  for (const auto& m : r.metrics) {
    EXPECT_LE(m.accuracy, 0.0);
  }
}
