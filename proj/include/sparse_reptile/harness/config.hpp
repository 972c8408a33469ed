#pragma once

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sparse_reptile/error.hpp"
#include "sparse_reptile/loss.hpp"
#include "sparse_reptile/pruning.hpp"
#include "sparse_reptile/reptile.hpp"
#include "sparse_reptile/tasks.hpp"

namespace sparse_reptile::harness {

enum class Metric { Accuracy, Mse };

/// Everything needed to reproduce a run. Parsed from flat `key = value`
/// text; see README for the key list.
struct ExperimentConfig {
  std::optional<std::uint64_t> seed;

  SourceKind source = SourceKind::Blobs;
  BlobsParams blobs{};
  double split_fraction = 0.6;
  std::string image_dir;

  std::vector<std::size_t> hidden{64, 64};
  MetaConfig meta{};
  PruneSchedule schedule{};
  double rate = 0.0;
  bool prune_biases = false;

  std::size_t eval_tasks = 600;
  std::size_t eval_inner_iterations = 50;
  std::size_t eval_inner_batch = 5;
  std::size_t eval_every = 50;
  Metric metric = Metric::Accuracy;

  std::string out_dir = "out";

  [[nodiscard]] std::uint64_t master_seed() const {
    if (!seed) {
      throw ConfigError("seed: missing (set `seed` in the config or pass --seed)");
    }
    return *seed;
  }

  [[nodiscard]] bool classification() const noexcept { return source != SourceKind::Sinusoid; }

  void validate() const {
    static_cast<void>(master_seed());
    auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
    if (source == SourceKind::ImageDir) {
      std::error_code ec;
      if (image_dir.empty()) {
        fail("image_dir", "required when source = imagedir");
      }
      if (!std::filesystem::is_directory(image_dir, ec)) {
        fail("image_dir", "directory not found: " + image_dir);
      }
    }
    if (classification() && !(split_fraction > 0.0 && split_fraction < 1.0)) {
      fail("split_fraction", "must lie in (0, 1)");
    }
    if (source == SourceKind::Blobs) {
      if (blobs.classes < 2) fail("classes", "need at least 2");
      if (blobs.dim == 0) fail("dim", "must be positive");
      if (!(blobs.noise_sigma > 0.0)) fail("noise_sigma", "must be positive");
      if (meta.ways > train_class_count(blobs.classes, split_fraction)) {
        fail("ways", "exceeds the number of meta-train classes");
      }
    }
    if (classification() != meta.loss.is_classification()) {
      fail("loss", classification() ? "classification sources need cross_entropy or margin_ramp"
                                    : "sinusoid regression needs mse");
    }
    if ((metric == Metric::Mse) == classification()) {
      fail("metric", classification() ? "classification sources report accuracy" : "sinusoid reports mse");
    }
    if (!(rate >= 0.0 && rate < 1.0)) fail("rate", "must lie in [0, 1)");
    if (schedule.rounds == 0) fail("rounds", "must be at least 1");
    if (schedule.total_iterations() == 0) fail("pretrain_iters", "schedule has no iterations");
    if (eval_tasks < 2) fail("eval_tasks", "need at least 2 evaluation episodes");
    if (eval_inner_batch == 0) fail("eval_inner_batch", "must be positive");
    if (eval_every == 0) fail("eval_every", "must be positive");
    for (std::size_t h : hidden) {
      if (h == 0) fail("hidden", "layer widths must be positive");
    }
    try {
      MetaConfig m = meta;
      m.total_meta_iterations = schedule.total_iterations();
      m.validate();
    } catch (const DomainError& e) {
      fail("meta", e.what());
    }
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::size_t parse_size(const std::string& key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected a nonnegative integer, got '" + std::string(v) + "'");
  }
  return static_cast<std::size_t>(out);
}

inline std::uint64_t parse_u64(const std::string& key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw ConfigError(key + ": expected an unsigned 64-bit integer, got '" + std::string(v) + "'");
  }
  return out;
}

inline double parse_real(const std::string& key, std::string_view v) {
  const std::string s(v);
  try {
    std::size_t used = 0;
    const double out = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(out)) {
      throw std::invalid_argument(s);
    }
    return out;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + s + "'");
  }
}

inline bool parse_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + std::string(v) + "'");
}

inline std::vector<std::size_t> parse_size_list(const std::string& key, std::string_view v) {
  std::vector<std::size_t> out;
  if (trim(v).empty()) {
    return out;
  }
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = v.find(',', start);
    const auto piece = trim(v.substr(start, comma == std::string_view::npos ? v.size() - start : comma - start));
    out.push_back(parse_size(key, piece));
    if (comma == std::string_view::npos) {
      break;
    }
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

/// Parses `key = value` lines; `#` starts a comment. Unknown or repeated
/// keys are errors. Does not run validate().
inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg;
  std::map<std::string, std::string> kv;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      nl = text.size();
    }
    std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = detail::trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected `key = value`");
    }
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string value(detail::trim(line.substr(eq + 1)));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    }
    if (!kv.emplace(key, value).second) {
      throw ConfigError(key + ": repeated on line " + std::to_string(line_no));
    }
  }

  using Setter = std::function<void(const std::string&, const std::string&)>;
  std::optional<std::size_t> interval;
  std::optional<double> ratio;
  std::optional<LossKind::Kind> loss_kind;
  std::optional<double> gamma;
  std::optional<Metric> metric;
  const std::map<std::string, Setter> setters = {
      {"seed", [&](auto& k, auto& v) { cfg.seed = detail::parse_u64(k, v); }},
      {"source",
       [&](auto& k, auto& v) {
         if (v == "blobs") cfg.source = SourceKind::Blobs;
         else if (v == "sinusoid") cfg.source = SourceKind::Sinusoid;
         else if (v == "imagedir") cfg.source = SourceKind::ImageDir;
         else throw ConfigError(k + ": expected blobs, sinusoid or imagedir, got '" + v + "'");
       }},
      {"classes", [&](auto& k, auto& v) { cfg.blobs.classes = detail::parse_size(k, v); }},
      {"dim", [&](auto& k, auto& v) { cfg.blobs.dim = detail::parse_size(k, v); }},
      {"noise_sigma", [&](auto& k, auto& v) { cfg.blobs.noise_sigma = detail::parse_real(k, v); }},
      {"split_fraction", [&](auto& k, auto& v) { cfg.split_fraction = detail::parse_real(k, v); }},
      {"image_dir", [&](auto&, auto& v) { cfg.image_dir = v; }},
      {"hidden", [&](auto& k, auto& v) { cfg.hidden = detail::parse_size_list(k, v); }},
      {"ways", [&](auto& k, auto& v) { cfg.meta.ways = detail::parse_size(k, v); }},
      {"shots", [&](auto& k, auto& v) { cfg.meta.shots = detail::parse_size(k, v); }},
      {"queries", [&](auto& k, auto& v) { cfg.meta.queries = detail::parse_size(k, v); }},
      {"loss",
       [&](auto& k, auto& v) {
         if (v == "cross_entropy") loss_kind = LossKind::Kind::CrossEntropy;
         else if (v == "mse") loss_kind = LossKind::Kind::MSE;
         else if (v == "margin_ramp") loss_kind = LossKind::Kind::MarginRamp;
         else throw ConfigError(k + ": expected cross_entropy, mse or margin_ramp, got '" + v + "'");
       }},
      {"margin_gamma", [&](auto& k, auto& v) { gamma = detail::parse_real(k, v); }},
      {"inner_lr", [&](auto& k, auto& v) { cfg.meta.inner_lr = detail::parse_real(k, v); }},
      {"outer_lr", [&](auto& k, auto& v) { cfg.meta.outer_lr = detail::parse_real(k, v); }},
      {"meta_batch", [&](auto& k, auto& v) { cfg.meta.meta_batch = detail::parse_size(k, v); }},
      {"inner_iterations", [&](auto& k, auto& v) { cfg.meta.inner_iterations = detail::parse_size(k, v); }},
      {"inner_batch", [&](auto& k, auto& v) { cfg.meta.inner_batch = detail::parse_size(k, v); }},
      {"pretrain_iters", [&](auto& k, auto& v) { cfg.schedule.pretrain_iters = detail::parse_size(k, v); }},
      {"prune_iters", [&](auto& k, auto& v) { cfg.schedule.prune_iters = detail::parse_size(k, v); }},
      {"retrain_iters", [&](auto& k, auto& v) { cfg.schedule.retrain_iters = detail::parse_size(k, v); }},
      {"rounds", [&](auto& k, auto& v) { cfg.schedule.rounds = detail::parse_size(k, v); }},
      {"interval_iters", [&](auto& k, auto& v) { interval = detail::parse_size(k, v); }},
      {"ratio", [&](auto& k, auto& v) { ratio = detail::parse_real(k, v); }},
      {"rate", [&](auto& k, auto& v) { cfg.rate = detail::parse_real(k, v); }},
      {"prune_biases", [&](auto& k, auto& v) { cfg.prune_biases = detail::parse_bool(k, v); }},
      {"eval_tasks", [&](auto& k, auto& v) { cfg.eval_tasks = detail::parse_size(k, v); }},
      {"eval_inner_iterations", [&](auto& k, auto& v) { cfg.eval_inner_iterations = detail::parse_size(k, v); }},
      {"eval_inner_batch", [&](auto& k, auto& v) { cfg.eval_inner_batch = detail::parse_size(k, v); }},
      {"eval_every", [&](auto& k, auto& v) { cfg.eval_every = detail::parse_size(k, v); }},
      {"metric",
       [&](auto& k, auto& v) {
         if (v == "accuracy") metric = Metric::Accuracy;
         else if (v == "mse") metric = Metric::Mse;
         else throw ConfigError(k + ": expected accuracy or mse, got '" + v + "'");
       }},
      {"out_dir", [&](auto&, auto& v) { cfg.out_dir = v; }},
  };
  for (const auto& [key, value] : kv) {
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw ConfigError(key + ": unknown key");
    }
    it->second(key, value);
  }

  if (interval.has_value() != ratio.has_value()) {
    throw ConfigError(interval ? "ratio: required with interval_iters" : "interval_iters: required with ratio");
  }
  if (interval) {
    if (kv.count("prune_iters") || kv.count("retrain_iters")) {
      throw ConfigError("interval_iters: conflicts with prune_iters/retrain_iters");
    }
    try {
      cfg.schedule = PruneSchedule::iht(cfg.schedule.pretrain_iters, *interval, *ratio, cfg.schedule.rounds);
    } catch (const DomainError& e) {
      throw ConfigError(std::string("ratio: ") + e.what());
    }
  }

  const bool classification = cfg.source != SourceKind::Sinusoid;
  const auto kind = loss_kind.value_or(classification ? LossKind::Kind::CrossEntropy : LossKind::Kind::MSE);
  if (gamma && kind != LossKind::Kind::MarginRamp) {
    throw ConfigError("margin_gamma: only valid with loss = margin_ramp");
  }
  cfg.meta.loss = LossKind{kind, gamma.value_or(1.0)};
  if (kind == LossKind::Kind::MarginRamp && !(cfg.meta.loss.gamma > 0.0)) {
    throw ConfigError("margin_gamma: must be positive");
  }
  cfg.metric = metric.value_or(classification ? Metric::Accuracy : Metric::Mse);
  if (!classification && !kv.count("ways")) {
    cfg.meta.ways = 1;
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read config " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace sparse_reptile::harness
