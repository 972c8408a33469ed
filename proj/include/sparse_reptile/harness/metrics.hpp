#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sparse_reptile/error.hpp"
#include "sparse_reptile/pruning.hpp"
#include "sparse_reptile/tasks.hpp"

namespace sparse_reptile::harness {

struct MetricsRecord {
  std::size_t meta_iter = 0;
  Phase phase = Phase::Pretrain;
  Split split = Split::MetaTrain;
  double accuracy = 0.0;  // negative MSE for regression sources
  double ci_halfwidth = 0.0;
  double loss = 0.0;
  double rate = 0.0;
};

struct Interval {
  double mean = 0.0;
  double halfwidth = 0.0;
};

/// Mean and 1.96 * s / sqrt(n) with the unbiased sample deviation s.
inline Interval confidence_interval(std::span<const double> values) {
  if (values.size() < 2) {
    throw DomainError("confidence interval needs at least two values");
  }
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : values) {
    ss += (v - mean) * (v - mean);
  }
  const double sd = std::sqrt(ss / (n - 1.0));
  return {mean, 1.96 * sd / std::sqrt(n)};
}

inline constexpr const char* kMetricsHeader = "meta_iter,phase,split,accuracy,ci_halfwidth,loss,rate";

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string format_metrics_row(const MetricsRecord& r) {
  std::string row = std::to_string(r.meta_iter);
  row += ',';
  row += phase_name(r.phase);
  row += ',';
  row += split_name(r.split);
  for (double v : {r.accuracy, r.ci_halfwidth, r.loss, r.rate}) {
    row += ',';
    row += format_number(v);
  }
  return row;
}

/// Streams records to a CSV file, header first.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) {
      throw IoError("cannot open metrics file " + path);
    }
    out_ << kMetricsHeader << '\n';
  }

  void write(const MetricsRecord& r) {
    out_ << format_metrics_row(r) << '\n';
    out_.flush();
    if (!out_) {
      throw IoError("failed writing metrics file " + path_);
    }
  }

 private:
  std::string path_;
  std::ofstream out_;
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

inline double parse_double(const std::string& s, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) {
      throw std::invalid_argument(s);
    }
    return v;
  } catch (const std::exception&) {
    throw FormatError(FormatError::Kind::Malformed,
                      "metrics line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
}

}  // namespace detail

inline std::vector<MetricsRecord> parse_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw FormatError(FormatError::Kind::Malformed,
                      std::string("metrics CSV must start with header '") + kMetricsHeader + "'");
  }
  std::vector<MetricsRecord> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    const auto cells = detail::split_csv(line);
    if (cells.size() != 7) {
      throw FormatError(FormatError::Kind::Malformed,
                        "metrics line " + std::to_string(line_no) + ": expected 7 columns");
    }
    MetricsRecord r;
    r.meta_iter = static_cast<std::size_t>(detail::parse_double(cells[0], line_no));
    if (cells[1] == "pretrain") {
      r.phase = Phase::Pretrain;
    } else if (cells[1] == "prune") {
      r.phase = Phase::Prune;
    } else if (cells[1] == "retrain") {
      r.phase = Phase::Retrain;
    } else {
      throw FormatError(FormatError::Kind::Malformed,
                        "metrics line " + std::to_string(line_no) + ": unknown phase '" + cells[1] + "'");
    }
    if (cells[2] == "train") {
      r.split = Split::MetaTrain;
    } else if (cells[2] == "test") {
      r.split = Split::MetaTest;
    } else {
      throw FormatError(FormatError::Kind::Malformed,
                        "metrics line " + std::to_string(line_no) + ": unknown split '" + cells[2] + "'");
    }
    r.accuracy = detail::parse_double(cells[3], line_no);
    r.ci_halfwidth = detail::parse_double(cells[4], line_no);
    r.loss = detail::parse_double(cells[5], line_no);
    r.rate = detail::parse_double(cells[6], line_no);
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot read metrics file " + path);
  }
  return parse_metrics_csv(in);
}

struct GapPoint {
  std::size_t meta_iter = 0;
  double gap = 0.0;  // train accuracy - test accuracy
};

/// One gap per evaluated iteration, in order of first appearance.
inline std::vector<GapPoint> gap_curve(const std::vector<MetricsRecord>& rows) {
  struct Pair {
    std::optional<double> train, test;
  };
  std::vector<std::size_t> order;
  std::map<std::size_t, Pair> pairs;
  for (const auto& r : rows) {
    auto [it, fresh] = pairs.try_emplace(r.meta_iter);
    if (fresh) {
      order.push_back(r.meta_iter);
    }
    auto& slot = (r.split == Split::MetaTrain) ? it->second.train : it->second.test;
    if (slot) {
      throw FormatError(FormatError::Kind::Malformed, "duplicate " + std::string(split_name(r.split)) +
                                                          " row at meta_iter " + std::to_string(r.meta_iter));
    }
    slot = r.accuracy;
  }
  std::vector<GapPoint> out;
  out.reserve(order.size());
  for (std::size_t iter : order) {
    const Pair& p = pairs.at(iter);
    if (!p.train || !p.test) {
      throw FormatError(FormatError::Kind::Malformed,
                        "unpaired train/test rows at meta_iter " + std::to_string(iter));
    }
    out.push_back({iter, *p.train - *p.test});
  }
  return out;
}

inline std::string format_gap_curve(const std::vector<GapPoint>& gaps) {
  std::string out = "meta_iter,gap\n";
  for (const auto& g : gaps) {
    out += std::to_string(g.meta_iter) + "," + format_number(g.gap) + "\n";
  }
  return out;
}

}  // namespace sparse_reptile::harness
