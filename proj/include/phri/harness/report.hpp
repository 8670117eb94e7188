#pragma once

// Aggregates trial records into per-condition tables: mean, sample standard
// deviation and a percentile bootstrap interval for regret and theta path
// length, plus raw rows and theta paths for plotting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "phri/harness/experiment.hpp"
#include "phri/harness/io.hpp"

namespace phri::harness {

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct BootstrapOptions {
  int resamples = 2000;
  double level = 0.95;
  std::uint64_t seed = 2024;
};

inline Summary summarize(const std::vector<double>& xs, const BootstrapOptions& opts = {}) {
  Summary s;
  s.n = xs.size();
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<std::size_t> pick(0, s.n - 1);
  std::vector<double> means(static_cast<std::size_t>(opts.resamples));
  for (auto& m : means) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.n; ++i) acc += xs[pick(rng)];
    m = acc / static_cast<double>(s.n);
  }
  std::sort(means.begin(), means.end());
  const double tail = 0.5 * (1.0 - opts.level);
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(means.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - static_cast<double>(lo)) * (means[hi] - means[lo]);
  };
  s.ci_lo = quantile(tail);
  s.ci_hi = quantile(1.0 - tail);
  return s;
}

struct ConditionSummary {
  Relevance relevance = Relevance::kRelevant;
  Strategy strategy = Strategy::kFixed;
  /// empty for the pooled relevance x strategy cell
  std::string task;
  int quarantined = 0;
  Summary regret;
  Summary path_length;
};

/// One row per relevance x strategy cell (pooled over tasks), followed by
/// one row per task x strategy.
inline std::vector<ConditionSummary> summarize_conditions(const std::vector<TrialRecord>& trials,
                                                          const BootstrapOptions& opts = {}) {
  using Key = std::tuple<int, int, std::string>;
  std::map<Key, std::pair<std::vector<double>, std::vector<double>>> ok;
  std::map<Key, int> bad;
  std::vector<std::string> task_order;
  for (const auto& t : trials) {
    if (std::find(task_order.begin(), task_order.end(), t.task) == task_order.end()) task_order.push_back(t.task);
    for (const std::string& task : {std::string(), t.task}) {
      const Key k{static_cast<int>(t.relevance), static_cast<int>(t.strategy), task};
      if (t.ok()) {
        ok[k].first.push_back(t.regret);
        ok[k].second.push_back(t.path_length);
      } else {
        ++bad[k];
      }
    }
  }
  std::vector<ConditionSummary> out;
  auto emit = [&](Relevance r, Strategy s, const std::string& task) {
    const Key k{static_cast<int>(r), static_cast<int>(s), task};
    if (!ok.count(k) && !bad.count(k)) return;
    ConditionSummary c;
    c.relevance = r;
    c.strategy = s;
    c.task = task;
    c.quarantined = bad.count(k) ? bad[k] : 0;
    c.regret = summarize(ok[k].first, opts);
    c.path_length = summarize(ok[k].second, opts);
    out.push_back(std::move(c));
  };
  for (Relevance r : {Relevance::kRelevant, Relevance::kIrrelevant}) {
    for (Strategy s : {Strategy::kAdaptive, Strategy::kFixed}) emit(r, s, "");
  }
  for (const auto& task : task_order) {
    for (Strategy s : {Strategy::kAdaptive, Strategy::kFixed}) {
      for (Relevance r : {Relevance::kRelevant, Relevance::kIrrelevant}) emit(r, s, task);
    }
  }
  return out;
}

/// File name -> contents. `feature_names` labels the theta columns.
inline std::map<std::string, std::string> export_report(const std::vector<TrialRecord>& trials,
                                                        const std::vector<std::string>& feature_names,
                                                        const BootstrapOptions& opts = {}) {
  std::map<std::string, std::string> files;
  const auto conditions = summarize_conditions(trials, opts);

  CsvWriter summary({"task", "relevance", "strategy", "n", "quarantined", "regret_mean", "regret_sd", "regret_ci_lo",
                     "regret_ci_hi", "path_mean", "path_sd", "path_ci_lo", "path_ci_hi"});
  CsvWriter regret_plot({"condition", "mean", "ci_lo", "ci_hi"});
  CsvWriter path_plot({"condition", "mean", "ci_lo", "ci_hi"});
  for (const auto& c : conditions) {
    summary.row({c.task.empty() ? "all" : c.task, to_string(c.relevance), to_string(c.strategy),
                 std::to_string(c.regret.n), std::to_string(c.quarantined), fmt_double(c.regret.mean),
                 fmt_double(c.regret.sd), fmt_double(c.regret.ci_lo), fmt_double(c.regret.ci_hi),
                 fmt_double(c.path_length.mean), fmt_double(c.path_length.sd), fmt_double(c.path_length.ci_lo),
                 fmt_double(c.path_length.ci_hi)});
    if (c.task.empty()) {
      const std::string label = to_string(c.relevance) + "/" + to_string(c.strategy);
      regret_plot.row({label, fmt_double(c.regret.mean), fmt_double(c.regret.ci_lo), fmt_double(c.regret.ci_hi)});
      path_plot.row({label, fmt_double(c.path_length.mean), fmt_double(c.path_length.ci_lo),
                     fmt_double(c.path_length.ci_hi)});
    }
  }
  files["summary.csv"] = summary.str();
  files["plot_regret.csv"] = regret_plot.str();
  files["plot_path_length.csv"] = path_plot.str();

  CsvWriter rows({"task", "relevance", "strategy", "episode", "seed", "status", "corrections", "regret",
                  "path_length", "error"});
  std::vector<std::string> theta_header{"task", "strategy", "episode", "step"};
  for (const auto& n : feature_names) theta_header.push_back("theta_" + n);
  CsvWriter paths(theta_header);
  for (const auto& t : trials) {
    std::string err = t.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    rows.row({t.task, to_string(t.relevance), to_string(t.strategy), std::to_string(t.episode), std::to_string(t.seed),
              t.status, std::to_string(t.theta_trace.empty() ? 0 : t.theta_trace.size() - 1),
              t.ok() ? fmt_double(t.regret) : "", t.ok() ? fmt_double(t.path_length) : "", err});
    for (std::size_t step = 0; step < t.theta_trace.size(); ++step) {
      const Vec& th = t.theta_trace[step];
      if (th.size() != static_cast<Eigen::Index>(feature_names.size())) {
        throw ConfigurationError("trial theta has " + std::to_string(th.size()) + " entries but " +
                                 std::to_string(feature_names.size()) + " feature names were given");
      }
      std::vector<std::string> r{t.task, to_string(t.strategy), std::to_string(t.episode), std::to_string(step)};
      for (Eigen::Index i = 0; i < th.size(); ++i) r.push_back(fmt_double(th[i]));
      paths.row(r);
    }
  }
  files["trials.csv"] = rows.str();
  files["plot_theta_paths.csv"] = paths.str();
  return files;
}

}  // namespace phri::harness
