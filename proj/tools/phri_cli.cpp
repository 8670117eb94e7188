// phri: calibrate / experiment / serve / report

#include <CLI11.hpp>

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "phri/harness/calibration.hpp"
#include "phri/harness/config.hpp"
#include "phri/harness/experiment.hpp"
#include "phri/harness/io.hpp"
#include "phri/harness/report.hpp"
#include "phri/harness/session_server.hpp"

namespace fs = std::filesystem;
using namespace phri;
using namespace phri::harness;

namespace {

std::vector<std::string> known_feature_names(const ExperimentConfig& cfg) {
  std::vector<std::string> names;
  for (int i : cfg.scene.features.known_indices()) names.push_back(cfg.scene.features.spec(i).name);
  return names;
}

void write_report(const std::vector<TrialRecord>& trials, const ExperimentConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  for (const auto& [name, text] : export_report(trials, known_feature_names(cfg))) write_text((out / name).string(), text);
}

std::vector<TrialRecord> read_trials(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open '" + path + "'");
  std::vector<TrialRecord> trials;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      trials.push_back(trial_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ConfigurationError("'" + path + "' line " + std::to_string(trials.size() + 1) + ": " + e.what());
    }
  }
  return trials;
}

std::size_t task_index(const ExperimentConfig& cfg, const std::string& name) {
  if (name.empty()) return 0;
  for (std::size_t i = 0; i < cfg.experiment.tasks.size(); ++i) {
    if (cfg.experiment.tasks[i].name == name) return i;
  }
  throw ConfigurationError("no task named '" + name + "'");
}

boost::asio::io_context* g_io = nullptr;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relevance-aware learning from physical corrections"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "override a config value, e.g. --set learner.alpha=0.3");
  };

  std::string out_dir = "out";
  std::string model_path;
  std::string strategy = "both";
  std::string trials_path;
  std::string task;
  unsigned short port = 7070;
  std::string address = "127.0.0.1";

  auto* cal = app.add_subcommand("calibrate", "fit P(beta_hat | r) from synthetic corrections");
  add_config(cal);
  cal->add_option("-o,--out", out_dir, "output directory for model.json and samples.csv");

  auto* exp = app.add_subcommand("experiment", "run the strategy x relevance grid headlessly");
  add_config(exp);
  exp->add_option("-m,--model", model_path, "calibrated model.json (needed for adaptive runs)");
  exp->add_option("-o,--out", out_dir, "output directory for trials.jsonl and the report");
  exp->add_option("--strategy", strategy, "adaptive, fixed or both")->check(CLI::IsMember({"adaptive", "fixed", "both"}));

  auto* rep = app.add_subcommand("report", "aggregate a trials.jsonl into CSV tables");
  add_config(rep);
  rep->add_option("-t,--trials", trials_path, "trials.jsonl from an experiment run")->required();
  rep->add_option("-o,--out", out_dir, "output directory");

  auto* srv = app.add_subcommand("serve", "serve one interactive session over TCP (newline-delimited JSON)");
  add_config(srv);
  srv->add_option("-m,--model", model_path, "calibrated model.json (enables adaptive mode)");
  srv->add_option("-p,--port", port, "TCP port (0 picks a free one)");
  srv->add_option("--address", address, "bind address");
  srv->add_option("--task", task, "task whose theta0 starts the session (default: first)");

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = load_config(config_path, overrides);
    std::optional<RationalityModel> model;
    if (!model_path.empty()) model = load_rationality_model(model_path);

    if (cal->parsed()) {
      const CalibrationResult r = run_calibration(cfg);
      fs::create_directories(out_dir);
      write_text((fs::path(out_dir) / "model.json").string(), calibration_model_json(r).dump(2) + "\n");
      write_text((fs::path(out_dir) / "samples.csv").string(), calibration_samples_csv(r));
      std::cout << "calibrated " << r.cells.size() << " cells from " << r.samples.size() << " samples, excluded "
                << r.excluded() << " (rate " << r.exclusion_rate() << "), failed trials " << r.failed_trials << "\n";
      for (const auto& c : r.cells) {
        std::cout << "  " << c.feature << " r=" << c.relevant << ": df " << c.fit.dist.df << " scale "
                  << c.fit.dist.scale << " mean " << c.fit.dist.mean() << " (n=" << c.used << ")\n";
      }
    } else if (exp->parsed()) {
      std::vector<Strategy> strategies;
      if (strategy == "both" || strategy == "adaptive") strategies.push_back(Strategy::kAdaptive);
      if (strategy == "both" || strategy == "fixed") strategies.push_back(Strategy::kFixed);
      const ExperimentResult r = run_experiment(cfg, model, strategies);
      fs::create_directories(out_dir);
      write_text((fs::path(out_dir) / "trials.jsonl").string(), trials_jsonl(r.trials));
      write_report(r.trials, cfg, out_dir);
      std::cout << "ran " << r.trials.size() << " trials (" << r.quarantined() << " quarantined)\n";
      for (const auto& c : summarize_conditions(r.trials)) {
        if (!c.task.empty()) continue;
        std::cout << "  " << to_string(c.relevance) << "/" << to_string(c.strategy) << ": regret " << c.regret.mean
                  << " [" << c.regret.ci_lo << ", " << c.regret.ci_hi << "], path " << c.path_length.mean << " ["
                  << c.path_length.ci_lo << ", " << c.path_length.ci_hi << "]\n";
      }
    } else if (rep->parsed()) {
      const auto trials = read_trials(trials_path);
      write_report(trials, cfg, out_dir);
      std::cout << "wrote report for " << trials.size() << " trials to " << out_dir << "\n";
    } else if (srv->parsed()) {
      SessionController controller(cfg, model, task_index(cfg, task));
      boost::asio::io_context io;
      SessionServer server(io, controller, port, address);
      server.start(cfg.server.tick_ms);
      std::cout << "serving task '" << controller.task().name << "' on " << address << ":" << server.port()
                << (model ? "" : " (no model: fixed mode only)") << std::endl;
      g_io = &io;
      std::signal(SIGINT, [](int) {
        if (g_io) g_io->stop();
      });
      io.run();
    }
  } catch (const phri::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
