// Copyright 2026 The edgebid Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: train, eval, sweeps and SNR calibration.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "edgebid/edgebid.hpp"

namespace {

namespace fs = std::filesystem;
using edgebid::ExperimentConfig;

constexpr int kConfigFailure = 2;
constexpr int kRuntimeFailure = 1;

nlohmann::ordered_json tradeoff_summary(const std::vector<edgebid::SweepAggregate>& agg) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& a : agg) {
    j.push_back({{"algorithm", edgebid::to_string(a.algorithm)},
                 {"point", a.point},
                 {"device", a.device + 1},
                 {"t1", a.t1},
                 {"t2", a.t2},
                 {"accuracy", a.accuracy_mean},
                 {"accuracy_stderr", a.accuracy_stderr},
                 {"ssim", a.ssim_mean},
                 {"ssim_stderr", a.ssim_stderr},
                 {"seeds", a.seeds}});
  }
  return j;
}

void write_sweep(const fs::path& out, const std::string& stem,
                 const std::vector<edgebid::SweepRow>& rows, const ExperimentConfig& cfg,
                 const edgebid::PreparedSystem& ps, nlohmann::ordered_json extra) {
  const auto agg = edgebid::aggregate(rows);
  edgebid::write_text_file(out / (stem + "_runs.csv"), edgebid::sweep_rows_csv(rows));
  edgebid::write_text_file(out / (stem + ".csv"), edgebid::sweep_table_csv(agg));
  edgebid::write_text_file(out / "config.json", edgebid::serialize_experiment(cfg));
  edgebid::write_json(out / "calibration.json", edgebid::calibration_report(ps));
  nlohmann::ordered_json summary;
  summary["table"] = tradeoff_summary(agg);
  for (auto it = extra.begin(); it != extra.end(); ++it) summary[it.key()] = it.value();
  edgebid::write_json(out / (stem + "_summary.json"), summary);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"edgebid: privacy-aware multi-device edge inference experiments"};
  app.require_subcommand(1);

  std::string config_path, algo = "maddpg", out_dir, ckpt_dir;
  std::uint64_t seed = 1;
  std::size_t episodes = 100;
  double target = 0.5;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "train one algorithm for one seed");
  train->add_option("--config", config_path, "experiment config (JSON)")->required();
  train->add_option("--algo", algo, "maddpg|maddpg-dd|maddpg-dt|maddpg-mc|dqn|sib")->required();
  train->add_option("--seed", seed, "random seed")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_flag("--quiet", quiet, "suppress progress lines");

  auto* eval = app.add_subcommand("eval", "greedy evaluation of a trained run");
  eval->add_option("--config", config_path, "experiment config (JSON)")->required();
  eval->add_option("--ckpt", ckpt_dir, "run directory written by train")->required();
  eval->add_option("--episodes", episodes, "number of evaluation episodes")->required();

  auto* tradeoff = app.add_subcommand("sweep-tradeoff", "accuracy/SSIM tradeoff over weight pairs");
  tradeoff->add_option("--config", config_path, "experiment config (JSON)")->required();
  tradeoff->add_option("--out", out_dir, "output directory")->required();
  tradeoff->add_flag("--quiet", quiet, "suppress progress lines");

  auto* budget = app.add_subcommand("sweep-budget", "per-device accuracy over budget splits");
  budget->add_option("--config", config_path, "experiment config (JSON)")->required();
  budget->add_option("--out", out_dir, "output directory")->required();
  budget->add_flag("--quiet", quiet, "suppress progress lines");

  auto* snr = app.add_subcommand("calibrate-snr", "mean SNR for a target feasibility of omega = 1");
  snr->add_option("--config", config_path, "experiment config (JSON)")->required();
  snr->add_option("--target", target, "target feasibility probability in (0,1)")->required();

  auto* defaults = app.add_subcommand("default-config", "print the default experiment config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (defaults->parsed()) {
      std::cout << edgebid::serialize_experiment(edgebid::default_experiment());
      return 0;
    }
    const ExperimentConfig cfg = edgebid::load_experiment(config_path);
    std::ostream* log = quiet ? nullptr : &std::cerr;

    if (train->parsed()) {
      const auto a = edgebid::algorithm_from_string(algo);
      const auto run = edgebid::run_train(cfg, a, seed, out_dir, log);
      std::cout << "wrote " << run.metrics_rows << " metrics rows and " << run.checkpoints.size()
                << " checkpoint files to " << run.directory.string() << "\n";
    } else if (eval->parsed()) {
      const auto summary = edgebid::run_eval(cfg, ckpt_dir, episodes);
      std::cout << edgebid::to_json(summary).dump(2) << "\n";
    } else if (tradeoff->parsed()) {
      edgebid::ensure_directory(out_dir);
      const auto ps = edgebid::prepare_system(cfg);
      const auto rows = edgebid::run_tradeoff_sweep(cfg, ps, log);
      write_sweep(out_dir, "tradeoff", rows, cfg, ps, {});
      std::cout << "wrote tradeoff tables to " << out_dir << "\n";
    } else if (budget->parsed()) {
      edgebid::ensure_directory(out_dir);
      const auto ps = edgebid::prepare_system(cfg);
      const auto rows = edgebid::run_budget_sweep(cfg, ps, log);
      const auto agg = edgebid::aggregate(rows);
      nlohmann::ordered_json rho = nlohmann::ordered_json::array();
      for (std::size_t k = 0; k < ps.system.device_count(); ++k) {
        std::vector<double> m, acc;
        for (const auto& a : agg) {
          if (a.device == k) {
            m.push_back(cfg.budget.splits[a.point]);
            acc.push_back(a.accuracy_mean);
          }
        }
        rho.push_back({{"device", k + 1}, {"spearman_accuracy_vs_m", edgebid::spearman(m, acc)}});
      }
      write_sweep(out_dir, "budget", rows, cfg, ps, {{"spearman", rho}});
      std::cout << "wrote budget tables to " << out_dir << "\n";
    } else if (snr->parsed()) {
      auto ps = edgebid::prepare_system(cfg);
      nlohmann::ordered_json j = nlohmann::ordered_json::array();
      for (const auto& md : ps.system.devices) {
        const double s = edgebid::calibrate_snr(md, ps.system, target, cfg.calibration.seed,
                                                cfg.calibration.snr_draws,
                                                cfg.system.snr_search_max);
        j.push_back({{"device", md.index + 1}, {"target", target}, {"mean_snr", s}});
      }
      std::cout << j.dump(2) << "\n";
    }
  } catch (const edgebid::ConfigError& e) {
    std::cerr << "edgebid: invalid configuration: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const edgebid::CalibrationError& e) {
    std::cerr << "edgebid: calibration failed: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const std::exception& e) {
    std::cerr << "edgebid: error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return 0;
}
