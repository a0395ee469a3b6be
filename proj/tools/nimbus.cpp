// nimbus CLI: train models, replay the phased load experiment under each
// autoscaler, verify gradients and compare run reports.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nimbus/nimbus.hpp"

namespace {

using namespace nimbus;

harness::ExperimentConfig base_config(const std::string& config_path) {
  if (config_path.empty()) return {};
  return harness::load_config(config_path);
}

int cmd_run(const std::string& config_path, const std::string& autoscaler,
            std::uint64_t seed, bool seed_set, const std::string& outdir,
            const std::string& lstm_path, const std::string& dqn_path) {
  auto cfg = base_config(config_path);
  if (!autoscaler.empty()) cfg.autoscaler = autoscaler;
  if (seed_set) cfg.seed = seed;
  if (!lstm_path.empty()) cfg.lstm_path = lstm_path;
  if (!dqn_path.empty()) cfg.dqn_path = dqn_path;
  auto report = harness::run_experiment(cfg);
  harness::write_outputs(report, outdir);
  std::cout << "autoscaler=" << report.autoscaler << " seed=" << report.seed
            << " avg_replicas="
            << harness::detail::fmt_double(report.metrics.avg_replicas)
            << " resource_integral_pod_s="
            << harness::detail::fmt_double(
                   report.metrics.resource_integral_pod_s)
            << " scaling_events=" << report.metrics.scaling_events << "\n";
  std::cout << "wrote " << outdir << "/report.json\n";
  return 0;
}

int cmd_train_forecaster(const std::string& config_path, std::uint64_t seed,
                         bool seed_set, int epochs, int n_seeds,
                         const std::string& out_path) {
  auto cfg = base_config(config_path);
  if (seed_set) cfg.seed = seed;
  auto result = harness::train_forecaster(cfg, n_seeds, epochs);
  auto archive = store::to_archive(result.params, result.scaler);
  archive.metadata["seed"] = std::to_string(cfg.seed);
  archive.metadata["epochs"] = std::to_string(epochs);
  archive.metadata["bootstrap_seeds"] = std::to_string(n_seeds);
  std::filesystem::create_directories(
      std::filesystem::path(out_path).parent_path().empty()
          ? "."
          : std::filesystem::path(out_path).parent_path().string());
  store::save(archive, out_path);
  std::cout << "train_samples=" << result.train_samples
            << " holdout_samples=" << result.holdout_samples
            << " holdout_mape_pct="
            << harness::detail::fmt_double(result.holdout_mape_pct)
            << " holdout_r2="
            << harness::detail::fmt_double(result.holdout_r2) << "\n";
  std::cout << "saved " << out_path << "\n";
  return 0;
}

int cmd_train_agent(const std::string& config_path, std::uint64_t seed,
                    bool seed_set, int episodes, const std::string& lstm_path,
                    const std::string& out_path,
                    const std::string& curve_path) {
  auto cfg = base_config(config_path);
  if (seed_set) cfg.seed = seed;
  if (!lstm_path.empty()) cfg.lstm_path = lstm_path;
  if (!std::filesystem::exists(cfg.lstm_path))
    throw harness::MissingModel("forecaster model not found: " +
                                cfg.lstm_path);
  auto [lstm, scaler] = store::lstm_from_archive(store::load(cfg.lstm_path));
  auto result = harness::train_agent(cfg, lstm, scaler, episodes);
  auto archive = store::to_archive(result.params);
  archive.metadata["seed"] = std::to_string(cfg.seed);
  archive.metadata["episodes"] = std::to_string(episodes);
  archive.metadata["train_steps"] = std::to_string(result.train_steps);
  std::filesystem::create_directories(
      std::filesystem::path(out_path).parent_path().empty()
          ? "."
          : std::filesystem::path(out_path).parent_path().string());
  store::save(archive, out_path);

  std::ostringstream curve;
  curve << "episode,total_reward,epsilon_end,avg_replicas\n";
  for (const auto& s : result.curve)
    curve << s.episode << ',' << harness::detail::fmt_double(s.total_reward)
          << ',' << harness::detail::fmt_double(s.epsilon_end) << ','
          << harness::detail::fmt_double(s.avg_replicas) << '\n';
  if (curve_path.empty()) {
    std::cout << curve.str();
  } else {
    std::ofstream f(curve_path);
    f << curve.str();
    std::cout << "wrote " << curve_path << "\n";
  }
  std::cout << "episodes=" << result.curve.size()
            << " train_steps=" << result.train_steps
            << " target_syncs=" << result.target_syncs << "\n";
  std::cout << "saved " << out_path << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, int trials) {
  auto report = harness::run_gradcheck(seed, trials);
  std::cout << "lstm_max_rel_err="
            << harness::detail::fmt_double(report.lstm_max_rel_err) << "\n";
  std::cout << "dqn_max_rel_err="
            << harness::detail::fmt_double(report.dqn_max_rel_err) << "\n";
  bool ok =
      report.lstm_max_rel_err < 1e-4 && report.dqn_max_rel_err < 1e-4;
  std::cout << (ok ? "gradcheck ok" : "gradcheck FAILED") << "\n";
  return ok ? 0 : 1;
}

int cmd_compare(const std::vector<std::string>& paths,
                const std::string& out_path) {
  std::vector<harness::RunReport> reports;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw harness::MismatchedPlans("cannot open report: " + p);
    nlohmann::json j;
    in >> j;
    reports.push_back(harness::report_from_json(j));
  }
  auto table = harness::compare(reports);
  std::printf("%-10s %14s %18s %16s\n", "autoscaler", "avg_replicas",
              "integral_pod_s", "scaling_events");
  for (const auto& row : table.rows)
    std::printf("%-10s %14.3f %18.1f %16d\n", row.autoscaler.c_str(),
                row.metrics.avg_replicas,
                row.metrics.resource_integral_pod_s,
                row.metrics.scaling_events);
  std::printf("highest_avg=%s largest_integral=%s most_events=%s\n",
              table.highest_avg.c_str(), table.largest_integral.c_str(),
              table.most_events.c_str());
  if (!out_path.empty()) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : table.rows)
      rows.push_back({{"autoscaler", row.autoscaler},
                      {"metrics", harness::metrics_to_json(row.metrics)},
                      {"delta_avg", row.delta_avg},
                      {"delta_integral", row.delta_integral},
                      {"delta_events", row.delta_events}});
    nlohmann::json doc = {{"rows", rows},
                          {"highest_avg", table.highest_avg},
                          {"largest_integral", table.largest_integral},
                          {"most_events", table.most_events}};
    std::ofstream f(out_path);
    f << doc.dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nimbus: proactive vs reactive Kubernetes autoscaling, "
               "replayed in a deterministic desk-scale simulator"};
  app.require_subcommand(1);

  std::string config_path, autoscaler, outdir = "out", lstm_path, dqn_path;
  std::string model_out, curve_path, compare_out;
  std::uint64_t seed = 42;
  bool seed_set = false;
  int epochs = 300, n_seeds = 5, episodes = 150, trials = 10;
  std::vector<std::string> report_paths;

  auto add_seed = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "load-generator seed")
        ->each([&](const std::string&) { seed_set = true; });
  };

  auto* run = app.add_subcommand("run", "run one experiment");
  run->add_option("--config", config_path, "config file (JSON)");
  run->add_option("--autoscaler", autoscaler, "hpa | keda | nimbus")
      ->check(CLI::IsMember({"hpa", "keda", "nimbus"}));
  add_seed(run);
  run->add_option("--out", outdir, "output directory");
  run->add_option("--lstm", lstm_path, "forecaster model path");
  run->add_option("--dqn", dqn_path, "agent model path");

  auto* tf = app.add_subcommand("train-forecaster",
                                "bootstrap data via HPA runs and train the "
                                "memory forecaster");
  tf->add_option("--config", config_path, "config file (JSON)");
  add_seed(tf);
  tf->add_option("--epochs", epochs, "training epochs");
  tf->add_option("--seeds", n_seeds, "bootstrap seeds (last one held out)");
  tf->add_option("--out", model_out, "model output path")
      ->default_val("models/lstm.nbg.json");

  auto* ta = app.add_subcommand("train-agent",
                                "episodic DQN training against the simulator");
  ta->add_option("--config", config_path, "config file (JSON)");
  add_seed(ta);
  ta->add_option("--episodes", episodes, "training episodes");
  ta->add_option("--lstm", lstm_path, "forecaster model path");
  ta->add_option("--out", model_out, "model output path")
      ->default_val("models/dqn.nbg.json");
  ta->add_option("--curve", curve_path,
                 "write the per-episode reward curve CSV here instead of "
                 "stdout");

  auto* gc = app.add_subcommand(
      "gradcheck", "finite-difference validation of both gradient paths");
  add_seed(gc);
  gc->add_option("--trials", trials, "seeded trials per model");

  auto* cp = app.add_subcommand("compare", "merge run reports into one table");
  cp->add_option("reports", report_paths, "report.json files")
      ->expected(-2);
  cp->add_option("--out", compare_out, "also write the table as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (run->parsed())
      return cmd_run(config_path, autoscaler, seed, seed_set, outdir,
                     lstm_path, dqn_path);
    if (tf->parsed())
      return cmd_train_forecaster(config_path, seed, seed_set, epochs,
                                  n_seeds, model_out);
    if (ta->parsed())
      return cmd_train_agent(config_path, seed, seed_set, episodes, lstm_path,
                             model_out, curve_path);
    if (gc->parsed()) return cmd_gradcheck(seed, trials);
    if (cp->parsed()) return cmd_compare(report_paths, compare_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
