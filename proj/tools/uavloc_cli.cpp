// Command-line driver: single trials, Monte-Carlo batches, the benchmark
// comparison, and byte-exact replay of an emitted summary.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uavloc/io.hpp"

namespace fs = std::filesystem;
using namespace uavloc;

namespace {

Scenario load_or_default(const std::string& path) {
  if (path.empty()) return Scenario{};
  return load_scenario(path);
}

std::vector<std::uint64_t> resolve_seeds(const Scenario& sc,
                                         const std::vector<std::uint64_t>& cli_seeds,
                                         int trials, std::uint64_t seed_base) {
  if (!cli_seeds.empty()) return cli_seeds;
  if (!sc.seeds.empty()) return sc.seeds;
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < trials; ++i) seeds.push_back(seed_base + i);
  return seeds;
}

int cmd_run(const std::string& scenario_path, std::uint64_t seed,
            const std::string& out_dir) {
  Scenario sc = load_or_default(scenario_path);
  TrialResult trial = run_trial(sc, seed);
  fs::create_directories(out_dir);

  std::cout << "seed " << seed << ": mean user error " << trial.mean_user_error
            << " m, uav rmse " << trial.uav_rmse << " m, classification error "
            << trial.cls_error_rate * 100.0 << " %\n";
  if (!trial.mission.true_traj.empty())
    save_mission_record(trial.mission, fs::path(out_dir) / "mission");

  BatchReport report;
  report.trials.push_back(trial);
  for (double e : trial.user_errors) report.pooled_errors.push_back(e);
  std::sort(report.pooled_errors.begin(), report.pooled_errors.end());
  double sq = 0.0;
  for (double e : trial.user_errors) sq += e * e;
  report.rmse_user = trial.user_errors.empty()
                         ? 0.0
                         : std::sqrt(sq / trial.user_errors.size());
  report.rmse_uav = trial.uav_rmse;
  report.mean_cls_error = trial.cls_error_rate;
  report.median_user_error = median_of_sorted(report.pooled_errors);
  emit_results(sc, report, {seed}, out_dir);
  return 0;
}

int cmd_batch(const std::string& scenario_path, std::vector<std::uint64_t> seeds,
              int trials, std::uint64_t seed_base, const std::string& out_dir) {
  Scenario sc = load_or_default(scenario_path);
  const auto resolved = resolve_seeds(sc, seeds, trials, seed_base);
  BatchReport report = run_batch(sc, resolved);
  emit_results(sc, report, resolved, out_dir);
  std::cout << resolved.size() << " trials (" << report.failures
            << " failed): rmse " << report.rmse_user << " m, median "
            << report.median_user_error << " m, mean classification error "
            << report.mean_cls_error * 100.0 << " %\n";
  return report.failures == static_cast<int>(resolved.size()) ? 1 : 0;
}

int cmd_bench(const std::string& scenario_path, int trials, std::uint64_t seed_base,
              const std::string& out_dir) {
  Scenario base = load_or_default(scenario_path);
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < trials; ++i) seeds.push_back(seed_base + i);

  struct Mode {
    const char* name;
    PlannerMode planner;
    EstimatorMode estimator;
  };
  const Mode modes[] = {
      {"optimized", PlannerMode::kOptimized, EstimatorMode::kFull},
      {"rss-only", PlannerMode::kOptimized, EstimatorMode::kRssOnly},
      {"static-bs-only", PlannerMode::kStaticBsOnly, EstimatorMode::kFull},
  };
  for (const Mode& mode : modes) {
    Scenario sc = base;
    sc.planner_mode = mode.planner;
    sc.estimator_mode = mode.estimator;
    if (mode.planner == PlannerMode::kStaticBsOnly && sc.bs_sites.size() == 3)
      sc.bs_sites.push_back({420.0, 420.0, 25.0});  // benchmark uses 4 static BSs
    BatchReport report = run_batch(sc, seeds);
    emit_results(sc, report, seeds, fs::path(out_dir) / mode.name);
    std::cout << mode.name << ": median " << report.median_user_error
              << " m, rmse " << report.rmse_user << " m\n";
  }
  return 0;
}

int cmd_replay(const std::string& summary_path, const std::string& out_dir,
               bool check) {
  std::ifstream in(summary_path);
  if (!in.good()) {
    std::cerr << "cannot open summary: " << summary_path << "\n";
    return 1;
  }
  json original;
  in >> original;
  Scenario sc = scenario_from_json(original.at("scenario"));
  const auto seeds = original.at("seeds").get<std::vector<std::uint64_t>>();
  BatchReport report = run_batch(sc, seeds);
  emit_results(sc, report, seeds, out_dir);
  if (check) {
    const json replayed = report_summary_json(sc, report, seeds);
    if (replayed.dump(2) != original.dump(2)) {
      std::cerr << "replay mismatch against " << summary_path << "\n";
      return 2;
    }
    std::cout << "replay matches " << summary_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UAV-aided user localization simulator and estimator"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir = "out", summary_path;
  std::uint64_t seed = 1, seed_base = 1;
  int trials = 20;
  std::vector<std::uint64_t> seeds;
  bool check = false;

  auto* run = app.add_subcommand("run", "run a single trial");
  run->add_option("--scenario", scenario_path, "scenario JSON file");
  run->add_option("--seed", seed, "trial seed");
  run->add_option("--out", out_dir, "output directory");

  auto* batch = app.add_subcommand("batch", "run a Monte-Carlo batch");
  batch->add_option("--scenario", scenario_path, "scenario JSON file");
  batch->add_option("--seeds", seeds, "explicit seed list");
  batch->add_option("--trials", trials, "trial count when no seed list is given");
  batch->add_option("--seed-base", seed_base, "first seed when counting");
  batch->add_option("--out", out_dir, "output directory");

  auto* bench = app.add_subcommand("bench", "run the three benchmark modes");
  bench->add_option("--scenario", scenario_path, "scenario JSON file");
  bench->add_option("--trials", trials, "trials per mode");
  bench->add_option("--seed-base", seed_base, "first seed");
  bench->add_option("--out", out_dir, "output directory");

  auto* replay = app.add_subcommand("replay", "re-run from an emitted summary.json");
  replay->add_option("--summary", summary_path, "summary.json to replay")->required();
  replay->add_option("--out", out_dir, "output directory");
  replay->add_flag("--check", check, "verify the replayed summary matches");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(scenario_path, seed, out_dir);
    if (batch->parsed()) return cmd_batch(scenario_path, seeds, trials, seed_base, out_dir);
    if (bench->parsed()) return cmd_bench(scenario_path, trials, seed_base, out_dir);
    if (replay->parsed()) return cmd_replay(summary_path, out_dir, check);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
