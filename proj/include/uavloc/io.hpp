#pragma once

#include <filesystem>
#include <fstream>

#include "uavloc/harness.hpp"
#include "uavloc/mission.hpp"
#include "uavloc/serialize.hpp"

namespace uavloc {

// ---- mission record ----

inline void save_mission_record(const MissionRecord& rec,
                                const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = detail::open_out(dir / "mission_epochs.csv");
    out << "n,true_x,true_y,true_z,est_x,est_y,crb_trace\n";
    for (const auto& e : rec.epochs)
      out << e.n << "," << e.true_pos.x() << "," << e.true_pos.y() << ","
          << e.true_pos.z() << "," << e.est_pos.x() << "," << e.est_pos.y() << ","
          << e.crb_trace << "\n";
  }
  {
    auto out = detail::open_out(dir / "mission_users.csv");
    out << "n,k,est_x,est_y\n";
    for (const auto& e : rec.epochs)
      for (std::size_t k = 0; k < e.user_ests.size(); ++k)
        out << e.n << "," << k + 1 << "," << e.user_ests[k].x() << ","
            << e.user_ests[k].y() << "\n";
  }
  save_measurements(rec.measurements, dir / "measurements.csv");
  save_measurement_truth(rec.measurements, dir / "measurements_truth.csv");
  save_labels(rec.estimate.labels, rec.measurements, dir / "labels.csv");
  save_channel_params(rec.estimate.params, dir / "learned_channel.json");
}

// ---- batch results ----

inline json report_summary_json(const Scenario& sc, const BatchReport& report,
                                const std::vector<std::uint64_t>& seeds) {
  json j;
  j["scenario"] = scenario_to_json(sc);
  j["seeds"] = seeds;
  j["n_trials"] = report.trials.size();
  j["failures"] = report.failures;
  j["rmse_user_m"] = report.rmse_user;
  j["rmse_uav_m"] = report.rmse_uav;
  j["median_user_error_m"] = report.median_user_error;
  j["mean_cls_error"] = report.mean_cls_error;
  return j;
}

// Writes the per-trial table, the pooled error CDF, and a replayable summary
// that echoes the full configuration and seed list.
inline void emit_results(const Scenario& sc, const BatchReport& report,
                         const std::vector<std::uint64_t>& seeds,
                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = detail::open_out(dir / "trials.csv");
    out << "seed,failed,mean_user_error_m,uav_rmse_m,cls_error_rate,runtime_s\n";
    for (const auto& t : report.trials) {
      out << t.seed << "," << (t.failed ? 1 : 0) << ",";
      if (t.failed) out << ",,,";
      else
        out << t.mean_user_error << "," << t.uav_rmse << "," << t.cls_error_rate
            << "," << t.runtime_s;
      out << "\n";
    }
  }
  {
    auto out = detail::open_out(dir / "cdf.csv");
    out << "error_m,cum_fraction\n";
    const std::size_t n = report.pooled_errors.size();
    for (std::size_t i = 0; i < n; ++i)
      out << report.pooled_errors[i] << ","
          << static_cast<double>(i + 1) / static_cast<double>(n) << "\n";
  }
  detail::open_out(dir / "summary.json")
      << report_summary_json(sc, report, seeds).dump(2) << "\n";
}

}  // namespace uavloc
