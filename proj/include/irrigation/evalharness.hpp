#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "irrigation/agent.hpp"
#include "irrigation/config.hpp"
#include "irrigation/controllers.hpp"
#include "irrigation/safety.hpp"

namespace irrigation {

struct DailyRecord {
  int day = 0;
  Date date{};
  double et = 0.0;
  double precip = 0.0;
  std::vector<double> action;  // executed, post-shield
  std::vector<double> v;       // end of day
  double water = 0.0;
  double reward = 0.0;
  double deficit_sum = 0.0;
  bool triggered = false;
  DecisionSource source = DecisionSource::kAgent;
};

struct ControllerResult {
  std::string name;
  double total_water = 0.0;
  int days_below_mad = 0;
  int days_above_fc = 0;
  int shield_trigger_days = 0;
  std::vector<DailyRecord> daily;

  std::vector<double> daily_water() const;
  // soil_series()[d][i]: end-of-day water content of region i on day d.
  std::vector<std::vector<double>> soil_series() const;
};

struct ExperimentResult {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<ControllerResult> entries;

  const ControllerResult& at(const std::string& name) const;
};

// Shared inputs of one paired comparison.
struct SeasonSetup {
  EnvConfig env;
  WeatherSeries weather;  // season_days + 1 records
  std::vector<double> v0;
  std::uint64_t noise_seed = 0;
  int season_days = 0;
};

struct Qos {
  int days_below_mad = 0;
  int days_above_fc = 0;
};

// Days on which any region ends below v_mad (resp. above v_fc).
Qos qos(const ControllerResult& result, const SoilLevels& levels);

// 100 * (baseline - candidate) / baseline.
double water_savings(const ControllerResult& candidate,
                     const ControllerResult& baseline);

ControllerResult run_season(const SeasonSetup& setup, Controller& controller,
                            const std::string& name);

// Synthetic evaluation season and initial state derived from the run seed.
SeasonSetup make_season(const RunConfig& config);

std::vector<WeatherSeries> make_training_corpus(const RunConfig& config);

// Logged data for fitting one region's dynamics. Irrigation alternates
// between dry-down phases (at most 0.1 a_max) and refill phases (0.5 to 1.0
// a_max) so water content sweeps from halfway between PWP and MAD up to FC.
// Measured water content carries Gaussian noise.
std::vector<ObservationRow> generate_identification_log(
    const PredictorModel& truth, const SoilLevels& levels,
    const std::vector<WeatherDay>& weather, int days, double a_max,
    double observation_noise_std, double process_noise_std,
    std::uint64_t seed);

// Identification log for one region of the configured env.
std::vector<ObservationRow> identification_log(const RunConfig& config,
                                               int region, int days);

// Shield models per region, identified or copied from the env.
std::vector<PredictorModel> shield_models(const RunConfig& config);

ShieldConfig make_shield_config(const RunConfig& config,
                                std::vector<PredictorModel> models);

// Trains a policy for `reward`, with the shield in the loop when the config
// asks for it.
TrainResult train_policy(const RunConfig& config, RewardKind reward,
                         const std::vector<PredictorModel>& models,
                         const ProgressFn& progress = {});

// Pushes the final-layer bias far negative so the mean action is ~0.
PolicySnapshot adversarial_policy(const PolicySnapshot& policy,
                                  double bias = -10.0);

struct RosterContext {
  const RunConfig* config = nullptr;
  std::shared_ptr<const PolicySnapshot> policy;      // full reward
  std::shared_ptr<const PolicySnapshot> policy_mad;  // mad-only reward
  std::vector<PredictorModel> models;                // shield models
};

std::unique_ptr<Controller> make_controller(const std::string& name,
                                            const RosterContext& ctx);

// Runs every roster entry on the same season, in parallel.
ExperimentResult run_roster(const SeasonSetup& setup,
                            const std::vector<std::string>& roster,
                            const RosterContext& ctx);

void write_daily_csv(const std::filesystem::path& path,
                     const ExperimentResult& result);
void write_summary_csv(const std::filesystem::path& path,
                       const ExperimentResult& result);
void write_manifest(const std::filesystem::path& path,
                    const RunConfig& config, const ExperimentResult& result);

// Inverse of write_daily_csv + write_summary_csv.
ExperimentResult load_results(const std::filesystem::path& daily_csv,
                              const std::filesystem::path& summary_csv);

// Columns: controller, water, savings_vs_ET, days_below_mad, trigger_days.
void print_comparison(std::ostream& out, const ExperimentResult& result);

}  // namespace irrigation
