#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "irrigation/agent.hpp"
#include "irrigation/controllers.hpp"
#include "irrigation/env.hpp"
#include "irrigation/safety.hpp"
#include "irrigation/weather.hpp"

namespace irrigation {

enum class ShieldModelSource {
  kIdentified,  // fitted from a synthetic identification log per region
  kTrue,        // the environment's own noise-free dynamics
};

struct ShieldSettings {
  bool enabled = true;
  double detector_threshold = 0.0;
  DeficitAggregation aggregation = DeficitAggregation::kPositivePart;
  double margin = 0.12;
  double rain_credit = 0.0;
  bool top_up = true;
  ShieldModelSource model = ShieldModelSource::kIdentified;
  // Route training rollouts through the shield as well.
  bool train_in_loop = false;
};

struct IdentificationSettings {
  int days = 60;
  double observation_noise_std = 0.01;  // inches, applied to measured v
};

struct WeatherSettings {
  // Evaluation weather from a CSV log; synthesized when empty.
  std::string csv;
  int training_seasons = 8;
  ClimateParams climate{};
};

struct RunConfig {
  std::uint64_t seed = 7;
  std::string output_dir = "results";
  int season_days = 246;
  EnvConfig env{};
  WeatherSettings weather{};
  TrainerConfig trainer{};
  ShieldSettings shield{};
  IdentificationSettings identification{};
  SensorControllerConfig sensor{};
  std::vector<std::string> roster{"ET", "sensor", "DRLIC", "DRLIC_MAD",
                                  "DRLIC_noshield"};
  // Pretrained policy files; trained on demand when empty.
  std::string policy;
  std::string policy_mad;

  void validate() const;

  // The 15-day field-trial preset.
  static RunConfig field15();
};

// Strict parse: unknown keys are errors, missing keys keep defaults.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string dump_run_config(const RunConfig& config);

// FNV-1a over the canonical dump.
std::uint64_t config_hash(const RunConfig& config);

}  // namespace irrigation
