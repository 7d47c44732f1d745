#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "irrigation/hydrology.hpp"
#include "irrigation/predictor.hpp"
#include "irrigation/random.hpp"
#include "irrigation/weather.hpp"

namespace irrigation {

enum class RewardKind { kFull, kMadOnly };

// Penalty weights of the three-branch reward. Levels are filled in by the
// environment from its soil profile.
struct RewardParams {
  double lambda1 = 3.0;
  double mu1 = 8.0;
  double mu2 = 3.0;
  double lambda3 = 10.0;
  double mu3 = 1.0;
  SoilLevels levels{};

  void validate() const;
};

struct ActionVector {
  std::vector<double> amounts;  // inches per region

  std::size_t size() const { return amounts.size(); }
  double total() const;
};

struct EnvConfig {
  int n_regions = 2;
  double irrigation_rate = 0.018;  // inches per minute
  double a_max = 3.0;              // inches per day
  int episode_length = 30;
  RewardParams reward_params{};
  RewardKind reward_kind = RewardKind::kFull;
  SoilProfile profile = SoilProfile::testbed();
  std::vector<PredictorModel> dynamics{PredictorModel::tree1(),
                                       PredictorModel::tree2()};
  double process_noise_std = 0.01;
  // Predictions are capped at v_fc + surplus_headroom.
  double surplus_headroom = 1.0;

  void validate() const;
};

struct EnvState {
  std::vector<double> v;  // soil water content per region, inches
  WeatherDay today{};     // observed day plus forecast for tomorrow
  unsigned month = 1;
  int day_in_episode = 0;
};

struct Transition {
  EnvState state;
  ActionVector action;
  double reward = 0.0;
  EnvState next_state;
};

// Valve open time in minutes per region.
std::vector<double> action_to_duration(const ActionVector& action,
                                       double rate);

double reward(std::span<const double> v_next, const ActionVector& action,
              const RewardParams& params);
// Ablation: only the deficit branch contributes.
double reward_mad_only(std::span<const double> v_next,
                       const ActionVector& action, const RewardParams& params);

// Observation layout: [v (N), et, precip, t_max, t_avg, t_min, h_max, h_avg,
// h_min, solar, wind, predicted_et_next, forecast_precip_next,
// month one-hot (12)]. Only the first N + 12 entries are normalized.
inline constexpr std::size_t kWeatherFeatures = 12;
inline constexpr std::size_t kMonthFeatures = 12;

inline std::size_t continuous_size(std::size_t n_regions) {
  return n_regions + kWeatherFeatures;
}
inline std::size_t observation_size(std::size_t n_regions) {
  return continuous_size(n_regions) + kMonthFeatures;
}

std::vector<double> raw_features(const EnvState& state);

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> std;  // zero entries are centered only

  static NormalizationStats identity(std::size_t n_regions);
  // Componentwise mean and population std of raw feature rows.
  static NormalizationStats from_samples(
      std::span<const std::vector<double>> rows, std::size_t n_regions);
};

std::vector<double> normalize(const EnvState& state,
                              const NormalizationStats& stats);
std::vector<double> normalize_features(std::span<const double> raw,
                                       const NormalizationStats& stats);
std::vector<double> denormalize(std::span<const double> obs,
                                const NormalizationStats& stats);

using WeatherSeries = std::shared_ptr<const std::vector<WeatherDay>>;

// Daily irrigation MDP. Each region's soil water evolves through its own
// water-balance model driven by the actual weather of the following day.
class IrrigationEnv {
 public:
  explicit IrrigationEnv(EnvConfig config);

  // Draws each region's initial water content uniformly in [v_mad, v_fc].
  // Requires episode_length + 1 weather records from `start`.
  const EnvState& reset(std::uint64_t seed, WeatherSeries weather,
                        std::size_t start = 0);
  const EnvState& reset_to(std::vector<double> v0, std::uint64_t seed,
                           WeatherSeries weather, std::size_t start = 0);

  Transition step(const ActionVector& action);

  const EnvState& state() const { return state_; }
  bool done() const { return state_.day_in_episode >= config_.episode_length; }
  const EnvConfig& config() const { return config_; }
  const SoilLevels& levels() const { return config_.reward_params.levels; }
  std::size_t n_regions() const { return std::size_t(config_.n_regions); }

  double score(std::span<const double> v_next,
               const ActionVector& action) const;
  void validate_action(const ActionVector& action) const;

 private:
  EnvState make_state(std::vector<double> v) const;

  EnvConfig config_;
  WeatherSeries weather_;
  std::size_t start_ = 0;
  Rng noise_rng_;
  EnvState state_;
};

}  // namespace irrigation
