#include "irrigation/env.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "irrigation/error.hpp"

namespace irrigation {

namespace {

constexpr double kActionTolerance = 1e-12;

void check_sizes(std::span<const double> v_next, const ActionVector& action) {
  if (v_next.size() != action.size()) {
    throw Error("reward: water content and action sizes differ");
  }
}

}  // namespace

void RewardParams::validate() const {
  for (double w : {lambda1, mu1, mu2, lambda3, mu3}) {
    if (!(w >= 0.0)) throw Error("reward weights must be >= 0");
  }
}

double ActionVector::total() const {
  return std::accumulate(amounts.begin(), amounts.end(), 0.0);
}

void EnvConfig::validate() const {
  if (n_regions < 1) throw Error("env: n_regions must be >= 1");
  if (!(irrigation_rate > 0.0)) throw Error("env: irrigation_rate must be > 0");
  if (!(a_max > 0.0)) throw Error("env: a_max must be > 0");
  if (episode_length < 1) throw Error("env: episode_length must be >= 1");
  if (dynamics.size() != std::size_t(n_regions)) {
    throw Error("env: need one dynamics model per region");
  }
  for (const auto& m : dynamics) {
    if (!m.is_fitted()) throw Error("env: dynamics model has no coefficients");
  }
  if (!(process_noise_std >= 0.0)) {
    throw Error("env: process_noise_std must be >= 0");
  }
  if (!(surplus_headroom >= 0.0)) {
    throw Error("env: surplus_headroom must be >= 0");
  }
  reward_params.validate();
  profile.validate();
}

std::vector<double> action_to_duration(const ActionVector& action,
                                       double rate) {
  if (!(rate > 0.0)) throw Error("irrigation rate must be > 0");
  std::vector<double> minutes;
  minutes.reserve(action.size());
  for (double a : action.amounts) minutes.push_back(a / rate);
  return minutes;
}

double reward(std::span<const double> v_next, const ActionVector& action,
              const RewardParams& params) {
  check_sizes(v_next, action);
  const auto& lv = params.levels;
  double penalty = 0.0;
  for (std::size_t i = 0; i < v_next.size(); ++i) {
    const double v = v_next[i];
    const double a = action.amounts[i];
    if (v > lv.v_fc) {
      penalty += params.lambda1 * (v - lv.v_fc) + params.mu1 * a;
    } else if (v >= lv.v_mad) {
      penalty += params.mu2 * a;
    } else {
      penalty += params.lambda3 * (lv.v_mad - v) + params.mu3 * a;
    }
  }
  return -penalty;
}

double reward_mad_only(std::span<const double> v_next,
                       const ActionVector& action, const RewardParams& params) {
  check_sizes(v_next, action);
  double penalty = 0.0;
  for (std::size_t i = 0; i < v_next.size(); ++i) {
    if (v_next[i] < params.levels.v_mad) {
      penalty += params.lambda3 * (params.levels.v_mad - v_next[i]) +
                 params.mu3 * action.amounts[i];
    }
  }
  return -penalty;
}

std::vector<double> raw_features(const EnvState& state) {
  std::vector<double> f;
  f.reserve(observation_size(state.v.size()));
  f.insert(f.end(), state.v.begin(), state.v.end());
  const WeatherDay& w = state.today;
  for (double x : {w.et, w.precip, w.t_max, w.t_avg, w.t_min, w.h_max,
                   w.h_avg, w.h_min, w.solar, w.wind, w.predicted_et_next,
                   w.forecast_precip_next}) {
    f.push_back(x);
  }
  for (unsigned m = 1; m <= kMonthFeatures; ++m) {
    f.push_back(state.month == m ? 1.0 : 0.0);
  }
  return f;
}

NormalizationStats NormalizationStats::identity(std::size_t n_regions) {
  const std::size_t n = continuous_size(n_regions);
  return {std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
}

NormalizationStats NormalizationStats::from_samples(
    std::span<const std::vector<double>> rows, std::size_t n_regions) {
  if (rows.empty()) throw Error("normalization: no samples");
  const std::size_t n = continuous_size(n_regions);
  NormalizationStats s{std::vector<double>(n, 0.0),
                       std::vector<double>(n, 0.0)};
  for (const auto& r : rows) {
    if (r.size() != observation_size(n_regions)) {
      throw Error("normalization: sample has wrong dimension");
    }
    for (std::size_t k = 0; k < n; ++k) s.mean[k] += r[k];
  }
  for (auto& m : s.mean) m /= static_cast<double>(rows.size());
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < n; ++k) {
      s.std[k] += (r[k] - s.mean[k]) * (r[k] - s.mean[k]);
    }
  }
  for (auto& sd : s.std) {
    sd = std::sqrt(sd / static_cast<double>(rows.size()));
    if (sd < 1e-12) sd = 0.0;
  }
  return s;
}

std::vector<double> normalize_features(std::span<const double> raw,
                                       const NormalizationStats& stats) {
  const std::size_t n = stats.mean.size();
  if (stats.std.size() != n || raw.size() != n + kMonthFeatures) {
    throw Error("normalize: dimension mismatch between state and stats");
  }
  std::vector<double> out(raw.begin(), raw.end());
  for (std::size_t k = 0; k < n; ++k) {
    out[k] -= stats.mean[k];
    if (stats.std[k] > 0.0) out[k] /= stats.std[k];
  }
  return out;
}

std::vector<double> normalize(const EnvState& state,
                              const NormalizationStats& stats) {
  const auto raw = raw_features(state);
  return normalize_features(raw, stats);
}

std::vector<double> denormalize(std::span<const double> obs,
                                const NormalizationStats& stats) {
  const std::size_t n = stats.mean.size();
  if (stats.std.size() != n || obs.size() != n + kMonthFeatures) {
    throw Error("denormalize: dimension mismatch between vector and stats");
  }
  std::vector<double> out(obs.begin(), obs.end());
  for (std::size_t k = 0; k < n; ++k) {
    if (stats.std[k] > 0.0) out[k] *= stats.std[k];
    out[k] += stats.mean[k];
  }
  return out;
}

IrrigationEnv::IrrigationEnv(EnvConfig config) : config_(std::move(config)) {
  config_.validate();
  config_.reward_params.levels = derive_levels(config_.profile);
  const double ceiling =
      config_.reward_params.levels.v_fc + config_.surplus_headroom;
  for (auto& m : config_.dynamics) m = m.with_ceiling(ceiling);
}

const EnvState& IrrigationEnv::reset(std::uint64_t seed, WeatherSeries weather,
                                     std::size_t start) {
  Rng rng(derive_seed(seed, {11}));
  const auto& lv = levels();
  std::uniform_real_distribution<double> band(lv.v_mad, lv.v_fc);
  std::vector<double> v0(n_regions());
  for (auto& v : v0) v = lv.v_mad < lv.v_fc ? band(rng) : lv.v_mad;
  return reset_to(std::move(v0), seed, std::move(weather), start);
}

const EnvState& IrrigationEnv::reset_to(std::vector<double> v0,
                                        std::uint64_t seed,
                                        WeatherSeries weather,
                                        std::size_t start) {
  if (!weather) throw Error("env reset: no weather");
  if (v0.size() != n_regions()) {
    throw Error("env reset: initial state has wrong region count");
  }
  const std::size_t needed = std::size_t(config_.episode_length) + 1;
  if (start > weather->size() || weather->size() - start < needed) {
    std::ostringstream msg;
    msg << "env reset: episode of " << config_.episode_length
        << " days needs " << needed << " weather records from the start day, "
        << "have " << (start < weather->size() ? weather->size() - start : 0);
    throw Error(msg.str());
  }
  weather_ = std::move(weather);
  start_ = start;
  noise_rng_.seed(derive_seed(seed, {12}));
  state_ = make_state(std::move(v0));
  return state_;
}

EnvState IrrigationEnv::make_state(std::vector<double> v) const {
  EnvState s;
  s.v = std::move(v);
  s.day_in_episode = 0;
  s.today = (*weather_)[start_];
  s.month = s.today.month();
  return s;
}

void IrrigationEnv::validate_action(const ActionVector& action) const {
  if (action.size() != n_regions()) {
    throw Error("env step: action has wrong region count");
  }
  for (double a : action.amounts) {
    if (!(a >= -kActionTolerance && a <= config_.a_max + kActionTolerance)) {
      std::ostringstream msg;
      msg << "env step: action " << a << " outside [0, " << config_.a_max
          << "]";
      throw Error(msg.str());
    }
  }
}

double IrrigationEnv::score(std::span<const double> v_next,
                            const ActionVector& action) const {
  return config_.reward_kind == RewardKind::kFull
             ? reward(v_next, action, config_.reward_params)
             : reward_mad_only(v_next, action, config_.reward_params);
}

Transition IrrigationEnv::step(const ActionVector& action) {
  if (!weather_) throw Error("env step: reset() has not been called");
  if (done()) throw Error("env step: episode is exhausted");
  validate_action(action);

  const std::size_t tomorrow = start_ + std::size_t(state_.day_in_episode) + 1;
  const WeatherDay& next_day = (*weather_)[tomorrow];
  std::normal_distribution<double> noise(0.0, 1.0);

  Transition tr;
  tr.state = state_;
  tr.action = action;
  tr.next_state.v.resize(n_regions());
  for (std::size_t i = 0; i < n_regions(); ++i) {
    const auto& model = config_.dynamics[i];
    double v = predict_next(model, state_.v[i], action.amounts[i],
                            next_day.precip, next_day.et);
    if (config_.process_noise_std > 0.0) {
      v = std::clamp(v + config_.process_noise_std * noise(noise_rng_), 0.0,
                     model.ceiling);
    }
    tr.next_state.v[i] = v;
  }
  tr.reward = score(tr.next_state.v, action);
  tr.next_state.today = next_day;
  tr.next_state.month = next_day.month();
  tr.next_state.day_in_episode = state_.day_in_episode + 1;
  state_ = tr.next_state;
  return tr;
}

}  // namespace irrigation
