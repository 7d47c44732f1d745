#include "irrigation/controllers.hpp"

#include <algorithm>

#include "irrigation/error.hpp"

namespace irrigation {

std::string_view to_string(DecisionSource source) {
  switch (source) {
    case DecisionSource::kAgent: return "agent";
    case DecisionSource::kEtBaseline: return "et_baseline";
    case DecisionSource::kSensorBaseline: return "sensor_baseline";
    case DecisionSource::kShieldFallback: return "shield_fallback";
  }
  return "unknown";
}

void SensorControllerConfig::validate(const SoilLevels& levels) const {
  if (!(levels.v_mad <= lower_threshold && lower_threshold < upper_threshold &&
        upper_threshold <= levels.v_fc)) {
    throw Error("sensor controller: thresholds must satisfy "
                "v_mad <= lower < upper <= v_fc");
  }
}

ActionVector et_controller(const EnvState& state, double a_max) {
  const double net = state.today.et - state.today.precip;
  const double amount = std::clamp(net, 0.0, a_max);
  return ActionVector{std::vector<double>(state.v.size(), amount)};
}

ActionVector sensor_controller(const EnvState& state,
                               const SensorControllerConfig& config,
                               std::span<const double> c2_assumed,
                               double a_max) {
  const std::size_t n = state.v.size();
  if (c2_assumed.size() != 1 && c2_assumed.size() != n) {
    throw Error("sensor controller: need one c2 per region or one shared");
  }
  ActionVector out{std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    const double v = state.v[i];
    if (!(v < config.lower_threshold)) continue;
    const double c2 = c2_assumed.size() == 1 ? c2_assumed[0] : c2_assumed[i];
    out.amounts[i] =
        c2 > 0.0 ? std::min(a_max, (config.upper_threshold - v) / c2) : a_max;
  }
  return out;
}

ActionVector drlic_controller(const PolicySnapshot& policy,
                              const EnvState& state) {
  if (state.v.size() != policy.n_regions()) {
    throw Error("drlic controller: policy trained for " +
                std::to_string(policy.n_regions()) + " regions, state has " +
                std::to_string(state.v.size()));
  }
  return deterministic_action(policy, normalize(state, policy.stats));
}

ControllerDecision EtController::decide(const EnvState& state) {
  return {et_controller(state, a_max_), DecisionSource::kEtBaseline};
}

ControllerDecision SensorController::decide(const EnvState& state) {
  return {sensor_controller(state, config_, c2_, a_max_),
          DecisionSource::kSensorBaseline};
}

ControllerDecision PolicyController::decide(const EnvState& state) {
  return {drlic_controller(*policy_, state), DecisionSource::kAgent};
}

}  // namespace irrigation
