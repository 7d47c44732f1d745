#include "irrigation/safety.hpp"

#include <algorithm>

#include "irrigation/error.hpp"

namespace irrigation {

void ShieldConfig::validate() const {
  if (!(detector_threshold >= 0.0)) {
    throw Error("shield: detector_threshold must be >= 0");
  }
  if (!(margin >= 0.0)) throw Error("shield: margin must be >= 0");
  if (!(rain_credit >= 0.0 && rain_credit <= 1.0)) {
    throw Error("shield: rain_credit must lie in [0, 1]");
  }
}

const PredictorModel& ShieldConfig::model_for(std::size_t region) const {
  if (models.empty()) throw Error("shield: no predictor model configured");
  return models.size() == 1 ? models.front() : models.at(region);
}

ScreenResult screen(const ShieldConfig& config, const SoilLevels& levels,
                    const EnvState& state, const ActionVector& proposed,
                    const FallbackFn& fallback, double a_max) {
  config.validate();
  const std::size_t n = state.v.size();
  if (proposed.size() != n) throw Error("shield: action has wrong size");
  if (config.models.size() != 1 && config.models.size() != n) {
    throw Error("shield: need one model per region or one shared model");
  }
  for (const auto& m : config.models) {
    if (!m.is_fitted()) throw Error("shield: predictor model is not fitted");
  }

  const double level = levels.v_mad + config.margin;
  const double rain = config.rain_credit * state.today.forecast_precip_next;
  const double et = state.today.predicted_et_next;

  ScreenResult out{proposed, {}};
  ShieldReport& r = out.report;
  r.predicted_v_next.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    r.predicted_v_next[i] = predict_next(config.model_for(i), state.v[i],
                                         proposed.amounts[i], rain, et);
    const double gap = level - r.predicted_v_next[i];
    r.deficit_sum += config.aggregation == DeficitAggregation::kSigned
                         ? gap
                         : std::max(0.0, gap);
  }
  r.triggered = r.deficit_sum > config.detector_threshold;
  if (!config.enabled || !r.triggered) {
    r.triggered = config.enabled && r.triggered;
    return out;
  }
  if (!fallback) throw Error("shield: no fallback controller");

  ActionVector substitute = fallback(state);
  if (substitute.size() != n) throw Error("shield: fallback has wrong size");
  if (config.top_up) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto& m = config.model_for(i);
      const double predicted =
          predict_next(m, state.v[i], substitute.amounts[i], rain, et);
      if (predicted < level && m.c2 > 0.0) {
        substitute.amounts[i] = std::min(
            a_max, substitute.amounts[i] + (level - predicted) / m.c2);
      }
    }
  }
  r.substituted_action = substitute;
  out.action = std::move(substitute);
  return out;
}

ShieldedController::ShieldedController(std::unique_ptr<Controller> inner,
                                       ShieldConfig config, SoilLevels levels,
                                       double a_max)
    : inner_(std::move(inner)), config_(std::move(config)), levels_(levels),
      a_max_(a_max) {
  if (!inner_) throw Error("shielded controller: no inner controller");
  config_.validate();
}

ControllerDecision ShieldedController::decide(const EnvState& state) {
  const ControllerDecision proposal = inner_->decide(state);
  const double a_max = a_max_;
  ScreenResult res = screen(
      config_, levels_, state, proposal.action,
      [a_max](const EnvState& s) { return et_controller(s, a_max); }, a_max);
  last_ = res.report;
  if (res.report.triggered) {
    return {std::move(res.action), DecisionSource::kShieldFallback};
  }
  return {std::move(res.action), proposal.source};
}

}  // namespace irrigation
