#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "irrigation/controllers.hpp"
#include "irrigation/env.hpp"
#include "irrigation/predictor.hpp"

namespace irrigation {

enum class DeficitAggregation {
  kPositivePart,  // sum_i max(0, level - v_hat_i)
  kSigned,        // sum_i (level - v_hat_i)
};

struct ShieldConfig {
  // The shield's own learned dynamics: one model per region, or a single
  // model shared by every region.
  std::vector<PredictorModel> models;
  double detector_threshold = 0.0;
  bool enabled = true;
  DeficitAggregation aggregation = DeficitAggregation::kPositivePart;
  // Screening level is v_mad + margin.
  double margin = 0.0;
  // Fraction of the forecast rain credited when predicting. Rain can only
  // add water, so 0 screens against a dry tomorrow.
  double rain_credit = 1.0;
  // When the fallback action is itself predicted to miss the screening
  // level, raise each short region to the smallest predicted-safe amount.
  bool top_up = false;

  void validate() const;
  const PredictorModel& model_for(std::size_t region) const;
};

struct ShieldReport {
  std::vector<double> predicted_v_next;
  double deficit_sum = 0.0;
  bool triggered = false;
  std::optional<ActionVector> substituted_action;
};

struct ScreenResult {
  ActionVector action;
  ShieldReport report;
};

using FallbackFn = std::function<ActionVector(const EnvState&)>;

// Predicts tomorrow's water content under `proposed` with forecast weather;
// if the aggregated deficit exceeds the threshold, the fallback's action is
// returned instead. A disabled shield passes the proposal through but still
// reports the counterfactual deficit.
ScreenResult screen(const ShieldConfig& config, const SoilLevels& levels,
                    const EnvState& state, const ActionVector& proposed,
                    const FallbackFn& fallback, double a_max);

// Wraps a controller with the shield; the ET controller is the fallback.
class ShieldedController final : public Controller {
 public:
  ShieldedController(std::unique_ptr<Controller> inner, ShieldConfig config,
                     SoilLevels levels, double a_max);

  ControllerDecision decide(const EnvState& state) override;
  const ShieldReport& last_report() const { return last_; }

 private:
  std::unique_ptr<Controller> inner_;
  ShieldConfig config_;
  SoilLevels levels_;
  double a_max_;
  ShieldReport last_;
};

}  // namespace irrigation
