#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "irrigation/agent.hpp"
#include "irrigation/env.hpp"

namespace irrigation {

enum class DecisionSource { kAgent, kEtBaseline, kSensorBaseline, kShieldFallback };

std::string_view to_string(DecisionSource source);

struct ControllerDecision {
  ActionVector action;
  DecisionSource source = DecisionSource::kAgent;
};

struct SensorControllerConfig {
  double lower_threshold = 4.96;  // start watering below this
  double upper_threshold = 6.97;  // fill target

  void validate(const SoilLevels& levels) const;
};

// Replaces the net loss observed today (ET minus rain), uniformly across
// regions.
ActionVector et_controller(const EnvState& state, double a_max);

// Per region: below the lower threshold, dose enough to reach the upper
// threshold under the assumed inflow coefficient c2; otherwise nothing.
// `c2_assumed` holds one value per region or a single shared value.
ActionVector sensor_controller(const EnvState& state,
                               const SensorControllerConfig& config,
                               std::span<const double> c2_assumed,
                               double a_max);

// Squashed network mean for the normalized state.
ActionVector drlic_controller(const PolicySnapshot& policy,
                              const EnvState& state);

class Controller {
 public:
  virtual ~Controller() = default;
  virtual ControllerDecision decide(const EnvState& state) = 0;
};

class EtController final : public Controller {
 public:
  explicit EtController(double a_max) : a_max_(a_max) {}
  ControllerDecision decide(const EnvState& state) override;

 private:
  double a_max_;
};

class SensorController final : public Controller {
 public:
  SensorController(SensorControllerConfig config, std::vector<double> c2,
                   double a_max)
      : config_(config), c2_(std::move(c2)), a_max_(a_max) {}
  ControllerDecision decide(const EnvState& state) override;

 private:
  SensorControllerConfig config_;
  std::vector<double> c2_;
  double a_max_;
};

class PolicyController final : public Controller {
 public:
  explicit PolicyController(std::shared_ptr<const PolicySnapshot> policy)
      : policy_(std::move(policy)) {}
  ControllerDecision decide(const EnvState& state) override;

 private:
  std::shared_ptr<const PolicySnapshot> policy_;
};

}  // namespace irrigation
