#include "irrigation/hydrology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "irrigation/error.hpp"

namespace irrigation {

namespace {

constexpr double kCalibrationSlope = 9.92e-4;
constexpr double kCalibrationOffset = 0.45;
constexpr double kSpanTolerance = 1e-6;

}  // namespace

void SoilProfile::validate() const {
  if (!(sigma_awc > 0.0)) throw Error("soil profile: sigma_awc must be > 0");
  if (!(phi_pwp > 0.0 && phi_pwp < 1.0)) {
    throw Error("soil profile: phi_pwp must lie in (0, 1)");
  }
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw Error("soil profile: alpha must lie in (0, 1]");
  }
  if (!(root_depth_feet > 0.0)) {
    throw Error("soil profile: root depth must be > 0");
  }
  if (std::abs(root_depth_inches - 12.0 * root_depth_feet) >
      kRootDepthTolerance) {
    std::ostringstream msg;
    msg << "soil profile: root_depth_inches " << root_depth_inches
        << " inconsistent with root_depth_feet " << root_depth_feet;
    throw Error(msg.str());
  }
  if (sensor_depths.empty()) {
    throw Error("soil profile: at least one sensor depth is required");
  }
  for (double d : sensor_depths) {
    if (!(d > 0.0)) throw Error("soil profile: sensor depths must be > 0");
  }
  const double total =
      std::accumulate(sensor_depths.begin(), sensor_depths.end(), 0.0);
  if (std::abs(total - root_depth_inches) > kSpanTolerance) {
    std::ostringstream msg;
    msg << "soil profile: sensor depths sum to " << total
        << " in, root zone is " << root_depth_inches << " in";
    throw Error(msg.str());
  }
}

double calibrate_sensor(double raw) {
  return std::clamp(kCalibrationSlope * raw - kCalibrationOffset, 0.0, 1.0);
}

MoistureReading MoistureReading::from_raw(double raw, double depth_span) {
  return MoistureReading{raw, calibrate_sensor(raw), depth_span};
}

double soil_water_content(std::span<const MoistureReading> readings,
                          const SoilProfile& profile) {
  if (readings.empty()) throw Error("soil water content: no readings");
  double spans = 0.0;
  double water = 0.0;
  for (const auto& r : readings) {
    spans += r.depth_span;
    water += r.vwc * r.depth_span;
  }
  if (std::abs(spans - profile.root_depth_inches) > kSpanTolerance) {
    std::ostringstream msg;
    msg << "soil water content: sensor spans cover " << spans
        << " in but the root zone is " << profile.root_depth_inches << " in";
    throw Error(msg.str());
  }
  return water;
}

SoilLevels derive_levels(const SoilProfile& profile) {
  SoilLevels levels;
  levels.v_pwp = profile.phi_pwp * profile.root_depth_inches;
  levels.v_awc = profile.sigma_awc * profile.root_depth_feet;
  levels.v_fc = levels.v_awc + levels.v_pwp;
  levels.v_mad = profile.alpha * levels.v_awc + levels.v_pwp;
  return levels;
}

}  // namespace irrigation
