#pragma once

#include <span>
#include <vector>

namespace irrigation {

// Static soil and root-zone description. Units: inches of water per foot of
// root for sigma_awc, inches or feet for depths, fractions otherwise.
struct SoilProfile {
  double sigma_awc = 2.4;
  double phi_pwp = 0.10;
  double root_depth_feet = 1.97;
  double root_depth_inches = 23.62;
  std::vector<double> sensor_depths{11.81, 11.81};
  double alpha = 0.5;

  // The almond testbed: two sensors covering 11.81 in each, MAD at 50%.
  static SoilProfile testbed() { return {}; }

  // Throws Error when an invariant is violated.
  void validate() const;
};

// Feet and inch depths are both quoted to two decimals, so they can disagree
// by up to 0.005 ft (0.06 in).
inline constexpr double kRootDepthTolerance = 0.06;

struct SoilLevels {
  double v_pwp = 0.0;
  double v_awc = 0.0;
  double v_fc = 0.0;
  double v_mad = 0.0;
};

struct MoistureReading {
  double raw = 0.0;
  double vwc = 0.0;
  double depth_span = 0.0;

  // Calibrates `raw` and attaches the depth span the sensor covers.
  static MoistureReading from_raw(double raw, double depth_span);
};

// Manufacturer linear calibration, clamped to [0, 1].
double calibrate_sensor(double raw);

// Inches of water in the root zone: sum of vwc_j * depth_span_j. Throws when
// the spans do not add up to the profile's root depth.
double soil_water_content(std::span<const MoistureReading> readings,
                          const SoilProfile& profile);

SoilLevels derive_levels(const SoilProfile& profile);

}  // namespace irrigation
