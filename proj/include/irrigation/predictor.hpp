#pragma once

#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace irrigation {

// Linear root-zone water balance:
//   v_next = c1 * v + c2 * (irrigation + rain) + c3 * et + b
// Predictions are clamped to [0, ceiling].
struct PredictorModel {
  static constexpr double kUnset = std::numeric_limits<double>::quiet_NaN();

  double c1 = kUnset;
  double c2 = kUnset;
  double c3 = kUnset;
  double b = kUnset;
  double r_squared = kUnset;
  double nrmse = kUnset;
  double ceiling = std::numeric_limits<double>::infinity();

  bool is_fitted() const;

  // Rows of the per-tree coefficient table identified on the almond testbed.
  static PredictorModel tree1() {
    return {0.973, 0.288, -0.103, 0.003, 0.982, 0.062};
  }
  static PredictorModel tree2() {
    return {0.937, 0.325, -0.121, 0.013, 0.985, 0.071};
  }

  PredictorModel with_ceiling(double c) const {
    PredictorModel m = *this;
    m.ceiling = c;
    return m;
  }
};

struct ObservationRow {
  double v_t = 0.0;
  double a_t = 0.0;
  double p_t = 0.0;
  double e_t = 0.0;
  double v_next = 0.0;
};

struct PlanStep {
  double irrigation = 0.0;
  double rain = 0.0;
  double et = 0.0;
};

struct FitDiagnostics {
  double r_squared = 0.0;
  double nrmse = 0.0;
};

// Minimum number of rows accepted by fit().
inline constexpr std::size_t kMinFitRows = 8;

double predict_next(const PredictorModel& model, double v_t, double a_t,
                    double p_t, double e_t);

// Ordinary least squares on (v_t, a_t + p_t, e_t, 1). Throws when there are
// fewer than kMinFitRows rows or a regressor is collinear with the others.
PredictorModel fit(std::span<const ObservationRow> rows);

// r_squared = 1 - SS_res / SS_tot; nrmse = RMSE / range(v_next).
FitDiagnostics diagnostics(const PredictorModel& model,
                           std::span<const ObservationRow> rows);

std::vector<double> rollout(const PredictorModel& model, double v_0,
                            std::span<const PlanStep> plan);

// Human-readable notes for coefficients outside the physically plausible
// ranges (0 < c1 <= 1, c2 >= 0, c3 <= 0). Empty when plausible.
std::vector<std::string> plausibility_warnings(const PredictorModel& model);

std::vector<ObservationRow> load_observations_csv(
    const std::filesystem::path& path);
void write_observations_csv(const std::filesystem::path& path,
                            std::span<const ObservationRow> rows);

}  // namespace irrigation
