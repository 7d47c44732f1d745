#include "irrigation/predictor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "irrigation/error.hpp"

namespace irrigation {

namespace {

constexpr const char* kRegressorNames[] = {"v_t", "a_t+p_t", "e_t",
                                           "intercept"};
constexpr const char* kObservationColumns[] = {"v_t", "a_t", "p_t", "e_t",
                                               "v_next"};

// Relative residual of each column after projecting it onto the others; a
// value near zero marks the column that makes the design rank-deficient.
int most_degenerate_column(const Eigen::MatrixXd& x) {
  int worst = 0;
  double worst_ratio = std::numeric_limits<double>::infinity();
  for (int j = 0; j < x.cols(); ++j) {
    Eigen::MatrixXd others(x.rows(), x.cols() - 1);
    for (int k = 0, c = 0; k < x.cols(); ++k) {
      if (k != j) others.col(c++) = x.col(k);
    }
    const Eigen::VectorXd col = x.col(j);
    const double norm = col.norm();
    double ratio = 0.0;
    if (norm > 0.0) {
      Eigen::VectorXd coef =
          others.completeOrthogonalDecomposition().solve(col);
      ratio = (col - others * coef).norm() / norm;
    }
    if (ratio < worst_ratio) {
      worst_ratio = ratio;
      worst = j;
    }
  }
  return worst;
}

}  // namespace

bool PredictorModel::is_fitted() const {
  return std::isfinite(c1) && std::isfinite(c2) && std::isfinite(c3) &&
         std::isfinite(b);
}

double predict_next(const PredictorModel& model, double v_t, double a_t,
                    double p_t, double e_t) {
  const double raw =
      model.c1 * v_t + model.c2 * (a_t + p_t) + model.c3 * e_t + model.b;
  return std::clamp(raw, 0.0, model.ceiling);
}

PredictorModel fit(std::span<const ObservationRow> rows) {
  if (rows.size() < kMinFitRows) {
    throw Error("predictor fit: need at least " + std::to_string(kMinFitRows) +
                " observation rows, got " + std::to_string(rows.size()));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd x(n, 4);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    x(i, 0) = r.v_t;
    x(i, 1) = r.a_t + r.p_t;
    x(i, 2) = r.e_t;
    x(i, 3) = 1.0;
    y(i) = r.v_next;
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols()) {
    throw Error(std::string("predictor fit: regressors are rank-deficient; "
                            "degenerate column: ") +
                kRegressorNames[most_degenerate_column(x)]);
  }
  const Eigen::VectorXd beta = qr.solve(y);

  PredictorModel model;
  model.c1 = beta(0);
  model.c2 = beta(1);
  model.c3 = beta(2);
  model.b = beta(3);
  try {
    const FitDiagnostics d = diagnostics(model, rows);
    model.r_squared = d.r_squared;
    model.nrmse = d.nrmse;
  } catch (const Error&) {
    // Constant target: coefficients are valid, diagnostics undefined.
  }
  return model;
}

FitDiagnostics diagnostics(const PredictorModel& model,
                           std::span<const ObservationRow> rows) {
  if (rows.empty()) throw Error("predictor diagnostics: no rows");
  double mean = 0.0;
  double lo = rows.front().v_next;
  double hi = lo;
  for (const auto& r : rows) {
    mean += r.v_next;
    lo = std::min(lo, r.v_next);
    hi = std::max(hi, r.v_next);
  }
  mean /= static_cast<double>(rows.size());
  if (!(hi > lo)) {
    throw Error("predictor diagnostics: v_next is constant; R^2 and NRMSE "
                "are undefined");
  }
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (const auto& r : rows) {
    const double e = r.v_next - predict_next(model, r.v_t, r.a_t, r.p_t, r.e_t);
    ss_res += e * e;
    ss_tot += (r.v_next - mean) * (r.v_next - mean);
  }
  FitDiagnostics d;
  d.r_squared = 1.0 - ss_res / ss_tot;
  d.nrmse = std::sqrt(ss_res / static_cast<double>(rows.size())) / (hi - lo);
  return d;
}

std::vector<double> rollout(const PredictorModel& model, double v_0,
                            std::span<const PlanStep> plan) {
  if (plan.empty()) throw Error("predictor rollout: empty plan");
  std::vector<double> out;
  out.reserve(plan.size());
  double v = v_0;
  for (const auto& step : plan) {
    v = predict_next(model, v, step.irrigation, step.rain, step.et);
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> plausibility_warnings(const PredictorModel& model) {
  std::vector<std::string> out;
  if (!(model.c1 > 0.0 && model.c1 <= 1.0)) {
    out.push_back("c1 outside (0, 1]: stored water would vanish or amplify");
  }
  if (!(model.c2 >= 0.0)) out.push_back("c2 < 0: inflow removes water");
  if (!(model.c3 <= 0.0)) out.push_back("c3 > 0: evapotranspiration adds water");
  return out;
}

std::vector<ObservationRow> load_observations_csv(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open observation csv: " + path.string());
  std::vector<ObservationRow> rows;
  std::string line;
  std::size_t row = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::istringstream ls(line);
    for (std::string f; std::getline(ls, f, ',');) fields.push_back(f);
    if (!header_seen) {
      header_seen = true;
      bool ok = fields.size() == std::size(kObservationColumns);
      for (std::size_t c = 0; ok && c < fields.size(); ++c) {
        ok = fields[c] == kObservationColumns[c];
      }
      if (!ok) {
        throw Error("observation csv: header must be v_t,a_t,p_t,e_t,v_next");
      }
      continue;
    }
    if (fields.size() != std::size(kObservationColumns)) {
      throw Error("observation csv row " + std::to_string(row) +
                  ": expected 5 fields");
    }
    double values[5];
    for (std::size_t c = 0; c < 5; ++c) {
      try {
        std::size_t used = 0;
        values[c] = std::stod(fields[c], &used);
        if (used != fields[c].size()) throw std::exception();
      } catch (const std::exception&) {
        throw Error("observation csv row " + std::to_string(row) +
                    ", column '" + kObservationColumns[c] +
                    "': not a number");
      }
      if (values[c] < 0.0) {
        throw Error("observation csv row " + std::to_string(row) +
                    ", column '" + kObservationColumns[c] + "': negative");
      }
    }
    rows.push_back({values[0], values[1], values[2], values[3], values[4]});
  }
  return rows;
}

void write_observations_csv(const std::filesystem::path& path,
                            std::span<const ObservationRow> rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write observation csv: " + path.string());
  out << "v_t,a_t,p_t,e_t,v_next\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.v_t << ',' << r.a_t << ',' << r.p_t << ',' << r.e_t << ','
        << r.v_next << '\n';
  }
}

}  // namespace irrigation
