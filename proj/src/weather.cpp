#include "irrigation/weather.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "csv.hpp"
#include "irrigation/error.hpp"
#include "irrigation/random.hpp"

namespace irrigation {

namespace {

constexpr const char* kColumns[] = {"date",  "et",    "precip", "t_max",
                                    "t_avg", "t_min", "h_max",  "h_avg",
                                    "h_min", "solar", "wind"};
constexpr std::size_t kColumnCount = std::size(kColumns);

int day_of_year(const Date& date) {
  using namespace std::chrono;
  const sys_days jan1{date.year() / January / 1};
  return static_cast<int>((sys_days{date} - jan1).count()) + 1;
}

}  // namespace

Date parse_iso_date(std::string_view text) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  char tail = 0;
  const std::string s(text);
  if (std::sscanf(s.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3) {
    throw Error("invalid ISO-8601 date: '" + s + "'");
  }
  Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok()) throw Error("invalid calendar date: '" + s + "'");
  return date;
}

std::string format_iso_date(const Date& date) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", int(date.year()),
                unsigned(date.month()), unsigned(date.day()));
  return buf;
}

Date add_days(const Date& date, int days) {
  return Date{std::chrono::sys_days{date} + std::chrono::days{days}};
}

void WeatherDay::validate() const {
  auto fail = [this](const char* what) {
    throw Error("weather " + format_iso_date(date) + ": " + what);
  };
  if (!date.ok()) fail("invalid date");
  if (!(t_min <= t_avg && t_avg <= t_max)) fail("requires t_min <= t_avg <= t_max");
  for (double h : {h_max, h_avg, h_min}) {
    if (!(h >= 0.0 && h <= 100.0)) fail("humidity outside [0, 100]");
  }
  if (!(et >= 0.0)) fail("et must be >= 0");
  if (!(precip >= 0.0)) fail("precip must be >= 0");
  if (!(predicted_et_next >= 0.0)) fail("predicted_et_next must be >= 0");
  if (!(forecast_precip_next >= 0.0)) fail("forecast_precip_next must be >= 0");
}

void EtModelParams::validate() const {
  if (!(gamma_c > 0.0 && ra > 0.0 && td >= 0.0)) {
    throw Error("ET model: requires gamma_c > 0, ra > 0, td >= 0");
  }
}

double hargreaves_et(const EtModelParams& params, double t_avg_c) {
  const double offset = t_avg_c + 17.8;
  if (offset <= 0.0) return 0.0;
  return params.gamma_c * params.ra * std::sqrt(params.td) * offset;
}

double ClimateParams::rain_probability(const Date& date) const {
  const double phase =
      2.0 * std::numbers::pi * (day_of_year(date) - 15) / 365.0;
  return precip_probability * 0.5 * (1.0 + std::cos(phase));
}

Forecast synthesize_forecast(const WeatherDay& actual_next,
                             const ForecastNoise& noise, std::uint64_t seed,
                             double rain_probability) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Forecast f;
  double et_sample = 0.0;
  if (noise.et_std > 0.0) {
    et_sample = std::normal_distribution<double>(0.0, noise.et_std)(rng);
  }
  f.et = apply_et_noise(actual_next.et, et_sample);

  const double u = unit(rng);
  if (actual_next.precip > 0.0) {
    if (u < noise.precip_miss_rate) {
      f.precip = 0.0;
    } else {
      double scale = 1.0;
      if (noise.precip_magnitude_std > 0.0) {
        scale += std::normal_distribution<double>(
            0.0, noise.precip_magnitude_std)(rng);
      }
      f.precip = std::max(0.0, actual_next.precip * scale);
    }
  } else if (u < noise.precip_false_alarm_rate * rain_probability &&
             noise.false_alarm_mean > 0.0) {
    f.precip = std::exponential_distribution<double>(
        1.0 / noise.false_alarm_mean)(rng);
  }
  return f;
}

std::vector<WeatherDay> synthesize_season(std::uint64_t seed, int days,
                                          const ClimateParams& climate) {
  if (days < 1) throw Error("synthesize_season: days must be >= 1");
  climate.et_model.validate();
  Rng rng(derive_seed(seed, {1}));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const Date start{std::chrono::year{climate.start_year},
                   std::chrono::month{climate.start_month},
                   std::chrono::day{climate.start_day}};
  if (!start.ok()) throw Error("synthesize_season: invalid start date");

  // One extra day supplies the forecast source for the last record.
  std::vector<WeatherDay> out(static_cast<std::size_t>(days) + 1);
  for (int i = 0; i <= days; ++i) {
    WeatherDay& w = out[static_cast<std::size_t>(i)];
    w.date = add_days(start, i);
    const double phase = 2.0 * std::numbers::pi *
                         (day_of_year(w.date) - climate.peak_day_of_year) /
                         365.0;
    const double season = std::cos(phase);  // +1 at peak heat

    w.t_avg = climate.t_avg_mean_f + climate.t_avg_amplitude_f * season +
              climate.temp_noise_f * gauss(rng);
    const double half_range =
        0.5 * climate.diurnal_range_f * (0.75 + 0.25 * season) *
        (1.0 + 0.1 * gauss(rng));
    w.t_max = w.t_avg + std::abs(half_range);
    w.t_min = w.t_avg - std::abs(half_range);

    const bool rain = unit(rng) < climate.rain_probability(w.date);
    w.precip = rain ? std::exponential_distribution<double>(
                          1.0 / climate.precip_mean)(rng)
                    : 0.0;

    w.h_avg = std::clamp(climate.humidity_mean -
                             climate.humidity_amplitude * season +
                             5.0 * gauss(rng) + (rain ? 15.0 : 0.0),
                         5.0, 95.0);
    w.h_max = std::min(100.0, w.h_avg + 15.0 + 3.0 * std::abs(gauss(rng)));
    w.h_min = std::max(0.0, w.h_avg - 15.0 - 3.0 * std::abs(gauss(rng)));
    w.solar = std::max(50.0, climate.solar_mean +
                                 climate.solar_amplitude * season +
                                 30.0 * gauss(rng)) *
              (rain ? 0.5 : 1.0);
    w.wind = std::max(0.0, climate.wind_mean * (1.0 + 0.3 * gauss(rng)));

    const double clear_sky =
        hargreaves_et(climate.et_model, fahrenheit_to_celsius(w.t_avg));
    w.et = std::max(0.0, clear_sky * (1.0 + climate.et_noise * gauss(rng)) *
                             (rain ? climate.rain_et_factor : 1.0));
  }

  for (int i = 0; i < days; ++i) {
    auto& today = out[static_cast<std::size_t>(i)];
    const auto& next = out[static_cast<std::size_t>(i) + 1];
    const Forecast f = synthesize_forecast(
        next, climate.forecast, derive_seed(seed, {2, std::uint64_t(i)}),
        climate.rain_probability(next.date));
    today.predicted_et_next = f.et;
    today.forecast_precip_next = f.precip;
  }
  out.pop_back();
  return out;
}

std::vector<WeatherDay> load_weather_csv(const std::filesystem::path& path,
                                         const ForecastNoise& noise,
                                         std::uint64_t seed,
                                         const ClimateParams& climate) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open weather csv: " + path.string());

  std::vector<WeatherDay> rows;
  std::string line;
  std::size_t row = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    auto fields = csv::split_line(line);
    if (!header_seen) {
      header_seen = true;
      if (fields.size() != kColumnCount) {
        throw Error("weather csv: header must list " +
                    std::to_string(kColumnCount) + " columns");
      }
      for (std::size_t c = 0; c < kColumnCount; ++c) {
        if (fields[c] != kColumns[c]) {
          throw Error("weather csv: header column " + std::to_string(c + 1) +
                      " is '" + fields[c] + "', expected '" + kColumns[c] +
                      "'");
        }
      }
      continue;
    }
    if (fields.size() != kColumnCount) {
      throw Error("weather csv row " + std::to_string(row) + ": expected " +
                  std::to_string(kColumnCount) + " fields, got " +
                  std::to_string(fields.size()));
    }
    WeatherDay w;
    try {
      w.date = parse_iso_date(fields[0]);
    } catch (const Error& e) {
      throw Error("weather csv row " + std::to_string(row) +
                  ", column 'date': " + e.what());
    }
    double* targets[] = {&w.et,    &w.precip, &w.t_max, &w.t_avg, &w.t_min,
                         &w.h_max, &w.h_avg,  &w.h_min, &w.solar, &w.wind};
    for (std::size_t c = 1; c < kColumnCount; ++c) {
      *targets[c - 1] = csv::parse_number(fields[c], "weather csv", row, kColumns[c]);
    }
    try {
      w.validate();
    } catch (const Error& e) {
      throw Error("weather csv row " + std::to_string(row) + ": " + e.what());
    }
    if (!rows.empty() &&
        std::chrono::sys_days{w.date} <= std::chrono::sys_days{rows.back().date}) {
      throw Error("weather csv row " + std::to_string(row) +
                  ": dates must be strictly increasing");
    }
    rows.push_back(w);
  }

  if (rows.size() < 2) return {};
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    const Forecast f =
        synthesize_forecast(rows[i + 1], noise, derive_seed(seed, {2, i}),
                            climate.rain_probability(rows[i + 1].date));
    rows[i].predicted_et_next = f.et;
    rows[i].forecast_precip_next = f.precip;
  }
  rows.pop_back();
  return rows;
}

void write_weather_csv(const std::filesystem::path& path,
                       const std::vector<WeatherDay>& days) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write weather csv: " + path.string());
  for (std::size_t c = 0; c < kColumnCount; ++c) {
    out << (c ? "," : "") << kColumns[c];
  }
  out << '\n';
  out.precision(17);
  for (const auto& w : days) {
    out << format_iso_date(w.date) << ',' << w.et << ',' << w.precip << ','
        << w.t_max << ',' << w.t_avg << ',' << w.t_min << ',' << w.h_max << ','
        << w.h_avg << ',' << w.h_min << ',' << w.solar << ',' << w.wind
        << '\n';
  }
}

}  // namespace irrigation
