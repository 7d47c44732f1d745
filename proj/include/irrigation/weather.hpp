#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace irrigation {

using Date = std::chrono::year_month_day;

Date parse_iso_date(std::string_view text);
std::string format_iso_date(const Date& date);
Date add_days(const Date& date, int days);

// One day of station observations plus the forecast for the following day.
// Temperatures are Fahrenheit, humidity percent, solar Ly/day, wind mph,
// water quantities inches/day.
struct WeatherDay {
  Date date{};
  double et = 0.0;
  double precip = 0.0;
  double t_max = 0.0;
  double t_avg = 0.0;
  double t_min = 0.0;
  double h_max = 0.0;
  double h_avg = 0.0;
  double h_min = 0.0;
  double solar = 0.0;
  double wind = 0.0;
  double predicted_et_next = 0.0;
  double forecast_precip_next = 0.0;

  unsigned month() const { return unsigned(date.month()); }

  // Throws Error describing the first violated invariant.
  void validate() const;
};

inline double fahrenheit_to_celsius(double f) { return (f - 32.0) / 1.8; }
inline double celsius_to_fahrenheit(double c) { return c * 1.8 + 32.0; }

// Hargreaves reference ET: gamma_c * ra * sqrt(td) * (T + 17.8).
struct EtModelParams {
  double gamma_c = 0.0023;
  double ra = 5.3;
  double td = 15.0;

  void validate() const;
};

// Returns 0 for t_avg_c below -17.8 (ET cannot be negative).
double hargreaves_et(const EtModelParams& params, double t_avg_c);

struct ForecastNoise {
  double et_std = 0.18;
  // Probability a rain day is forecast dry.
  double precip_miss_rate = 0.15;
  // Probability a dry day is forecast wet, relative to the climate's rain
  // probability on that day (0.15 => 15% as many false alarms as events).
  double precip_false_alarm_rate = 0.15;
  // Magnitude noise on correctly forecast events (multiplicative std).
  double precip_magnitude_std = 0.25;
  // Mean of the exponential amount attached to a false alarm.
  double false_alarm_mean = 0.3;

  static ForecastNoise none() { return {0.0, 0.0, 0.0, 0.0, 0.0}; }
};

struct Forecast {
  double et = 0.0;
  double precip = 0.0;
};

inline double apply_et_noise(double actual_et, double sample) {
  return actual_et + sample > 0.0 ? actual_et + sample : 0.0;
}

// Perturbs the actual next-day ET and rainfall. `rain_probability` is the
// climate's chance of rain on that day and scales the false-alarm rate.
Forecast synthesize_forecast(const WeatherDay& actual_next,
                             const ForecastNoise& noise, std::uint64_t seed,
                             double rain_probability = 0.2);

// Parameters of the synthetic seasonal climate. The defaults produce a
// Central-Valley-shaped season (dry hot summer, rain in spring and autumn)
// with ET scaled to the default per-tree water-balance models.
struct ClimateParams {
  int start_year = 2019;
  unsigned start_month = 3;
  unsigned start_day = 1;
  double t_avg_mean_f = 67.0;
  double t_avg_amplitude_f = 13.0;
  int peak_day_of_year = 200;
  double temp_noise_f = 3.0;
  double diurnal_range_f = 28.0;
  double humidity_mean = 55.0;
  double humidity_amplitude = 15.0;
  double solar_mean = 520.0;
  double solar_amplitude = 220.0;
  double wind_mean = 5.0;
  // Rain probability peaks in mid-January and vanishes in mid-July.
  double precip_probability = 0.30;
  double precip_mean = 0.35;
  EtModelParams et_model{};
  // Multiplicative day-to-day ET scatter around the Hargreaves estimate.
  double et_noise = 0.08;
  // Fraction of clear-sky ET on rainy days.
  double rain_et_factor = 0.6;
  ForecastNoise forecast{};

  double rain_probability(const Date& date) const;
};

// Deterministic for a fixed seed; every record satisfies WeatherDay
// invariants and carries a forecast for the following day.
std::vector<WeatherDay> synthesize_season(std::uint64_t seed, int days,
                                          const ClimateParams& climate = {});

// Columns: date, et, precip, t_max, t_avg, t_min, h_max, h_avg, h_min,
// solar, wind. Forecast fields of each day are derived from the next row, so
// n rows yield n - 1 days.
std::vector<WeatherDay> load_weather_csv(const std::filesystem::path& path,
                                         const ForecastNoise& noise = {},
                                         std::uint64_t seed = 0,
                                         const ClimateParams& climate = {});
void write_weather_csv(const std::filesystem::path& path,
                       const std::vector<WeatherDay>& days);

}  // namespace irrigation
