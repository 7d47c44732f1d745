#include "irrigation/evalharness.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <thread>

#include <json.hpp>

#include "csv.hpp"
#include "irrigation/error.hpp"
#include "irrigation/random.hpp"

namespace irrigation {

namespace {

constexpr int kTrainingSeasonDays = 246;

enum SeedStream : std::uint64_t {
  kSeasonWeather = 1,
  kCsvForecast = 2,
  kInitialState = 3,
  kSeasonNoise = 4,
  kTrainingWeather = 10,
  kIdentWeather = 20,
  kIdentLog = 21,
  kTraining = 30,
};

}  // namespace

std::vector<double> ControllerResult::daily_water() const {
  std::vector<double> out;
  out.reserve(daily.size());
  for (const auto& d : daily) out.push_back(d.water);
  return out;
}

std::vector<std::vector<double>> ControllerResult::soil_series() const {
  std::vector<std::vector<double>> out;
  out.reserve(daily.size());
  for (const auto& d : daily) out.push_back(d.v);
  return out;
}

const ControllerResult& ExperimentResult::at(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  throw Error("no result for controller " + name);
}

Qos qos(const ControllerResult& result, const SoilLevels& levels) {
  Qos q;
  for (const auto& d : result.daily) {
    if (std::any_of(d.v.begin(), d.v.end(),
                    [&](double v) { return v < levels.v_mad; })) {
      ++q.days_below_mad;
    }
    if (std::any_of(d.v.begin(), d.v.end(),
                    [&](double v) { return v > levels.v_fc; })) {
      ++q.days_above_fc;
    }
  }
  return q;
}

double water_savings(const ControllerResult& candidate,
                     const ControllerResult& baseline) {
  if (candidate.daily.size() != baseline.daily.size()) {
    throw Error("water_savings: season lengths differ");
  }
  if (baseline.total_water == 0.0) {
    throw Error("water_savings: baseline used no water");
  }
  return 100.0 * (baseline.total_water - candidate.total_water) /
         baseline.total_water;
}

ControllerResult run_season(const SeasonSetup& setup, Controller& controller,
                            const std::string& name) {
  EnvConfig cfg = setup.env;
  cfg.episode_length = setup.season_days;
  IrrigationEnv env(cfg);
  const EnvState* state =
      &env.reset_to(setup.v0, setup.noise_seed, setup.weather, 0);
  auto* shielded = dynamic_cast<ShieldedController*>(&controller);

  ControllerResult out;
  out.name = name;
  while (!env.done()) {
    const ControllerDecision decision = controller.decide(*state);
    DailyRecord rec;
    rec.day = state->day_in_episode;
    rec.date = state->today.date;
    rec.et = state->today.et;
    rec.precip = state->today.precip;
    rec.source = decision.source;
    if (shielded) {
      rec.deficit_sum = shielded->last_report().deficit_sum;
      rec.triggered = shielded->last_report().triggered;
    }
    const Transition tr = env.step(decision.action);
    rec.action = tr.action.amounts;
    rec.water = tr.action.total();
    rec.reward = tr.reward;
    rec.v = tr.next_state.v;
    out.total_water += rec.water;
    if (rec.triggered) ++out.shield_trigger_days;
    out.daily.push_back(std::move(rec));
    state = &env.state();
  }
  const Qos q = qos(out, env.levels());
  out.days_below_mad = q.days_below_mad;
  out.days_above_fc = q.days_above_fc;
  return out;
}

SeasonSetup make_season(const RunConfig& config) {
  config.validate();
  SeasonSetup s;
  s.env = config.env;
  s.season_days = config.season_days;
  const std::size_t needed = std::size_t(config.season_days) + 1;
  std::vector<WeatherDay> days;
  if (config.weather.csv.empty()) {
    days = synthesize_season(derive_seed(config.seed, {kSeasonWeather}),
                             int(needed), config.weather.climate);
  } else {
    days = load_weather_csv(config.weather.csv, config.weather.climate.forecast,
                            derive_seed(config.seed, {kCsvForecast}),
                            config.weather.climate);
    if (days.size() < needed) {
      throw Error("weather csv holds " + std::to_string(days.size()) +
                  " usable days; the season needs " + std::to_string(needed));
    }
    days.resize(needed);
  }
  s.weather = std::make_shared<const std::vector<WeatherDay>>(std::move(days));

  const SoilLevels levels = derive_levels(config.env.profile);
  Rng rng(derive_seed(config.seed, {kInitialState}));
  std::uniform_real_distribution<double> init(levels.v_mad, levels.v_fc);
  for (int i = 0; i < config.env.n_regions; ++i) s.v0.push_back(init(rng));
  s.noise_seed = derive_seed(config.seed, {kSeasonNoise});
  return s;
}

std::vector<WeatherSeries> make_training_corpus(const RunConfig& config) {
  ClimateParams climate = config.weather.climate;
  climate.start_month = 3;
  climate.start_day = 1;
  std::vector<WeatherSeries> corpus;
  for (int k = 0; k < config.weather.training_seasons; ++k) {
    corpus.push_back(std::make_shared<const std::vector<WeatherDay>>(
        synthesize_season(
            derive_seed(config.seed, {kTrainingWeather, std::uint64_t(k)}),
            kTrainingSeasonDays + 1, climate)));
  }
  return corpus;
}

std::vector<ObservationRow> generate_identification_log(
    const PredictorModel& truth, const SoilLevels& levels,
    const std::vector<WeatherDay>& weather, int days, double a_max,
    double observation_noise_std, double process_noise_std,
    std::uint64_t seed) {
  if (days < 1) throw Error("identification: days must be >= 1");
  if (weather.size() < std::size_t(days) + 1) {
    throw Error("identification: need days + 1 weather records");
  }
  Rng rng(seed);
  std::normal_distribution<double> obs_noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double low = 0.5 * (levels.v_pwp + levels.v_mad);
  const double high = levels.v_fc;

  std::vector<double> v{0.5 * (levels.v_mad + levels.v_fc)};
  std::vector<double> a;
  bool filling = false;
  for (int t = 0; t < days; ++t) {
    if (v.back() < low) filling = true;
    if (v.back() > high) filling = false;
    const double lo = filling ? 0.5 : 0.0;
    const double hi = filling ? 1.0 : 0.1;
    a.push_back(a_max * (lo + (hi - lo) * unit(rng)));
    const WeatherDay& next = weather[std::size_t(t) + 1];
    double v_next =
        predict_next(truth, v.back(), a.back(), next.precip, next.et);
    if (process_noise_std > 0.0) {
      v_next = std::clamp(v_next + process_noise_std * obs_noise(rng), 0.0,
                          truth.ceiling);
    }
    v.push_back(v_next);
  }
  std::vector<double> measured(v.size());
  for (std::size_t t = 0; t < v.size(); ++t) {
    measured[t] = v[t] + observation_noise_std * obs_noise(rng);
  }
  std::vector<ObservationRow> rows;
  for (int t = 0; t < days; ++t) {
    const WeatherDay& next = weather[std::size_t(t) + 1];
    rows.push_back({measured[std::size_t(t)], a[std::size_t(t)], next.precip,
                    next.et, measured[std::size_t(t) + 1]});
  }
  return rows;
}

std::vector<ObservationRow> identification_log(const RunConfig& config,
                                               int region, int days) {
  if (region < 0 || region >= config.env.n_regions) {
    throw Error("identification: region out of range");
  }
  const SoilLevels levels = derive_levels(config.env.profile);
  const auto weather = synthesize_season(
      derive_seed(config.seed, {kIdentWeather, std::uint64_t(region)}),
      days + 1, config.weather.climate);
  return generate_identification_log(
      config.env.dynamics[std::size_t(region)].with_ceiling(
          levels.v_fc + config.env.surplus_headroom),
      levels, weather, days, config.env.a_max,
      config.identification.observation_noise_std,
      config.env.process_noise_std,
      derive_seed(config.seed, {kIdentLog, std::uint64_t(region)}));
}

std::vector<PredictorModel> shield_models(const RunConfig& config) {
  const SoilLevels levels = derive_levels(config.env.profile);
  const double ceiling = levels.v_fc + config.env.surplus_headroom;
  std::vector<PredictorModel> models;
  for (int i = 0; i < config.env.n_regions; ++i) {
    if (config.shield.model == ShieldModelSource::kTrue) {
      models.push_back(config.env.dynamics[std::size_t(i)].with_ceiling(ceiling));
    } else {
      models.push_back(fit(identification_log(config, i, config.identification.days)));
    }
  }
  return models;
}

ShieldConfig make_shield_config(const RunConfig& config,
                                std::vector<PredictorModel> models) {
  ShieldConfig s;
  s.models = std::move(models);
  s.detector_threshold = config.shield.detector_threshold;
  s.enabled = config.shield.enabled;
  s.aggregation = config.shield.aggregation;
  s.margin = config.shield.margin;
  s.rain_credit = config.shield.rain_credit;
  s.top_up = config.shield.top_up;
  return s;
}

TrainResult train_policy(const RunConfig& config, RewardKind reward,
                         const std::vector<PredictorModel>& models,
                         const ProgressFn& progress) {
  config.validate();
  EnvConfig env = config.env;
  env.reward_kind = reward;
  env.episode_length = config.trainer.episode_length;
  const auto corpus = make_training_corpus(config);

  ActionFilter filter;
  if (config.shield.enabled && config.shield.train_in_loop) {
    const ShieldConfig shield = make_shield_config(config, models);
    const SoilLevels levels = derive_levels(env.profile);
    const double a_max = env.a_max;
    filter = [shield, levels, a_max](const EnvState& s,
                                     const ActionVector& proposed) {
      return screen(
                 shield, levels, s, proposed,
                 [a_max](const EnvState& st) { return et_controller(st, a_max); },
                 a_max)
          .action;
    };
  }
  const EpisodeSourceFactory factory = [&](int) {
    return std::make_unique<CorpusEpisodes>(env, corpus, filter);
  };
  TrainResult result = train(
      config.trainer, factory,
      derive_seed(config.seed, {kTraining, std::uint64_t(reward)}), progress);
  result.policy.config_hash = config_hash(config);
  return result;
}

PolicySnapshot adversarial_policy(const PolicySnapshot& policy, double bias) {
  PolicySnapshot p = policy;
  const std::size_t n = p.n_regions();
  // The output bias occupies the last n network parameters.
  const std::size_t end = p.shape.parameter_count();
  for (std::size_t k = end - n; k < end; ++k) p.params[k] = bias;
  return p;
}

std::unique_ptr<Controller> make_controller(const std::string& name,
                                            const RosterContext& ctx) {
  if (!ctx.config) throw Error("roster: no config");
  const RunConfig& cfg = *ctx.config;
  const double a_max = cfg.env.a_max;
  const SoilLevels levels = derive_levels(cfg.env.profile);
  if (name == "ET") return std::make_unique<EtController>(a_max);
  if (name == "sensor") {
    std::vector<double> c2;
    for (const auto& m : ctx.models) c2.push_back(m.c2);
    if (c2.empty()) throw Error("roster: sensor controller needs models");
    return std::make_unique<SensorController>(cfg.sensor, std::move(c2), a_max);
  }
  auto shielded = [&](std::shared_ptr<const PolicySnapshot> policy,
                      bool enabled) -> std::unique_ptr<Controller> {
    if (!policy) throw Error("roster: " + name + " needs a trained policy");
    ShieldConfig shield = make_shield_config(cfg, ctx.models);
    shield.enabled = enabled;
    return std::make_unique<ShieldedController>(
        std::make_unique<PolicyController>(std::move(policy)),
        std::move(shield), levels, a_max);
  };
  if (name == "DRLIC") return shielded(ctx.policy, cfg.shield.enabled);
  if (name == "DRLIC_MAD") return shielded(ctx.policy_mad, cfg.shield.enabled);
  if (name == "DRLIC_noshield") return shielded(ctx.policy, false);
  throw Error("roster: unknown controller " + name);
}

ExperimentResult run_roster(const SeasonSetup& setup,
                            const std::vector<std::string>& roster,
                            const RosterContext& ctx) {
  ExperimentResult result;
  if (ctx.config) {
    result.config_hash = config_hash(*ctx.config);
    result.seed = ctx.config->seed;
  }
  std::vector<std::unique_ptr<Controller>> controllers;
  for (const auto& name : roster) {
    controllers.push_back(make_controller(name, ctx));
  }
  result.entries.resize(roster.size());
  std::vector<std::exception_ptr> errors(roster.size());
  std::vector<std::thread> threads;
  for (std::size_t k = 0; k < roster.size(); ++k) {
    threads.emplace_back([&, k] {
      try {
        result.entries[k] = run_season(setup, *controllers[k], roster[k]);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return result;
}

namespace {

const std::vector<std::string> kDailyFixed{
    "controller", "day",         "date",      "et",    "precip", "water",
    "reward",     "deficit_sum", "triggered", "source"};
const std::vector<std::string> kSummaryColumns{
    "controller",          "total_water", "days_below_mad", "days_above_fc",
    "shield_trigger_days", "savings_vs_ET"};

DecisionSource parse_source(const std::string& text) {
  for (auto s : {DecisionSource::kAgent, DecisionSource::kEtBaseline,
                 DecisionSource::kSensorBaseline,
                 DecisionSource::kShieldFallback}) {
    if (to_string(s) == text) return s;
  }
  throw Error("results csv: unknown source '" + text + "'");
}

std::size_t region_count(const ExperimentResult& result) {
  for (const auto& e : result.entries) {
    if (!e.daily.empty()) return e.daily.front().v.size();
  }
  return 0;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

std::vector<std::vector<std::string>> read_csv(
    const std::filesystem::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + what + ": " + path.string());
  std::vector<std::vector<std::string>> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line == "\r") continue;
    rows.push_back(csv::split_line(line));
  }
  if (rows.empty()) throw Error(what + ": missing header");
  return rows;
}

}  // namespace

void write_daily_csv(const std::filesystem::path& path,
                     const ExperimentResult& result) {
  auto out = open_out(path);
  const std::size_t n = region_count(result);
  for (std::size_t c = 0; c < kDailyFixed.size(); ++c) {
    out << (c ? "," : "") << kDailyFixed[c];
  }
  for (std::size_t i = 0; i < n; ++i) out << ",a_" << i;
  for (std::size_t i = 0; i < n; ++i) out << ",v_" << i;
  out << '\n';
  for (const auto& e : result.entries) {
    for (const auto& d : e.daily) {
      out << e.name << ',' << d.day << ',' << format_iso_date(d.date) << ','
          << d.et << ',' << d.precip << ',' << d.water << ',' << d.reward
          << ',' << d.deficit_sum << ',' << (d.triggered ? 1 : 0) << ','
          << to_string(d.source);
      for (double a : d.action) out << ',' << a;
      for (double v : d.v) out << ',' << v;
      out << '\n';
    }
  }
}

void write_summary_csv(const std::filesystem::path& path,
                       const ExperimentResult& result) {
  auto out = open_out(path);
  for (std::size_t c = 0; c < kSummaryColumns.size(); ++c) {
    out << (c ? "," : "") << kSummaryColumns[c];
  }
  out << '\n';
  const ControllerResult* et = nullptr;
  for (const auto& e : result.entries) {
    if (e.name == "ET") et = &e;
  }
  for (const auto& e : result.entries) {
    out << e.name << ',' << e.total_water << ',' << e.days_below_mad << ','
        << e.days_above_fc << ',' << e.shield_trigger_days << ',';
    if (et && et->total_water > 0.0) out << water_savings(e, *et);
    out << '\n';
  }
}

void write_manifest(const std::filesystem::path& path,
                    const RunConfig& config, const ExperimentResult& result) {
  nlohmann::json j;
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0')
       << config_hash(config);
  j["config_hash"] = hash.str();
  j["seed"] = config.seed;
  j["seeds"] = {
      {"season_weather", derive_seed(config.seed, {kSeasonWeather})},
      {"initial_state", derive_seed(config.seed, {kInitialState})},
      {"season_noise", derive_seed(config.seed, {kSeasonNoise})},
      {"training_full",
       derive_seed(config.seed,
                   {kTraining, std::uint64_t(RewardKind::kFull)})},
      {"training_mad_only",
       derive_seed(config.seed,
                   {kTraining, std::uint64_t(RewardKind::kMadOnly)})}};
  j["config"] = nlohmann::json::parse(dump_run_config(config));
  j["files"] = {{"daily", "daily.csv"}, {"summary", "summary.csv"}};
  for (const auto& e : result.entries) {
    j["controllers"].push_back({{"name", e.name},
                                {"total_water", e.total_water},
                                {"days_below_mad", e.days_below_mad},
                                {"days_above_fc", e.days_above_fc},
                                {"shield_trigger_days",
                                 e.shield_trigger_days}});
  }
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

ExperimentResult load_results(const std::filesystem::path& daily_csv,
                              const std::filesystem::path& summary_csv) {
  const std::string daily_what = "daily csv";
  const auto daily = read_csv(daily_csv, daily_what);
  const auto& header = daily.front();
  if (header.size() < kDailyFixed.size() ||
      !std::equal(kDailyFixed.begin(), kDailyFixed.end(), header.begin()) ||
      (header.size() - kDailyFixed.size()) % 2 != 0) {
    throw Error("daily csv: unexpected header");
  }
  const std::size_t n = (header.size() - kDailyFixed.size()) / 2;

  ExperimentResult result;
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 1; r < daily.size(); ++r) {
    const auto& f = daily[r];
    if (f.size() != header.size()) {
      throw Error("daily csv row " + std::to_string(r + 1) +
                  ": wrong field count");
    }
    auto num = [&](std::size_t c) {
      return csv::parse_number(f[c], daily_what, r + 1, header[c]);
    };
    auto [it, inserted] = index.try_emplace(f[0], result.entries.size());
    if (inserted) {
      result.entries.emplace_back();
      result.entries.back().name = f[0];
    }
    DailyRecord d;
    d.day = int(num(1));
    d.date = parse_iso_date(f[2]);
    d.et = num(3);
    d.precip = num(4);
    d.water = num(5);
    d.reward = num(6);
    d.deficit_sum = num(7);
    d.triggered = num(8) != 0.0;
    d.source = parse_source(f[9]);
    for (std::size_t i = 0; i < n; ++i) d.action.push_back(num(10 + i));
    for (std::size_t i = 0; i < n; ++i) d.v.push_back(num(10 + n + i));
    result.entries[it->second].daily.push_back(std::move(d));
  }

  const std::string summary_what = "summary csv";
  const auto summary = read_csv(summary_csv, summary_what);
  if (summary.front() != kSummaryColumns) {
    throw Error("summary csv: unexpected header");
  }
  for (std::size_t r = 1; r < summary.size(); ++r) {
    const auto& f = summary[r];
    if (f.size() != kSummaryColumns.size()) {
      throw Error("summary csv row " + std::to_string(r + 1) +
                  ": wrong field count");
    }
    auto num = [&](std::size_t c) {
      return csv::parse_number(f[c], summary_what, r + 1, kSummaryColumns[c]);
    };
    auto [it, inserted] = index.try_emplace(f[0], result.entries.size());
    if (inserted) {
      result.entries.emplace_back();
      result.entries.back().name = f[0];
    }
    ControllerResult& e = result.entries[it->second];
    e.total_water = num(1);
    e.days_below_mad = int(num(2));
    e.days_above_fc = int(num(3));
    e.shield_trigger_days = int(num(4));
  }
  return result;
}

void print_comparison(std::ostream& out, const ExperimentResult& result) {
  const ControllerResult* et = nullptr;
  for (const auto& e : result.entries) {
    if (e.name == "ET") et = &e;
  }
  out << std::left << std::setw(16) << "controller" << std::right
      << std::setw(10) << "water" << std::setw(15) << "savings_vs_ET"
      << std::setw(16) << "days_below_mad" << std::setw(14) << "trigger_days"
      << '\n';
  for (const auto& e : result.entries) {
    out << std::left << std::setw(16) << e.name << std::right << std::fixed
        << std::setprecision(2) << std::setw(10) << e.total_water
        << std::setw(15);
    if (et && et->total_water > 0.0) {
      out << water_savings(e, *et);
    } else {
      out << "n/a";
    }
    out << std::setw(16) << e.days_below_mad << std::setw(14)
        << e.shield_trigger_days << '\n';
  }
  out.unsetf(std::ios::fixed);
}

}  // namespace irrigation
