#include "irrigation/config.hpp"

#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "irrigation/error.hpp"

namespace irrigation {

using nlohmann::json;

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SoilProfile, sigma_awc,
                                                phi_pwp, root_depth_feet,
                                                root_depth_inches,
                                                sensor_depths, alpha)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EtModelParams, gamma_c, ra,
                                                td)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ForecastNoise, et_std,
                                                precip_miss_rate,
                                                precip_false_alarm_rate,
                                                precip_magnitude_std,
                                                false_alarm_mean)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    ClimateParams, start_year, start_month, start_day, t_avg_mean_f,
    t_avg_amplitude_f, peak_day_of_year, temp_noise_f, diurnal_range_f,
    humidity_mean, humidity_amplitude, solar_mean, solar_amplitude, wind_mean,
    precip_probability, precip_mean, et_model, et_noise, rain_et_factor,
    forecast)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RewardParams, lambda1, mu1,
                                                mu2, lambda3, mu3)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    TrainerConfig, learning_rate, gamma, clip_epsilon, minibatch_size,
    max_iterations, workers, episodes_per_worker, episode_length, convergence_band,
    convergence_window, min_iterations, epochs, hidden, init_log_std,
    normalization_episodes)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(IdentificationSettings, days,
                                                observation_noise_std)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SensorControllerConfig,
                                                lower_threshold,
                                                upper_threshold)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(WeatherSettings, csv,
                                                training_seasons, climate)

namespace {

template <typename E>
using EnumTable = std::initializer_list<std::pair<E, const char*>>;

template <typename E>
void enum_to_json(json& j, E value, EnumTable<E> table) {
  for (const auto& [e, name] : table) {
    if (e == value) {
      j = name;
      return;
    }
  }
  throw Error("config: unnamed enum value");
}

// Unlike the stock enum macro, unknown names are errors.
template <typename E>
void enum_from_json(const json& j, E& value, EnumTable<E> table) {
  if (j.is_string()) {
    for (const auto& [e, name] : table) {
      if (j.get<std::string>() == name) {
        value = e;
        return;
      }
    }
  }
  std::string allowed;
  for (const auto& [e, name] : table) {
    allowed += (allowed.empty() ? "" : ", ") + std::string(name);
  }
  throw Error("config: invalid value " + j.dump() + " (expected one of " +
              allowed + ")");
}

const EnumTable<DeficitAggregation> kAggregationNames{
    {DeficitAggregation::kPositivePart, "positive-part"},
    {DeficitAggregation::kSigned, "signed"}};
const EnumTable<ShieldModelSource> kModelSourceNames{
    {ShieldModelSource::kIdentified, "identified"},
    {ShieldModelSource::kTrue, "true"}};
const EnumTable<RewardKind> kRewardNames{{RewardKind::kFull, "full"},
                                         {RewardKind::kMadOnly, "mad-only"}};

}  // namespace

void to_json(json& j, DeficitAggregation e) { enum_to_json(j, e, kAggregationNames); }
void from_json(const json& j, DeficitAggregation& e) { enum_from_json(j, e, kAggregationNames); }
void to_json(json& j, ShieldModelSource e) { enum_to_json(j, e, kModelSourceNames); }
void from_json(const json& j, ShieldModelSource& e) { enum_from_json(j, e, kModelSourceNames); }
void to_json(json& j, RewardKind e) { enum_to_json(j, e, kRewardNames); }
void from_json(const json& j, RewardKind& e) { enum_from_json(j, e, kRewardNames); }

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ShieldSettings, enabled,
                                                detector_threshold,
                                                aggregation, margin,
                                                rain_credit, top_up, model,
                                                train_in_loop)

// Only the coefficients are configurable; fit statistics stay unset.
void to_json(json& j, const PredictorModel& m) {
  j = json{{"c1", m.c1}, {"c2", m.c2}, {"c3", m.c3}, {"b", m.b}};
}
void from_json(const json& j, PredictorModel& m) {
  m = PredictorModel{};
  m.c1 = j.at("c1").get<double>();
  m.c2 = j.at("c2").get<double>();
  m.c3 = j.at("c3").get<double>();
  m.b = j.at("b").get<double>();
}

void to_json(json& j, const EnvConfig& c) {
  j = json{{"n_regions", c.n_regions},
           {"irrigation_rate", c.irrigation_rate},
           {"a_max", c.a_max},
           {"episode_length", c.episode_length},
           {"reward_params", c.reward_params},
           {"reward", c.reward_kind},
           {"profile", c.profile},
           {"dynamics", c.dynamics},
           {"process_noise_std", c.process_noise_std},
           {"surplus_headroom", c.surplus_headroom}};
}
void from_json(const json& j, EnvConfig& c) {
  const EnvConfig d;
  c.n_regions = j.value("n_regions", d.n_regions);
  c.irrigation_rate = j.value("irrigation_rate", d.irrigation_rate);
  c.a_max = j.value("a_max", d.a_max);
  c.episode_length = j.value("episode_length", d.episode_length);
  c.reward_params = j.value("reward_params", d.reward_params);
  c.reward_kind = j.value("reward", d.reward_kind);
  c.profile = j.value("profile", d.profile);
  c.dynamics = j.value("dynamics", d.dynamics);
  c.process_noise_std = j.value("process_noise_std", d.process_noise_std);
  c.surplus_headroom = j.value("surplus_headroom", d.surplus_headroom);
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"seed", c.seed},
           {"output_dir", c.output_dir},
           {"season_days", c.season_days},
           {"env", c.env},
           {"weather", c.weather},
           {"trainer", c.trainer},
           {"shield", c.shield},
           {"identification", c.identification},
           {"sensor", c.sensor},
           {"roster", c.roster},
           {"policy", c.policy},
           {"policy_mad", c.policy_mad}};
}
void from_json(const json& j, RunConfig& c) {
  const RunConfig d;
  c.seed = j.value("seed", d.seed);
  c.output_dir = j.value("output_dir", d.output_dir);
  c.season_days = j.value("season_days", d.season_days);
  c.env = j.value("env", d.env);
  c.weather = j.value("weather", d.weather);
  c.trainer = j.value("trainer", d.trainer);
  c.shield = j.value("shield", d.shield);
  c.identification = j.value("identification", d.identification);
  c.sensor = j.value("sensor", d.sensor);
  c.roster = j.value("roster", d.roster);
  c.policy = j.value("policy", d.policy);
  c.policy_mad = j.value("policy_mad", d.policy_mad);
}

namespace {

// Every key of `given` must appear in `known` (objects compared recursively;
// arrays of objects are checked against the first known element).
void check_keys(const json& given, const json& known, const std::string& at) {
  if (!given.is_object() || !known.is_object()) return;
  for (const auto& [key, value] : given.items()) {
    const auto it = known.find(key);
    if (it == known.end()) {
      throw Error("config: unknown key '" + at + key + "'");
    }
    if (value.is_object()) {
      check_keys(value, *it, at + key + ".");
    } else if (value.is_array() && it->is_array() && !it->empty()) {
      for (const auto& item : value) {
        check_keys(item, it->front(), at + key + "[].");
      }
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  if (season_days < 1) throw Error("config: season_days must be >= 1");
  if (weather.training_seasons < 1) {
    throw Error("config: weather.training_seasons must be >= 1");
  }
  if (identification.days < int(kMinFitRows)) {
    throw Error("config: identification.days must be >= " +
                std::to_string(kMinFitRows));
  }
  if (!(identification.observation_noise_std >= 0.0)) {
    throw Error("config: identification.observation_noise_std must be >= 0");
  }
  if (!weather.csv.empty() && !std::filesystem::exists(weather.csv)) {
    throw Error("config: weather csv not found: " + weather.csv);
  }
  for (const auto& p : {policy, policy_mad}) {
    if (!p.empty() && !std::filesystem::exists(p)) {
      throw Error("config: policy file not found: " + p);
    }
  }
  static const std::set<std::string> kNames{"ET", "sensor", "DRLIC",
                                            "DRLIC_MAD", "DRLIC_noshield"};
  for (const auto& name : roster) {
    if (!kNames.count(name)) throw Error("config: unknown controller " + name);
  }
  if (trainer.episode_length != env.episode_length) {
    throw Error("config: trainer.episode_length must equal env.episode_length");
  }
  env.validate();
  trainer.validate();
  ShieldConfig probe;
  probe.detector_threshold = shield.detector_threshold;
  probe.margin = shield.margin;
  probe.rain_credit = shield.rain_credit;
  probe.validate();
  sensor.validate(derive_levels(env.profile));
  weather.climate.et_model.validate();
}

RunConfig RunConfig::field15() {
  RunConfig c;
  c.season_days = 15;
  c.weather.climate.start_month = 7;
  c.weather.climate.start_day = 1;
  c.output_dir = "results/field15";
  return c;
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw Error("config: top level must be an object");
  check_keys(j, json(RunConfig{}), "");
  RunConfig c;
  try {
    c = j.get<RunConfig>();
  } catch (const json::exception& e) {
    throw Error(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string dump_run_config(const RunConfig& config) {
  return json(config).dump(2);
}

std::uint64_t config_hash(const RunConfig& config) {
  const std::string text = json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace irrigation
