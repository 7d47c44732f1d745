#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "irrigation/agent.hpp"
#include "irrigation/config.hpp"
#include "irrigation/error.hpp"
#include "irrigation/evalharness.hpp"
#include "irrigation/predictor.hpp"
#include "irrigation/weather.hpp"

namespace fs = std::filesystem;
using namespace irrigation;

namespace {

constexpr int kUsageExit = 2;

struct Common {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> days;
  bool no_shield = false;
  std::string reward;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "run-config JSON file")
      ->check(CLI::ExistingFile);
  cmd->add_option("--preset", c.preset, "named config preset")
      ->check(CLI::IsMember({"default", "field15"}));
  cmd->add_option("--seed", c.seed, "base seed for all randomness");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--days", c.days, "season length in days")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--no-shield", c.no_shield, "disable the safety shield");
  cmd->add_option("--reward", c.reward, "reward used for the DRLIC policy")
      ->check(CLI::IsMember({"full", "mad-only"}));
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.preset == "field15" ? RunConfig::field15() : RunConfig{};
  if (!c.config_path.empty()) cfg = load_run_config(c.config_path);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (c.days) cfg.season_days = *c.days;
  if (c.no_shield) cfg.shield.enabled = false;
  if (!c.reward.empty()) {
    cfg.env.reward_kind =
        c.reward == "mad-only" ? RewardKind::kMadOnly : RewardKind::kFull;
  }
  cfg.validate();
  return cfg;
}

ProgressFn progress_printer(const std::string& label) {
  return [label](const CurvePoint& p) {
    if (p.iteration % 50 == 0) {
      std::cerr << label << " iteration " << p.iteration << " reward "
                << p.total_reward << '\n';
    }
  };
}

std::shared_ptr<const PolicySnapshot> obtain_policy(
    const RunConfig& cfg, RewardKind reward,
    const std::vector<PredictorModel>& models) {
  const std::string& path =
      reward == RewardKind::kFull ? cfg.policy : cfg.policy_mad;
  if (!path.empty()) {
    return std::make_shared<const PolicySnapshot>(load_policy(path));
  }
  const std::string label =
      reward == RewardKind::kFull ? "train[full]" : "train[mad-only]";
  TrainResult r = train_policy(cfg, reward, models, progress_printer(label));
  std::cerr << label << " finished after " << r.curve.size()
            << " iterations, converged=" << (r.converged ? "yes" : "no")
            << '\n';
  return std::make_shared<const PolicySnapshot>(std::move(r.policy));
}

void write_outputs(const RunConfig& cfg, const ExperimentResult& result) {
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  write_daily_csv(dir / "daily.csv", result);
  write_summary_csv(dir / "summary.csv", result);
  write_manifest(dir / "manifest.json", cfg, result);
}

bool needs(const std::vector<std::string>& roster, const std::string& a,
           const std::string& b = "") {
  for (const auto& n : roster) {
    if (n == a || (!b.empty() && n == b)) return true;
  }
  return false;
}

int run_compare(const RunConfig& cfg, const std::vector<std::string>& roster) {
  RosterContext ctx;
  ctx.config = &cfg;
  ctx.models = shield_models(cfg);
  // The env's reward setting picks the policy behind the DRLIC rows.
  if (needs(roster, "DRLIC", "DRLIC_noshield")) {
    ctx.policy = obtain_policy(cfg, cfg.env.reward_kind, ctx.models);
  }
  if (needs(roster, "DRLIC_MAD")) {
    ctx.policy_mad = obtain_policy(cfg, RewardKind::kMadOnly, ctx.models);
  }
  const SeasonSetup season = make_season(cfg);
  const ExperimentResult result = run_roster(season, roster, ctx);
  print_comparison(std::cout, result);
  write_outputs(cfg, result);
  std::cout << "results written to " << cfg.output_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Irrigation control experiments: identify, train, evaluate, "
               "compare, synth-weather"};
  app.require_subcommand(1);

  // identify
  auto* identify = app.add_subcommand(
      "identify", "fit the water-balance predictor from an observation CSV");
  std::string ident_input;
  int ident_region = 0;
  Common ident_common;
  identify->add_option("--input", ident_input,
                       "observation CSV (v_t,a_t,p_t,e_t,v_next); a "
                       "synthetic log is generated when omitted")
      ->check(CLI::ExistingFile);
  identify->add_option("--region", ident_region,
                       "region whose dynamics generate the synthetic log")
      ->check(CLI::NonNegativeNumber);
  add_common(identify, ident_common);

  // train
  auto* train_cmd =
      app.add_subcommand("train", "train a policy; writes policy + curve");
  Common train_common;
  add_common(train_cmd, train_common);

  // evaluate
  auto* evaluate =
      app.add_subcommand("evaluate", "run one controller over a season");
  Common eval_common;
  std::string eval_controller;
  std::string eval_policy;
  evaluate->add_option("--controller", eval_controller, "controller name")
      ->required()
      ->check(CLI::IsMember(
          {"ET", "sensor", "DRLIC", "DRLIC_MAD", "DRLIC_noshield"}));
  evaluate->add_option("--policy", eval_policy, "trained policy file")
      ->check(CLI::ExistingFile);
  add_common(evaluate, eval_common);

  // compare
  auto* compare = app.add_subcommand(
      "compare", "paired season comparison of the controller roster");
  Common cmp_common;
  add_common(compare, cmp_common);

  // synth-weather
  auto* synth =
      app.add_subcommand("synth-weather", "emit a synthetic season CSV");
  Common synth_common;
  add_common(synth, synth_common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsageExit;
  }

  try {
    if (*identify) {
      std::vector<ObservationRow> rows;
      if (!ident_input.empty()) {
        rows = load_observations_csv(ident_input);
      } else {
        RunConfig cfg = resolve(ident_common);
        if (ident_region >= cfg.env.n_regions) {
          throw Error("--region out of range");
        }
        const int days =
            ident_common.days ? *ident_common.days : cfg.identification.days;
        rows = identification_log(cfg, ident_region, days);
        if (!ident_common.out.empty()) {
          fs::create_directories(ident_common.out);
          write_observations_csv(fs::path(ident_common.out) / "observations.csv",
                                 rows);
        }
      }
      const PredictorModel m = fit(rows);
      std::cout << std::fixed << std::setprecision(4) << "c1 " << m.c1
                << "\nc2 " << m.c2 << "\nc3 " << m.c3 << "\nb  " << m.b
                << "\nR2 " << m.r_squared << "\nNRMSE " << m.nrmse << '\n';
      for (const auto& w : plausibility_warnings(m)) {
        std::cerr << "warning: " << w << '\n';
      }
      return 0;
    }

    if (*train_cmd) {
      const RunConfig cfg = resolve(train_common);
      const auto models = shield_models(cfg);
      TrainResult r = train_policy(cfg, cfg.env.reward_kind, models,
                                   progress_printer("train"));
      const fs::path dir = cfg.output_dir;
      fs::create_directories(dir);
      save_policy(dir / "policy.bin", r.policy);
      write_training_curve(dir / "curve.csv", r.curve);
      std::cout << "iterations " << r.curve.size() << "\nconverged "
                << (r.converged ? "yes" : "no") << "\npolicy "
                << (dir / "policy.bin").string() << '\n';
      return 0;
    }

    if (*evaluate) {
      RunConfig cfg = resolve(eval_common);
      if (!eval_policy.empty()) {
        (eval_controller == "DRLIC_MAD" ? cfg.policy_mad : cfg.policy) =
            eval_policy;
      }
      return run_compare(cfg, {eval_controller});
    }

    if (*compare) {
      const RunConfig cfg = resolve(cmp_common);
      return run_compare(cfg, cfg.roster);
    }

    if (*synth) {
      const RunConfig cfg = resolve(synth_common);
      const SeasonSetup season = make_season(cfg);
      const auto& days = *season.weather;
      const fs::path dir = cfg.output_dir;
      fs::create_directories(dir);
      write_weather_csv(dir / "weather.csv", days);
      std::cout << "wrote " << days.size() << " days to "
                << (dir / "weather.csv").string() << '\n';
      return 0;
    }
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kUsageExit;
}
