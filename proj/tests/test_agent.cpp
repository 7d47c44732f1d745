#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "irrigation/agent.hpp"
#include "irrigation/error.hpp"

using namespace irrigation;
namespace fs = std::filesystem;

namespace {

PolicySnapshot small_policy(std::uint64_t seed, double a_max = 3.0,
                            double log_std = -0.5) {
  Rng rng(seed);
  const std::vector<std::size_t> hidden{8};
  return PolicySnapshot::create(4, 2, hidden, a_max, log_std, rng, 1.0);
}

PolicySnapshot zero_policy(double a_max, double log_std) {
  PolicySnapshot p = small_policy(1, a_max, log_std);
  for (std::size_t k = 0; k < p.shape.parameter_count(); ++k) p.params[k] = 0.0;
  return p;
}

// Density of a = squash(u) for u ~ N(mu, sigma), by change of variables.
double squashed_log_density(double u, double mu, double sigma, double a_max) {
  const double z = (u - mu) / sigma;
  const double log_normal =
      -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2 * std::numbers::pi);
  const double t = std::tanh(u);
  return log_normal - std::log(0.5 * a_max * (1.0 - t * t));
}

RolloutSample make_sample(const PolicySnapshot& p, std::vector<double> obs,
                          std::vector<double> u, double ratio, double adv) {
  RolloutSample s;
  s.obs = std::move(obs);
  s.pre_squash = std::move(u);
  s.old_log_prob = action_log_prob(p, s.obs, s.pre_squash) - std::log(ratio);
  s.advantage = adv;
  return s;
}

WeatherSeries zero_et_weather(int days) {
  auto w = std::make_shared<std::vector<WeatherDay>>();
  const Date start{std::chrono::year{2019}, std::chrono::month{6},
                   std::chrono::day{1}};
  for (int i = 0; i < days; ++i) {
    WeatherDay d;
    d.date = add_days(start, i);
    d.t_max = 70.0;
    d.t_avg = 60.0;
    d.t_min = 50.0;
    d.h_max = 60.0;
    d.h_avg = 50.0;
    d.h_min = 40.0;
    d.solar = 400.0;
    d.wind = 3.0;
    w->push_back(d);
  }
  return w;
}

TrainerConfig toy_trainer() {
  TrainerConfig t;
  t.hidden = {16};
  t.workers = 1;
  t.episodes_per_worker = 4;
  t.episode_length = 10;
  t.max_iterations = 120;
  t.min_iterations = 1000;
  t.learning_rate = 0.01;
  t.minibatch_size = 64;
  t.normalization_episodes = 4;
  return t;
}

// Without evapotranspiration or loss, water stays in band and every inch
// applied is pure cost.
EpisodeSourceFactory toy_factory() {
  return [](int) {
    EnvConfig c;
    c.episode_length = 10;
    c.process_noise_std = 0.0;
    PredictorModel lossless;
    lossless.c1 = 1.0;
    lossless.c2 = 0.3;
    lossless.c3 = -0.1;
    lossless.b = 0.0;
    c.dynamics = {lossless, lossless};
    c.surplus_headroom = 100.0;
    return std::make_unique<CorpusEpisodes>(
        c, std::vector<WeatherSeries>{zero_et_weather(40)});
  };
}

}  // namespace

TEST_CASE("squash maps onto [0, a_max]") {
  CHECK(squash(0.0, 3.0) == 1.5);
  CHECK(squash(-50.0, 3.0) == 0.0);
  CHECK(squash(50.0, 3.0) == 3.0);
  CHECK(squash(1.0, 2.0) == doctest::Approx(std::tanh(1.0) + 1.0));
}

TEST_CASE("zero-weight policy acts at the midpoint") {
  const PolicySnapshot p = zero_policy(3.0, -0.5);
  const std::vector<double> obs{0.3, -1.0, 2.0, 0.0};
  const auto a = deterministic_action(p, obs);
  REQUIRE(a.size() == 2);
  CHECK(a.amounts[0] == 1.5);
  CHECK(a.amounts[1] == 1.5);
}

TEST_CASE("sampled actions are in range and seeded") {
  const PolicySnapshot p = small_policy(3, 3.0, 0.5);
  const std::vector<double> obs{0.1, 0.2, 0.3, 0.4};
  for (std::uint64_t s = 0; s < 500; ++s) {
    const auto a = sample_action(p, obs, s);
    for (double x : a.action.amounts) {
      CHECK(x >= 0.0);
      CHECK(x <= 3.0);
    }
    const auto b = sample_action(p, obs, s);
    CHECK(a.pre_squash == b.pre_squash);
    CHECK(a.log_prob == b.log_prob);
  }
}

TEST_CASE("log-prob matches the change-of-variables density") {
  const PolicySnapshot p = small_policy(4, 3.0, -0.2);
  const std::vector<double> obs{0.5, -0.5, 1.0, 0.0};
  const auto mu = p.mean(obs);
  const double sigma = std::exp(p.log_std(0));
  const std::vector<double> u{0.7, -1.2};
  const double expected = squashed_log_density(u[0], mu[0], sigma, 3.0) +
                          squashed_log_density(u[1], mu[1], sigma, 3.0);
  CHECK(action_log_prob(p, obs, u) == doctest::Approx(expected).epsilon(1e-12));
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = sample_action(p, obs, s);
    CHECK(a.log_prob ==
          doctest::Approx(action_log_prob(p, obs, a.pre_squash)).epsilon(1e-12));
  }
}

TEST_CASE("squashed density integrates to one over the action range") {
  const double a_max = 3.0;
  const double mu = 0.4;
  const double sigma = std::exp(-0.5);
  // Integrate in action space with the midpoint rule.
  const int n = 200000;
  const double h = a_max / n;
  double total = 0.0;
  for (int k = 0; k < n; ++k) {
    const double a = (k + 0.5) * h;
    const double u = std::atanh(2.0 * a / a_max - 1.0);
    total += std::exp(squashed_log_density(u, mu, sigma, a_max)) * h;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-3));

  PolicySnapshot p = zero_policy(a_max, std::log(sigma));
  const std::size_t out_bias = p.shape.parameter_count() - 2;
  p.params[out_bias] = mu;
  const std::vector<double> obs(4, 0.0);
  const std::vector<double> u{0.9, 0.9};
  const double expected = squashed_log_density(0.9, mu, sigma, a_max) +
                          squashed_log_density(0.9, 0.0, sigma, a_max);
  CHECK(action_log_prob(p, obs, u) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("Monte-Carlo action mean matches quadrature") {
  const double a_max = 3.0, mu = 0.4, sigma = std::exp(-0.5);
  PolicySnapshot p = zero_policy(a_max, std::log(sigma));
  p.params[p.shape.parameter_count() - 2] = mu;
  const std::vector<double> obs(4, 0.0);
  double mc = 0.0;
  const int samples = 40000;
  Rng rng(77);
  for (int k = 0; k < samples; ++k) mc += sample_action(p, obs, rng).action.amounts[0];
  mc /= samples;
  // E[squash(u)] by the trapezoid rule over +-10 sigma.
  double quad = 0.0;
  const int n = 20000;
  const double lo = mu - 10 * sigma, h = 20 * sigma / n;
  for (int k = 0; k <= n; ++k) {
    const double u = lo + k * h;
    const double z = (u - mu) / sigma;
    const double w = (k == 0 || k == n) ? 0.5 : 1.0;
    quad += w * h * squash(u, a_max) * std::exp(-0.5 * z * z) /
            (sigma * std::sqrt(2 * std::numbers::pi));
  }
  CHECK(mc == doctest::Approx(quad).epsilon(0.01));
}

TEST_CASE("returns-to-go") {
  const std::vector<double> ones{1.0, 1.0, 1.0};
  const auto r = returns_to_go(ones, 0.99);
  CHECK(r[0] == doctest::Approx(2.9701).epsilon(1e-12));
  CHECK(r[1] == doctest::Approx(1.99).epsilon(1e-12));
  CHECK(r[2] == 1.0);

  const std::vector<double> rewards{-0.5, 2.0, -1.25, 0.0, 3.0};
  const auto g = returns_to_go(rewards, 0.9);
  for (std::size_t t = 0; t + 1 < g.size(); ++t) {
    CHECK(g[t] == doctest::Approx(rewards[t] + 0.9 * g[t + 1]).epsilon(1e-14));
  }
  const auto myopic = returns_to_go(rewards, 1e-300);
  for (std::size_t t = 0; t < g.size(); ++t) {
    CHECK(myopic[t] == doctest::Approx(rewards[t]));
  }
  CHECK(returns_to_go(std::vector<double>{}, 0.99).empty());
}

TEST_CASE("importance ratio") {
  const PolicySnapshot p = small_policy(5);
  const std::vector<double> obs{0.1, 0.2, 0.3, 0.4};
  const std::vector<double> u{0.3, -0.3};
  const double lp = action_log_prob(p, obs, u);
  CHECK(importance_ratio(p, lp, obs, u) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(importance_ratio(p, lp - std::numbers::ln2, obs, u) ==
        doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("advantage normalization") {
  RolloutBatch b;
  for (double r : {1.0, 2.0, 3.0, 4.0}) {
    RolloutSample s;
    s.ret = r;
    b.samples.push_back(s);
  }
  b.normalize_advantages();
  double mean = 0.0, var = 0.0;
  for (const auto& s : b.samples) mean += s.advantage;
  for (const auto& s : b.samples) var += s.advantage * s.advantage;
  CHECK(mean == doctest::Approx(0.0).scale(1.0));
  CHECK(var / 4.0 == doctest::Approx(1.0));

  RolloutBatch flat;
  for (int k = 0; k < 3; ++k) {
    RolloutSample s;
    s.ret = 5.0;
    flat.samples.push_back(s);
  }
  flat.normalize_advantages();
  for (const auto& s : flat.samples) CHECK(s.advantage == 0.0);
}

TEST_CASE("clipped loss examples") {
  const PolicySnapshot p = small_policy(6);
  const std::vector<double> obs{0.0, 1.0, 0.0, -1.0};
  const std::vector<double> u{0.2, 0.1};
  auto loss_for = [&](double ratio, double adv) {
    RolloutBatch b;
    b.samples.push_back(make_sample(p, obs, u, ratio, adv));
    return ppo_loss(b, p, 0.3);
  };
  CHECK(loss_for(1.0, 0.7) == doctest::Approx(-0.7).epsilon(1e-12));
  CHECK(loss_for(1.4, 0.0) == 0.0);
  CHECK(loss_for(1.5, 1.0) == doctest::Approx(-1.3).epsilon(1e-12));
  CHECK(loss_for(0.5, 1.0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(loss_for(1.5, -1.0) == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(loss_for(0.5, -1.0) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK_THROWS_AS(ppo_loss(RolloutBatch{}, p, 0.3), Error);
}

TEST_CASE("clipped objective never exceeds the unclipped one") {
  const PolicySnapshot p = small_policy(7);
  const std::vector<double> obs{0.3, 0.3, 0.3, 0.3};
  const std::vector<double> u{0.0, 0.0};
  for (double ratio = 0.05; ratio < 3.0; ratio += 0.05) {
    for (double adv : {-2.0, -0.5, 0.5, 2.0}) {
      RolloutBatch b;
      b.samples.push_back(make_sample(p, obs, u, ratio, adv));
      CHECK(-ppo_loss(b, p, 0.2) <= ratio * adv + 1e-12);
    }
  }
}

TEST_CASE("analytic gradient matches finite differences") {
  const PolicySnapshot p = small_policy(8);
  PolicySnapshot behaviour = p;
  Rng rng(9);
  std::normal_distribution<double> g(0.0, 0.05);
  for (auto& x : behaviour.params) x += g(rng);
  RolloutBatch b;
  std::normal_distribution<double> o(0.0, 1.0);
  for (int k = 0; k < 8; ++k) {
    std::vector<double> obs(4);
    for (auto& x : obs) x = o(rng);
    const auto a = sample_action(behaviour, obs, rng);
    RolloutSample s;
    s.obs = obs;
    s.pre_squash = a.pre_squash;
    s.old_log_prob = a.log_prob;
    s.ret = o(rng);
    b.samples.push_back(s);
  }
  b.normalize_advantages();
  CHECK(gradient_check(p, b, 0.3) < 1e-4);
}

TEST_CASE("a small gradient step lowers the loss") {
  const PolicySnapshot p = small_policy(10);
  Rng rng(11);
  std::normal_distribution<double> o(0.0, 1.0);
  RolloutBatch b;
  for (int k = 0; k < 16; ++k) {
    std::vector<double> obs(4);
    for (auto& x : obs) x = o(rng);
    const auto a = sample_action(p, obs, rng);
    RolloutSample s;
    s.obs = obs;
    s.pre_squash = a.pre_squash;
    s.old_log_prob = a.log_prob;
    s.ret = a.action.total();  // reward more water
    b.samples.push_back(s);
  }
  b.normalize_advantages();
  std::vector<double> grad(p.parameter_count());
  const double before = ppo_loss_gradient(b, p, 0.2, grad);
  CHECK(before == doctest::Approx(ppo_loss(b, p, 0.2)).epsilon(1e-12));
  PolicySnapshot q = p;
  for (std::size_t k = 0; k < grad.size(); ++k) q.params[k] -= 1e-3 * grad[k];
  CHECK(ppo_loss(b, q, 0.2) < before);
}

TEST_CASE("Adam first step moves each parameter by the learning rate") {
  Adam adam(0.1, 3);
  std::vector<double> x{1.0, -2.0, 0.5};
  const std::vector<double> g{4.0, -0.01, 0.0};
  adam.step(x, g);
  CHECK(x[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(x[1] == doctest::Approx(-1.9).epsilon(1e-4));
  CHECK(x[2] == 0.5);
  std::vector<double> wrong(2);
  CHECK_THROWS_AS(adam.step(wrong, g), Error);
}

TEST_CASE("Adam minimizes a quadratic") {
  Adam adam(0.05, 2);
  std::vector<double> x{3.0, -4.0};
  for (int k = 0; k < 2000; ++k) {
    const std::vector<double> g{2 * (x[0] - 1.0), 2 * (x[1] + 2.0)};
    adam.step(x, g);
  }
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(x[1] == doctest::Approx(-2.0).epsilon(1e-3));
}

TEST_CASE("policy save and load round-trip") {
  PolicySnapshot p = small_policy(12);
  p.stats = NormalizationStats{{1.0, 2.0}, {0.5, 0.0}};
  p.config_hash = 0xdeadbeefcafef00dULL;
  const fs::path dir = fs::temp_directory_path() / "irrigation_agent_tests";
  fs::create_directories(dir);
  save_policy(dir / "p.bin", p);
  const PolicySnapshot q = load_policy(dir / "p.bin");
  CHECK(q.params == p.params);
  CHECK(q.a_max == p.a_max);
  CHECK(q.config_hash == p.config_hash);
  CHECK(q.stats.mean == p.stats.mean);
  CHECK(q.stats.std == p.stats.std);
  CHECK(q.shape.layer_sizes() == p.shape.layer_sizes());

  std::ofstream(dir / "junk.bin") << "not a policy";
  CHECK_THROWS_AS(load_policy(dir / "junk.bin"), Error);
  {
    std::ifstream in(dir / "p.bin", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream(dir / "short.bin", std::ios::binary)
        << bytes.substr(0, bytes.size() / 2);
  }
  CHECK_THROWS_AS(load_policy(dir / "short.bin"), Error);
  CHECK_THROWS_AS(load_policy(dir / "missing.bin"), Error);
}

TEST_CASE("windowed convergence contract") {
  TrainerConfig c;
  c.convergence_window = 25;
  c.min_iterations = 150;
  c.convergence_band = 0.03;
  std::vector<CurvePoint> flat(149, CurvePoint{0, -100.0, 0.0});
  CHECK_FALSE(has_converged(flat, c));
  flat.push_back({149, -100.0, 0.0});
  CHECK(has_converged(flat, c));

  std::vector<CurvePoint> rising;
  for (int k = 0; k < 200; ++k) rising.push_back({k, -300.0 + k, 0.0});
  CHECK_FALSE(has_converged(rising, c));

  std::vector<CurvePoint> step(200, CurvePoint{0, -100.0, 0.0});
  for (int k = 175; k < 200; ++k) step[k].total_reward = -102.0;
  CHECK(has_converged(step, c));
  for (int k = 175; k < 200; ++k) step[k].total_reward = -104.0;
  CHECK_FALSE(has_converged(step, c));
}

TEST_CASE("trainer config validation") {
  TrainerConfig c;
  CHECK_NOTHROW(c.validate());
  c.gamma = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainerConfig{};
  c.episodes_per_worker = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainerConfig{};
  c.clip_epsilon = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("training is deterministic for a fixed seed") {
  TrainerConfig t = toy_trainer();
  t.max_iterations = 5;
  t.workers = 2;
  const auto a = train(t, toy_factory(), 21);
  const auto b = train(t, toy_factory(), 21);
  CHECK(a.policy.params == b.policy.params);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t k = 0; k < a.curve.size(); ++k) {
    CHECK(a.curve[k].total_reward == b.curve[k].total_reward);
  }
  const auto c = train(t, toy_factory(), 22);
  CHECK(c.policy.params != a.policy.params);
}

TEST_CASE("agent learns to stop irrigating when water is free to keep") {
  const auto result = train(toy_trainer(), toy_factory(), 3);
  IrrigationEnv env([] {
    EnvConfig c;
    c.episode_length = 10;
    c.process_noise_std = 0.0;
    return c;
  }());
  const auto& s = env.reset(4, zero_et_weather(20));
  const auto a = deterministic_action(result.policy,
                                      normalize(s, result.policy.stats));
  CHECK(a.amounts[0] < 0.01);
  CHECK(a.amounts[1] < 0.01);
  CHECK(result.curve.back().total_reward > result.curve.front().total_reward);
}
