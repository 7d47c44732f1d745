#include "irrigation/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

namespace irrigation {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr char kPolicyMagic[8] = {'I', 'R', 'R', 'P', 'O', 'L', 'I', 'C'};

double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// log(d a / d u) for a = a_max * (tanh(u) + 1) / 2.
double log_squash_jacobian(double u, double a_max) {
  const double log_sech2 = 2.0 * (std::numbers::ln2 - u - softplus(-2.0 * u));
  return std::log(0.5 * a_max) + log_sech2;
}

double gaussian_log_prob(const PolicySnapshot& policy,
                         std::span<const double> mean,
                         std::span<const double> pre_squash) {
  double lp = 0.0;
  for (std::size_t j = 0; j < mean.size(); ++j) {
    const double ls = policy.log_std(j);
    const double z = (pre_squash[j] - mean[j]) * std::exp(-ls);
    lp += -0.5 * z * z - ls - kHalfLog2Pi;
  }
  return lp;
}

double squash_correction(std::span<const double> pre_squash, double a_max) {
  double c = 0.0;
  for (double u : pre_squash) c += log_squash_jacobian(u, a_max);
  return c;
}

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw Error(std::string("policy produced a non-finite ") + what +
                  " (training diverged?)");
    }
  }
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error("policy file truncated");
  return value;
}

void write_doubles(std::ostream& out, const std::vector<double>& v) {
  write_pod<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& in) {
  const auto n = read_pod<std::uint64_t>(in);
  if (n > (1ULL << 28)) throw Error("policy file corrupt: implausible size");
  std::vector<double> v(n);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw Error("policy file truncated");
  return v;
}

}  // namespace

PolicySnapshot PolicySnapshot::create(std::size_t obs_dim,
                                      std::size_t n_regions,
                                      std::span<const std::size_t> hidden,
                                      double a_max, double init_log_std,
                                      Rng& rng, double output_gain) {
  if (!(a_max > 0.0)) throw Error("policy: a_max must be > 0");
  std::vector<std::size_t> sizes{obs_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(n_regions);
  PolicySnapshot p;
  p.shape = MlpShape(std::move(sizes));
  p.params.assign(p.shape.parameter_count() + n_regions, 0.0);
  p.shape.initialize(p.params, rng, output_gain);
  std::fill(p.params.begin() + std::ptrdiff_t(p.shape.parameter_count()),
            p.params.end(), std::clamp(init_log_std, kLogStdMin, kLogStdMax));
  p.a_max = a_max;
  p.stats = NormalizationStats::identity(n_regions);
  if (obs_dim != observation_size(n_regions)) {
    p.stats = {};  // custom layouts carry no normalization
  }
  return p;
}

double PolicySnapshot::log_std(std::size_t region) const {
  return std::clamp(params[log_std_offset() + region], kLogStdMin, kLogStdMax);
}

std::vector<double> PolicySnapshot::mean(std::span<const double> obs,
                                         MlpShape::Tape* tape) const {
  return shape.forward(network_params(), obs, tape);
}

double squash(double u, double a_max) {
  return a_max * 0.5 * (std::tanh(u) + 1.0);
}

double action_log_prob(const PolicySnapshot& policy,
                       std::span<const double> obs,
                       std::span<const double> pre_squash) {
  const auto mu = policy.mean(obs);
  if (pre_squash.size() != mu.size()) {
    throw Error("action_log_prob: action dimension mismatch");
  }
  return gaussian_log_prob(policy, mu, pre_squash) -
         squash_correction(pre_squash, policy.a_max);
}

SampledAction sample_action(const PolicySnapshot& policy,
                            std::span<const double> obs, Rng& rng) {
  const auto mu = policy.mean(obs);
  check_finite(mu, "mean");
  std::normal_distribution<double> gauss(0.0, 1.0);
  SampledAction s;
  s.pre_squash.resize(mu.size());
  s.action.amounts.resize(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) {
    s.pre_squash[j] = mu[j] + std::exp(policy.log_std(j)) * gauss(rng);
    s.action.amounts[j] = squash(s.pre_squash[j], policy.a_max);
  }
  s.log_prob = gaussian_log_prob(policy, mu, s.pre_squash) -
               squash_correction(s.pre_squash, policy.a_max);
  return s;
}

SampledAction sample_action(const PolicySnapshot& policy,
                            std::span<const double> obs, std::uint64_t seed) {
  Rng rng(seed);
  return sample_action(policy, obs, rng);
}

ActionVector deterministic_action(const PolicySnapshot& policy,
                                  std::span<const double> obs) {
  const auto mu = policy.mean(obs);
  check_finite(mu, "mean");
  ActionVector a;
  for (double u : mu) a.amounts.push_back(squash(u, policy.a_max));
  return a;
}

std::vector<double> returns_to_go(std::span<const double> rewards,
                                  double gamma) {
  std::vector<double> out(rewards.size());
  double running = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    running = rewards[t] + gamma * running;
    out[t] = running;
  }
  return out;
}

double importance_ratio(const PolicySnapshot& policy, double old_log_prob,
                        std::span<const double> obs,
                        std::span<const double> pre_squash) {
  return std::exp(action_log_prob(policy, obs, pre_squash) - old_log_prob);
}

void RolloutBatch::normalize_advantages() {
  if (samples.empty()) return;
  double mean = 0.0;
  for (const auto& s : samples) mean += s.ret;
  mean /= double(samples.size());
  double var = 0.0;
  for (const auto& s : samples) var += (s.ret - mean) * (s.ret - mean);
  const double sd = std::sqrt(var / double(samples.size()));
  for (auto& s : samples) {
    s.advantage = sd > 1e-8 ? (s.ret - mean) / sd : s.ret - mean;
  }
}

double ppo_loss(const RolloutBatch& batch, const PolicySnapshot& policy,
                double epsilon) {
  if (batch.samples.empty()) throw Error("ppo_loss: empty batch");
  double total = 0.0;
  for (const auto& s : batch.samples) {
    const double w =
        importance_ratio(policy, s.old_log_prob, s.obs, s.pre_squash);
    const double clipped = std::clamp(w, 1.0 - epsilon, 1.0 + epsilon);
    total += -std::min(w * s.advantage, clipped * s.advantage);
  }
  return total / double(batch.samples.size());
}

double ppo_loss_gradient(const RolloutBatch& batch,
                         const PolicySnapshot& policy, double epsilon,
                         std::span<double> grad,
                         std::span<const std::size_t> indices) {
  if (batch.samples.empty()) throw Error("ppo_loss: empty batch");
  if (grad.size() != policy.parameter_count()) {
    throw Error("ppo_loss: gradient buffer has wrong size");
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(batch.samples.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    indices = all;
  }
  const double inv_n = 1.0 / double(indices.size());
  const std::size_t n_regions = policy.n_regions();
  const std::size_t ls_offset = policy.log_std_offset();

  MlpShape::Tape tape;
  std::vector<double> grad_mu(n_regions);
  double total = 0.0;
  for (std::size_t idx : indices) {
    const auto& s = batch.samples[idx];
    const auto mu = policy.mean(s.obs, &tape);
    const double lp = gaussian_log_prob(policy, mu, s.pre_squash) -
                      squash_correction(s.pre_squash, policy.a_max);
    const double w = std::exp(lp - s.old_log_prob);
    const double clipped = std::clamp(w, 1.0 - epsilon, 1.0 + epsilon);
    const double unclipped_obj = w * s.advantage;
    const double clipped_obj = clipped * s.advantage;
    total += -std::min(unclipped_obj, clipped_obj);

    // The min selects the clipped term only when it is strictly smaller,
    // which happens exactly when w sits outside the trust region.
    const bool flows = unclipped_obj <= clipped_obj ||
                       (w >= 1.0 - epsilon && w <= 1.0 + epsilon);
    if (!flows || s.advantage == 0.0) continue;

    // dL/dlogpi for this sample.
    const double coef = -s.advantage * w * inv_n;
    for (std::size_t j = 0; j < n_regions; ++j) {
      const double raw_ls = policy.params[ls_offset + j];
      const double ls = policy.log_std(j);
      const double inv_var = std::exp(-2.0 * ls);
      const double diff = s.pre_squash[j] - mu[j];
      grad_mu[j] = coef * diff * inv_var;
      if (raw_ls > kLogStdMin && raw_ls < kLogStdMax) {
        grad[ls_offset + j] += coef * (diff * diff * inv_var - 1.0);
      }
    }
    policy.shape.backward(policy.network_params(), tape, grad_mu,
                          grad.first(policy.shape.parameter_count()));
  }
  return total * inv_n;
}

std::vector<double> central_difference(
    const std::function<double(std::span<const double>)>& loss,
    std::span<const double> params, double h) {
  std::vector<double> x(params.begin(), params.end());
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = x[k];
    x[k] = orig + h;
    const double plus = loss(x);
    x[k] = orig - h;
    const double minus = loss(x);
    x[k] = orig;
    g[k] = (plus - minus) / (2.0 * h);
  }
  return g;
}

double max_relative_error(std::span<const double> analytic,
                          std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) {
    throw Error("max_relative_error: size mismatch");
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double a = analytic[k];
    const double n = numeric[k];
    const double denom = std::max({std::abs(a), std::abs(n), 1e-8});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

double gradient_check(const PolicySnapshot& policy, const RolloutBatch& batch,
                      double epsilon, double h) {
  std::vector<double> analytic(policy.parameter_count());
  ppo_loss_gradient(batch, policy, epsilon, analytic);
  PolicySnapshot probe = policy;
  const auto numeric = central_difference(
      [&](std::span<const double> p) {
        std::copy(p.begin(), p.end(), probe.params.begin());
        return ppo_loss(batch, probe, epsilon);
      },
      policy.params, h);
  return max_relative_error(analytic, numeric);
}

Adam::Adam(double learning_rate, std::size_t n, double beta1, double beta2,
           double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps),
      m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw Error("adam: parameter count mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * grad[k];
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * grad[k] * grad[k];
    params[k] -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps_);
  }
}

void TrainerConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw Error("trainer: gamma in (0, 1]");
  if (!(clip_epsilon > 0.0)) throw Error("trainer: clip epsilon must be > 0");
  if (minibatch_size < 1) throw Error("trainer: minibatch must be >= 1");
  if (!(learning_rate > 0.0)) throw Error("trainer: learning rate must be > 0");
  if (max_iterations < 1) throw Error("trainer: iterations must be >= 1");
  if (workers < 1) throw Error("trainer: workers must be >= 1");
  if (episodes_per_worker < 1) {
    throw Error("trainer: episodes_per_worker must be >= 1");
  }
  if (episode_length < 1) throw Error("trainer: episode length must be >= 1");
  if (epochs < 1) throw Error("trainer: epochs must be >= 1");
  if (convergence_window < 1) throw Error("trainer: window must be >= 1");
}

CorpusEpisodes::CorpusEpisodes(EnvConfig config,
                               std::vector<WeatherSeries> corpus,
                               ActionFilter filter)
    : env_(std::move(config)), corpus_(std::move(corpus)),
      filter_(std::move(filter)) {
  if (corpus_.empty()) throw Error("episode source: empty weather corpus");
  const std::size_t needed = std::size_t(env_.config().episode_length) + 1;
  for (const auto& season : corpus_) {
    if (!season || season->size() < needed) {
      throw Error("episode source: a corpus season is shorter than one episode");
    }
  }
}

const EnvState& CorpusEpisodes::begin_episode(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {21}));
  const auto& season =
      corpus_[std::uniform_int_distribution<std::size_t>(
          0, corpus_.size() - 1)(rng)];
  const std::size_t span =
      season->size() - std::size_t(env_.config().episode_length) - 1;
  const std::size_t start =
      std::uniform_int_distribution<std::size_t>(0, span)(rng);
  return env_.reset(derive_seed(seed, {22}), season, start);
}

Transition CorpusEpisodes::step(const ActionVector& proposed) {
  if (!filter_) return env_.step(proposed);
  return env_.step(filter_(env_.state(), proposed));
}

NormalizationStats estimate_normalization(EpisodeSource& source,
                                          int episodes, std::uint64_t seed) {
  std::vector<std::vector<double>> rows;
  Rng rng(derive_seed(seed, {31}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int e = 0; e < episodes; ++e) {
    const EnvState* state = &source.begin_episode(derive_seed(seed, {32, std::uint64_t(e)}));
    rows.push_back(raw_features(*state));
    // Each episode holds a random irrigation level so visited water
    // contents cover the reachable range.
    const double level = unit(rng) * source.a_max();
    while (!source.done()) {
      ActionVector a;
      for (std::size_t i = 0; i < source.n_regions(); ++i) {
        a.amounts.push_back(
            std::min(source.a_max(), level * (0.8 + 0.4 * unit(rng))));
      }
      const Transition tr = source.step(a);
      rows.push_back(raw_features(tr.next_state));
    }
  }
  return NormalizationStats::from_samples(rows, source.n_regions());
}

bool has_converged(std::span<const CurvePoint> curve,
                   const TrainerConfig& config) {
  const std::size_t w = std::size_t(config.convergence_window);
  if (curve.size() < std::size_t(config.min_iterations) || curve.size() < 2 * w) {
    return false;
  }
  double recent = 0.0;
  double previous = 0.0;
  for (std::size_t k = 0; k < w; ++k) {
    recent += curve[curve.size() - 1 - k].total_reward;
    previous += curve[curve.size() - 1 - w - k].total_reward;
  }
  recent /= double(w);
  previous /= double(w);
  return std::abs(recent - previous) <=
         config.convergence_band * std::abs(previous);
}

namespace {

struct EpisodeRecord {
  std::vector<RolloutSample> samples;
  double total_reward = 0.0;
};

EpisodeRecord run_episode(EpisodeSource& source, const PolicySnapshot& policy,
                          std::uint64_t seed, double gamma) {
  EpisodeRecord rec;
  Rng rng(derive_seed(seed, {41}));
  const EnvState* state = &source.begin_episode(derive_seed(seed, {42}));
  std::vector<double> rewards;
  while (!source.done()) {
    RolloutSample s;
    s.obs = normalize(*state, policy.stats);
    const SampledAction act = sample_action(policy, s.obs, rng);
    s.pre_squash = act.pre_squash;
    s.old_log_prob = act.log_prob;
    const Transition tr = source.step(act.action);
    s.reward = tr.reward;
    rewards.push_back(tr.reward);
    rec.total_reward += tr.reward;
    rec.samples.push_back(std::move(s));
    state = &source.state();
  }
  const auto ret = returns_to_go(rewards, gamma);
  for (std::size_t t = 0; t < ret.size(); ++t) rec.samples[t].ret = ret[t];
  return rec;
}

}  // namespace

TrainResult train(const TrainerConfig& config,
                  const EpisodeSourceFactory& factory, std::uint64_t seed,
                  const ProgressFn& progress) {
  config.validate();
  std::vector<std::unique_ptr<EpisodeSource>> sources;
  for (int w = 0; w < config.workers; ++w) {
    sources.push_back(factory(w));
    if (!sources.back()) throw Error("train: episode factory returned null");
  }
  const std::size_t n_regions = sources.front()->n_regions();

  Rng init_rng(derive_seed(seed, {51}));
  TrainResult result;
  result.policy = PolicySnapshot::create(
      observation_size(n_regions), n_regions, config.hidden,
      sources.front()->a_max(), config.init_log_std, init_rng);
  result.policy.stats = estimate_normalization(
      *sources.front(), config.normalization_episodes, derive_seed(seed, {52}));
  PolicySnapshot& policy = result.policy;

  Adam adam(config.learning_rate, policy.parameter_count());
  std::vector<double> grad(policy.parameter_count());
  Rng shuffle_rng(derive_seed(seed, {53}));

  for (int it = 0; it < config.max_iterations; ++it) {
    const PolicySnapshot old = policy;
    const std::size_t per_worker = std::size_t(config.episodes_per_worker);
    std::vector<EpisodeRecord> records(sources.size() * per_worker);
    std::vector<std::exception_ptr> errors(sources.size());
    auto collect = [&](std::size_t w) {
      try {
        for (std::size_t e = 0; e < per_worker; ++e) {
          records[w * per_worker + e] = run_episode(
              *sources[w], old,
              derive_seed(seed, {54, std::uint64_t(it), std::uint64_t(w),
                                 std::uint64_t(e)}),
              config.gamma);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    };
    if (sources.size() == 1) {
      collect(0);
    } else {
      std::vector<std::thread> threads;
      for (std::size_t w = 0; w < sources.size(); ++w) {
        threads.emplace_back(collect, w);
      }
      for (auto& t : threads) t.join();
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }

    RolloutBatch batch;
    double mean_reward = 0.0;
    for (auto& rec : records) {
      mean_reward += rec.total_reward;
      for (auto& s : rec.samples) batch.samples.push_back(std::move(s));
    }
    mean_reward /= double(records.size());
    batch.normalize_advantages();

    std::vector<std::size_t> order(batch.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double loss = 0.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      for (std::size_t lo = 0; lo < order.size(); lo += config.minibatch_size) {
        const std::size_t hi = std::min(order.size(), lo + config.minibatch_size);
        const std::span<const std::size_t> idx(order.data() + lo, hi - lo);
        loss = ppo_loss_gradient(batch, policy, config.clip_epsilon, grad, idx);
        const bool finite =
            std::isfinite(loss) &&
            std::all_of(grad.begin(), grad.end(),
                        [](double g) { return std::isfinite(g); });
        if (!finite) {
          throw TrainingDiverged("train: non-finite loss at iteration " +
                                     std::to_string(it),
                                 policy, it);
        }
        adam.step(policy.params, grad);
      }
    }

    result.curve.push_back({it, mean_reward, loss});
    if (progress) progress(result.curve.back());
    if (has_converged(result.curve, config)) {
      result.converged = true;
      break;
    }
  }
  return result;
}

void save_policy(const std::filesystem::path& path,
                 const PolicySnapshot& policy) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write policy file: " + path.string());
  out.write(kPolicyMagic, sizeof(kPolicyMagic));
  write_pod<std::uint32_t>(out, policy.version);
  write_pod<std::uint64_t>(out, policy.config_hash);
  write_pod<double>(out, policy.a_max);
  const auto& sizes = policy.shape.layer_sizes();
  write_pod<std::uint64_t>(out, sizes.size());
  for (auto s : sizes) write_pod<std::uint64_t>(out, s);
  write_doubles(out, policy.params);
  write_doubles(out, policy.stats.mean);
  write_doubles(out, policy.stats.std);
  if (!out) throw Error("failed writing policy file: " + path.string());
}

PolicySnapshot load_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open policy file: " + path.string());
  char magic[sizeof(kPolicyMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kPolicyMagic, sizeof(magic)) != 0) {
    throw Error("not a policy file: " + path.string());
  }
  PolicySnapshot p;
  p.version = read_pod<std::uint32_t>(in);
  if (p.version != PolicySnapshot::kFormatVersion) {
    throw Error("unsupported policy format version " +
                std::to_string(p.version));
  }
  p.config_hash = read_pod<std::uint64_t>(in);
  p.a_max = read_pod<double>(in);
  const auto layers = read_pod<std::uint64_t>(in);
  if (layers < 2 || layers > 64) throw Error("policy file corrupt: layers");
  std::vector<std::size_t> sizes;
  for (std::uint64_t k = 0; k < layers; ++k) {
    sizes.push_back(std::size_t(read_pod<std::uint64_t>(in)));
  }
  p.shape = MlpShape(std::move(sizes));
  p.params = read_doubles(in);
  p.stats.mean = read_doubles(in);
  p.stats.std = read_doubles(in);
  if (p.params.size() != p.shape.parameter_count() + p.shape.output_size()) {
    throw Error("policy file corrupt: parameter count");
  }
  return p;
}

void write_training_curve(const std::filesystem::path& path,
                          std::span<const CurvePoint> curve) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write training curve: " + path.string());
  out << "iteration,total_reward,loss\n";
  out.precision(10);
  for (const auto& c : curve) {
    out << c.iteration << ',' << c.total_reward << ',' << c.loss << '\n';
  }
}

}  // namespace irrigation
