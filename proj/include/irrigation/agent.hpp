#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "irrigation/env.hpp"
#include "irrigation/error.hpp"
#include "irrigation/mlp.hpp"
#include "irrigation/random.hpp"

namespace irrigation {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

// Gaussian policy over pre-squash actions u, mapped to [0, a_max] by
// a = a_max * (tanh(u) + 1) / 2. The network outputs the per-region mean;
// the log-std is a learned state-independent vector.
//
// params = [network parameters..., log_std (n_regions)]
struct PolicySnapshot {
  static constexpr std::uint32_t kFormatVersion = 1;

  MlpShape shape;
  std::vector<double> params;
  double a_max = 0.0;
  NormalizationStats stats;
  std::uint32_t version = kFormatVersion;
  std::uint64_t config_hash = 0;

  static PolicySnapshot create(std::size_t obs_dim, std::size_t n_regions,
                               std::span<const std::size_t> hidden,
                               double a_max, double init_log_std, Rng& rng,
                               double output_gain = 0.01);

  std::size_t n_regions() const { return shape.output_size(); }
  std::size_t parameter_count() const { return params.size(); }
  std::span<const double> network_params() const {
    return std::span<const double>(params).first(shape.parameter_count());
  }
  double log_std(std::size_t region) const;
  std::size_t log_std_offset() const { return shape.parameter_count(); }

  // Pre-squash mean for a normalized observation.
  std::vector<double> mean(std::span<const double> obs,
                           MlpShape::Tape* tape = nullptr) const;
};

double squash(double u, double a_max);

struct SampledAction {
  ActionVector action;
  std::vector<double> pre_squash;
  double log_prob = 0.0;
};

// Log density of the squashed action produced by `pre_squash`, including the
// change-of-variables term.
double action_log_prob(const PolicySnapshot& policy,
                       std::span<const double> obs,
                       std::span<const double> pre_squash);

SampledAction sample_action(const PolicySnapshot& policy,
                            std::span<const double> obs, Rng& rng);
SampledAction sample_action(const PolicySnapshot& policy,
                            std::span<const double> obs, std::uint64_t seed);

// Squashed network mean; used at deployment.
ActionVector deterministic_action(const PolicySnapshot& policy,
                                  std::span<const double> obs);

// Discounted returns-to-go within one episode.
std::vector<double> returns_to_go(std::span<const double> rewards,
                                  double gamma);

double importance_ratio(const PolicySnapshot& policy, double old_log_prob,
                        std::span<const double> obs,
                        std::span<const double> pre_squash);

struct RolloutSample {
  std::vector<double> obs;
  std::vector<double> pre_squash;
  double old_log_prob = 0.0;
  double reward = 0.0;
  double ret = 0.0;        // returns-to-go
  double advantage = 0.0;  // batch-normalized returns-to-go
};

struct RolloutBatch {
  std::vector<RolloutSample> samples;

  // advantage = (ret - mean) / std over the batch (centered only if std = 0).
  void normalize_advantages();
};

// Clipped surrogate loss averaged over the batch (or over `indices`).
double ppo_loss(const RolloutBatch& batch, const PolicySnapshot& policy,
                double epsilon);
// Returns the loss and writes dLoss/dparams into `grad` (overwritten).
double ppo_loss_gradient(const RolloutBatch& batch,
                         const PolicySnapshot& policy, double epsilon,
                         std::span<double> grad,
                         std::span<const std::size_t> indices = {});

// Central differences of `loss` around `params`.
std::vector<double> central_difference(
    const std::function<double(std::span<const double>)>& loss,
    std::span<const double> params, double h);

double max_relative_error(std::span<const double> analytic,
                          std::span<const double> numeric);

// Analytic PPO gradient against central differences; max relative error.
double gradient_check(const PolicySnapshot& policy, const RolloutBatch& batch,
                      double epsilon, double h = 1e-5);

class Adam {
 public:
  Adam(double learning_rate, std::size_t n, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

struct TrainerConfig {
  double learning_rate = 0.001;
  double gamma = 0.99;
  double clip_epsilon = 0.3;
  std::size_t minibatch_size = 128;
  int max_iterations = 1000;
  int workers = 2;
  int episodes_per_worker = 8;
  int episode_length = 30;
  double convergence_band = 0.03;
  // Convergence compares the mean of the last `convergence_window` episode
  // rewards against the window before it, from `min_iterations` on.
  int convergence_window = 25;
  int min_iterations = 150;
  int epochs = 1;
  std::vector<std::size_t> hidden{256, 256};
  double init_log_std = -0.5;
  // Random-action episodes used to estimate observation statistics.
  int normalization_episodes = 64;

  void validate() const;
};

// An episode generator owned by one rollout worker.
class EpisodeSource {
 public:
  virtual ~EpisodeSource() = default;
  virtual const EnvState& begin_episode(std::uint64_t seed) = 0;
  // Executes `proposed` (or a substitute) and returns the transition taken.
  virtual Transition step(const ActionVector& proposed) = 0;
  virtual bool done() const = 0;
  virtual const EnvState& state() const = 0;
  virtual std::size_t n_regions() const = 0;
  virtual double a_max() const = 0;
};

// Replaces an agent proposal with the action actually executed.
using ActionFilter =
    std::function<ActionVector(const EnvState&, const ActionVector&)>;

// Episodes over random windows of a weather corpus, optionally routed
// through an action filter (e.g. a safety shield).
class CorpusEpisodes final : public EpisodeSource {
 public:
  CorpusEpisodes(EnvConfig config, std::vector<WeatherSeries> corpus,
                 ActionFilter filter = {});

  const EnvState& begin_episode(std::uint64_t seed) override;
  Transition step(const ActionVector& proposed) override;
  bool done() const override { return env_.done(); }
  const EnvState& state() const override { return env_.state(); }
  std::size_t n_regions() const override { return env_.n_regions(); }
  double a_max() const override { return env_.config().a_max; }

 private:
  IrrigationEnv env_;
  std::vector<WeatherSeries> corpus_;
  ActionFilter filter_;
};

using EpisodeSourceFactory =
    std::function<std::unique_ptr<EpisodeSource>(int worker)>;

struct CurvePoint {
  int iteration = 0;
  double total_reward = 0.0;  // mean episode reward across workers
  double loss = 0.0;
};

struct TrainResult {
  PolicySnapshot policy;
  std::vector<CurvePoint> curve;
  bool converged = false;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, PolicySnapshot snapshot,
                   int iteration)
      : Error(what), snapshot(std::move(snapshot)), iteration(iteration) {}
  PolicySnapshot snapshot;
  int iteration;
};

NormalizationStats estimate_normalization(EpisodeSource& source,
                                          int episodes, std::uint64_t seed);

// Windowed convergence test on the per-iteration reward curve.
bool has_converged(std::span<const CurvePoint> curve,
                   const TrainerConfig& config);

using ProgressFn = std::function<void(const CurvePoint&)>;

TrainResult train(const TrainerConfig& config,
                  const EpisodeSourceFactory& factory, std::uint64_t seed,
                  const ProgressFn& progress = {});

void save_policy(const std::filesystem::path& path,
                 const PolicySnapshot& policy);
PolicySnapshot load_policy(const std::filesystem::path& path);

void write_training_curve(const std::filesystem::path& path,
                          std::span<const CurvePoint> curve);

}  // namespace irrigation
