#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "wmrl/credit.hpp"
#include "wmrl/judge.hpp"
#include "wmrl/policy.hpp"
#include "wmrl/remote_judge.hpp"
#include "wmrl/rollout.hpp"

namespace wmrl {

struct TrainConfig {
  int batch_size = 128;
  int mini_batch = 32;
  int epochs_per_batch = 1;
  double clip_eps = 0.2;
  Estimator estimator = Estimator::BiLevelGAE;
  RewardMode reward_mode = RewardMode::Full;
  ReasoningStrategy strategy = ReasoningStrategy::WorldModeling;
  std::uint64_t seed = 0;
  double actor_lr = 3e-3;
  double critic_lr = 1e-2;
  GaeParams gae;
  JudgeConfig judge;
  bool normalize_advantages = false;
  int workers = 1;
  DecodeOptions decode;
  int max_response_tokens = 48;

  void validate() const;  // throws ConfigError
};

struct TokenRecord {
  ContextFeatures ctx;
  int token = 0;
  double advantage = 0.0;
  double old_logp = 0.0;
  double target = 0.0;
  std::uint8_t mask = 1;
};

struct LossResult {
  double loss = 0.0;
  NetParams grads;
  double entropy = 0.0;
  double kl_ref = 0.0;
  double clip_fraction = 0.0;
  double mask_sum = 0.0;
};

// -Σ M_i min(u_i A_i, clip(u_i) A_i) / Σ M_i. Throws std::invalid_argument
// when no record has mask 1.
LossResult ppo_loss(const PolicyParams& p, const std::vector<TokenRecord>& batch, double clip_eps,
                    const PolicyParams* reference = nullptr);
// Σ M_i (V_i - Y_i)^2 / Σ M_i.
LossResult critic_loss(const ValueParams& v, const std::vector<TokenRecord>& batch);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  NetParams m;
  NetParams v;
  long step = 0;
  static AdamState for_params(const NetParams& p);
  bool operator==(const AdamState&) const = default;
};

// One Adam step. Throws NumericalError, leaving params and state untouched,
// if any gradient is non-finite.
void apply_update(NetParams& params, const NetParams& grads, AdamState& state, double lr,
                  const AdamOptions& opt = {});

struct TrainState {
  PolicyParams policy;
  PolicyParams reference;
  ValueParams value;
  AdamState actor_opt;
  AdamState critic_opt;
  RepetitionTracker tracker;
  int iteration = 0;  // completed iterations
};

struct IterationMetrics {
  int iteration = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;
  double format_rate = 0.0;
  double se_score = 0.0;
  double tm_score = 0.0;
  double entropy = 0.0;
  double kl_ref = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double wall_ms = 0.0;
  double reasoning_reward = 0.0;
  std::optional<double> eval_success_rate;
  bool update_skipped = false;
};

// Everything the update needs for one trajectory.
struct PreparedTrajectory {
  TokenizedTrajectory tt;
  std::vector<double> values;
  std::vector<double> kl;
  AdvantageSet adv;
  std::vector<TokenRecord> records;
  double entropy_sum = 0.0;
  double kl_ref_sum = 0.0;
};

PreparedTrajectory prepare_trajectory(const Trajectory& traj, const TrainState& st, const TrainConfig& cfg,
                                      const Vocabulary& vocab);

// Seeds for the idx-th trajectory of an iteration. Training env seeds keep
// the top bit clear; evaluation seeds set it.
std::uint64_t train_env_seed(std::uint64_t run_seed, int iteration, int idx);
std::uint64_t train_sample_seed(std::uint64_t run_seed, int iteration, int idx);

// Collects batch_size episodes with the current policy (workers threads),
// applies repetition penalties in batch order, estimates advantages and runs
// epochs_per_batch passes of shuffled trajectory mini-batches, actor then
// critic. A non-finite update restores the pre-iteration parameters.
IterationMetrics train_iteration(const TrainConfig& cfg, const EnvConfig& env, TrainState& st, TurnJudge& judge,
                                 const Vocabulary& vocab);

// Runs f(i) for i in [0, n) on `workers` threads; exceptions are rethrown.
void parallel_for(int n, int workers, const std::function<void(int)>& f);

// Cross-entropy on demonstration tokens (masked positions of tt). Returns the
// mean negative log-likelihood before the step.
double behavior_cloning_step(PolicyParams& p, AdamState& opt, const std::vector<TokenizedTrajectory>& demos,
                             double lr);

}  // namespace wmrl
