#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "wmrl/ppo.hpp"

namespace wmrl {

struct ExperimentConfig {
  EnvConfig env;
  TrainConfig train;
  RepresentationFormat representation = RepresentationFormat::NaturalLanguage;
  int iterations = 100;

  int embed_dim = 16;
  int hidden = 64;
  int window = 32;
  double init_scale = 1.0;

  // Behavior cloning on scripted demonstrations before RL.
  int warmup_steps = 0;
  int warmup_batch = 32;
  double warmup_lr = 1e-2;
  bool warmup_solve = false;

  int eval_every = 10;
  int eval_episodes = 64;
  bool eval_greedy = true;

  std::string out_dir = "runs/default";
  bool resume = true;
  bool wall_clock = true;
  bool csv = false;
  std::string judge_url;
  int judge_timeout_ms = 5000;

  void validate() const;
};

// "key = value" lines, '#' comments. Later settings win.
using Settings = std::vector<std::pair<std::string, std::string>>;

Settings parse_settings(const std::string& text, const std::string& source);  // throws ConfigError
Settings settings_from_environment(const std::string& prefix = "WMRL_");
// Applies settings on top of defaults. env.kind is resolved first so its
// defaults sit under the other env.* keys. Unknown keys throw ConfigError.
ExperimentConfig build_config(const Settings& settings);
ExperimentConfig load_config(const std::optional<std::string>& path);  // file only, no env overrides
std::vector<std::string> known_config_keys();
std::string env_var_for_key(const std::string& key, const std::string& prefix = "WMRL_");
std::string describe_config(const ExperimentConfig& cfg);  // canonical "key = value" dump

NetShape policy_shape(const ExperimentConfig& cfg, const Vocabulary& vocab);
NetShape value_shape(const ExperimentConfig& cfg, const Vocabulary& vocab);
TrainState initial_state(const ExperimentConfig& cfg, const Vocabulary& vocab);
// Scripted demonstrations followed by behavior cloning; returns the last loss.
double warm_start(const ExperimentConfig& cfg, TrainState& st, const Vocabulary& vocab);

std::uint64_t eval_env_seed(std::uint64_t run_seed, int idx);

double eval_success_rate(const PolicyParams& policy, const EnvConfig& env, int n, bool greedy,
                         const TrainConfig& train, const Vocabulary& vocab);
// Well-formed NoThink responses with 1..max uniformly random moves.
double uniform_random_success_rate(const EnvConfig& env, int n, std::uint64_t seed, const Vocabulary& vocab);

std::string emit_metrics(const IterationMetrics& m);
IterationMetrics parse_metrics_line(const std::string& line);
void export_csv(const std::string& jsonl_path, const std::string& csv_path);

void save_checkpoint(const std::string& dir, const TrainState& st);
TrainState load_checkpoint(const std::string& dir);
bool checkpoint_exists(const std::string& dir);

// Trains for cfg.iterations (resuming from out_dir/checkpoint when present),
// writing out_dir/metrics.jsonl. Returns a process exit code.
int run_experiment(const ExperimentConfig& cfg);

std::string trajectory_document(const Trajectory& traj, const TokenizedTrajectory& tt);
std::string trajectory_dump_header();
// Re-steps the recorded actions from the recorded initial state and checks
// the task rewards; returns false on any mismatch.
bool replay_matches(const Trajectory& traj);

}  // namespace wmrl
