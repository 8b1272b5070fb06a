#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wmrl/grammar.hpp"
#include "wmrl/grid.hpp"
#include "wmrl/judge.hpp"
#include "wmrl/policy.hpp"
#include "wmrl/remote_judge.hpp"
#include "wmrl/vocab.hpp"

namespace wmrl {

enum class RewardMode { Base, Full };

std::string_view to_string(RewardMode m);

struct RewardBreakdown {
  double task = 0.0;
  double format = 0.0;
  double reasoning = 0.0;
  double repetition = 0.0;
  double total = 0.0;
};

// Base mode zeroes reasoning and repetition.
RewardBreakdown compose_turn_rewards(double task, double format, double reasoning, double repetition,
                                     RewardMode mode);

struct Turn {
  int turn_index = 0;
  std::string obs_text;
  std::vector<int> obs_ids;
  std::string response_text;
  std::vector<int> response_ids;     // includes the end-of-turn token when emitted
  std::vector<double> response_logp;  // aligned with response_ids
  bool length_capped = false;
  StructuredResponse parsed;
  std::vector<Action> actions_executed;
  JudgeVerdict verdict;
  RewardBreakdown reward;
  EnvState state_before;
  EnvState state_after;
};

struct Trajectory {
  EnvConfig env;
  std::uint64_t env_seed = 0;
  std::uint64_t sample_seed = 0;
  ReasoningStrategy strategy = ReasoningStrategy::WorldModeling;
  RewardMode mode = RewardMode::Full;
  EnvState initial_state;
  std::vector<Turn> turns;
  bool succeeded = false;
};

struct TurnSpan {
  std::size_t obs_begin = 0, obs_end = 0;
  std::size_t act_begin = 0, act_end = 0;
  bool operator==(const TurnSpan&) const = default;
};

struct TokenizedTrajectory {
  std::vector<int> token_ids;
  std::vector<std::uint8_t> loss_mask;
  std::vector<TurnSpan> turn_spans;
  std::vector<int> token_turn;      // turn index owning each token
  std::vector<double> old_logp;     // NaN where loss_mask is 0
  std::vector<double> per_turn_rewards;
  double trajectory_return = 0.0;
};

// The handle a rollout drives. begin_turn sees the true state so scripted
// agents can act on it; learned policies ignore it.
class TurnPolicy {
 public:
  virtual ~TurnPolicy() = default;
  virtual void begin_turn(const EnvState& /*state*/, int /*turn*/, Rng& /*rng*/) {}
  virtual SampledToken sample_token(const std::vector<int>& context, int turn, Rng& rng) = 0;
  virtual double value_estimate(const std::vector<int>& /*context*/, int /*turn*/) const { return 0.0; }
};

struct DecodeOptions {
  double temperature = 0.7;
  double top_p = 0.95;
  bool greedy = false;
};

class MlpAgent : public TurnPolicy {
 public:
  MlpAgent(const PolicyParams& policy, const ValueParams* value, DecodeOptions decode, int pad);
  SampledToken sample_token(const std::vector<int>& context, int turn, Rng& rng) override;
  double value_estimate(const std::vector<int>& context, int turn) const override;

 private:
  const PolicyParams& policy_;
  const ValueParams* value_;
  DecodeOptions decode_;
  int pad_;
};

// Emits a fixed response per turn, produced by a callback on the true state.
class ScriptedPolicy : public TurnPolicy {
 public:
  using Script = std::function<std::string(const EnvState&, int turn, Rng&)>;
  ScriptedPolicy(Script script, const Vocabulary& vocab, bool emit_eot = true);
  void begin_turn(const EnvState& state, int turn, Rng& rng) override;
  SampledToken sample_token(const std::vector<int>& context, int turn, Rng& rng) override;

 private:
  Script script_;
  const Vocabulary& vocab_;
  bool emit_eot_;
  std::vector<int> pending_;
  std::size_t next_ = 0;
};

// Well-formed responses for any strategy with beliefs read off the true
// state: observation = current relations, reasoning = the chosen moves,
// prediction = relations after simulating those moves. Moves are uniformly
// random (1..max per turn) or, with solve = true, a shortest solution prefix.
std::string demonstration_response(const EnvState& state, ReasoningStrategy strategy, RepresentationFormat fmt,
                                   const std::vector<Action>& moves);
std::vector<Action> random_moves(int max_actions, Rng& rng);
std::vector<Action> planned_moves(const EnvState& state, int max_actions, int budget);
// Belief text in the given representation; NaturalLanguage uses the compact
// phrasing so beliefs fit the response cap.
std::string belief_text(const EnvState& state, RepresentationFormat fmt);

ScriptedPolicy::Script demonstration_script(ReasoningStrategy strategy, RepresentationFormat fmt, bool solve,
                                            int max_actions, int budget);

struct RolloutOptions {
  ReasoningStrategy strategy = ReasoningStrategy::WorldModeling;
  RewardMode mode = RewardMode::Full;
  JudgeConfig judge;
  int max_response_tokens = 48;
  ActionSpace actions;
};

// One episode. env_seed picks the instance, sample_seed drives the policy.
// When tracker is given the repetition penalty is applied in-line; otherwise
// the repetition component stays 0 (see apply_repetition_penalties).
Trajectory collect_trajectory(const EnvConfig& env, std::uint64_t env_seed, TurnPolicy& policy, TurnJudge& judge,
                              const RolloutOptions& opt, std::uint64_t sample_seed, const Vocabulary& vocab,
                              RepetitionTracker* tracker = nullptr);

// Sequentially feeds every turn's observation and prediction text to the
// tracker (observation scored with se, prediction with tm), updates the
// repetition and total fields. No-op in Base mode.
void apply_repetition_penalties(std::vector<Trajectory>& batch, RepetitionTracker& tracker, const JudgeConfig& cfg);
double turn_repetition_penalty(const Turn& turn, RepetitionTracker& tracker, const JudgeConfig& cfg,
                               RewardMode mode);

TokenizedTrajectory tokenize_trajectory(const Trajectory& traj, const Vocabulary& vocab);

}  // namespace wmrl
