#include "wmrl/rollout.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "wmrl/errors.hpp"
#include "wmrl/relations.hpp"

namespace wmrl {

std::string_view to_string(RewardMode m) { return m == RewardMode::Base ? "base" : "full"; }

RewardBreakdown compose_turn_rewards(double task, double format, double reasoning, double repetition,
                                     RewardMode mode) {
  RewardBreakdown r;
  r.task = task;
  r.format = format;
  if (mode == RewardMode::Full) {
    r.reasoning = reasoning;
    r.repetition = repetition;
  }
  r.total = r.task + r.format + r.reasoning + r.repetition;
  return r;
}

MlpAgent::MlpAgent(const PolicyParams& policy, const ValueParams* value, DecodeOptions decode, int pad)
    : policy_(policy), value_(value), decode_(decode), pad_(pad) {}

SampledToken MlpAgent::sample_token(const std::vector<int>& context, int turn, Rng& rng) {
  const auto ctx = make_context(context, context.size(), policy_.shape.window, pad_, turn);
  const auto logits = policy_logits(policy_, ctx);
  return decode_.greedy ? greedy_token(logits) : wmrl::sample_token(logits, decode_.temperature, decode_.top_p, rng);
}

double MlpAgent::value_estimate(const std::vector<int>& context, int turn) const {
  if (!value_) return 0.0;
  return wmrl::value_estimate(*value_, make_context(context, context.size(), value_->shape.window, pad_, turn));
}

ScriptedPolicy::ScriptedPolicy(Script script, const Vocabulary& vocab, bool emit_eot)
    : script_(std::move(script)), vocab_(vocab), emit_eot_(emit_eot) {}

void ScriptedPolicy::begin_turn(const EnvState& state, int turn, Rng& rng) {
  pending_ = vocab_.tokenize(script_(state, turn, rng));
  if (emit_eot_) pending_.push_back(vocab_.eot());
  next_ = 0;
}

SampledToken ScriptedPolicy::sample_token(const std::vector<int>&, int, Rng&) {
  if (next_ >= pending_.size()) return {vocab_.eot(), 0.0};
  return {pending_[next_++], 0.0};
}

namespace {

std::string lower_word(Action a) {
  std::string s(to_string(a));
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

EnvState simulate(EnvState s, const std::vector<Action>& moves) {
  for (Action a : moves) {
    if (s.terminated) break;
    s = step(s, a).new_state;
  }
  return s;
}

}  // namespace

std::string belief_text(const EnvState& state, RepresentationFormat fmt) {
  if (fmt == RepresentationFormat::NaturalLanguage) return describe_compact(extract_relations(state));
  return render_belief(state, fmt);
}

std::string demonstration_response(const EnvState& state, ReasoningStrategy strategy, RepresentationFormat fmt,
                                   const std::vector<Action>& moves) {
  StructuredResponse r;
  std::string words;
  std::string answer;
  for (Action a : moves) {
    if (!words.empty()) words += ' ';
    words += lower_word(a);
    if (!answer.empty()) answer += ',';
    answer += to_string(a);
  }
  r.answer_text = answer;
  r.free_think = "move " + words;
  r.action_belief = words;
  r.state_belief = belief_text(state, fmt);
  r.next_state_belief = belief_text(simulate(state, moves), fmt);
  return render_response(r, strategy);
}

std::vector<Action> random_moves(int max_actions, Rng& rng) {
  const int n = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_actions)));
  std::vector<Action> out;
  for (int i = 0; i < n; ++i) out.push_back(kAllActions[rng.uniform_int(4)]);
  return out;
}

std::vector<Action> planned_moves(const EnvState& state, int max_actions, int budget) {
  auto path = shortest_solution(state, budget);
  if (!path) return {};
  if (static_cast<int>(path->size()) > max_actions) path->resize(static_cast<std::size_t>(max_actions));
  return *path;
}

ScriptedPolicy::Script demonstration_script(ReasoningStrategy strategy, RepresentationFormat fmt, bool solve,
                                            int max_actions, int budget) {
  return [=](const EnvState& s, int turn, Rng& rng) {
    std::vector<Action> moves;
    if (solve) moves = planned_moves(s, max_actions, std::max(1, budget - turn * max_actions));
    if (moves.empty()) moves = random_moves(max_actions, rng);
    return demonstration_response(s, strategy, fmt, moves);
  };
}

double turn_repetition_penalty(const Turn& t, RepetitionTracker& tracker, const JudgeConfig& cfg, RewardMode mode) {
  if (mode == RewardMode::Base) return 0.0;
  double p = 0.0;
  if (t.parsed.state_belief) p += tracker.submit(std::string(trim(*t.parsed.state_belief)), t.verdict.se_score, cfg);
  if (t.parsed.next_state_belief)
    p += tracker.submit(std::string(trim(*t.parsed.next_state_belief)), t.verdict.tm_score, cfg);
  return p;
}

Trajectory collect_trajectory(const EnvConfig& env, std::uint64_t env_seed, TurnPolicy& policy, TurnJudge& judge,
                              const RolloutOptions& opt, std::uint64_t sample_seed, const Vocabulary& vocab,
                              RepetitionTracker* tracker) {
  Trajectory traj;
  traj.env = env;
  traj.env_seed = env_seed;
  traj.sample_seed = sample_seed;
  traj.strategy = opt.strategy;
  traj.mode = opt.mode;
  EnvState state = reset(env, env_seed).first;
  traj.initial_state = state;

  Rng rng(sample_seed);
  std::vector<int> context;
  const bool judged = uses_state_belief(opt.strategy) || uses_prediction(opt.strategy);

  for (int t = 0; t < env.max_turns && !state.terminated; ++t) {
    Turn turn;
    turn.turn_index = t;
    turn.state_before = state;
    turn.obs_text = render_symbolic(state);
    turn.obs_ids = vocab.encode_observation(turn.obs_text, t);
    context.insert(context.end(), turn.obs_ids.begin(), turn.obs_ids.end());

    policy.begin_turn(state, t, rng);
    std::vector<int> text_ids;
    bool ended = false;
    for (int k = 0; k < opt.max_response_tokens; ++k) {
      const SampledToken tok = policy.sample_token(context, t, rng);
      turn.response_ids.push_back(tok.id);
      turn.response_logp.push_back(tok.logp);
      context.push_back(tok.id);
      if (tok.id == vocab.eot()) {
        ended = true;
        break;
      }
      text_ids.push_back(tok.id);
    }
    turn.length_capped = !ended;
    turn.response_text = vocab.detokenize(text_ids);
    turn.parsed = parse_response(turn.response_text, opt.strategy, opt.actions);
    if (turn.length_capped) {
      turn.parsed.format_ok = false;
      turn.parsed.executable_actions.clear();
    }

    double task = 0.0;
    EnvState next = state;
    for (Action a : turn.parsed.executable_actions) {
      if (next.terminated) break;
      StepOutcome out = step(next, a);
      task += out.task_reward;
      next = std::move(out.new_state);
      turn.actions_executed.push_back(a);
    }
    turn.state_after = next;

    if (judged)
      turn.verdict = judge.judge(turn.parsed, extract_relations(state), extract_relations(next), env.kind);
    const double reasoning = judged ? reasoning_reward(turn.verdict, opt.judge) : 0.0;
    const double repetition = tracker ? turn_repetition_penalty(turn, *tracker, opt.judge, opt.mode) : 0.0;
    turn.reward = compose_turn_rewards(task, format_reward(turn.parsed), reasoning, repetition, opt.mode);

    state = std::move(next);
    traj.turns.push_back(std::move(turn));
  }
  traj.succeeded = state.succeeded;
  return traj;
}

void apply_repetition_penalties(std::vector<Trajectory>& batch, RepetitionTracker& tracker, const JudgeConfig& cfg) {
  for (auto& traj : batch) {
    if (traj.mode == RewardMode::Base) continue;
    for (auto& t : traj.turns) {
      const double p = turn_repetition_penalty(t, tracker, cfg, traj.mode);
      t.reward = compose_turn_rewards(t.reward.task, t.reward.format, t.reward.reasoning, p, traj.mode);
    }
  }
}

TokenizedTrajectory tokenize_trajectory(const Trajectory& traj, const Vocabulary& vocab) {
  TokenizedTrajectory tt;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const Turn& t : traj.turns) {
    TurnSpan span;
    span.obs_begin = tt.token_ids.size();
    for (int id : vocab.encode_observation(t.obs_text, t.turn_index)) {
      tt.token_ids.push_back(id);
      tt.loss_mask.push_back(0);
      tt.old_logp.push_back(nan);
      tt.token_turn.push_back(t.turn_index);
    }
    span.obs_end = span.act_begin = tt.token_ids.size();

    std::vector<int> ids = vocab.tokenize(t.response_text);
    if (!t.length_capped) ids.push_back(vocab.eot());
    if (!t.response_ids.empty() && ids != t.response_ids)
      throw VocabularyError("response text does not re-tokenize to the sampled ids");
    for (std::size_t k = 0; k < ids.size(); ++k) {
      tt.token_ids.push_back(ids[k]);
      tt.loss_mask.push_back(1);
      tt.old_logp.push_back(k < t.response_logp.size() ? t.response_logp[k] : 0.0);
      tt.token_turn.push_back(t.turn_index);
    }
    span.act_end = tt.token_ids.size();
    tt.turn_spans.push_back(span);
    tt.per_turn_rewards.push_back(t.reward.total);
    tt.trajectory_return += t.reward.total;
  }
  return tt;
}

}  // namespace wmrl
