#include <doctest.h>

#include <cmath>

#include "wmrl/errors.hpp"
#include "wmrl/harness.hpp"
#include "wmrl/rollout.hpp"

using namespace wmrl;

namespace {

EnvConfig fixed_sokoban() {
  EnvConfig c = EnvConfig::sokoban_defaults();
  c.layout = "######/#_P__#/#____#/#_X__#/#_O__#/######";
  return c;
}

ScriptedPolicy::Script moves_script(std::vector<std::vector<Action>> plan, ReasoningStrategy s) {
  return [plan, s](const EnvState& st, int turn, Rng&) {
    return demonstration_response(st, s, RepresentationFormat::NaturalLanguage, plan[static_cast<std::size_t>(turn)]);
  };
}

ScriptedPolicy::Script text_script(std::vector<std::string> texts) {
  return [texts](const EnvState&, int turn, Rng&) { return texts[static_cast<std::size_t>(turn)]; };
}

}  // namespace

TEST_CASE("scripted world-modeling episode rewards") {
  const auto& vocab = Vocabulary::standard();
  RolloutOptions opt;
  RuleJudge judge(opt.judge);
  ScriptedPolicy pol(moves_script({{Action::Right}, {Action::Left, Action::Down}, {Action::Down}},
                                  ReasoningStrategy::WorldModeling),
                     vocab);
  auto traj = collect_trajectory(fixed_sokoban(), 0, pol, judge, opt, 1, vocab);
  REQUIRE(traj.turns.size() == 3);
  CHECK(traj.succeeded);
  const double task[] = {-0.1, -0.2, 11.0};
  double sum = 0.0;
  for (int t = 0; t < 3; ++t) {
    const auto& r = traj.turns[t].reward;
    CHECK(r.task == doctest::Approx(task[t]).epsilon(1e-12));
    CHECK(r.format == 0.5);
    CHECK(r.reasoning == 1.0);
    CHECK(r.repetition == 0.0);
    CHECK(r.total == doctest::Approx(task[t] + 1.5).epsilon(1e-12));
    sum += r.total;
  }
  auto tt = tokenize_trajectory(traj, vocab);
  CHECK(std::abs(tt.trajectory_return - sum) < 1e-12);
  CHECK(replay_matches(traj));
}

TEST_CASE("base mode and malformed turns") {
  const auto& vocab = Vocabulary::standard();
  RolloutOptions opt;
  opt.mode = RewardMode::Base;
  RuleJudge judge(opt.judge);
  ScriptedPolicy pol(moves_script({{Action::Right}, {Action::Left, Action::Down}, {Action::Down}},
                                  ReasoningStrategy::WorldModeling),
                     vocab);
  auto traj = collect_trajectory(fixed_sokoban(), 0, pol, judge, opt, 1, vocab);
  CHECK(traj.turns[0].reward.reasoning == 0.0);
  CHECK(traj.turns[2].reward.total == doctest::Approx(11.5));

  opt.mode = RewardMode::Full;
  ScriptedPolicy bad(text_script({"<think></think><answer>Down</answer>", "<answer>Down</answer>",
                                  "<think><observation>box0 above player</observation><reasoning>down</reasoning>"
                                  "<prediction>box0 above player</prediction></think><answer>Down</answer>"}),
                     vocab);
  auto t2 = collect_trajectory(fixed_sokoban(), 0, bad, judge, opt, 1, vocab);
  REQUIRE(t2.turns.size() == 3);
  CHECK(t2.turns[0].reward.format == 0.0);
  CHECK(t2.turns[0].actions_executed.empty());
  CHECK(t2.turns[0].reward.task == 0.0);
  CHECK(t2.turns[2].reward.format == 0.5);
  CHECK(t2.turns[2].reward.reasoning == 0.0);
  CHECK(t2.turns[2].reward.task == doctest::Approx(-0.1));
}

TEST_CASE("length cap clears the turn") {
  const auto& vocab = Vocabulary::standard();
  RolloutOptions opt;
  opt.strategy = ReasoningStrategy::NoThink;
  opt.max_response_tokens = 4;
  RuleJudge judge(opt.judge);
  ScriptedPolicy pol(text_script({"<think></think><answer>Down,Down</answer>", "<think></think><answer>Up</answer>",
                                  "<think></think><answer>Up</answer>"}),
                     vocab);
  auto traj = collect_trajectory(fixed_sokoban(), 0, pol, judge, opt, 1, vocab);
  for (const auto& t : traj.turns) {
    CHECK(t.length_capped);
    CHECK(t.response_ids.size() == 4);
    CHECK(t.reward.format == 0.0);
    CHECK(t.actions_executed.empty());
  }
  auto tt = tokenize_trajectory(traj, vocab);
  for (const auto& sp : tt.turn_spans) CHECK(sp.act_end - sp.act_begin == 4);
}

TEST_CASE("tokenized layout invariants") {
  const auto& vocab = Vocabulary::standard();
  RolloutOptions opt;
  opt.max_response_tokens = 128;
  RuleJudge judge(opt.judge);
  EnvConfig env = EnvConfig::sokoban_defaults();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ScriptedPolicy pol(demonstration_script(ReasoningStrategy::WorldModeling, RepresentationFormat::NaturalLanguage,
                                            seed % 2 == 0, env.max_actions_per_step, env.action_budget()),
                       vocab);
    auto traj = collect_trajectory(env, seed, pol, judge, opt, seed + 100, vocab);
    auto tt = tokenize_trajectory(traj, vocab);
    CHECK(tt.token_ids.size() == tt.loss_mask.size());
    CHECK(tt.old_logp.size() == tt.loss_mask.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < tt.turn_spans.size(); ++k) {
      const auto& sp = tt.turn_spans[k];
      for (auto i = sp.obs_begin; i < sp.obs_end; ++i) CHECK(tt.loss_mask[i] == 0);
      for (auto i = sp.act_begin; i < sp.act_end; ++i) CHECK(tt.loss_mask[i] == 1);
      CHECK(tt.token_ids[sp.act_end - 1] == vocab.eot());
      sum += traj.turns[k].reward.total;
    }
    for (std::size_t i = 0; i < tt.loss_mask.size(); ++i) CHECK(std::isnan(tt.old_logp[i]) == (tt.loss_mask[i] == 0));
    CHECK(std::abs(sum - tt.trajectory_return) < 1e-12);
    CHECK(replay_matches(traj));
  }
}

TEST_CASE("random id streams survive detokenize and tokenize") {
  const auto& vocab = Vocabulary::standard();
  Rng rng(3);
  for (int n = 0; n < 5000; ++n) {
    std::vector<int> ids;
    const int len = 1 + static_cast<int>(rng.uniform_int(40));
    for (int i = 0; i < len; ++i) {
      int id = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(vocab.size())));
      if (id == vocab.eot()) id = vocab.pad();
      ids.push_back(id);
    }
    const std::string text = vocab.detokenize(ids);
    CAPTURE(text);
    REQUIRE(vocab.tokenize(text) == ids);
  }
}

TEST_CASE("repetition penalties applied in batch order") {
  const auto& vocab = Vocabulary::standard();
  RolloutOptions opt;
  RuleJudge judge(opt.judge);
  const std::string wrong =
      "<think><observation>box0 above player</observation><reasoning>up</reasoning>"
      "<prediction>box0 above player</prediction></think><answer>Up</answer>";
  std::vector<Trajectory> batch;
  for (int i = 0; i < 3; ++i) {
    ScriptedPolicy pol(text_script({wrong, wrong, wrong}), vocab);
    batch.push_back(collect_trajectory(fixed_sokoban(), 0, pol, judge, opt, 1, vocab));
  }
  RepetitionTracker tracker;
  apply_repetition_penalties(batch, tracker, opt.judge);
  // the same text appears as observation and prediction: two submissions per turn
  CHECK(tracker.count("box0 above player") == 2 * static_cast<long>(batch.size() * batch[0].turns.size()));
  for (const auto& tr : batch)
    for (const auto& t : tr.turns) {
      CHECK(t.reward.repetition == doctest::Approx(-0.2));
      CHECK(t.reward.total == doctest::Approx(t.reward.task + t.reward.format + t.reward.reasoning - 0.2));
    }
}
