#include <doctest.h>

#include "oracles/reference_parser.hpp"
#include "wmrl/errors.hpp"
#include "wmrl/grammar.hpp"
#include "wmrl/rng.hpp"
#include "wmrl/vocab.hpp"

using namespace wmrl;

namespace {

const ReasoningStrategy kStrategies[] = {ReasoningStrategy::NoThink, ReasoningStrategy::FreeThink,
                                         ReasoningStrategy::StateEstimation, ReasoningStrategy::TransitionModeling,
                                         ReasoningStrategy::WorldModeling};

}  // namespace

TEST_CASE("world modeling response parses") {
  const std::string text =
      "<think><observation>box0 is below the player</observation><reasoning>push down</reasoning>"
      "<prediction>box0 at the same place as target0</prediction></think><answer>Down, Left</answer>";
  auto r = parse_response(text, ReasoningStrategy::WorldModeling);
  CHECK(r.format_ok);
  CHECK(*r.state_belief == "box0 is below the player");
  CHECK(*r.action_belief == "push down");
  CHECK(*r.next_state_belief == "box0 at the same place as target0");
  CHECK(r.executable_actions == std::vector<Action>{Action::Down, Action::Left});
  CHECK(format_reward(r) == kFormatReward);

  auto wrong = parse_response(text, ReasoningStrategy::StateEstimation);
  CHECK_FALSE(wrong.format_ok);
  CHECK(wrong.executable_actions.empty());
  CHECK(format_reward(wrong) == 0.0);
}

TEST_CASE("no think and free think bodies") {
  CHECK(parse_response("<think></think><answer>Up</answer>", ReasoningStrategy::NoThink).format_ok);
  CHECK_FALSE(parse_response("<think> </think><answer>Up</answer>", ReasoningStrategy::NoThink).format_ok);
  CHECK_FALSE(parse_response("<think></think><answer>Up</answer>", ReasoningStrategy::FreeThink).format_ok);
  CHECK(parse_response("<think>go up</think><answer>Up</answer>", ReasoningStrategy::FreeThink).format_ok);
  CHECK_FALSE(parse_response("<think></think><answer> </answer>", ReasoningStrategy::NoThink).format_ok);
  CHECK_FALSE(parse_response("<think></think><answer>Up</answer>junk", ReasoningStrategy::NoThink).format_ok);
  CHECK(parse_response(" <think></think>\n<answer>Up</answer>\n", ReasoningStrategy::NoThink).format_ok);
  CHECK_FALSE(parse_response("<think></think><answer>,</answer>", ReasoningStrategy::NoThink).format_ok);
  CHECK_FALSE(parse_response("<think></think><answer>jump</answer>", ReasoningStrategy::NoThink).format_ok);
}

TEST_CASE("parse_actions drops unknowns then truncates") {
  const std::vector<std::string> names{"Up", "Down", "Left", "Right"};
  CHECK(parse_actions("up, jump, DOWN, left, right", names, 3) ==
        std::vector<Action>{Action::Up, Action::Down, Action::Left});
  CHECK(parse_actions("", names, 3).empty());
  CHECK(parse_actions("Right", names, 0).empty());
}

TEST_CASE("round trip for every strategy") {
  for (auto s : kStrategies) {
    StructuredResponse in;
    if (s == ReasoningStrategy::FreeThink) in.free_think = "move up";
    if (uses_state_belief(s)) in.state_belief = "box0 above player";
    if (s != ReasoningStrategy::NoThink && s != ReasoningStrategy::FreeThink) in.action_belief = "push up";
    if (uses_prediction(s)) in.next_state_belief = "box0 same place target0";
    in.answer_text = "Up";
    const std::string text = render_response(in, s);
    auto out = parse_response(text, s);
    CAPTURE(text);
    CHECK(out.format_ok);
    CHECK(out.free_think == in.free_think);
    CHECK(out.state_belief == in.state_belief);
    CHECK(out.action_belief == in.action_belief);
    CHECK(out.next_state_belief == in.next_state_belief);
    CHECK(out.answer_text == "Up");
  }
}

TEST_CASE("parser agrees with the regex skeleton on random tag soup") {
  const std::vector<std::string> pieces{"<think>", "</think>", "<answer>", "</answer>", "<observation>",
                                        "</observation>", "<reasoning>", "</reasoning>", "<prediction>",
                                        "</prediction>", "Up", "box0 above", " ", "\n", "x", "<", ">"};
  Rng rng(11);
  int agreed_ok = 0;
  for (int n = 0; n < 20000; ++n) {
    const auto s = kStrategies[rng.uniform_int(5)];
    std::string text;
    if (rng.uniform01() < 0.5) {
      // near-valid: start from a valid render and perturb
      StructuredResponse in;
      if (s == ReasoningStrategy::FreeThink) in.free_think = "think";
      if (uses_state_belief(s)) in.state_belief = "a";
      if (s >= ReasoningStrategy::StateEstimation) in.action_belief = "b";
      if (uses_prediction(s)) in.next_state_belief = "c";
      in.answer_text = "Up";
      text = render_response(in, s);
      const int edits = static_cast<int>(rng.uniform_int(3));
      for (int e = 0; e < edits; ++e) {
        const auto pos = rng.uniform_int(text.size() + 1);
        if (rng.uniform01() < 0.5 && pos < text.size()) text.erase(pos, 1 + rng.uniform_int(4));
        else text.insert(pos, pieces[rng.uniform_int(pieces.size())]);
      }
    } else {
      const int k = 1 + static_cast<int>(rng.uniform_int(10));
      for (int i = 0; i < k; ++i) text += pieces[rng.uniform_int(pieces.size())];
    }
    const bool ours = parse_response(text, s).format_ok;
    const bool ref = oracle::skeleton_ok(text, std::string(to_string(s)));
    CAPTURE(text);
    CAPTURE(to_string(s));
    REQUIRE(ours == ref);
    agreed_ok += ours;
  }
  CHECK(agreed_ok > 1000);
}

TEST_CASE("render_belief formats") {
  EnvState s = state_from_symbolic(EnvKind::Sokoban, "#####/#P__#/#X_O#/#####");
  CHECK(render_belief(s, RepresentationFormat::Symbolic) == render_symbolic(s));
  CHECK(render_belief(s, RepresentationFormat::Structured) ==
        "{player_position: (1, 1), box_positions: [(2, 1)], target_positions: [(2, 3)], grid_size: (4, 5)}");
  EnvState f = state_from_symbolic(EnvKind::FrozenLake, "P_O/__G");
  CHECK(render_belief(f, RepresentationFormat::Structured) ==
        "{player_position: (0, 0), target_position: (1, 2), hole_positions: [(0, 2)], grid_size: (2, 3)}");
}

TEST_CASE("vocabulary round trip") {
  const auto& v = Vocabulary::standard();
  CHECK(v.size() <= 128);
  const std::string text =
      "<think><observation>box0 is below and at the same column as the player</observation>"
      "<reasoning>push down</reasoning><prediction>target0 same place box0</prediction></think>"
      "<answer>Down,Left</answer>";
  auto ids = v.tokenize(text);
  CHECK(v.detokenize(ids) == text);
  CHECK_THROWS_AS(v.tokenize("zebra"), VocabularyError);
  CHECK_THROWS_AS(v.tokenize("player2x"), VocabularyError);
  auto obs = v.encode_observation("P_\n_G", 1);
  CHECK(obs.size() == 6);
  CHECK(obs[0] == v.turn_token(1));
  CHECK(v.turn_token(100) == v.turn_token(Vocabulary::kTurnTokens - 1));
  auto structured = v.tokenize("{player_position: (1, 2), box_positions: [(3, 4)]}");
  CHECK(v.detokenize(structured) == "{player_position:(1,2),box_positions:[(3,4)]}");
}
