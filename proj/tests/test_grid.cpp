#include <doctest.h>

#include <set>

#include "oracles/sokoban_oracle.hpp"
#include "wmrl/errors.hpp"
#include "wmrl/grid.hpp"
#include "wmrl/relations.hpp"

using namespace wmrl;

namespace {

EnvState soko(const char* grid) { return state_from_symbolic(EnvKind::Sokoban, grid); }

oracle::Board board_of(const EnvState& s) {
  oracle::Board b{s.rows, s.cols, {}, {s.targets[0].row, s.targets[0].col}};
  for (auto w : s.walls) b.walls.insert({w.row, w.col});
  return b;
}

}  // namespace

TEST_CASE("symbolic round trip") {
  const char* grid = "######/#_P__#/#_X__#/#_O__#/#____#/######";
  EnvState s = soko(grid);
  CHECK(s.player == GridPos{1, 2});
  CHECK(s.boxes == std::vector<GridPos>{{2, 2}});
  CHECK(s.targets == std::vector<GridPos>{{3, 2}});
  CHECK(render_symbolic(s) == "######\n#_P__#\n#_X__#\n#_O__#\n#____#\n######");
  CHECK(state_from_symbolic(EnvKind::Sokoban, render_symbolic(s)) == s);
  CHECK_THROWS_AS(state_from_symbolic(EnvKind::Sokoban, "##/#Q"), FormatError);
  CHECK_THROWS_AS(state_from_symbolic(EnvKind::Sokoban, "###/#P/###"), FormatError);
}

TEST_CASE("sokoban push places box and terminates") {
  EnvState s = soko("######/#_P__#/#_X__#/#_O__#/#____#/######");
  auto out = step(s, Action::Down);
  CHECK(out.events.has(StepEvent::BoxPlaced));
  CHECK(out.new_state.terminated);
  CHECK(out.new_state.succeeded);
  CHECK(out.task_reward == doctest::Approx(11.0));
  CHECK_THROWS_AS(step(out.new_state, Action::Up), TerminatedStateError);
}

TEST_CASE("sokoban blocked and unplaced") {
  EnvState s = soko("######/#P*_X#/#___O#/######");
  CHECK_FALSE(s.terminated);
  auto out = step(s, Action::Right);
  CHECK(out.events.has(StepEvent::BoxUnplaced));
  CHECK(out.task_reward == doctest::Approx(-1.1));
  auto blocked = step(s, Action::Up);
  CHECK(blocked.events.has(StepEvent::BlockedMove));
  CHECK(blocked.new_state.player == s.player);
  CHECK(blocked.new_state.steps_taken == 1);
  // two boxes in a row cannot be pushed
  EnvState two = soko("######/#PXX_#/#_OO_#/######");
  CHECK(step(two, Action::Right).events.has(StepEvent::BlockedMove));
}

TEST_CASE("frozen lake holes, goal and border") {
  EnvState s = state_from_symbolic(EnvKind::FrozenLake, "P_O_/____/____/___G");
  auto up = step(s, Action::Up);
  CHECK(up.events.has(StepEvent::BlockedMove));
  CHECK(up.task_reward == doctest::Approx(-0.1));
  auto r = step(step(s, Action::Right).new_state, Action::Right);
  CHECK(r.new_state.terminated);
  CHECK_FALSE(r.new_state.succeeded);
  CHECK(r.events.has(StepEvent::FellInHole));
  CHECK(render_symbolic(r.new_state) == "__X_\n____\n____\n___G");
  CHECK_THROWS_AS(step(r.new_state, Action::Left), TerminatedStateError);

  EnvState g = state_from_symbolic(EnvKind::FrozenLake, "____/____/____/__PG");
  auto win = step(g, Action::Right);
  CHECK(win.new_state.succeeded);
  CHECK(win.task_reward == doctest::Approx(10.0));
}

TEST_CASE("reset is deterministic and solvable") {
  EnvConfig c = EnvConfig::sokoban_defaults();
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto [a, ga] = reset(c, seed);
    auto [b, gb] = reset(c, seed);
    CHECK(a == b);
    CHECK(ga == gb);
    CHECK(ga == render_symbolic(a));
    oracle::Pose pose{{a.player.row, a.player.col}, {a.boxes[0].row, a.boxes[0].col}};
    auto len = oracle::shortest(board_of(a), pose, c.action_budget());
    REQUIRE(len.has_value());
    CHECK(*len >= c.min_actions_to_succeed);
    CHECK(*len <= c.action_budget());
    // border is wall
    for (int i = 0; i < c.cols; ++i) CHECK(a.is_wall({0, i}));
  }
  EnvConfig f = EnvConfig::frozen_lake_defaults();
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto [a, g] = reset(f, seed);
    std::set<oracle::Cell> holes;
    for (auto h : a.holes) holes.insert({h.row, h.col});
    auto len = oracle::lake_path(a.rows, a.cols, holes, {a.player.row, a.player.col}, {a.goal.row, a.goal.col});
    REQUIRE(len.has_value());
    CHECK(*len >= f.min_actions_to_succeed);
    CHECK(*len <= f.action_budget());
  }
}

TEST_CASE("reset rejects bad configs") {
  EnvConfig c = EnvConfig::sokoban_defaults();
  c.num_boxes = 0;
  CHECK_THROWS_AS(reset(c, 1), GenerationFailure);
  EnvConfig tiny = EnvConfig::sokoban_defaults();
  tiny.rows = tiny.cols = 4;
  tiny.num_boxes = 3;
  CHECK_THROWS_AS(reset(tiny, 1), GenerationFailure);
  EnvConfig fl = EnvConfig::frozen_lake_defaults();
  fl.layout = "P___/OOOO/____/___G";
  CHECK_THROWS_AS(reset(fl, 0), GenerationFailure);
  fl.layout = "P__/___/__G";
  CHECK_THROWS_AS(reset(fl, 0), ConfigError);
  fl.layout = "P___/____/____/___G";
  CHECK(reset(fl, 5).first == reset(fl, 99).first);
}

TEST_CASE("serialization round trip") {
  EnvConfig c = EnvConfig::sokoban_defaults();
  c.num_boxes = 2;
  c.min_actions_to_succeed = 2;
  c.max_turns = 5;
  auto [s, g] = reset(c, 7);
  auto moved = step(s, Action::Left).new_state;
  CHECK(deserialize_state(serialize_state(moved)) == moved);
  auto [f, fg] = reset(EnvConfig::frozen_lake_defaults(), 3);
  CHECK(deserialize_state(serialize_state(f)) == f);
  CHECK_THROWS_AS(deserialize_state("garbage"), FormatError);
}

TEST_CASE("can't pull") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto [s, g] = reset(EnvConfig::sokoban_defaults(), seed);
    for (Action a : kAllActions) {
      auto out = step(s, a);
      if (out.new_state.boxes == s.boxes || out.new_state.terminated) continue;
      Action back = a == Action::Up ? Action::Down : a == Action::Down ? Action::Up : a == Action::Left ? Action::Right : Action::Left;
      CHECK(step(out.new_state, back).new_state.boxes != s.boxes);
    }
  }
}

TEST_CASE("relations of a known state") {
  EnvState s = soko("######/#_P__#/#_X__#/#_O__#/#____#/######");
  RelationSet rs = extract_relations(s);
  CHECK(rs.size() == 3);
  CHECK(rs.contains({"box0", Vertical::Below, Horizontal::SameColumn, "player"}));
  CHECK(rs.contains({"player", Vertical::Above, Horizontal::SameColumn, "target0"}));
  CHECK(rs.contains({"target0", Vertical::Below, Horizontal::SameColumn, "box0"}));
  CHECK(describe(Relation{"box0", Vertical::Below, Horizontal::SameColumn, "player"}, EnvKind::Sokoban) ==
        "box0 is below and at the same column as the player");
  RelationSet again;
  for (const auto& r : rs) again.insert(canonical(mirror(r)));
  CHECK(again == rs);
}
