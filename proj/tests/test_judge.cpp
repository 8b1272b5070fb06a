#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <map>

#include "wmrl/judge.hpp"
#include "wmrl/rng.hpp"

using namespace wmrl;

namespace {

RelationSet random_relations(Rng& rng) {
  static const char* names[] = {"player", "box0", "box1", "target0", "target1", "hole0", "hole1"};
  RelationSet rs;
  const int n = static_cast<int>(rng.uniform_int(8));
  for (int i = 0; i < n; ++i) {
    const auto a = rng.uniform_int(7);
    auto b = rng.uniform_int(6);
    if (b >= a) ++b;
    rs.insert({names[a], static_cast<Vertical>(rng.uniform_int(3)), static_cast<Horizontal>(rng.uniform_int(3)),
               names[b]});
  }
  return rs;
}

}  // namespace

TEST_CASE("f1 fixtures") {
  std::ifstream f(WMRL_FIXTURES "/f1_pairs.json");
  REQUIRE(f);
  const auto cases = nlohmann::json::parse(f);
  CHECK(cases.size() >= 10);
  for (const auto& c : cases) {
    const auto kind = *parse_env_kind(c["kind"].get<std::string>());
    const RelationSet truth = extract_relations(state_from_symbolic(kind, c["state"].get<std::string>()));
    const RelationSet pred = parse_belief_relations(c["belief"].get<std::string>(), kind);
    CAPTURE(c["belief"].get<std::string>());
    CHECK(truth.size() == c["truth"].get<std::size_t>());
    CHECK(pred.size() == c["predicted"].get<std::size_t>());
    const double tp = c["tp"].get<double>();
    const double denom = c["predicted"].get<double>() + c["truth"].get<double>();
    CHECK(relation_f1(pred, truth) == doctest::Approx(2.0 * tp / denom).epsilon(1e-12));
  }
}

TEST_CASE("f1 edge cases and symmetry") {
  CHECK(relation_f1({}, {}) == 1.0);
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    auto a = random_relations(rng);
    auto b = random_relations(rng);
    CHECK(relation_f1(a, b) == relation_f1(b, a));
    CHECK(relation_f1(a, mirror(a)) == 1.0);
  }
}

TEST_CASE("described relations parse back") {
  Rng rng(9);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    EnvConfig c = seed % 2 ? EnvConfig::frozen_lake_defaults() : EnvConfig::sokoban_defaults();
    auto [s, g] = reset(c, seed);
    const auto truth = extract_relations(s);
    CHECK(parse_belief_relations(describe(truth, s.kind), s.kind) == truth);
    CHECK(parse_belief_relations(describe_compact(truth), s.kind) == truth);
    CHECK(parse_belief_relations(render_belief(s, RepresentationFormat::Structured), s.kind) == truth);
    CHECK(parse_belief_relations(render_symbolic(s), s.kind) == truth);
  }
}

TEST_CASE("judge_turn scores and coincidence shortcut") {
  JudgeConfig cfg;
  EnvState now = state_from_symbolic(EnvKind::Sokoban, "######/#_P__#/#_X__#/#_O__#/#____#/######");
  EnvState next = step(now, Action::Down).new_state;
  StructuredResponse r;
  r.state_belief = describe(extract_relations(now), EnvKind::Sokoban);
  r.next_state_belief = "box0 is at the same place as target0";
  auto v = judge_turn(r, extract_relations(now), extract_relations(next), cfg, EnvKind::Sokoban);
  CHECK(v.se_score == 1.0);
  CHECK(v.se_pass);
  CHECK(v.tm_score == 1.0);
  CHECK(reasoning_reward(v, cfg) == 1.0);

  r.next_state_belief.reset();
  v = judge_turn(r, extract_relations(now), extract_relations(next), cfg, EnvKind::Sokoban);
  CHECK(v.tm_score == 0.0);
  CHECK_FALSE(v.tm_pass);
  CHECK(reasoning_reward(v, cfg) == 0.5);

  r.state_belief = "box0 is above the player";
  v = judge_turn(r, extract_relations(now), extract_relations(next), cfg, EnvKind::Sokoban);
  CHECK(v.se_score == 0.0);
  JudgeConfig cont = cfg;
  cont.indicator_mode = IndicatorMode::Continuous;
  r.state_belief = "box0 is below the player";
  v = judge_turn(r, extract_relations(now), extract_relations(next), cont, EnvKind::Sokoban);
  CHECK(v.se_score == doctest::Approx(0.5));
  CHECK(reasoning_reward(v, cont) == doctest::Approx(0.25));
  CHECK(reasoning_reward(v, cfg) == 0.0);
}

TEST_CASE("repetition tracker against a counting oracle") {
  JudgeConfig cfg;
  cfg.heap_capacity = 3;
  Rng rng(4);
  RepetitionTracker t;
  std::map<std::string, long> counts;
  for (int i = 0; i < 2000; ++i) {
    const std::string s = "s" + std::to_string(rng.uniform_int(8));
    const double f1 = rng.uniform01();
    counts[s] += 1;
    std::vector<std::pair<long, std::string>> rank;
    for (auto& [k, n] : counts) rank.push_back({-n, k});
    std::sort(rank.begin(), rank.end());
    bool top = false;
    for (int k = 0; k < std::min<int>(3, static_cast<int>(rank.size())); ++k) top |= rank[k].second == s;
    const double expect = (f1 < cfg.f1_threshold && top) ? cfg.penalty : 0.0;
    REQUIRE(t.submit(s, f1, cfg) == expect);
    REQUIRE(t.count(s) == counts[s]);
  }
  RepetitionTracker copy;
  copy.restore(t.all());
  CHECK(copy == t);
  CHECK(copy.top(3) == t.top(3));

  auto [p, next] = repetition_penalty(t, "s0", 0.1, cfg);
  CHECK(next.count("s0") == t.count("s0") + 1);
}
