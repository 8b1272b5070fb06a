#include <doctest.h>

#include <cmath>

#include "wmrl/errors.hpp"
#include "wmrl/harness.hpp"
#include "wmrl/ppo.hpp"

using namespace wmrl;

namespace {

NetShape shape(int out) {
  NetShape s;
  s.vocab = 10;
  s.embed_dim = 3;
  s.hidden = 6;
  s.window = 4;
  s.turns = 2;
  s.out = out;
  return s;
}

std::vector<TokenRecord> random_batch(Rng& rng, const PolicyParams& p, bool on_policy) {
  std::vector<TokenRecord> b;
  const int n = 2 + static_cast<int>(rng.uniform_int(20));
  for (int i = 0; i < n; ++i) {
    TokenRecord r;
    std::vector<int> prefix;
    for (int k = 0; k < 5; ++k) prefix.push_back(static_cast<int>(rng.uniform_int(10)));
    r.ctx = make_context(prefix, prefix.size(), 4, 0, static_cast<int>(rng.uniform_int(2)));
    r.token = static_cast<int>(rng.uniform_int(10));
    r.advantage = rng.normal();
    r.target = rng.normal();
    r.mask = rng.uniform01() < 0.6 ? 1 : 0;
    r.old_logp = log_softmax(policy_logits(p, r.ctx))[r.token] + (on_policy ? 0.0 : 0.5 * rng.normal());
    b.push_back(r);
  }
  b[0].mask = 1;
  return b;
}

}  // namespace

TEST_CASE("on-policy surrogate equals mean advantage") {
  Rng rng(1);
  for (int n = 0; n < 20; ++n) {
    auto p = NetParams::random(shape(10), rng, 1.0);
    auto b = random_batch(rng, p, true);
    double sum = 0.0, m = 0.0;
    for (const auto& r : b)
      if (r.mask) {
        sum += r.advantage;
        m += 1.0;
      }
    auto loss = ppo_loss(p, b, 0.2);
    CHECK(loss.loss == doctest::Approx(-sum / m).epsilon(1e-12));
    CHECK(loss.clip_fraction == 0.0);
  }
}

TEST_CASE("clipping bound and masking") {
  Rng rng(2);
  for (int n = 0; n < 50; ++n) {
    auto p = NetParams::random(shape(10), rng, 1.0);
    auto b = random_batch(rng, p, false);
    for (const auto& r : b) {
      auto t = policy_token_terms(p, r.ctx, r.token, r.advantage, r.old_logp, 0.2, nullptr, nullptr);
      CHECK(t.surrogate <= 1.2 * std::abs(r.advantage) + 1e-12);
    }
    auto shuffled = b;
    for (auto& r : shuffled)
      if (!r.mask) {
        r.advantage = 1e6 * rng.normal();
        r.target = 1e6 * rng.normal();
      }
    CHECK(std::abs(ppo_loss(p, b, 0.2).loss - ppo_loss(p, shuffled, 0.2).loss) < 1e-12);
  }
  auto p = NetParams::random(shape(10), rng, 1.0);
  auto b = random_batch(rng, p, true);
  for (auto& r : b) r.mask = 0;
  CHECK_THROWS_AS(ppo_loss(p, b, 0.2), std::invalid_argument);
  CHECK_THROWS_AS(critic_loss(NetParams::zeros(shape(1)), b), std::invalid_argument);
}

TEST_CASE("critic loss is mean squared error") {
  Rng rng(3);
  auto v = NetParams::random(shape(1), rng, 1.0);
  auto b = random_batch(rng, NetParams::random(shape(10), rng, 1.0), true);
  double sum = 0.0, m = 0.0;
  for (const auto& r : b)
    if (r.mask) {
      const double d = value_estimate(v, r.ctx) - r.target;
      sum += d * d;
      m += 1.0;
    }
  CHECK(critic_loss(v, b).loss == doctest::Approx(sum / m).epsilon(1e-12));
}

TEST_CASE("adam refuses non-finite gradients") {
  Rng rng(4);
  auto p = NetParams::random(shape(10), rng, 1.0);
  auto st = AdamState::for_params(p);
  auto g = NetParams::zeros(p.shape);
  for (double& x : g.w1.data) x = 0.1;
  apply_update(p, g, st, 1e-2);
  CHECK(st.step == 1);
  const auto p_before = p;
  const auto st_before = st;
  g.b2.data[0] = NAN;
  CHECK_THROWS_AS(apply_update(p, g, st, 1e-2), NumericalError);
  CHECK(p == p_before);
  CHECK(st == st_before);
}

TEST_CASE("train iteration is deterministic and leaves the reference alone") {
  ExperimentConfig cfg;
  cfg.env = EnvConfig::frozen_lake_defaults();
  cfg.env.layout = "P___/_O_O/___O/O__G";
  cfg.train.strategy = ReasoningStrategy::NoThink;
  cfg.train.reward_mode = RewardMode::Base;
  cfg.train.estimator = Estimator::TokenGAE;
  cfg.train.batch_size = 8;
  cfg.train.mini_batch = 4;
  cfg.embed_dim = 4;
  cfg.hidden = 8;
  cfg.window = 8;
  cfg.warmup_steps = 20;
  cfg.warmup_batch = 8;
  const auto& vocab = Vocabulary::standard();
  RuleJudge judge(cfg.train.judge);

  auto a = initial_state(cfg, vocab);
  auto b = initial_state(cfg, vocab);
  warm_start(cfg, a, vocab);
  warm_start(cfg, b, vocab);
  const auto ref = a.reference;
  for (int i = 0; i < 3; ++i) {
    auto ma = train_iteration(cfg.train, cfg.env, a, judge, vocab);
    auto mb = train_iteration(cfg.train, cfg.env, b, judge, vocab);
    ma.wall_ms = mb.wall_ms = 0;
    CHECK(emit_metrics(ma) == emit_metrics(mb));
  }
  CHECK(a.policy == b.policy);
  CHECK(a.value == b.value);
  CHECK(a.reference == ref);
  CHECK_FALSE(a.policy == ref);
  CHECK(a.iteration == 3);
}

TEST_CASE("worker count does not change results") {
  ExperimentConfig cfg;
  cfg.env = EnvConfig::frozen_lake_defaults();
  cfg.train.strategy = ReasoningStrategy::WorldModeling;
  cfg.train.batch_size = 6;
  cfg.train.mini_batch = 3;
  cfg.embed_dim = 4;
  cfg.hidden = 8;
  cfg.window = 8;
  const auto& vocab = Vocabulary::standard();
  RuleJudge judge(cfg.train.judge);
  auto a = initial_state(cfg, vocab);
  auto b = initial_state(cfg, vocab);
  auto c1 = cfg.train;
  auto c4 = cfg.train;
  c4.workers = 4;
  auto ma = train_iteration(c1, cfg.env, a, judge, vocab);
  auto mb = train_iteration(c4, cfg.env, b, judge, vocab);
  ma.wall_ms = mb.wall_ms = 0;
  CHECK(emit_metrics(ma) == emit_metrics(mb));
  CHECK(a.policy == b.policy);
}

TEST_CASE("behavior cloning lowers the demonstration loss") {
  ExperimentConfig cfg;
  cfg.env = EnvConfig::frozen_lake_defaults();
  cfg.train.strategy = ReasoningStrategy::NoThink;
  cfg.embed_dim = 4;
  cfg.hidden = 16;
  cfg.window = 8;
  cfg.warmup_steps = 30;
  cfg.warmup_batch = 8;
  const auto& vocab = Vocabulary::standard();
  auto st = initial_state(cfg, vocab);
  auto first = cfg;
  first.warmup_steps = 1;
  auto st1 = initial_state(first, vocab);
  const double start = warm_start(first, st1, vocab);
  const double end = warm_start(cfg, st, vocab);
  CHECK(end < start);
  CHECK(st.reference == st.policy);
}
