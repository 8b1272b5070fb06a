#include "wmrl/credit.hpp"

#include <algorithm>
#include <cmath>

#include "wmrl/errors.hpp"

namespace wmrl {

void GaeParams::validate() const {
  for (double x : {gamma, lam, gamma_turn, lam_turn, gamma_token, lam_token})
    if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("discount and lambda values must lie in [0, 1]");
  if (!(beta_kl >= 0.0)) throw ConfigError("beta_kl must be >= 0");
}

std::vector<double> kl_rewards(const std::vector<std::vector<double>>& cur, const std::vector<std::vector<double>>& ref,
                               double beta_kl) {
  if (cur.size() != ref.size()) throw ShapeError("kl_rewards: logit sequences differ in length");
  std::vector<double> out(cur.size());
  for (std::size_t i = 0; i < cur.size(); ++i) out[i] = -beta_kl * kl_from_logits(cur[i], ref[i]);
  return out;
}

namespace {

void check_inputs(const TokenizedTrajectory& tt, const std::vector<double>& values, const std::vector<double>& kl) {
  const std::size_t n = tt.token_ids.size();
  if (tt.loss_mask.size() != n) throw ShapeError("loss mask misaligned with tokens");
  if (values.size() != n + 1) throw ShapeError("values must hold n + 1 prefix estimates");
  if (kl.size() != n) throw ShapeError("kl rewards misaligned with tokens");
}

std::vector<std::size_t> masked_positions(const TokenizedTrajectory& tt) {
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < tt.loss_mask.size(); ++i)
    if (tt.loss_mask[i]) pos.push_back(i);
  if (pos.empty()) throw ShapeError("trajectory has no action tokens");
  return pos;
}

void check_turns(const TokenizedTrajectory& tt) {
  if (tt.turn_spans.empty()) throw ShapeError("trajectory has no turns");
  if (tt.per_turn_rewards.size() != tt.turn_spans.size()) throw ShapeError("per-turn rewards misaligned with turns");
  for (const auto& s : tt.turn_spans)
    if (s.act_end <= s.act_begin) throw ShapeError("turn without action tokens");
}

// δ at masked position pos[k] in the token-level estimator.
double token_delta(const TokenizedTrajectory& tt, const std::vector<std::size_t>& pos, std::size_t k,
                   const std::vector<double>& values, const std::vector<double>& kl, double gamma) {
  const std::size_t i = pos[k];
  double r = kl[i];
  if (k + 1 == pos.size()) r += tt.trajectory_return;
  const double next_v = k + 1 < pos.size() ? values[pos[k + 1]] : 0.0;
  return r + gamma * next_v - values[i];
}

double turn_delta(const TokenizedTrajectory& tt, std::size_t t, const std::vector<double>& values, double gamma_turn) {
  const double v_now = values[tt.turn_spans[t].act_end];
  const double v_next = t + 1 < tt.turn_spans.size() ? values[tt.turn_spans[t + 1].act_end] : 0.0;
  return tt.per_turn_rewards[t] + gamma_turn * v_next - v_now;
}


}  // namespace

AdvantageSet token_level_gae(const TokenizedTrajectory& tt, const std::vector<double>& values,
                             const std::vector<double>& kl, const GaeParams& p) {
  check_inputs(tt, values, kl);
  const auto pos = masked_positions(tt);
  AdvantageSet out;
  out.advantages.assign(tt.token_ids.size(), 0.0);
  out.critic_targets.assign(tt.token_ids.size(), 0.0);
  double next_adv = 0.0;
  for (std::size_t k = pos.size(); k-- > 0;) {
    const std::size_t i = pos[k];
    const double a = token_delta(tt, pos, k, values, kl, p.gamma) + p.gamma * p.lam * next_adv;
    out.advantages[i] = a;
    out.critic_targets[i] = a + values[i];
    next_adv = a;
  }
  return out;
}

AdvantageSet bilevel_gae(const TokenizedTrajectory& tt, const std::vector<double>& values,
                         const std::vector<double>& kl, const GaeParams& p) {
  check_inputs(tt, values, kl);
  check_turns(tt);
  const std::size_t T = tt.turn_spans.size();
  AdvantageSet out;
  out.advantages.assign(tt.token_ids.size(), 0.0);
  out.critic_targets.assign(tt.token_ids.size(), 0.0);
  out.turn_advantages.assign(T, 0.0);

  double next_turn = 0.0;
  for (std::size_t t = T; t-- > 0;) {
    out.turn_advantages[t] = turn_delta(tt, t, values, p.gamma_turn) + p.gamma_turn * p.lam_turn * next_turn;
    next_turn = out.turn_advantages[t];
  }

  for (std::size_t t = 0; t < T; ++t) {
    const auto& s = tt.turn_spans[t];
    const std::size_t f = s.act_end - 1;
    const double delta_f = kl[f] + p.gamma_token * values[s.act_end] - values[f];
    out.advantages[f] = delta_f + out.turn_advantages[t];
    for (std::size_t i = f; i-- > s.act_begin;) {
      const double delta = kl[i] + p.gamma_token * values[i + 1] - values[i];
      out.advantages[i] = delta + p.gamma_token * p.lam_token * out.advantages[i + 1];
    }
    for (std::size_t i = s.act_begin; i < s.act_end; ++i) out.critic_targets[i] = out.advantages[i] + values[i];
  }
  return out;
}

AdvantageSet estimate_advantages(Estimator e, const TokenizedTrajectory& tt, const std::vector<double>& values,
                                 const std::vector<double>& kl, const GaeParams& p) {
  return e == Estimator::TokenGAE ? token_level_gae(tt, values, kl, p) : bilevel_gae(tt, values, kl, p);
}

AdvantageSet gae_oracle(const TokenizedTrajectory& tt, const std::vector<double>& values,
                        const std::vector<double>& kl, const GaeParams& p, OracleMode mode) {
  check_inputs(tt, values, kl);
  AdvantageSet out;
  out.advantages.assign(tt.token_ids.size(), 0.0);
  out.critic_targets.assign(tt.token_ids.size(), 0.0);

  if (mode == OracleMode::Token) {
    const auto pos = masked_positions(tt);
    const double decay = p.gamma * p.lam;
    for (std::size_t k = 0; k < pos.size(); ++k) {
      double sum = 0.0;
      for (std::size_t m = k; m < pos.size(); ++m)
        sum += std::pow(decay, static_cast<double>(m - k)) * token_delta(tt, pos, m, values, kl, p.gamma);
      out.advantages[pos[k]] = sum;
      out.critic_targets[pos[k]] = sum + values[pos[k]];
    }
    return out;
  }

  check_turns(tt);
  const std::size_t T = tt.turn_spans.size();
  out.turn_advantages.assign(T, 0.0);
  const double turn_decay = p.gamma_turn * p.lam_turn;
  for (std::size_t t = 0; t < T; ++t) {
    double sum = 0.0;
    for (std::size_t u = t; u < T; ++u)
      sum += std::pow(turn_decay, static_cast<double>(u - t)) * turn_delta(tt, u, values, p.gamma_turn);
    out.turn_advantages[t] = sum;
  }
  const double tok_decay = p.gamma_token * p.lam_token;
  for (std::size_t t = 0; t < T; ++t) {
    const auto& s = tt.turn_spans[t];
    const std::size_t f = s.act_end - 1;
    for (std::size_t i = s.act_begin; i <= f; ++i) {
      double sum = 0.0;
      for (std::size_t m = i; m < f; ++m)
        sum += std::pow(tok_decay, static_cast<double>(m - i)) *
               (kl[m] + p.gamma_token * values[m + 1] - values[m]);
      const double head = kl[f] + p.gamma_token * values[s.act_end] - values[f] + out.turn_advantages[t];
      sum += std::pow(tok_decay, static_cast<double>(f - i)) * head;
      out.advantages[i] = sum;
      out.critic_targets[i] = sum + values[i];
    }
  }
  return out;
}

FuzzCase random_fuzz_case(Rng& rng, int max_tokens, int max_turns) {
  FuzzCase fc;
  auto& tt = fc.tt;
  const int turns = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_turns)));
  const int per_turn = std::max(2, max_tokens / turns);
  for (int t = 0; t < turns; ++t) {
    TurnSpan s;
    const int obs = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(per_turn - 1)));
    const int act = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(per_turn - obs - 1 + 1)));
    s.obs_begin = tt.token_ids.size();
    for (int i = 0; i < obs; ++i) {
      tt.token_ids.push_back(static_cast<int>(rng.uniform_int(100)));
      tt.loss_mask.push_back(0);
      tt.token_turn.push_back(t);
      tt.old_logp.push_back(std::nan(""));
    }
    s.obs_end = s.act_begin = tt.token_ids.size();
    for (int i = 0; i < act; ++i) {
      tt.token_ids.push_back(static_cast<int>(rng.uniform_int(100)));
      tt.loss_mask.push_back(1);
      tt.token_turn.push_back(t);
      tt.old_logp.push_back(-rng.uniform01() * 3.0);
    }
    s.act_end = tt.token_ids.size();
    tt.turn_spans.push_back(s);
    const double r = rng.normal() * 3.0;
    tt.per_turn_rewards.push_back(r);
    tt.trajectory_return += r;
  }
  const std::size_t n = tt.token_ids.size();
  fc.values.resize(n + 1);
  for (double& v : fc.values) v = rng.normal();
  fc.kl.resize(n);
  for (double& k : fc.kl) k = -0.01 * rng.uniform01();
  return fc;
}

}  // namespace wmrl
