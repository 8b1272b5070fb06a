#include "wmrl/ppo.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "wmrl/errors.hpp"

namespace wmrl {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (mini_batch < 1) throw ConfigError("train.mini_batch must be >= 1");
  if (epochs_per_batch < 1) throw ConfigError("train.epochs must be >= 1");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("train.clip_eps must be in (0, 1)");
  if (actor_lr < 0.0 || critic_lr < 0.0) throw ConfigError("learning rates must be >= 0");
  if (workers < 1) throw ConfigError("train.workers must be >= 1");
  if (max_response_tokens < 1) throw ConfigError("train.max_response_tokens must be >= 1");
  if (!(decode.temperature > 0.0)) throw ConfigError("train.temperature must be > 0");
  if (!(decode.top_p > 0.0 && decode.top_p <= 1.0)) throw ConfigError("train.top_p must be in (0, 1]");
  gae.validate();
}

LossResult ppo_loss(const PolicyParams& p, const std::vector<TokenRecord>& batch, double clip_eps,
                    const PolicyParams* reference) {
  LossResult r;
  for (const auto& rec : batch) r.mask_sum += rec.mask;
  if (r.mask_sum == 0.0) throw std::invalid_argument("ppo_loss: empty mini-batch");
  r.grads = NetParams::zeros(p.shape);
  const double scale = 1.0 / r.mask_sum;
  for (const auto& rec : batch) {
    if (!rec.mask) continue;
    const TokenLoss t =
        policy_token_terms(p, rec.ctx, rec.token, rec.advantage, rec.old_logp, clip_eps, reference, &r.grads, scale);
    r.loss -= t.surrogate * scale;
    r.entropy += t.entropy * scale;
    r.kl_ref += t.kl_ref * scale;
    r.clip_fraction += (t.clipped ? 1.0 : 0.0) * scale;
  }
  return r;
}

LossResult critic_loss(const ValueParams& v, const std::vector<TokenRecord>& batch) {
  LossResult r;
  for (const auto& rec : batch) r.mask_sum += rec.mask;
  if (r.mask_sum == 0.0) throw std::invalid_argument("critic_loss: empty mini-batch");
  r.grads = NetParams::zeros(v.shape);
  const double scale = 1.0 / r.mask_sum;
  for (const auto& rec : batch) {
    if (!rec.mask) continue;
    const double value = value_token_terms(v, rec.ctx, rec.target, &r.grads, scale);
    r.loss += (value - rec.target) * (value - rec.target) * scale;
  }
  return r;
}

AdamState AdamState::for_params(const NetParams& p) {
  AdamState s;
  s.m = NetParams::zeros(p.shape);
  s.v = NetParams::zeros(p.shape);
  return s;
}

void apply_update(NetParams& params, const NetParams& grads, AdamState& st, double lr, const AdamOptions& o) {
  if (!(grads.shape == params.shape) || !(st.m.shape == params.shape)) throw ShapeError("apply_update: shape mismatch");
  if (!grads.all_finite()) throw NumericalError("non-finite gradient; update skipped");
  st.step += 1;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(st.step));
  auto pt = params.tensors();
  auto gt = grads.tensors();
  auto mt = st.m.tensors();
  auto vt = st.v.tensors();
  for (std::size_t k = 0; k < pt.size(); ++k) {
    auto& x = pt[k]->data;
    const auto& g = gt[k]->data;
    auto& m = mt[k]->data;
    auto& v = vt[k]->data;
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + o.eps);
    }
  }
}

std::uint64_t train_env_seed(std::uint64_t run_seed, int iteration, int idx) {
  return derive_seed(run_seed, 2 * static_cast<std::uint64_t>(iteration), static_cast<std::uint64_t>(idx)) &
         0x7fffffffffffffffULL;
}

std::uint64_t train_sample_seed(std::uint64_t run_seed, int iteration, int idx) {
  return derive_seed(run_seed, 2 * static_cast<std::uint64_t>(iteration) + 1, static_cast<std::uint64_t>(idx));
}

void parallel_for(int n, int workers, const std::function<void(int)>& f) {
  if (workers <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  const int w = std::min(workers, n);
  for (int t = 0; t < w; ++t) {
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += w) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

PreparedTrajectory prepare_trajectory(const Trajectory& traj, const TrainState& st, const TrainConfig& cfg,
                                      const Vocabulary& vocab) {
  PreparedTrajectory pt;
  pt.tt = tokenize_trajectory(traj, vocab);
  const auto& tt = pt.tt;
  const std::size_t n = tt.token_ids.size();
  const int window = st.policy.shape.window;
  const int vwindow = st.value.shape.window;
  pt.values.assign(n + 1, 0.0);
  pt.kl.assign(n, 0.0);

  std::vector<bool> need_value(n + 1, false);
  for (std::size_t i = 0; i < n; ++i)
    if (tt.loss_mask[i]) need_value[i] = need_value[i + 1] = true;
  for (std::size_t i = 0; i <= n; ++i) {
    if (!need_value[i]) continue;
    const int turn = tt.token_turn[std::min(i, n - 1)];
    pt.values[i] = value_estimate(st.value, make_context(tt.token_ids, i, vwindow, vocab.pad(), turn));
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!tt.loss_mask[i]) continue;
    const auto ctx = make_context(tt.token_ids, i, window, vocab.pad(), tt.token_turn[i]);
    const auto cur = policy_logits(st.policy, ctx);
    const auto ref = policy_logits(st.reference, ctx);
    const double kl = kl_from_logits(cur, ref);
    pt.kl[i] = -cfg.gae.beta_kl * kl;
    pt.kl_ref_sum += kl;
    pt.entropy_sum += entropy_from_logits(cur);
  }
  pt.adv = estimate_advantages(cfg.estimator, tt, pt.values, pt.kl, cfg.gae);

  for (std::size_t i = 0; i < n; ++i) {
    if (!tt.loss_mask[i]) continue;
    TokenRecord rec;
    rec.ctx = make_context(tt.token_ids, i, window, vocab.pad(), tt.token_turn[i]);
    rec.token = tt.token_ids[i];
    rec.advantage = pt.adv.advantages[i];
    rec.old_logp = tt.old_logp[i];
    rec.target = pt.adv.critic_targets[i];
    pt.records.push_back(std::move(rec));
  }
  return pt;
}

IterationMetrics train_iteration(const TrainConfig& cfg, const EnvConfig& env, TrainState& st, TurnJudge& judge,
                                 const Vocabulary& vocab) {
  const auto t0 = std::chrono::steady_clock::now();
  const int iter = st.iteration;
  IterationMetrics m;
  m.iteration = iter + 1;

  RolloutOptions ro;
  ro.strategy = cfg.strategy;
  ro.mode = cfg.reward_mode;
  ro.judge = cfg.judge;
  ro.max_response_tokens = cfg.max_response_tokens;
  ro.actions.max_actions = env.max_actions_per_step;

  std::vector<Trajectory> batch(static_cast<std::size_t>(cfg.batch_size));
  parallel_for(cfg.batch_size, cfg.workers, [&](int i) {
    MlpAgent agent(st.policy, &st.value, cfg.decode, vocab.pad());
    batch[static_cast<std::size_t>(i)] = collect_trajectory(env, train_env_seed(cfg.seed, iter, i), agent, judge, ro,
                                                            train_sample_seed(cfg.seed, iter, i), vocab);
  });
  apply_repetition_penalties(batch, st.tracker, cfg.judge);

  std::vector<PreparedTrajectory> prepared(batch.size());
  parallel_for(cfg.batch_size, cfg.workers, [&](int i) {
    prepared[static_cast<std::size_t>(i)] = prepare_trajectory(batch[static_cast<std::size_t>(i)], st, cfg, vocab);
  });

  double turns = 0.0, judged_turns = 0.0, tokens = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& tr = batch[i];
    m.success_rate += tr.succeeded ? 1.0 : 0.0;
    m.mean_return += prepared[i].tt.trajectory_return;
    for (const auto& t : tr.turns) {
      turns += 1.0;
      m.format_rate += t.parsed.format_ok ? 1.0 : 0.0;
      m.reasoning_reward += t.reward.reasoning;
      m.se_score += t.verdict.se_score;
      m.tm_score += t.verdict.tm_score;
      judged_turns += 1.0;
    }
    m.entropy += prepared[i].entropy_sum;
    m.kl_ref += prepared[i].kl_ref_sum;
    tokens += static_cast<double>(prepared[i].records.size());
  }
  const double b = static_cast<double>(batch.size());
  m.success_rate /= b;
  m.mean_return /= b;
  if (turns > 0) {
    m.format_rate /= turns;
    m.reasoning_reward /= turns;
    m.se_score /= judged_turns;
    m.tm_score /= judged_turns;
  }
  if (tokens > 0) {
    m.entropy /= tokens;
    m.kl_ref /= tokens;
  }

  if (cfg.normalize_advantages && tokens > 1) {
    double mean = 0.0, sq = 0.0;
    for (const auto& p : prepared)
      for (const auto& r : p.records) mean += r.advantage;
    mean /= tokens;
    for (const auto& p : prepared)
      for (const auto& r : p.records) sq += (r.advantage - mean) * (r.advantage - mean);
    const double sd = std::sqrt(sq / tokens) + 1e-8;
    for (auto& p : prepared)
      for (auto& r : p.records) r.advantage = (r.advantage - mean) / sd;
  }

  const PolicyParams policy_backup = st.policy;
  const ValueParams value_backup = st.value;
  const AdamState actor_backup = st.actor_opt;
  const AdamState critic_backup = st.critic_opt;

  std::vector<int> order(batch.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(iter), 0x5eedULL));
  int updates = 0;
  try {
    for (int epoch = 0; epoch < cfg.epochs_per_batch; ++epoch) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.mini_batch)) {
        std::vector<TokenRecord> mb;
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.mini_batch));
        for (std::size_t k = start; k < end; ++k) {
          const auto& recs = prepared[static_cast<std::size_t>(order[k])].records;
          mb.insert(mb.end(), recs.begin(), recs.end());
        }
        if (mb.empty()) continue;
        LossResult actor = ppo_loss(st.policy, mb, cfg.clip_eps);
        apply_update(st.policy, actor.grads, st.actor_opt, cfg.actor_lr);
        LossResult critic = critic_loss(st.value, mb);
        apply_update(st.value, critic.grads, st.critic_opt, cfg.critic_lr);
        m.actor_loss += actor.loss;
        m.critic_loss += critic.loss;
        ++updates;
      }
    }
    if (!st.policy.all_finite() || !st.value.all_finite()) throw NumericalError("parameters became non-finite");
  } catch (const NumericalError& e) {
    spdlog::warn("iteration {}: {}; parameters rolled back", iter + 1, e.what());
    st.policy = policy_backup;
    st.value = value_backup;
    st.actor_opt = actor_backup;
    st.critic_opt = critic_backup;
    m.update_skipped = true;
  }
  if (updates > 0) {
    m.actor_loss /= updates;
    m.critic_loss /= updates;
  }
  st.iteration = iter + 1;
  m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

double behavior_cloning_step(PolicyParams& p, AdamState& opt, const std::vector<TokenizedTrajectory>& demos,
                             double lr) {
  NetParams grads = NetParams::zeros(p.shape);
  double count = 0.0;
  for (const auto& tt : demos)
    for (auto m : tt.loss_mask) count += m;
  if (count == 0.0) throw std::invalid_argument("behavior cloning on demonstrations without action tokens");
  const int pad = 0;
  double nll = 0.0;
  for (const auto& tt : demos) {
    for (std::size_t i = 0; i < tt.token_ids.size(); ++i) {
      if (!tt.loss_mask[i]) continue;
      const auto ctx = make_context(tt.token_ids, i, p.shape.window, pad, tt.token_turn[i]);
      Activations act;
      const auto lp = log_softmax(forward(p, ctx, act));
      const int tok = tt.token_ids[i];
      nll -= lp[static_cast<std::size_t>(tok)] / count;
      std::vector<double> d(lp.size());
      for (std::size_t k = 0; k < lp.size(); ++k) d[k] = std::exp(lp[k]);
      d[static_cast<std::size_t>(tok)] -= 1.0;
      backward(p, ctx, act, d, 1.0 / count, grads);
    }
  }
  apply_update(p, grads, opt, lr);
  return nll;
}

}  // namespace wmrl
