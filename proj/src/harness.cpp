#include "wmrl/harness.hpp"

#include <spdlog/spdlog.h>

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "wmrl/errors.hpp"

extern char** environ;

namespace wmrl {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void ExperimentConfig::validate() const {
  env.validate();
  train.validate();
  if (iterations < 0) throw ConfigError("train.iterations must be >= 0");
  if (embed_dim < 1 || hidden < 1 || window < 1) throw ConfigError("policy dimensions must be >= 1");
  if (warmup_steps < 0 || warmup_batch < 1) throw ConfigError("warmup settings out of range");
  if (eval_every < 0 || eval_episodes < 1) throw ConfigError("eval settings out of range");
  if (judge_timeout_ms < 1) throw ConfigError("judge.timeout_ms must be >= 1");
}

namespace {

std::string strip(const std::string& s) { return std::string(trim(s)); }

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used == v.size()) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used == v.size() && std::isfinite(x)) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  std::string l;
  for (char c : v) l.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
  if (l == "false" || l == "0" || l == "no" || l == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + v + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto i = [](auto field) {
      return Setter([field](ExperimentConfig& c, const std::string& k, const std::string& v) {
        field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(to_int(k, v));
      });
    };
    auto d = [](auto field) {
      return Setter([field](ExperimentConfig& c, const std::string& k, const std::string& v) { field(c) = to_double(k, v); });
    };
    auto b = [](auto field) {
      return Setter([field](ExperimentConfig& c, const std::string& k, const std::string& v) { field(c) = to_bool(k, v); });
    };
    auto s = [](auto field) {
      return Setter([field](ExperimentConfig& c, const std::string&, const std::string& v) { field(c) = v; });
    };

    t["env.kind"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      const auto kind = parse_env_kind(v);
      if (!kind) throw ConfigError("key '" + k + "': unknown environment '" + v + "'");
      c.env.kind = *kind;
    };
    t["env.size"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.env.rows = c.env.cols = static_cast<int>(to_int(k, v));
    };
    t["env.rows"] = i([](ExperimentConfig& c) -> int& { return c.env.rows; });
    t["env.cols"] = i([](ExperimentConfig& c) -> int& { return c.env.cols; });
    t["env.num_boxes"] = i([](ExperimentConfig& c) -> int& { return c.env.num_boxes; });
    t["env.max_actions_per_step"] = i([](ExperimentConfig& c) -> int& { return c.env.max_actions_per_step; });
    t["env.max_turns"] = i([](ExperimentConfig& c) -> int& { return c.env.max_turns; });
    t["env.min_actions_to_succeed"] = i([](ExperimentConfig& c) -> int& { return c.env.min_actions_to_succeed; });
    t["env.hole_probability"] = d([](ExperimentConfig& c) -> double& { return c.env.hole_probability; });
    t["env.max_interior_walls"] = i([](ExperimentConfig& c) -> int& { return c.env.max_interior_walls; });
    t["env.max_generation_attempts"] = i([](ExperimentConfig& c) -> int& { return c.env.max_generation_attempts; });
    t["env.layout"] = s([](ExperimentConfig& c) -> std::string& { return c.env.layout; });

    t["agent.strategy"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      const auto s = parse_strategy(v);
      if (!s) throw ConfigError("key '" + k + "': unknown strategy '" + v + "'");
      c.train.strategy = *s;
    };
    t["agent.representation"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      const auto r = parse_representation(v);
      if (!r) throw ConfigError("key '" + k + "': unknown representation '" + v + "'");
      c.representation = *r;
    };

    t["train.iterations"] = i([](ExperimentConfig& c) -> int& { return c.iterations; });
    t["train.batch_size"] = i([](ExperimentConfig& c) -> int& { return c.train.batch_size; });
    t["train.mini_batch"] = i([](ExperimentConfig& c) -> int& { return c.train.mini_batch; });
    t["train.epochs"] = i([](ExperimentConfig& c) -> int& { return c.train.epochs_per_batch; });
    t["train.clip_eps"] = d([](ExperimentConfig& c) -> double& { return c.train.clip_eps; });
    t["train.estimator"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      if (v == "token" || v == "TokenGAE") c.train.estimator = Estimator::TokenGAE;
      else if (v == "bilevel" || v == "BiLevelGAE") c.train.estimator = Estimator::BiLevelGAE;
      else throw ConfigError("key '" + k + "': expected token or bilevel, got '" + v + "'");
    };
    t["train.reward_mode"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      if (v == "base" || v == "Base") c.train.reward_mode = RewardMode::Base;
      else if (v == "full" || v == "Full") c.train.reward_mode = RewardMode::Full;
      else throw ConfigError("key '" + k + "': expected base or full, got '" + v + "'");
    };
    t["train.seed"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      try {
        std::size_t used = 0;
        c.train.seed = std::stoull(v, &used);
        if (used == v.size()) return;
      } catch (const std::exception&) {
      }
      throw ConfigError("key '" + k + "': expected an unsigned integer, got '" + v + "'");
    };
    t["train.actor_lr"] = d([](ExperimentConfig& c) -> double& { return c.train.actor_lr; });
    t["train.critic_lr"] = d([](ExperimentConfig& c) -> double& { return c.train.critic_lr; });
    t["train.normalize_advantages"] = b([](ExperimentConfig& c) -> bool& { return c.train.normalize_advantages; });
    t["train.workers"] = i([](ExperimentConfig& c) -> int& { return c.train.workers; });
    t["train.temperature"] = d([](ExperimentConfig& c) -> double& { return c.train.decode.temperature; });
    t["train.top_p"] = d([](ExperimentConfig& c) -> double& { return c.train.decode.top_p; });
    t["train.max_response_tokens"] = i([](ExperimentConfig& c) -> int& { return c.train.max_response_tokens; });
    t["train.warmup_steps"] = i([](ExperimentConfig& c) -> int& { return c.warmup_steps; });
    t["train.warmup_batch"] = i([](ExperimentConfig& c) -> int& { return c.warmup_batch; });
    t["train.warmup_lr"] = d([](ExperimentConfig& c) -> double& { return c.warmup_lr; });
    t["train.warmup_solve"] = b([](ExperimentConfig& c) -> bool& { return c.warmup_solve; });

    t["gae.gamma"] = d([](ExperimentConfig& c) -> double& { return c.train.gae.gamma; });
    t["gae.lam"] = d([](ExperimentConfig& c) -> double& { return c.train.gae.lam; });
    t["gae.gamma_turn"] = d([](ExperimentConfig& c) -> double& { return c.train.gae.gamma_turn; });
    t["gae.lam_turn"] = d([](ExperimentConfig& c) -> double& { return c.train.gae.lam_turn; });
    t["gae.gamma_token"] = d([](ExperimentConfig& c) -> double& { return c.train.gae.gamma_token; });
    t["gae.lam_token"] = d([](ExperimentConfig& c) -> double& { return c.train.gae.lam_token; });
    t["gae.beta_kl"] = d([](ExperimentConfig& c) -> double& { return c.train.gae.beta_kl; });

    t["judge.beta_s"] = d([](ExperimentConfig& c) -> double& { return c.train.judge.beta_s; });
    t["judge.beta_w"] = d([](ExperimentConfig& c) -> double& { return c.train.judge.beta_w; });
    t["judge.f1_threshold"] = d([](ExperimentConfig& c) -> double& { return c.train.judge.f1_threshold; });
    t["judge.penalty"] = d([](ExperimentConfig& c) -> double& { return c.train.judge.penalty; });
    t["judge.heap_capacity"] = i([](ExperimentConfig& c) -> int& { return c.train.judge.heap_capacity; });
    t["judge.indicator"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      if (v == "binary") c.train.judge.indicator_mode = IndicatorMode::Binary;
      else if (v == "continuous") c.train.judge.indicator_mode = IndicatorMode::Continuous;
      else throw ConfigError("key '" + k + "': expected binary or continuous, got '" + v + "'");
    };
    t["judge.url"] = s([](ExperimentConfig& c) -> std::string& { return c.judge_url; });
    t["judge.timeout_ms"] = i([](ExperimentConfig& c) -> int& { return c.judge_timeout_ms; });

    t["policy.embed_dim"] = i([](ExperimentConfig& c) -> int& { return c.embed_dim; });
    t["policy.hidden"] = i([](ExperimentConfig& c) -> int& { return c.hidden; });
    t["policy.window"] = i([](ExperimentConfig& c) -> int& { return c.window; });
    t["policy.init_scale"] = d([](ExperimentConfig& c) -> double& { return c.init_scale; });

    t["eval.every"] = i([](ExperimentConfig& c) -> int& { return c.eval_every; });
    t["eval.episodes"] = i([](ExperimentConfig& c) -> int& { return c.eval_episodes; });
    t["eval.decode"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      if (v == "greedy") c.eval_greedy = true;
      else if (v == "sample") c.eval_greedy = false;
      else throw ConfigError("key '" + k + "': expected greedy or sample, got '" + v + "'");
    };

    t["run.out_dir"] = s([](ExperimentConfig& c) -> std::string& { return c.out_dir; });
    t["run.resume"] = b([](ExperimentConfig& c) -> bool& { return c.resume; });
    t["metrics.wall_clock"] = b([](ExperimentConfig& c) -> bool& { return c.wall_clock; });
    t["metrics.csv"] = b([](ExperimentConfig& c) -> bool& { return c.csv; });
    return t;
  }();
  return table;
}

}  // namespace

std::vector<std::string> known_config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : setters()) keys.push_back(k);
  return keys;
}

Settings parse_settings(const std::string& text, const std::string& source) {
  Settings out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = strip(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = strip(body.substr(0, eq));
    const std::string value = strip(body.substr(eq + 1));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    if (!setters().count(key)) throw ConfigError(source + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    out.emplace_back(key, value);
  }
  return out;
}

std::string env_var_for_key(const std::string& key, const std::string& prefix) {
  std::string v = prefix;
  for (char c : key) v.push_back(c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return v;
}

Settings settings_from_environment(const std::string& prefix) {
  std::map<std::string, std::string> by_var;
  for (const auto& k : known_config_keys()) by_var[env_var_for_key(k, prefix)] = k;
  Settings out;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry(*e);
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    const std::string var = entry.substr(0, eq);
    auto it = by_var.find(var);
    if (it == by_var.end()) throw ConfigError("environment variable " + var + " does not name a config key");
    out.emplace_back(it->second, eq == std::string::npos ? "" : entry.substr(eq + 1));
  }
  std::sort(out.begin(), out.end());
  return out;
}

ExperimentConfig build_config(const Settings& settings) {
  ExperimentConfig cfg;
  for (const auto& [k, v] : settings) {
    if (!setters().count(k)) throw ConfigError("unknown key '" + k + "'");
    if (k == "env.kind") setters().at(k)(cfg, k, v);
  }
  const EnvKind kind = cfg.env.kind;
  cfg.env = kind == EnvKind::Sokoban ? EnvConfig::sokoban_defaults() : EnvConfig::frozen_lake_defaults();
  for (const auto& [k, v] : settings) setters().at(k)(cfg, k, v);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::optional<std::string>& path) {
  if (!path) return build_config({});
  std::ifstream f(*path);
  if (!f) throw ConfigError("cannot read config file " + *path);
  std::stringstream ss;
  ss << f.rdbuf();
  return build_config(parse_settings(ss.str(), *path));
}

std::string describe_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "env.kind = " << to_string(c.env.kind) << '\n'
    << "env.rows = " << c.env.rows << '\n'
    << "env.cols = " << c.env.cols << '\n'
    << "env.num_boxes = " << c.env.num_boxes << '\n'
    << "env.max_actions_per_step = " << c.env.max_actions_per_step << '\n'
    << "env.max_turns = " << c.env.max_turns << '\n'
    << "env.min_actions_to_succeed = " << c.env.min_actions_to_succeed << '\n'
    << "env.hole_probability = " << fmt::format("{}", c.env.hole_probability) << '\n'
    << "env.max_interior_walls = " << c.env.max_interior_walls << '\n'
    << "env.layout = " << c.env.layout << '\n'
    << "agent.strategy = " << to_string(c.train.strategy) << '\n'
    << "agent.representation = " << to_string(c.representation) << '\n'
    << "train.iterations = " << c.iterations << '\n'
    << "train.batch_size = " << c.train.batch_size << '\n'
    << "train.mini_batch = " << c.train.mini_batch << '\n'
    << "train.epochs = " << c.train.epochs_per_batch << '\n'
    << "train.clip_eps = " << fmt::format("{}", c.train.clip_eps) << '\n'
    << "train.estimator = " << (c.train.estimator == Estimator::TokenGAE ? "token" : "bilevel") << '\n'
    << "train.reward_mode = " << to_string(c.train.reward_mode) << '\n'
    << "train.seed = " << c.train.seed << '\n'
    << "train.actor_lr = " << fmt::format("{}", c.train.actor_lr) << '\n'
    << "train.critic_lr = " << fmt::format("{}", c.train.critic_lr) << '\n'
    << "train.normalize_advantages = " << (c.train.normalize_advantages ? "true" : "false") << '\n'
    << "train.temperature = " << fmt::format("{}", c.train.decode.temperature) << '\n'
    << "train.top_p = " << fmt::format("{}", c.train.decode.top_p) << '\n'
    << "train.max_response_tokens = " << c.train.max_response_tokens << '\n'
    << "train.warmup_steps = " << c.warmup_steps << '\n'
    << "train.warmup_batch = " << c.warmup_batch << '\n'
    << "train.warmup_lr = " << fmt::format("{}", c.warmup_lr) << '\n'
    << "train.warmup_solve = " << (c.warmup_solve ? "true" : "false") << '\n'
    << "gae.gamma = " << fmt::format("{}", c.train.gae.gamma) << '\n'
    << "gae.lam = " << fmt::format("{}", c.train.gae.lam) << '\n'
    << "gae.gamma_turn = " << fmt::format("{}", c.train.gae.gamma_turn) << '\n'
    << "gae.lam_turn = " << fmt::format("{}", c.train.gae.lam_turn) << '\n'
    << "gae.gamma_token = " << fmt::format("{}", c.train.gae.gamma_token) << '\n'
    << "gae.lam_token = " << fmt::format("{}", c.train.gae.lam_token) << '\n'
    << "gae.beta_kl = " << fmt::format("{}", c.train.gae.beta_kl) << '\n'
    << "judge.beta_s = " << fmt::format("{}", c.train.judge.beta_s) << '\n'
    << "judge.beta_w = " << fmt::format("{}", c.train.judge.beta_w) << '\n'
    << "judge.f1_threshold = " << fmt::format("{}", c.train.judge.f1_threshold) << '\n'
    << "judge.penalty = " << fmt::format("{}", c.train.judge.penalty) << '\n'
    << "judge.heap_capacity = " << c.train.judge.heap_capacity << '\n'
    << "judge.indicator = " << (c.train.judge.indicator_mode == IndicatorMode::Binary ? "binary" : "continuous") << '\n'
    << "policy.embed_dim = " << c.embed_dim << '\n'
    << "policy.hidden = " << c.hidden << '\n'
    << "policy.window = " << c.window << '\n'
    << "policy.init_scale = " << fmt::format("{}", c.init_scale) << '\n'
    << "eval.every = " << c.eval_every << '\n'
    << "eval.episodes = " << c.eval_episodes << '\n'
    << "eval.decode = " << (c.eval_greedy ? "greedy" : "sample") << '\n';
  return o.str();
}

NetShape policy_shape(const ExperimentConfig& cfg, const Vocabulary& vocab) {
  NetShape s;
  s.vocab = vocab.size();
  s.embed_dim = cfg.embed_dim;
  s.hidden = cfg.hidden;
  s.window = cfg.window;
  s.turns = vocab.num_turn_tokens();
  s.out = vocab.size();
  return s;
}

NetShape value_shape(const ExperimentConfig& cfg, const Vocabulary& vocab) {
  NetShape s = policy_shape(cfg, vocab);
  s.out = 1;
  return s;
}

TrainState initial_state(const ExperimentConfig& cfg, const Vocabulary& vocab) {
  TrainState st;
  Rng rng(derive_seed(cfg.train.seed, 0x1417ULL));
  st.policy = NetParams::random(policy_shape(cfg, vocab), rng, cfg.init_scale);
  st.value = NetParams::random(value_shape(cfg, vocab), rng, cfg.init_scale, true);
  st.reference = snapshot_reference(st.policy);
  st.actor_opt = AdamState::for_params(st.policy);
  st.critic_opt = AdamState::for_params(st.value);
  return st;
}

double warm_start(const ExperimentConfig& cfg, TrainState& st, const Vocabulary& vocab) {
  if (cfg.warmup_steps <= 0) return 0.0;
  const int max_actions = cfg.env.max_actions_per_step;
  ScriptedPolicy::Script script = demonstration_script(cfg.train.strategy, cfg.representation, cfg.warmup_solve,
                                                       max_actions, cfg.env.action_budget());
  RuleJudge judge(cfg.train.judge);
  RolloutOptions ro;
  ro.strategy = cfg.train.strategy;
  ro.mode = RewardMode::Base;
  ro.judge = cfg.train.judge;
  ro.max_response_tokens = cfg.train.max_response_tokens;
  ro.actions.max_actions = max_actions;

  AdamState opt = AdamState::for_params(st.policy);
  double loss = 0.0;
  for (int step = 0; step < cfg.warmup_steps; ++step) {
    std::vector<TokenizedTrajectory> demos(static_cast<std::size_t>(cfg.warmup_batch));
    parallel_for(cfg.warmup_batch, cfg.train.workers, [&](int i) {
      ScriptedPolicy demo(script, vocab);
      const auto env_seed = derive_seed(cfg.train.seed, 0xdec0ULL + static_cast<std::uint64_t>(step),
                                        static_cast<std::uint64_t>(i)) & 0x7fffffffffffffffULL;
      const auto traj = collect_trajectory(cfg.env, env_seed, demo, judge, ro, env_seed ^ 0xabcdefULL, vocab);
      demos[static_cast<std::size_t>(i)] = tokenize_trajectory(traj, vocab);
    });
    loss = behavior_cloning_step(st.policy, opt, demos, cfg.warmup_lr);
    if ((step + 1) % 50 == 0 || step + 1 == cfg.warmup_steps)
      spdlog::info("warm start step {}/{}: nll {:.4f}", step + 1, cfg.warmup_steps, loss);
  }
  st.reference = snapshot_reference(st.policy);
  return loss;
}

std::uint64_t eval_env_seed(std::uint64_t run_seed, int idx) {
  return derive_seed(run_seed ^ 0xe7a1e7a1ULL, 0xe7a1ULL, static_cast<std::uint64_t>(idx)) | 0x8000000000000000ULL;
}

double eval_success_rate(const PolicyParams& policy, const EnvConfig& env, int n, bool greedy, const TrainConfig& train,
                         const Vocabulary& vocab) {
  if (n < 1) throw std::invalid_argument("eval_success_rate needs n >= 1");
  RuleJudge judge(train.judge);
  RolloutOptions ro;
  ro.strategy = train.strategy;
  ro.mode = RewardMode::Base;
  ro.judge = train.judge;
  ro.max_response_tokens = train.max_response_tokens;
  ro.actions.max_actions = env.max_actions_per_step;
  DecodeOptions dec = train.decode;
  dec.greedy = greedy;
  std::vector<int> success(static_cast<std::size_t>(n), 0);
  parallel_for(n, train.workers, [&](int i) {
    MlpAgent agent(policy, nullptr, dec, vocab.pad());
    const auto seed = eval_env_seed(train.seed, i);
    const auto traj = collect_trajectory(env, seed, agent, judge, ro, derive_seed(seed, 0x5a11ULL), vocab);
    success[static_cast<std::size_t>(i)] = traj.succeeded ? 1 : 0;
  });
  double s = 0.0;
  for (int x : success) s += x;
  return s / n;
}

double uniform_random_success_rate(const EnvConfig& env, int n, std::uint64_t seed, const Vocabulary& vocab) {
  RuleJudge judge(JudgeConfig{});
  RolloutOptions ro;
  ro.strategy = ReasoningStrategy::NoThink;
  ro.mode = RewardMode::Base;
  ro.actions.max_actions = env.max_actions_per_step;
  const int max_actions = env.max_actions_per_step;
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    ScriptedPolicy policy(
        [max_actions](const EnvState& st, int, Rng& rng) {
          return demonstration_response(st, ReasoningStrategy::NoThink, RepresentationFormat::NaturalLanguage,
                                        random_moves(max_actions, rng));
        },
        vocab);
    const auto es = eval_env_seed(seed, i);
    s += collect_trajectory(env, es, policy, judge, ro, derive_seed(es, 0x5a11ULL), vocab).succeeded ? 1.0 : 0.0;
  }
  return s / n;
}

std::string emit_metrics(const IterationMetrics& m) {
  ordered_json j;
  j["iteration"] = m.iteration;
  j["success_rate"] = m.success_rate;
  j["mean_return"] = m.mean_return;
  j["format_rate"] = m.format_rate;
  j["se_score"] = m.se_score;
  j["tm_score"] = m.tm_score;
  j["entropy"] = m.entropy;
  j["kl_ref"] = m.kl_ref;
  j["actor_loss"] = m.actor_loss;
  j["critic_loss"] = m.critic_loss;
  j["wall_ms"] = m.wall_ms;
  j["reasoning_reward"] = m.reasoning_reward;
  j["eval_success_rate"] = m.eval_success_rate ? json(*m.eval_success_rate) : json(nullptr);
  j["update_skipped"] = m.update_skipped;
  return j.dump() + "\n";
}

IterationMetrics parse_metrics_line(const std::string& line) {
  const auto j = json::parse(line);
  IterationMetrics m;
  m.iteration = j.at("iteration").get<int>();
  m.success_rate = j.at("success_rate").get<double>();
  m.mean_return = j.at("mean_return").get<double>();
  m.format_rate = j.at("format_rate").get<double>();
  m.se_score = j.at("se_score").get<double>();
  m.tm_score = j.at("tm_score").get<double>();
  m.entropy = j.at("entropy").get<double>();
  m.kl_ref = j.at("kl_ref").get<double>();
  m.actor_loss = j.at("actor_loss").get<double>();
  m.critic_loss = j.at("critic_loss").get<double>();
  m.wall_ms = j.at("wall_ms").get<double>();
  m.reasoning_reward = j.value("reasoning_reward", 0.0);
  if (j.contains("eval_success_rate") && !j["eval_success_rate"].is_null())
    m.eval_success_rate = j["eval_success_rate"].get<double>();
  m.update_skipped = j.value("update_skipped", false);
  return m;
}

void export_csv(const std::string& jsonl_path, const std::string& csv_path) {
  std::ifstream in(jsonl_path);
  std::ofstream out(csv_path, std::ios::trunc);
  out << "iteration,success_rate,mean_return,format_rate,se_score,tm_score,entropy,kl_ref,actor_loss,critic_loss,"
         "wall_ms,reasoning_reward,eval_success_rate\n";
  out.precision(17);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line.find("\"header\"") != std::string::npos) continue;
    const auto m = parse_metrics_line(line);
    out << m.iteration << ',' << m.success_rate << ',' << m.mean_return << ',' << m.format_rate << ',' << m.se_score
        << ',' << m.tm_score << ',' << m.entropy << ',' << m.kl_ref << ',' << m.actor_loss << ',' << m.critic_loss
        << ',' << m.wall_ms << ',' << m.reasoning_reward << ',';
    if (m.eval_success_rate) out << *m.eval_success_rate;
    out << '\n';
  }
}

namespace {

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("cannot write " + p.string());
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void put_blob(std::string& out, const std::string& blob) {
  const std::uint64_t n = blob.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
  out += blob;
}

std::string get_blob(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw FormatError("truncated optimizer file");
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 8;
  if (pos + n > in.size()) throw FormatError("truncated optimizer file");
  std::string out = in.substr(pos, n);
  pos += n;
  return out;
}

}  // namespace

void save_checkpoint(const std::string& dir, const TrainState& st) {
  const fs::path final_dir(dir);
  const fs::path tmp = final_dir.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  save_params((tmp / "policy.bin").string(), st.policy);
  save_params((tmp / "value.bin").string(), st.value);
  save_params((tmp / "reference.bin").string(), st.reference);
  std::string opt = "WMRLOPTM";
  put_blob(opt, std::to_string(st.actor_opt.step));
  put_blob(opt, std::to_string(st.critic_opt.step));
  put_blob(opt, encode_params(st.actor_opt.m));
  put_blob(opt, encode_params(st.actor_opt.v));
  put_blob(opt, encode_params(st.critic_opt.m));
  put_blob(opt, encode_params(st.critic_opt.v));
  write_file(tmp / "optimizer.bin", opt);
  json tracker = json::array();
  for (const auto& [s, c] : st.tracker.all()) tracker.push_back({s, c});
  json rs{{"version", 1}, {"iteration", st.iteration}, {"tracker", tracker}};
  write_file(tmp / "run_state.json", rs.dump() + "\n");
  fs::remove_all(final_dir);
  fs::rename(tmp, final_dir);
}

bool checkpoint_exists(const std::string& dir) { return fs::exists(fs::path(dir) / "run_state.json"); }

TrainState load_checkpoint(const std::string& dir) {
  const fs::path d(dir);
  TrainState st;
  st.policy = load_params((d / "policy.bin").string());
  st.value = load_params((d / "value.bin").string());
  st.reference = load_params((d / "reference.bin").string());
  const std::string opt = read_file(d / "optimizer.bin");
  if (opt.compare(0, 8, "WMRLOPTM") != 0) throw FormatError("bad optimizer file");
  std::size_t pos = 8;
  st.actor_opt.step = std::stol(get_blob(opt, pos));
  st.critic_opt.step = std::stol(get_blob(opt, pos));
  st.actor_opt.m = decode_params(get_blob(opt, pos));
  st.actor_opt.v = decode_params(get_blob(opt, pos));
  st.critic_opt.m = decode_params(get_blob(opt, pos));
  st.critic_opt.v = decode_params(get_blob(opt, pos));
  const auto rs = json::parse(read_file(d / "run_state.json"));
  st.iteration = rs.at("iteration").get<int>();
  std::vector<std::pair<std::string, long>> counts;
  for (const auto& e : rs.at("tracker")) counts.emplace_back(e.at(0).get<std::string>(), e.at(1).get<long>());
  st.tracker.restore(counts);
  return st;
}

namespace {

std::string header_line(const ExperimentConfig& cfg, double baseline_eval, double uniform_random) {
  ordered_json h;
  h["header"] = "wmrl-metrics";
  h["version"] = 1;
  h["config"] = describe_config(cfg);
  h["baseline_eval_success_rate"] = baseline_eval;
  h["uniform_random_success_rate"] = uniform_random;
  return h.dump() + "\n";
}

// Keeps the header and metric lines with iteration <= last.
void truncate_metrics(const fs::path& path, int last) {
  std::ifstream in(path);
  std::string kept, line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.find("\"header\"") != std::string::npos) {
      kept += line + "\n";
      continue;
    }
    try {
      if (json::parse(line).at("iteration").get<int>() <= last) kept += line + "\n";
    } catch (const std::exception&) {
      break;  // torn final line
    }
  }
  in.close();
  write_file(path, kept);
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg) {
  const Vocabulary& vocab = Vocabulary::standard();
  const fs::path out(cfg.out_dir);
  const fs::path metrics_path = out / "metrics.jsonl";
  const std::string ckpt = (out / "checkpoint").string();
  int iteration = 0;
  try {
    cfg.validate();
    fs::create_directories(out);
    auto judge = make_judge(cfg.judge_url, cfg.judge_timeout_ms, cfg.train.judge);

    TrainState st;
    if (cfg.resume && checkpoint_exists(ckpt) && fs::exists(metrics_path)) {
      st = load_checkpoint(ckpt);
      if (!(st.policy.shape == policy_shape(cfg, vocab))) throw ConfigError("checkpoint shape differs from config");
      truncate_metrics(metrics_path, st.iteration);
      spdlog::info("resuming from iteration {}", st.iteration);
    } else {
      st = initial_state(cfg, vocab);
      warm_start(cfg, st, vocab);
      const double base = eval_success_rate(st.policy, cfg.env, cfg.eval_episodes, cfg.eval_greedy, cfg.train, vocab);
      const double uni = uniform_random_success_rate(cfg.env, cfg.eval_episodes, cfg.train.seed, vocab);
      write_file(metrics_path, header_line(cfg, base, uni));
      spdlog::info("baseline eval success {:.3f}, uniform-random {:.3f}", base, uni);
    }

    std::ofstream metrics(metrics_path, std::ios::app);
    while (st.iteration < cfg.iterations) {
      iteration = st.iteration + 1;
      IterationMetrics m = train_iteration(cfg.train, cfg.env, st, *judge, vocab);
      if (cfg.eval_every > 0 && m.iteration % cfg.eval_every == 0) {
        m.eval_success_rate =
            eval_success_rate(st.policy, cfg.env, cfg.eval_episodes, cfg.eval_greedy, cfg.train, vocab);
        save_checkpoint(ckpt, st);
      }
      if (!cfg.wall_clock) m.wall_ms = 0.0;
      metrics << emit_metrics(m) << std::flush;
      spdlog::info("iter {} success {:.3f} return {:.3f} format {:.3f} reason {:.3f}{}", m.iteration, m.success_rate,
                   m.mean_return, m.format_rate, m.reasoning_reward,
                   m.eval_success_rate ? fmt::format(" eval {:.3f}", *m.eval_success_rate) : std::string());
    }
    save_checkpoint(ckpt, st);
    metrics.close();
    if (cfg.csv) export_csv(metrics_path.string(), (out / "metrics.csv").string());
    return 0;
  } catch (const std::exception& e) {
    spdlog::error("run failed at iteration {}: {}", iteration, e.what());
    return 1;
  }
}

std::string trajectory_dump_header() {
  ordered_json h;
  h["format"] = "wmrl-trajectory";
  h["version"] = 1;
  return h.dump() + "\n";
}

namespace {

ordered_json reward_json(const RewardBreakdown& r) {
  ordered_json j;
  j["task"] = r.task;
  j["format"] = r.format;
  j["reasoning"] = r.reasoning;
  j["repetition"] = r.repetition;
  j["total"] = r.total;
  return j;
}

}  // namespace

std::string trajectory_document(const Trajectory& traj, const TokenizedTrajectory& tt) {
  ordered_json d;
  d["env"] = std::string(to_string(traj.env.kind));
  d["grid"] = {traj.env.rows, traj.env.cols};
  d["env_seed"] = traj.env_seed;
  d["sample_seed"] = traj.sample_seed;
  d["strategy"] = std::string(to_string(traj.strategy));
  d["reward_mode"] = std::string(to_string(traj.mode));
  d["initial_state"] = serialize_state(traj.initial_state);
  ordered_json turns = ordered_json::array();
  for (const auto& t : traj.turns) {
    ordered_json tj;
    tj["turn"] = t.turn_index;
    tj["obs"] = t.obs_text;
    tj["response"] = t.response_text;
    tj["format_ok"] = t.parsed.format_ok;
    tj["length_capped"] = t.length_capped;
    std::vector<std::string> acts;
    for (Action a : t.actions_executed) acts.emplace_back(to_string(a));
    tj["actions"] = acts;
    tj["se_score"] = t.verdict.se_score;
    tj["tm_score"] = t.verdict.tm_score;
    tj["reward"] = reward_json(t.reward);
    tj["state_after"] = serialize_state(t.state_after);
    turns.push_back(tj);
  }
  d["turns"] = turns;
  d["succeeded"] = traj.succeeded;
  d["token_ids"] = tt.token_ids;
  d["loss_mask"] = tt.loss_mask;
  ordered_json spans = ordered_json::array();
  for (const auto& s : tt.turn_spans) spans.push_back({s.obs_begin, s.obs_end, s.act_begin, s.act_end});
  d["turn_spans"] = spans;
  ordered_json logp = ordered_json::array();
  for (double x : tt.old_logp) logp.push_back(std::isnan(x) ? ordered_json(nullptr) : ordered_json(x));
  d["old_logp"] = logp;
  d["per_turn_rewards"] = tt.per_turn_rewards;
  d["trajectory_return"] = tt.trajectory_return;
  return d.dump() + "\n";
}

bool replay_matches(const Trajectory& traj) {
  EnvState s = traj.initial_state;
  for (const auto& t : traj.turns) {
    if (!(s == t.state_before)) return false;
    double task = 0.0;
    for (Action a : t.actions_executed) {
      auto out = step(s, a);
      task += out.task_reward;
      s = out.new_state;
    }
    if (task != t.reward.task || !(s == t.state_after)) return false;
  }
  return true;
}

}  // namespace wmrl
