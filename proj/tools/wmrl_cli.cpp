#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "wmrl/errors.hpp"
#include "wmrl/harness.hpp"

using namespace wmrl;

namespace {

struct Overrides {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::string> seed, iterations, estimator, reward_mode, strategy, representation, env, out_dir, workers,
      judge_url, judge_timeout_ms;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "config file (key = value lines)");
    app->add_option("--set", sets, "extra key=value setting, repeatable");
    app->add_option("--seed", seed, "train.seed");
    app->add_option("--iterations", iterations, "train.iterations");
    app->add_option("--estimator", estimator, "token | bilevel");
    app->add_option("--reward-mode", reward_mode, "base | full");
    app->add_option("--strategy", strategy, "NoThink | FreeThink | StateEstimation | TransitionModeling | WorldModeling");
    app->add_option("--representation", representation, "natural | symbolic | structured");
    app->add_option("--env", env, "sokoban | frozenlake");
    app->add_option("--out-dir", out_dir, "run directory");
    app->add_option("--workers", workers, "rollout threads");
    app->add_option("--judge-url", judge_url, "remote judge endpoint");
    app->add_option("--judge-timeout-ms", judge_timeout_ms, "remote judge timeout");
  }

  ExperimentConfig build() const {
    Settings s;
    if (!config.empty()) {
      std::ifstream f(config);
      if (!f) throw ConfigError("cannot read config file " + config);
      std::stringstream ss;
      ss << f.rdbuf();
      s = parse_settings(ss.str(), config);
    }
    for (auto& kv : settings_from_environment()) s.push_back(kv);
    auto add = [&](const char* key, const std::optional<std::string>& v) {
      if (v) s.emplace_back(key, *v);
    };
    add("env.kind", env);
    add("train.seed", seed);
    add("train.iterations", iterations);
    add("train.estimator", estimator);
    add("train.reward_mode", reward_mode);
    add("agent.strategy", strategy);
    add("agent.representation", representation);
    add("run.out_dir", out_dir);
    add("train.workers", workers);
    add("judge.url", judge_url);
    add("judge.timeout_ms", judge_timeout_ms);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      s.emplace_back(std::string(trim(kv.substr(0, eq))), std::string(trim(kv.substr(eq + 1))));
    }
    return build_config(s);
  }
};

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

EnvState read_state(const std::string& path, EnvKind kind) {
  const std::string text = slurp(path);
  if (text.rfind("wmrl-state", 0) == 0) return deserialize_state(text);
  return state_from_symbolic(kind, trim(text));
}

int gae_check(int count, std::uint64_t seed) {
  Rng rng(seed);
  double token_err = 0.0, turn_err = 0.0;
  GaeParams p;
  for (int i = 0; i < count; ++i) {
    p.gamma = rng.uniform01();
    p.lam = rng.uniform01();
    p.gamma_turn = rng.uniform01();
    p.lam_turn = rng.uniform01();
    p.gamma_token = rng.uniform01();
    p.lam_token = rng.uniform01();
    const FuzzCase fc = random_fuzz_case(rng);
    const auto a = token_level_gae(fc.tt, fc.values, fc.kl, p);
    const auto o = gae_oracle(fc.tt, fc.values, fc.kl, p, OracleMode::Token);
    const auto b = bilevel_gae(fc.tt, fc.values, fc.kl, p);
    const auto ob = gae_oracle(fc.tt, fc.values, fc.kl, p, OracleMode::Turn);
    for (std::size_t k = 0; k < a.advantages.size(); ++k) {
      token_err = std::max(token_err, std::abs(a.advantages[k] - o.advantages[k]));
      turn_err = std::max(turn_err, std::abs(b.advantages[k] - ob.advantages[k]));
    }
    for (std::size_t t = 0; t < b.turn_advantages.size(); ++t)
      turn_err = std::max(turn_err, std::abs(b.turn_advantages[t] - ob.turn_advantages[t]));
  }
  std::cout << "token-level GAE vs oracle: max abs diff " << token_err << "\n";
  std::cout << "bi-level GAE vs oracle:    max abs diff " << turn_err << "\n";
  const bool ok = token_err < 1e-10 && turn_err < 1e-10;
  std::cout << (ok ? "PASS" : "FAIL") << " over " << count << " fuzzed trajectories\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wmrl: multi-turn world-model RL on grid worlds"};
  app.require_subcommand(1);

  Overrides train_o, eval_o, dump_o, show_o;
  bool csv = false;
  auto* train = app.add_subcommand("train", "run (or resume) a training experiment");
  train_o.attach(train);
  train->add_flag("--csv", csv, "also write metrics.csv");

  auto* eval = app.add_subcommand("eval", "success rate of a checkpointed policy");
  eval_o.attach(eval);
  std::string eval_ckpt;
  int eval_n = 0;
  std::string eval_decode;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint directory (default: <out-dir>/checkpoint)");
  eval->add_option("--episodes", eval_n, "episode count (default: eval.episodes)");
  eval->add_option("--decode", eval_decode, "greedy | sample");

  auto* dump = app.add_subcommand("dump-trajectory", "write episodes as JSON lines");
  dump_o.attach(dump);
  std::string dump_ckpt, dump_out = "-";
  int dump_n = 1;
  bool dump_scripted = false, dump_greedy = false;
  dump->add_option("--checkpoint", dump_ckpt, "checkpoint directory (default: freshly initialized policy)");
  dump->add_option("--episodes", dump_n, "episode count");
  dump->add_option("--output", dump_out, "output file, - for stdout");
  dump->add_flag("--scripted", dump_scripted, "use the scripted demonstration agent");
  dump->add_flag("--greedy", dump_greedy, "greedy decoding");

  auto* gae = app.add_subcommand("gae-check", "fuzz both estimators against the brute-force oracle");
  int gae_n = 100;
  std::uint64_t gae_seed = 1;
  gae->add_option("--trajectories", gae_n, "fuzz case count");
  gae->add_option("--seed", gae_seed, "fuzz seed");

  auto* judge = app.add_subcommand("judge", "score belief text against a state");
  std::string j_state, j_belief, j_next_state, j_prediction, j_kind = "sokoban";
  judge->add_option("--state", j_state, "state file (symbolic grid or serialized state)")->required();
  judge->add_option("--belief", j_belief, "observation belief text file")->required();
  judge->add_option("--next-state", j_next_state, "post-step state file");
  judge->add_option("--prediction", j_prediction, "prediction belief text file");
  judge->add_option("--kind", j_kind, "sokoban | frozenlake (for symbolic grids)");

  auto* show = app.add_subcommand("print-config", "print the resolved configuration");
  show_o.attach(show);

  CLI11_PARSE(app, argc, argv);

  try {
    const Vocabulary& vocab = Vocabulary::standard();
    if (*train) {
      ExperimentConfig cfg = train_o.build();
      if (csv) cfg.csv = true;
      return run_experiment(cfg);
    }
    if (*show) {
      std::cout << describe_config(show_o.build());
      return 0;
    }
    if (*eval) {
      ExperimentConfig cfg = eval_o.build();
      const std::string dir = eval_ckpt.empty() ? cfg.out_dir + "/checkpoint" : eval_ckpt;
      const TrainState st = load_checkpoint(dir);
      const bool greedy = eval_decode.empty() ? cfg.eval_greedy : eval_decode == "greedy";
      const int n = eval_n > 0 ? eval_n : cfg.eval_episodes;
      const double rate = eval_success_rate(st.policy, cfg.env, n, greedy, cfg.train, vocab);
      nlohmann::ordered_json out{{"checkpoint", dir}, {"iteration", st.iteration}, {"episodes", n},
                                 {"decode", greedy ? "greedy" : "sample"}, {"success_rate", rate}};
      std::cout << out.dump() << "\n";
      return 0;
    }
    if (*dump) {
      ExperimentConfig cfg = dump_o.build();
      TrainState st = dump_ckpt.empty() ? initial_state(cfg, vocab) : load_checkpoint(dump_ckpt);
      RuleJudge rj(cfg.train.judge);
      RolloutOptions ro;
      ro.strategy = cfg.train.strategy;
      ro.mode = cfg.train.reward_mode;
      ro.judge = cfg.train.judge;
      ro.max_response_tokens = cfg.train.max_response_tokens;
      ro.actions.max_actions = cfg.env.max_actions_per_step;
      DecodeOptions dec = cfg.train.decode;
      dec.greedy = dump_greedy;
      std::ofstream file;
      std::ostream* os = &std::cout;
      if (dump_out != "-") {
        file.open(dump_out, std::ios::trunc);
        os = &file;
      }
      *os << trajectory_dump_header();
      RepetitionTracker tracker;
      for (int i = 0; i < dump_n; ++i) {
        const auto env_seed = train_env_seed(cfg.train.seed, 0, i);
        const auto sample_seed = train_sample_seed(cfg.train.seed, 0, i);
        Trajectory traj;
        if (dump_scripted) {
          ScriptedPolicy sp(demonstration_script(cfg.train.strategy, cfg.representation, true,
                                                 cfg.env.max_actions_per_step, cfg.env.action_budget()),
                            vocab);
          traj = collect_trajectory(cfg.env, env_seed, sp, rj, ro, sample_seed, vocab, &tracker);
        } else {
          MlpAgent agent(st.policy, &st.value, dec, vocab.pad());
          traj = collect_trajectory(cfg.env, env_seed, agent, rj, ro, sample_seed, vocab, &tracker);
        }
        *os << trajectory_document(traj, tokenize_trajectory(traj, vocab));
      }
      return 0;
    }
    if (*gae) return gae_check(gae_n, gae_seed);
    if (*judge) {
      const auto kind = parse_env_kind(j_kind);
      if (!kind) throw ConfigError("unknown kind " + j_kind);
      const EnvState now = read_state(j_state, *kind);
      StructuredResponse resp;
      resp.state_belief = slurp(j_belief);
      RelationSet truth_next;
      if (!j_next_state.empty()) truth_next = extract_relations(read_state(j_next_state, *kind));
      if (!j_prediction.empty()) resp.next_state_belief = slurp(j_prediction);
      JudgeConfig jc;
      const auto truth_now = extract_relations(now);
      const auto v = judge_turn(resp, truth_now, truth_next, jc, now.kind);
      nlohmann::ordered_json out;
      out["truth_now"] = describe(truth_now, now.kind);
      out["belief_relations"] = describe(parse_belief_relations(*resp.state_belief, now.kind), now.kind);
      out["se_score"] = v.se_score;
      out["se_pass"] = v.se_pass;
      if (resp.next_state_belief) {
        out["truth_next"] = describe(truth_next, now.kind);
        out["tm_score"] = v.tm_score;
        out["tm_pass"] = v.tm_pass;
      }
      out["reasoning_reward"] = reasoning_reward(v, jc);
      std::cout << out.dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
