#pragma once

#include <vector>

#include "wmrl/rollout.hpp"

namespace wmrl {

struct GaeParams {
  double gamma = 1.0;  // token-level estimator
  double lam = 1.0;
  double gamma_turn = 0.95;
  double lam_turn = 1.0;
  double gamma_token = 1.0;
  double lam_token = 1.0;
  double beta_kl = 0.001;

  void validate() const;  // throws ConfigError
};

enum class Estimator { TokenGAE, BiLevelGAE };

struct AdvantageSet {
  std::vector<double> advantages;      // aligned with token_ids, 0 where mask is 0
  std::vector<double> critic_targets;  // Y = A + V, 0 where mask is 0
  std::vector<double> turn_advantages;  // bi-level only
};

// r_i = -beta_kl * KL(cur_i || ref_i) for each masked position.
std::vector<double> kl_rewards(const std::vector<std::vector<double>>& cur_logits,
                               const std::vector<std::vector<double>>& ref_logits, double beta_kl);

// values[i] = V(tokens[0, i)) for i = 0..n, so values has n + 1 entries.
// kl has one entry per token (entries at mask-0 positions are ignored).
// Throws ShapeError on misaligned inputs or an empty mask.
AdvantageSet token_level_gae(const TokenizedTrajectory& tt, const std::vector<double>& values,
                             const std::vector<double>& kl, const GaeParams& p);

// Throws ShapeError when a turn has no action tokens.
AdvantageSet bilevel_gae(const TokenizedTrajectory& tt, const std::vector<double>& values,
                         const std::vector<double>& kl, const GaeParams& p);

AdvantageSet estimate_advantages(Estimator e, const TokenizedTrajectory& tt, const std::vector<double>& values,
                                 const std::vector<double>& kl, const GaeParams& p);

enum class OracleMode { Token, Turn };

// Explicit discounted sums of TD errors, no recursion. Token mode mirrors
// token_level_gae; Turn mode gives the bi-level token advantages with the
// turn advantages in turn_advantages.
AdvantageSet gae_oracle(const TokenizedTrajectory& tt, const std::vector<double>& values,
                        const std::vector<double>& kl, const GaeParams& p, OracleMode mode);

// Random layout for fuzzing: 1..max_turns turns, each an observation block
// and a non-empty action block, at most max_tokens tokens in total. Rewards,
// values (n + 1 entries) and kl are drawn alongside.
struct FuzzCase {
  TokenizedTrajectory tt;
  std::vector<double> values;
  std::vector<double> kl;
};
FuzzCase random_fuzz_case(Rng& rng, int max_tokens = 64, int max_turns = 5);

}  // namespace wmrl
