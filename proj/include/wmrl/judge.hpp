#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "wmrl/grammar.hpp"
#include "wmrl/relations.hpp"

namespace wmrl {

enum class IndicatorMode { Binary, Continuous };

struct JudgeConfig {
  double beta_s = 0.5;
  double beta_w = 0.5;
  double f1_threshold = 0.7;
  double penalty = -0.1;
  int heap_capacity = 16;
  IndicatorMode indicator_mode = IndicatorMode::Binary;
};

struct JudgeVerdict {
  double se_score = 0.0;
  double tm_score = 0.0;
  bool se_pass = false;
  bool tm_pass = false;
};

// Belief text to relations. Accepts the structured record ("{player_position:
// ...}"), a symbolic grid (only when kind is given), or English clauses.
//
// Clause grammar: text is split at . , ; ! ? and newlines. In each clause the
// first entity word is the subject and the next one the object; direction
// words seen in between decide the relation:
//   above up over upper            -> above
//   below down under beneath lower -> below
//   left / right                   -> horizontal
//   same row / same column         -> explicit alignment
//   same place|position|cell|spot|location, reach* -> coincidence
// A single strict direction implies alignment on the other axis ("the player
// is below box0" means same column). Clauses with "not"/"no", conflicting
// directions, or only an alignment word are ignored. Scanning resumes after
// the object, so "box0 above player target0 left player" yields two tuples.
RelationSet parse_belief_relations(std::string_view text, std::optional<EnvKind> kind = std::nullopt);

// 2|P∩T| / (|P| + |T|); 1 for two empty sets.
double relation_f1(const RelationSet& predicted, const RelationSet& truth);

// se compares the observation belief with truth_now, tm the prediction with
// truth_next (the realized post-step state). A prediction naming a
// box-on-target (or player-on-goal) coincidence that actually happened
// scores 1.
JudgeVerdict judge_turn(const StructuredResponse& resp, const RelationSet& truth_now, const RelationSet& truth_next,
                        const JudgeConfig& cfg, std::optional<EnvKind> kind = std::nullopt);

double reasoning_reward(const JudgeVerdict& v, const JudgeConfig& cfg);

class RepetitionTracker {
 public:
  // Counts sentence once and returns cfg.penalty if it now ranks within the
  // heap_capacity most frequent sentences while f1 < threshold, else 0.
  double submit(const std::string& sentence, double f1, const JudgeConfig& cfg);

  bool in_top(const std::string& sentence, int capacity) const;
  long count(const std::string& sentence) const;
  std::size_t distinct() const { return counts_.size(); }
  // Most frequent first; ties by sentence.
  std::vector<std::pair<std::string, long>> top(int k) const;
  std::vector<std::pair<std::string, long>> all() const;
  void restore(const std::vector<std::pair<std::string, long>>& counts);
  bool operator==(const RepetitionTracker& o) const { return counts_ == o.counts_; }

 private:
  std::unordered_map<std::string, long> counts_;
  std::set<std::pair<long, std::string>> ranking_;  // (-count, sentence)
};

std::pair<double, RepetitionTracker> repetition_penalty(RepetitionTracker tracker, const std::string& sentence,
                                                        double f1, const JudgeConfig& cfg);

}  // namespace wmrl
