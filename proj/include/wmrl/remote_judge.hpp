#pragma once

#include <atomic>
#include <memory>
#include <string>

#include "wmrl/judge.hpp"

namespace wmrl {

class TurnJudge {
 public:
  virtual ~TurnJudge() = default;
  virtual JudgeVerdict judge(const StructuredResponse& resp, const RelationSet& truth_now,
                             const RelationSet& truth_next, EnvKind kind) = 0;
};

class RuleJudge : public TurnJudge {
 public:
  explicit RuleJudge(JudgeConfig cfg) : cfg_(cfg) {}
  JudgeVerdict judge(const StructuredResponse& resp, const RelationSet& truth_now, const RelationSet& truth_next,
                     EnvKind kind) override {
    return judge_turn(resp, truth_now, truth_next, cfg_, kind);
  }

 private:
  JudgeConfig cfg_;
};

// Posts {belief_now, belief_next, truth_now, truth_next} as JSON to url and
// reads {se_pass, tm_pass, se_score, tm_score}. Any transport or decoding
// failure falls back to the rule judge and is logged.
class RemoteJudge : public TurnJudge {
 public:
  RemoteJudge(std::string url, int timeout_ms, JudgeConfig cfg);
  JudgeVerdict judge(const StructuredResponse& resp, const RelationSet& truth_now, const RelationSet& truth_next,
                     EnvKind kind) override;

  long fallbacks() const { return fallbacks_.load(); }
  long remote_calls() const { return remote_calls_.load(); }

 private:
  std::string host_;
  std::string path_;
  int timeout_ms_;
  JudgeConfig cfg_;
  RuleJudge fallback_;
  std::atomic<long> fallbacks_{0};
  std::atomic<long> remote_calls_{0};
};

std::unique_ptr<TurnJudge> make_judge(const std::string& url, int timeout_ms, const JudgeConfig& cfg);

}  // namespace wmrl
