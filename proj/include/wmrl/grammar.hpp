#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "wmrl/grid.hpp"

namespace wmrl {

enum class ReasoningStrategy { NoThink, FreeThink, StateEstimation, TransitionModeling, WorldModeling };
enum class RepresentationFormat { NaturalLanguage, Symbolic, Structured };

std::string_view to_string(ReasoningStrategy s);
std::string_view to_string(RepresentationFormat f);
std::optional<ReasoningStrategy> parse_strategy(std::string_view text);
std::optional<RepresentationFormat> parse_representation(std::string_view text);

bool uses_state_belief(ReasoningStrategy s);
bool uses_prediction(ReasoningStrategy s);

struct StructuredResponse {
  std::optional<std::string> state_belief;       // <observation>
  std::optional<std::string> action_belief;      // <reasoning>
  std::optional<std::string> next_state_belief;  // <prediction>
  std::optional<std::string> free_think;         // FreeThink body of <think>
  std::string answer_text;
  std::vector<Action> executable_actions;
  bool format_ok = false;
};

struct ActionSpace {
  std::vector<std::string> names{"Up", "Down", "Left", "Right"};  // names[i] is kAllActions[i]
  int max_actions = 3;
};

// Total: malformed text gives format_ok = false with whatever fields could be
// located. A skeleton whose answer names no known action is not well formed.
StructuredResponse parse_response(std::string_view text, ReasoningStrategy strategy,
                                  const ActionSpace& space = {});

double format_reward(const StructuredResponse& resp);
inline constexpr double kFormatReward = 0.5;

// Comma-separated, case-insensitive; unknown items are dropped before the
// list is cut to max_actions.
std::vector<Action> parse_actions(std::string_view answer, const std::vector<std::string>& action_names,
                                  int max_actions);

std::string render_belief(const EnvState& state, RepresentationFormat fmt);

// Fills the strategy's tag skeleton from resp's fields (missing ones render
// empty). Inverse of parse_response on well-formed fields.
std::string render_response(const StructuredResponse& resp, ReasoningStrategy strategy);

std::string_view trim(std::string_view s);

}  // namespace wmrl
