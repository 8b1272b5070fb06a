#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace wmrl {

enum class EnvKind { Sokoban, FrozenLake };
enum class Action { Up, Down, Left, Right };

inline constexpr Action kAllActions[] = {Action::Up, Action::Down, Action::Left, Action::Right};

std::string_view to_string(EnvKind kind);
std::string_view to_string(Action action);
std::optional<EnvKind> parse_env_kind(std::string_view text);

struct GridPos {
  int row = 0;
  int col = 0;
  auto operator<=>(const GridPos&) const = default;
};

GridPos offset(GridPos p, Action a);

struct EnvConfig {
  EnvKind kind = EnvKind::Sokoban;
  int rows = 6;
  int cols = 6;
  int num_boxes = 1;  // Sokoban only
  int max_actions_per_step = 3;
  int max_turns = 3;
  int min_actions_to_succeed = 5;
  std::uint64_t seed = 0;

  // Generator knobs.
  double hole_probability = 0.2;  // FrozenLake, per free cell
  int max_interior_walls = 3;     // Sokoban
  int max_generation_attempts = 20000;

  // Optional fixed layout in symbolic notation, rows separated by '/'.
  // When set, reset() ignores the seed and always returns this map.
  std::string layout;

  static EnvConfig sokoban_defaults();
  static EnvConfig frozen_lake_defaults();

  // Longest solution a reset instance may need: one full episode budget.
  int action_budget() const { return max_turns * max_actions_per_step; }

  // Throws ConfigError on invalid shapes or budgets.
  void validate() const;
};

// Full simulator state. Sokoban uses boxes/targets/walls, FrozenLake uses
// goal/holes. Position lists are kept sorted where order is not semantic
// (walls, holes); boxes and targets keep their index identity.
struct EnvState {
  EnvKind kind = EnvKind::Sokoban;
  int rows = 0;
  int cols = 0;
  GridPos player;
  std::vector<GridPos> boxes;
  std::vector<GridPos> targets;
  GridPos goal;
  std::vector<GridPos> holes;
  std::vector<GridPos> walls;
  bool terminated = false;
  bool succeeded = false;
  int steps_taken = 0;

  bool in_bounds(GridPos p) const { return p.row >= 0 && p.row < rows && p.col >= 0 && p.col < cols; }
  bool is_wall(GridPos p) const;
  bool is_hole(GridPos p) const;
  bool is_target(GridPos p) const;
  // Index of the box at p, or -1.
  int box_at(GridPos p) const;
  bool all_boxes_placed() const;

  bool operator==(const EnvState&) const = default;
};

enum class StepEvent : std::uint8_t {
  BoxPlaced = 1 << 0,
  BoxUnplaced = 1 << 1,
  ReachedGoal = 1 << 2,
  FellInHole = 1 << 3,
  BlockedMove = 1 << 4,
};

class EventSet {
 public:
  void add(StepEvent e) { bits_ |= static_cast<std::uint8_t>(e); }
  bool has(StepEvent e) const { return (bits_ & static_cast<std::uint8_t>(e)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::uint8_t bits() const { return bits_; }
  bool operator==(const EventSet&) const = default;

 private:
  std::uint8_t bits_ = 0;
};

struct StepOutcome {
  EnvState new_state;
  double task_reward = 0.0;
  EventSet events;
};

// Reward table shared by both environments.
struct TaskRewards {
  static constexpr double kSuccess = 10.0;
  static constexpr double kBoxPlaced = 1.0;
  static constexpr double kBoxUnplaced = -1.0;
  static constexpr double kStepPenalty = -0.1;
};

// Draws a solvable instance: shortest solution length within
// [min_actions_to_succeed, action_budget()]. Identical (config, seed) pairs
// give identical states. Throws GenerationFailure.
std::pair<EnvState, std::string> reset(const EnvConfig& config, std::uint64_t seed);

// One primitive move. Throws TerminatedStateError if state.terminated.
StepOutcome step(const EnvState& state, Action action);

std::string render_symbolic(const EnvState& state);

// Inverse of render_symbolic (flags other than "player fell/arrived" are not
// recoverable from a grid and are reset). Rows may be separated by '\n' or
// '/'. Throws FormatError on unknown symbols or ragged rows.
EnvState state_from_symbolic(EnvKind kind, std::string_view text);

// Breadth-first search for a shortest action sequence reaching success.
// Returns nullopt when no solution of length <= max_depth exists.
std::optional<std::vector<Action>> shortest_solution(const EnvState& state, int max_depth);

// Line-oriented snapshot, round-trippable exactly.
std::string serialize_state(const EnvState& state);
EnvState deserialize_state(std::string_view text);

}  // namespace wmrl
