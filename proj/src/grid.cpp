#include "wmrl/grid.hpp"

#include <algorithm>
#include <cctype>
#include <deque>
#include <set>
#include <sstream>
#include <unordered_map>

#include "wmrl/errors.hpp"
#include "wmrl/rng.hpp"

namespace wmrl {

std::string_view to_string(EnvKind kind) {
  return kind == EnvKind::Sokoban ? "Sokoban" : "FrozenLake";
}

std::string_view to_string(Action action) {
  switch (action) {
    case Action::Up: return "Up";
    case Action::Down: return "Down";
    case Action::Left: return "Left";
    case Action::Right: return "Right";
  }
  return "?";
}

std::optional<EnvKind> parse_env_kind(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "sokoban") return EnvKind::Sokoban;
  if (lower == "frozenlake" || lower == "frozen_lake" || lower == "frozen-lake") return EnvKind::FrozenLake;
  return std::nullopt;
}

GridPos offset(GridPos p, Action a) {
  switch (a) {
    case Action::Up: return {p.row - 1, p.col};
    case Action::Down: return {p.row + 1, p.col};
    case Action::Left: return {p.row, p.col - 1};
    case Action::Right: return {p.row, p.col + 1};
  }
  return p;
}

EnvConfig EnvConfig::sokoban_defaults() { return EnvConfig{}; }

EnvConfig EnvConfig::frozen_lake_defaults() {
  EnvConfig c;
  c.kind = EnvKind::FrozenLake;
  c.rows = 4;
  c.cols = 4;
  c.num_boxes = 0;
  c.max_actions_per_step = 3;
  c.max_turns = 3;
  c.min_actions_to_succeed = 5;
  return c;
}

void EnvConfig::validate() const {
  if (rows < 2 || cols < 2) throw ConfigError("grid must be at least 2x2");
  if (rows > 16 || cols > 16) throw ConfigError("grid larger than 16x16 is not supported");
  if (max_actions_per_step < 1) throw ConfigError("max_actions_per_step must be >= 1");
  if (max_turns < 1) throw ConfigError("max_turns must be >= 1");
  if (min_actions_to_succeed < 0) throw ConfigError("min_actions_to_succeed must be >= 0");
  if (hole_probability < 0.0 || hole_probability >= 1.0) throw ConfigError("hole_probability must be in [0, 1)");
  if (kind == EnvKind::Sokoban && (rows < 3 || cols < 3)) throw ConfigError("Sokoban grid must be at least 3x3");
}

namespace {

bool contains_sorted(const std::vector<GridPos>& v, GridPos p) {
  return std::binary_search(v.begin(), v.end(), p);
}

}  // namespace

bool EnvState::is_wall(GridPos p) const { return contains_sorted(walls, p); }
bool EnvState::is_hole(GridPos p) const { return contains_sorted(holes, p); }
bool EnvState::is_target(GridPos p) const {
  return std::find(targets.begin(), targets.end(), p) != targets.end();
}

int EnvState::box_at(GridPos p) const {
  for (std::size_t i = 0; i < boxes.size(); ++i)
    if (boxes[i] == p) return static_cast<int>(i);
  return -1;
}

bool EnvState::all_boxes_placed() const {
  return std::all_of(boxes.begin(), boxes.end(), [&](GridPos b) { return is_target(b); });
}

namespace {

StepOutcome step_sokoban(const EnvState& s, Action a) {
  StepOutcome out{s, 0.0, {}};
  EnvState& n = out.new_state;
  n.steps_taken += 1;

  const GridPos dest = offset(s.player, a);
  const int box = s.box_at(dest);
  if (!s.in_bounds(dest) || s.is_wall(dest)) {
    out.events.add(StepEvent::BlockedMove);
  } else if (box >= 0) {
    const GridPos beyond = offset(dest, a);
    if (!s.in_bounds(beyond) || s.is_wall(beyond) || s.box_at(beyond) >= 0) {
      out.events.add(StepEvent::BlockedMove);
    } else {
      const bool was_on = s.is_target(dest);
      const bool now_on = s.is_target(beyond);
      n.boxes[box] = beyond;
      n.player = dest;
      if (now_on && !was_on) {
        out.events.add(StepEvent::BoxPlaced);
        out.task_reward += TaskRewards::kBoxPlaced;
      } else if (was_on && !now_on) {
        out.events.add(StepEvent::BoxUnplaced);
        out.task_reward += TaskRewards::kBoxUnplaced;
      }
    }
  } else {
    n.player = dest;
  }

  if (n.all_boxes_placed()) {
    n.terminated = true;
    n.succeeded = true;
    out.task_reward += TaskRewards::kSuccess;
  } else {
    out.task_reward += TaskRewards::kStepPenalty;
  }
  return out;
}

StepOutcome step_frozen_lake(const EnvState& s, Action a) {
  StepOutcome out{s, 0.0, {}};
  EnvState& n = out.new_state;
  n.steps_taken += 1;

  const GridPos dest = offset(s.player, a);
  if (!s.in_bounds(dest)) {
    out.events.add(StepEvent::BlockedMove);
  } else {
    n.player = dest;
  }

  if (n.player == n.goal) {
    n.terminated = true;
    n.succeeded = true;
    out.events.add(StepEvent::ReachedGoal);
    out.task_reward += TaskRewards::kSuccess;
  } else {
    if (n.is_hole(n.player)) {
      n.terminated = true;
      out.events.add(StepEvent::FellInHole);
    }
    out.task_reward += TaskRewards::kStepPenalty;
  }
  return out;
}

std::vector<GridPos> interior_cells(const EnvConfig& c) {
  std::vector<GridPos> cells;
  for (int r = 1; r < c.rows - 1; ++r)
    for (int col = 1; col < c.cols - 1; ++col) cells.push_back({r, col});
  return cells;
}

void shuffle(std::vector<GridPos>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_int(i);
    std::swap(v[i - 1], v[j]);
  }
}

bool acceptable(const EnvState& s, const EnvConfig& c) {
  const auto path = shortest_solution(s, c.action_budget());
  return path && static_cast<int>(path->size()) >= c.min_actions_to_succeed;
}

EnvState generate_sokoban(const EnvConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<GridPos> interior = interior_cells(c);
  const int needed = 1 + 2 * c.num_boxes;
  if (static_cast<int>(interior.size()) < needed)
    throw GenerationFailure("Sokoban interior too small for the requested boxes");

  for (int attempt = 0; attempt < c.max_generation_attempts; ++attempt) {
    std::vector<GridPos> cells = interior;
    shuffle(cells, rng);
    const int spare = static_cast<int>(cells.size()) - needed;
    const int num_walls = static_cast<int>(rng.uniform_int(std::min(c.max_interior_walls, spare) + 1));

    EnvState s;
    s.kind = EnvKind::Sokoban;
    s.rows = c.rows;
    s.cols = c.cols;
    for (int r = 0; r < c.rows; ++r)
      for (int col = 0; col < c.cols; ++col)
        if (r == 0 || col == 0 || r == c.rows - 1 || col == c.cols - 1) s.walls.push_back({r, col});
    std::size_t k = 0;
    for (int i = 0; i < num_walls; ++i) s.walls.push_back(cells[k++]);
    std::sort(s.walls.begin(), s.walls.end());
    s.player = cells[k++];
    for (int i = 0; i < c.num_boxes; ++i) s.boxes.push_back(cells[k++]);
    for (int i = 0; i < c.num_boxes; ++i) s.targets.push_back(cells[k++]);
    if (acceptable(s, c)) return s;
  }
  throw GenerationFailure("no Sokoban instance met the solution-length constraints after " +
                          std::to_string(c.max_generation_attempts) + " attempts");
}

EnvState generate_frozen_lake(const EnvConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  const std::uint64_t cells = static_cast<std::uint64_t>(c.rows) * c.cols;
  for (int attempt = 0; attempt < c.max_generation_attempts; ++attempt) {
    EnvState s;
    s.kind = EnvKind::FrozenLake;
    s.rows = c.rows;
    s.cols = c.cols;
    const auto start = rng.uniform_int(cells);
    auto goal = rng.uniform_int(cells - 1);
    if (goal >= start) ++goal;
    s.player = {static_cast<int>(start / c.cols), static_cast<int>(start % c.cols)};
    s.goal = {static_cast<int>(goal / c.cols), static_cast<int>(goal % c.cols)};
    for (int r = 0; r < c.rows; ++r)
      for (int col = 0; col < c.cols; ++col) {
        const GridPos p{r, col};
        if (p == s.player || p == s.goal) continue;
        if (rng.uniform01() < c.hole_probability) s.holes.push_back(p);
      }
    if (acceptable(s, c)) return s;
  }
  throw GenerationFailure("no FrozenLake map met the solution-length constraints after " +
                          std::to_string(c.max_generation_attempts) + " attempts");
}

}  // namespace

StepOutcome step(const EnvState& state, Action action) {
  if (state.terminated) throw TerminatedStateError("step() called on a terminated state");
  return state.kind == EnvKind::Sokoban ? step_sokoban(state, action) : step_frozen_lake(state, action);
}

std::pair<EnvState, std::string> reset(const EnvConfig& config, std::uint64_t seed) {
  config.validate();
  if (config.kind == EnvKind::Sokoban && config.num_boxes < 1)
    throw GenerationFailure("Sokoban requires at least one box");

  EnvState s;
  if (!config.layout.empty()) {
    s = state_from_symbolic(config.kind, config.layout);
    if (s.rows != config.rows || s.cols != config.cols)
      throw ConfigError("layout dimensions do not match the configured grid size");
    if (s.terminated) throw ConfigError("layout describes a terminated state");
    if (!shortest_solution(s, config.action_budget()))
      throw GenerationFailure("fixed layout is not solvable within the episode budget");
  } else if (config.kind == EnvKind::Sokoban) {
    s = generate_sokoban(config, seed);
  } else {
    s = generate_frozen_lake(config, seed);
  }
  std::string text = render_symbolic(s);
  return {std::move(s), std::move(text)};
}

std::string render_symbolic(const EnvState& s) {
  std::string out;
  out.reserve(static_cast<std::size_t>(s.rows) * (s.cols + 1));
  for (int r = 0; r < s.rows; ++r) {
    if (r > 0) out.push_back('\n');
    for (int c = 0; c < s.cols; ++c) {
      const GridPos p{r, c};
      char ch = '_';
      if (s.kind == EnvKind::Sokoban) {
        const bool target = s.is_target(p);
        if (s.is_wall(p)) ch = '#';
        else if (s.player == p) ch = target ? 'S' : 'P';
        else if (s.box_at(p) >= 0) ch = target ? '*' : 'X';
        else if (target) ch = 'O';
      } else {
        if (s.player == p) ch = s.is_hole(p) ? 'X' : (s.goal == p ? '*' : 'P');
        else if (s.is_hole(p)) ch = 'O';
        else if (s.goal == p) ch = 'G';
      }
      out.push_back(ch);
    }
  }
  return out;
}

EnvState state_from_symbolic(EnvKind kind, std::string_view text) {
  std::vector<std::string> rows;
  std::string cur;
  for (char ch : text) {
    if (ch == '\n' || ch == '/') {
      rows.push_back(cur);
      cur.clear();
    } else if (ch != '\r' && ch != ' ' && ch != '\t') {
      cur.push_back(ch);
    }
  }
  rows.push_back(cur);
  while (!rows.empty() && rows.back().empty()) rows.pop_back();
  if (rows.empty()) throw FormatError("empty grid");
  const std::size_t width = rows.front().size();
  for (const auto& r : rows)
    if (r.size() != width || width == 0) throw FormatError("ragged grid rows");

  EnvState s;
  s.kind = kind;
  s.rows = static_cast<int>(rows.size());
  s.cols = static_cast<int>(width);
  int players = 0;
  int goals = 0;
  for (int r = 0; r < s.rows; ++r) {
    for (int c = 0; c < s.cols; ++c) {
      const GridPos p{r, c};
      const char ch = rows[r][c];
      if (kind == EnvKind::Sokoban) {
        switch (ch) {
          case '#': s.walls.push_back(p); break;
          case '_': break;
          case 'O': s.targets.push_back(p); break;
          case 'X': s.boxes.push_back(p); break;
          case '*': s.boxes.push_back(p); s.targets.push_back(p); break;
          case 'P': s.player = p; ++players; break;
          case 'S': s.player = p; s.targets.push_back(p); ++players; break;
          default: throw FormatError(std::string("unknown Sokoban symbol '") + ch + "'");
        }
      } else {
        switch (ch) {
          case '_': break;
          case 'O': s.holes.push_back(p); break;
          case 'G': s.goal = p; ++goals; break;
          case 'P': s.player = p; ++players; break;
          case 'X': s.player = p; s.holes.push_back(p); ++players; break;
          case '*': s.player = p; s.goal = p; ++players; ++goals; break;
          default: throw FormatError(std::string("unknown FrozenLake symbol '") + ch + "'");
        }
      }
    }
  }
  if (players != 1) throw FormatError("grid must contain exactly one player");
  if (kind == EnvKind::FrozenLake && goals != 1) throw FormatError("FrozenLake grid must contain exactly one goal");
  if (kind == EnvKind::Sokoban && s.boxes.size() != s.targets.size())
    throw FormatError("Sokoban grid must have as many targets as boxes");
  std::sort(s.walls.begin(), s.walls.end());
  std::sort(s.holes.begin(), s.holes.end());
  if (kind == EnvKind::FrozenLake) {
    s.succeeded = s.player == s.goal;
    s.terminated = s.succeeded || s.is_hole(s.player);
  } else if (!s.boxes.empty() && s.all_boxes_placed()) {
    s.terminated = s.succeeded = true;
  }
  return s;
}

namespace {

std::string search_key(const EnvState& s) {
  std::string key;
  key.push_back(static_cast<char>(s.player.row));
  key.push_back(static_cast<char>(s.player.col));
  std::vector<GridPos> boxes = s.boxes;
  std::sort(boxes.begin(), boxes.end());
  for (const auto& b : boxes) {
    key.push_back(static_cast<char>(b.row));
    key.push_back(static_cast<char>(b.col));
  }
  return key;
}

}  // namespace

std::optional<std::vector<Action>> shortest_solution(const EnvState& start, int max_depth) {
  if (start.succeeded) return std::vector<Action>{};
  if (start.terminated) return std::nullopt;

  struct Node {
    EnvState state;
    int parent;
    Action via;
    int depth;
  };
  std::vector<Node> nodes;
  std::unordered_map<std::string, int> seen;
  std::deque<int> frontier;
  nodes.push_back({start, -1, Action::Up, 0});
  seen.emplace(search_key(start), 0);
  frontier.push_back(0);

  while (!frontier.empty()) {
    const int idx = frontier.front();
    frontier.pop_front();
    if (nodes[idx].depth >= max_depth) continue;
    for (Action a : kAllActions) {
      StepOutcome out = step(nodes[idx].state, a);
      if (out.events.has(StepEvent::BlockedMove)) continue;
      if (out.new_state.terminated && !out.new_state.succeeded) continue;
      if (!seen.emplace(search_key(out.new_state), static_cast<int>(nodes.size())).second) continue;
      const int depth = nodes[idx].depth + 1;
      const bool done = out.new_state.succeeded;
      nodes.push_back({std::move(out.new_state), idx, a, depth});
      if (done) {
        std::vector<Action> path;
        for (int i = static_cast<int>(nodes.size()) - 1; nodes[i].parent >= 0; i = nodes[i].parent)
          path.push_back(nodes[i].via);
        std::reverse(path.begin(), path.end());
        return path;
      }
      frontier.push_back(static_cast<int>(nodes.size()) - 1);
    }
  }
  return std::nullopt;
}

namespace {

void write_positions(std::ostringstream& os, std::string_view key, const std::vector<GridPos>& ps) {
  os << key;
  for (const auto& p : ps) os << ' ' << p.row << ' ' << p.col;
  os << '\n';
}

std::vector<GridPos> read_positions(std::istringstream& is, std::string_view key) {
  std::vector<int> values;
  int v;
  while (is >> v) values.push_back(v);
  if (values.size() % 2 != 0) throw FormatError("odd coordinate count for '" + std::string(key) + "'");
  std::vector<GridPos> out;
  for (std::size_t i = 0; i < values.size(); i += 2) out.push_back({values[i], values[i + 1]});
  return out;
}

}  // namespace

std::string serialize_state(const EnvState& s) {
  std::ostringstream os;
  os << "wmrl-state 1\n";
  os << "kind " << to_string(s.kind) << '\n';
  os << "size " << s.rows << ' ' << s.cols << '\n';
  os << "player " << s.player.row << ' ' << s.player.col << '\n';
  write_positions(os, "boxes", s.boxes);
  write_positions(os, "targets", s.targets);
  os << "goal " << s.goal.row << ' ' << s.goal.col << '\n';
  write_positions(os, "holes", s.holes);
  write_positions(os, "walls", s.walls);
  os << "terminated " << (s.terminated ? 1 : 0) << '\n';
  os << "succeeded " << (s.succeeded ? 1 : 0) << '\n';
  os << "steps " << s.steps_taken << '\n';
  return os.str();
}

EnvState deserialize_state(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "wmrl-state 1") throw FormatError("missing 'wmrl-state 1' header");
  EnvState s;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (!seen.insert(key).second) throw FormatError("duplicate key '" + key + "'");
    if (key == "kind") {
      std::string k;
      ls >> k;
      const auto kind = parse_env_kind(k);
      if (!kind) throw FormatError("unknown kind '" + k + "'");
      s.kind = *kind;
    } else if (key == "size") {
      ls >> s.rows >> s.cols;
    } else if (key == "player") {
      ls >> s.player.row >> s.player.col;
    } else if (key == "goal") {
      ls >> s.goal.row >> s.goal.col;
    } else if (key == "boxes") {
      s.boxes = read_positions(ls, key);
    } else if (key == "targets") {
      s.targets = read_positions(ls, key);
    } else if (key == "holes") {
      s.holes = read_positions(ls, key);
    } else if (key == "walls") {
      s.walls = read_positions(ls, key);
    } else if (key == "terminated") {
      int v = 0;
      ls >> v;
      s.terminated = v != 0;
    } else if (key == "succeeded") {
      int v = 0;
      ls >> v;
      s.succeeded = v != 0;
    } else if (key == "steps") {
      ls >> s.steps_taken;
    } else {
      throw FormatError("unknown key '" + key + "'");
    }
    if (ls.fail() && !ls.eof()) throw FormatError("malformed value for '" + key + "'");
  }
  if (!seen.count("size") || !seen.count("player")) throw FormatError("state snapshot lacks size or player");
  return s;
}

}  // namespace wmrl
