#include "wmrl/grammar.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "wmrl/relations.hpp"

namespace wmrl {

std::string_view to_string(ReasoningStrategy s) {
  switch (s) {
    case ReasoningStrategy::NoThink: return "NoThink";
    case ReasoningStrategy::FreeThink: return "FreeThink";
    case ReasoningStrategy::StateEstimation: return "StateEstimation";
    case ReasoningStrategy::TransitionModeling: return "TransitionModeling";
    case ReasoningStrategy::WorldModeling: return "WorldModeling";
  }
  return "?";
}

std::string_view to_string(RepresentationFormat f) {
  switch (f) {
    case RepresentationFormat::NaturalLanguage: return "NaturalLanguage";
    case RepresentationFormat::Symbolic: return "Symbolic";
    case RepresentationFormat::Structured: return "Structured";
  }
  return "?";
}

namespace {

std::string lower(std::string_view s) {
  std::string out;
  for (char c : s)
    if (c != '_' && c != '-') out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

}  // namespace

std::optional<ReasoningStrategy> parse_strategy(std::string_view text) {
  const std::string t = lower(text);
  for (auto s : {ReasoningStrategy::NoThink, ReasoningStrategy::FreeThink, ReasoningStrategy::StateEstimation,
                 ReasoningStrategy::TransitionModeling, ReasoningStrategy::WorldModeling})
    if (lower(to_string(s)) == t) return s;
  return std::nullopt;
}

std::optional<RepresentationFormat> parse_representation(std::string_view text) {
  const std::string t = lower(text);
  if (t == "naturallanguage" || t == "natural" || t == "nl") return RepresentationFormat::NaturalLanguage;
  if (t == "symbolic" || t == "grid") return RepresentationFormat::Symbolic;
  if (t == "structured") return RepresentationFormat::Structured;
  return std::nullopt;
}

bool uses_state_belief(ReasoningStrategy s) {
  return s == ReasoningStrategy::StateEstimation || s == ReasoningStrategy::WorldModeling;
}

bool uses_prediction(ReasoningStrategy s) {
  return s == ReasoningStrategy::TransitionModeling || s == ReasoningStrategy::WorldModeling;
}

namespace {

bool uses_reasoning(ReasoningStrategy s) {
  return s == ReasoningStrategy::StateEstimation || s == ReasoningStrategy::TransitionModeling ||
         s == ReasoningStrategy::WorldModeling;
}


bool is_space(char c) { return c == ' ' || c == '\n' || c == '\t' || c == '\r'; }

// Field text never carries angle brackets, tags or stray ones.
bool contains_tag(std::string_view s) { return s.find_first_of("<>") != s.npos; }

// First <name>...</name> anywhere in text.
std::optional<std::string> find_block(std::string_view text, std::string_view name) {
  const std::string open = "<" + std::string(name) + ">";
  const std::string close = "</" + std::string(name) + ">";
  const auto a = text.find(open);
  if (a == text.npos) return std::nullopt;
  const auto b = text.find(close, a + open.size());
  if (b == text.npos) return std::nullopt;
  return std::string(text.substr(a + open.size(), b - a - open.size()));
}

class Cursor {
 public:
  explicit Cursor(std::string_view t) : text_(t) {}

  void skip_space() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }
  bool expect(std::string_view token) {
    skip_space();
    if (text_.substr(pos_, token.size()) != token) return false;
    pos_ += token.size();
    return true;
  }
  // Text up to the closing tag, which is consumed. Fails if another tag
  // appears first.
  std::optional<std::string_view> body(std::string_view close) {
    const auto end = text_.find(close, pos_);
    if (end == text_.npos) return std::nullopt;
    const std::string_view inner = text_.substr(pos_, end - pos_);
    if (contains_tag(inner)) return std::nullopt;
    pos_ = end + close.size();
    return inner;
  }
  bool at_end() {
    skip_space();
    return pos_ == text_.size();
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

bool field(Cursor& c, std::string_view name) {
  const std::string open = "<" + std::string(name) + ">";
  const std::string close = "</" + std::string(name) + ">";
  if (!c.expect(open)) return false;
  const auto inner = c.body(close);
  return inner && !trim(*inner).empty();
}

bool skeleton_matches(std::string_view text, ReasoningStrategy s) {
  Cursor c(text);
  if (!c.expect("<think>")) return false;
  if (s == ReasoningStrategy::NoThink) {
    const auto inner = c.body("</think>");
    if (!inner || !inner->empty()) return false;
  } else if (s == ReasoningStrategy::FreeThink) {
    const auto inner = c.body("</think>");
    if (!inner || trim(*inner).empty()) return false;
  } else {
    if (uses_state_belief(s) && !field(c, "observation")) return false;
    if (!field(c, "reasoning")) return false;
    if (uses_prediction(s) && !field(c, "prediction")) return false;
    if (!c.expect("</think>")) return false;
  }
  if (!c.expect("<answer>")) return false;
  const auto answer = c.body("</answer>");
  if (!answer || trim(*answer).empty()) return false;
  return c.at_end();
}

}  // namespace

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

StructuredResponse parse_response(std::string_view text, ReasoningStrategy strategy, const ActionSpace& space) {
  StructuredResponse r;
  if (uses_state_belief(strategy)) r.state_belief = find_block(text, "observation");
  if (uses_reasoning(strategy)) r.action_belief = find_block(text, "reasoning");
  if (uses_prediction(strategy)) r.next_state_belief = find_block(text, "prediction");
  if (strategy == ReasoningStrategy::FreeThink) r.free_think = find_block(text, "think");
  if (auto a = find_block(text, "answer")) r.answer_text = *a;
  if (skeleton_matches(text, strategy)) r.executable_actions = parse_actions(r.answer_text, space.names, space.max_actions);
  r.format_ok = !r.executable_actions.empty();
  return r;
}

double format_reward(const StructuredResponse& resp) { return resp.format_ok ? kFormatReward : 0.0; }

std::vector<Action> parse_actions(std::string_view answer, const std::vector<std::string>& names, int max_actions) {
  std::vector<Action> out;
  std::size_t start = 0;
  while (start <= answer.size() && static_cast<int>(out.size()) < max_actions) {
    auto end = answer.find(',', start);
    if (end == answer.npos) end = answer.size();
    const std::string item = lower(trim(answer.substr(start, end - start)));
    for (std::size_t i = 0; i < names.size() && i < std::size(kAllActions); ++i) {
      if (lower(names[i]) == item && !item.empty()) {
        out.push_back(kAllActions[i]);
        break;
      }
    }
    start = end + 1;
  }
  return out;
}

namespace {

std::string pos_text(GridPos p) { return "(" + std::to_string(p.row) + ", " + std::to_string(p.col) + ")"; }

std::string pos_list(const std::vector<GridPos>& ps) {
  std::string out = "[";
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (i) out += ", ";
    out += pos_text(ps[i]);
  }
  return out + "]";
}

}  // namespace

std::string render_belief(const EnvState& s, RepresentationFormat fmt) {
  switch (fmt) {
    case RepresentationFormat::Symbolic:
      return render_symbolic(s);
    case RepresentationFormat::NaturalLanguage:
      return describe(extract_relations(s), s.kind);
    case RepresentationFormat::Structured:
      break;
  }
  const std::string size = "(" + std::to_string(s.rows) + ", " + std::to_string(s.cols) + ")";
  if (s.kind == EnvKind::Sokoban)
    return "{player_position: " + pos_text(s.player) + ", box_positions: " + pos_list(s.boxes) +
           ", target_positions: " + pos_list(s.targets) + ", grid_size: " + size + "}";
  return "{player_position: " + pos_text(s.player) + ", target_position: " + pos_text(s.goal) +
         ", hole_positions: " + pos_list(s.holes) + ", grid_size: " + size + "}";
}

std::string render_response(const StructuredResponse& r, ReasoningStrategy s) {
  std::string out = "<think>";
  if (s == ReasoningStrategy::FreeThink) out += r.free_think.value_or("");
  if (uses_state_belief(s)) out += "<observation>" + r.state_belief.value_or("") + "</observation>";
  if (uses_reasoning(s)) out += "<reasoning>" + r.action_belief.value_or("") + "</reasoning>";
  if (uses_prediction(s)) out += "<prediction>" + r.next_state_belief.value_or("") + "</prediction>";
  out += "</think><answer>" + r.answer_text + "</answer>";
  return out;
}

}  // namespace wmrl
