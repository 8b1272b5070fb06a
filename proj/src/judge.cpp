#include "wmrl/judge.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

namespace wmrl {

namespace {

std::vector<int> integers(std::string_view s) {
  std::vector<int> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (std::isdigit(static_cast<unsigned char>(s[i]))) {
      int v = 0;
      while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) v = v * 10 + (s[i++] - '0');
      out.push_back(v);
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<GridPos> positions(std::string_view s) {
  const auto v = integers(s);
  std::vector<GridPos> out;
  for (std::size_t i = 0; i + 1 < v.size(); i += 2) out.push_back({v[i], v[i + 1]});
  return out;
}

RelationSet parse_structured(std::string_view text) {
  static const std::regex field(R"(([A-Za-z_]+)\s*:\s*(\[[^\]]*\]|\([^)]*\)))");
  std::map<std::string, std::vector<GridPos>> fields;
  const std::string s(text);
  for (auto it = std::sregex_iterator(s.begin(), s.end(), field); it != std::sregex_iterator(); ++it)
    fields[(*it)[1].str()] = positions((*it)[2].str());

  auto one = [&](const char* key) -> std::optional<GridPos> {
    auto it = fields.find(key);
    if (it == fields.end() || it->second.size() != 1) return std::nullopt;
    return it->second.front();
  };
  const auto player = one("player_position");
  if (!player) return {};
  EnvState st;
  st.player = *player;
  if (fields.count("box_positions") || fields.count("target_positions")) {
    st.kind = EnvKind::Sokoban;
    st.boxes = fields["box_positions"];
    st.targets = fields["target_positions"];
  } else {
    const auto goal = one("target_position");
    if (!goal) return {};
    st.kind = EnvKind::FrozenLake;
    st.goal = *goal;
    st.holes = fields["hole_positions"];
  }
  return extract_relations(st);
}

bool looks_like_grid(std::string_view text) {
  if (text.find('\n') == text.npos && text.find('/') == text.npos) return false;
  return std::all_of(text.begin(), text.end(), [](char c) {
    return std::string_view("#_OXP*SG\n/ \r").find(c) != std::string_view::npos;
  });
}

struct ClauseFlags {
  bool above = false, below = false, left = false, right = false;
  bool same_row = false, same_col = false, same_place = false, negated = false;
};

std::optional<Relation> resolve(const std::string& subject, const std::string& object, const ClauseFlags& f) {
  if (f.negated || subject == object) return std::nullopt;
  if ((f.above && f.below) || (f.left && f.right)) return std::nullopt;
  const bool vstrict = f.above || f.below;
  const bool hstrict = f.left || f.right;
  if ((vstrict && f.same_row) || (hstrict && f.same_col)) return std::nullopt;

  Relation r{subject, Vertical::SameRow, Horizontal::SameColumn, object};
  if (f.same_place) {
    if (vstrict || hstrict) return std::nullopt;
    return r;
  }
  if (!vstrict && !hstrict) return std::nullopt;
  if (vstrict) r.vertical = f.above ? Vertical::Above : Vertical::Below;
  else if (!f.same_row && !hstrict) return std::nullopt;
  if (hstrict) r.horizontal = f.left ? Horizontal::Left : Horizontal::Right;
  else if (!f.same_col && !vstrict) return std::nullopt;
  return r;
}

void parse_clause(std::string_view clause, RelationSet& out) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : clause) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));

  std::string subject;
  ClauseFlags f;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::string& w = words[i];
    const std::string entity = normalize_entity(w);
    if (!entity.empty()) {
      if (subject.empty()) {
        subject = entity;
        f = {};
      } else {
        if (auto r = resolve(subject, entity, f)) out.insert(*r);
        subject.clear();
      }
      continue;
    }
    if (subject.empty()) continue;
    if (w == "above" || w == "up" || w == "over" || w == "upper") f.above = true;
    else if (w == "below" || w == "down" || w == "under" || w == "beneath" || w == "lower") f.below = true;
    else if (w == "left") f.left = true;
    else if (w == "right") f.right = true;
    else if (w == "not" || w == "no" || w == "never") f.negated = true;
    else if (w.rfind("reach", 0) == 0) f.same_place = true;
    else if (w == "same" && i + 1 < words.size()) {
      const std::string& n = words[i + 1];
      if (n == "row") f.same_row = true;
      else if (n == "column" || n == "col") f.same_col = true;
      else if (n == "place" || n == "position" || n == "cell" || n == "spot" || n == "location") f.same_place = true;
    }
  }
}

}  // namespace

RelationSet parse_belief_relations(std::string_view raw, std::optional<EnvKind> kind) {
  const std::string_view text = trim(raw);
  if (text.empty()) return {};
  if (text.front() == '{') return parse_structured(text);
  if (kind && looks_like_grid(text)) {
    try {
      return extract_relations(state_from_symbolic(*kind, text));
    } catch (const std::exception&) {
      return {};
    }
  }
  RelationSet out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find_first_of(".,;!?\n", start);
    if (end == text.npos) end = text.size();
    parse_clause(text.substr(start, end - start), out);
    start = end + 1;
  }
  return out;
}

double relation_f1(const RelationSet& predicted, const RelationSet& truth) {
  if (predicted.empty() && truth.empty()) return 1.0;
  if (predicted.empty() || truth.empty()) return 0.0;
  std::size_t tp = 0;
  for (const auto& r : predicted)
    if (truth.contains(r)) ++tp;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(predicted.size() + truth.size());
}

namespace {

bool is_success_coincidence(const Relation& r) {
  if (!r.same_place()) return false;
  auto kind_of = [](const std::string& id) { return id.substr(0, id.find_first_of("0123456789")); };
  const std::string a = kind_of(r.subject), b = kind_of(r.object);
  return (a == "box" && b == "target") || (a == "player" && b == "target");
}

}  // namespace

JudgeVerdict judge_turn(const StructuredResponse& resp, const RelationSet& truth_now, const RelationSet& truth_next,
                        const JudgeConfig& cfg, std::optional<EnvKind> kind) {
  JudgeVerdict v;
  if (resp.state_belief) v.se_score = relation_f1(parse_belief_relations(*resp.state_belief, kind), truth_now);
  if (resp.next_state_belief) {
    const RelationSet pred = parse_belief_relations(*resp.next_state_belief, kind);
    v.tm_score = relation_f1(pred, truth_next);
    const bool has_boxes = std::any_of(truth_next.begin(), truth_next.end(),
                                       [](const Relation& r) { return r.subject.rfind("box", 0) == 0; });
    for (const auto& r : truth_next) {
      if (!is_success_coincidence(r)) continue;
      if (has_boxes && r.subject.rfind("box", 0) != 0) continue;
      if (pred.contains(r)) v.tm_score = 1.0;
    }
  }
  v.se_pass = v.se_score >= cfg.f1_threshold;
  v.tm_pass = v.tm_score >= cfg.f1_threshold;
  return v;
}

double reasoning_reward(const JudgeVerdict& v, const JudgeConfig& cfg) {
  if (cfg.indicator_mode == IndicatorMode::Binary)
    return cfg.beta_s * (v.se_pass ? 1.0 : 0.0) + cfg.beta_w * (v.tm_pass ? 1.0 : 0.0);
  return cfg.beta_s * v.se_score + cfg.beta_w * v.tm_score;
}

double RepetitionTracker::submit(const std::string& sentence, double f1, const JudgeConfig& cfg) {
  long& c = counts_[sentence];
  if (c > 0) ranking_.erase({-c, sentence});
  ++c;
  ranking_.insert({-c, sentence});
  if (f1 >= cfg.f1_threshold) return 0.0;
  return in_top(sentence, cfg.heap_capacity) ? cfg.penalty : 0.0;
}

bool RepetitionTracker::in_top(const std::string& sentence, int capacity) const {
  int seen = 0;
  for (const auto& [neg, s] : ranking_) {
    if (seen++ >= capacity) break;
    if (s == sentence) return true;
  }
  return false;
}

long RepetitionTracker::count(const std::string& sentence) const {
  auto it = counts_.find(sentence);
  return it == counts_.end() ? 0 : it->second;
}

std::vector<std::pair<std::string, long>> RepetitionTracker::top(int k) const {
  std::vector<std::pair<std::string, long>> out;
  for (const auto& [neg, s] : ranking_) {
    if (static_cast<int>(out.size()) >= k) break;
    out.emplace_back(s, -neg);
  }
  return out;
}

std::vector<std::pair<std::string, long>> RepetitionTracker::all() const {
  return top(static_cast<int>(ranking_.size()));
}

void RepetitionTracker::restore(const std::vector<std::pair<std::string, long>>& counts) {
  counts_.clear();
  ranking_.clear();
  for (const auto& [s, c] : counts) {
    if (c <= 0) continue;
    counts_[s] = c;
    ranking_.insert({-c, s});
  }
}

std::pair<double, RepetitionTracker> repetition_penalty(RepetitionTracker tracker, const std::string& sentence,
                                                        double f1, const JudgeConfig& cfg) {
  const double p = tracker.submit(sentence, f1, cfg);
  return {p, std::move(tracker)};
}

}  // namespace wmrl
