#include "wmrl/relations.hpp"

#include <algorithm>
#include <cctype>
#include <tuple>

namespace wmrl {

namespace {

Vertical flip(Vertical v) {
  if (v == Vertical::Above) return Vertical::Below;
  if (v == Vertical::Below) return Vertical::Above;
  return v;
}

Horizontal flip(Horizontal h) {
  if (h == Horizontal::Left) return Horizontal::Right;
  if (h == Horizontal::Right) return Horizontal::Left;
  return h;
}

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

}  // namespace

Relation mirror(const Relation& r) { return {r.object, flip(r.vertical), flip(r.horizontal), r.subject}; }

Relation canonical(const Relation& r) { return r.object < r.subject ? mirror(r) : r; }

Relation relation_between(std::string subject, GridPos sp, std::string object, GridPos op) {
  Relation r;
  r.subject = std::move(subject);
  r.object = std::move(object);
  r.vertical = sp.row < op.row ? Vertical::Above : (sp.row > op.row ? Vertical::Below : Vertical::SameRow);
  r.horizontal = sp.col < op.col ? Horizontal::Left : (sp.col > op.col ? Horizontal::Right : Horizontal::SameColumn);
  return r;
}

RelationSet mirror(const RelationSet& rs) {
  RelationSet out;
  for (const auto& r : rs) out.insert(mirror(r));
  return out;
}

std::string entity_id(std::string_view kind, int index) { return std::string(kind) + std::to_string(index); }

std::string normalize_entity(std::string_view word) {
  std::string w;
  for (char c : word) w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (w == "player" || w == "agent") return "player";
  if (w == "goal") return "target0";
  for (std::string_view kind : {"box", "target", "hole"}) {
    if (!starts_with(w, kind)) continue;
    std::string_view rest = std::string_view(w).substr(kind.size());
    if (rest.empty()) return entity_id(kind, 0);
    if (rest.size() > 3 || !std::all_of(rest.begin(), rest.end(), [](char c) { return c >= '0' && c <= '9'; }))
      return {};
    return entity_id(kind, std::stoi(std::string(rest)));
  }
  return {};
}

RelationSet extract_relations(const EnvState& s) {
  RelationSet rs;
  if (s.kind == EnvKind::Sokoban) {
    for (std::size_t i = 0; i < s.boxes.size(); ++i)
      rs.insert(relation_between(entity_id("box", int(i)), s.boxes[i], "player", s.player));
    for (std::size_t i = 0; i < s.targets.size(); ++i)
      rs.insert(relation_between(entity_id("target", int(i)), s.targets[i], "player", s.player));
    for (std::size_t j = 0; j < s.targets.size(); ++j)
      for (std::size_t i = 0; i < s.boxes.size(); ++i)
        rs.insert(relation_between(entity_id("target", int(j)), s.targets[j], entity_id("box", int(i)), s.boxes[i]));
  } else {
    rs.insert(relation_between("target0", s.goal, "player", s.player));
    for (std::size_t i = 0; i < s.holes.size(); ++i)
      rs.insert(relation_between(entity_id("hole", int(i)), s.holes[i], "player", s.player));
  }
  return rs;
}

Relation display_orientation(const Relation& r) {
  if (r.subject == "player") return mirror(r);
  if (starts_with(r.subject, "box") && starts_with(r.object, "target")) return mirror(r);
  return r;
}

namespace {

std::string display_name(const std::string& id, EnvKind kind) {
  if (id == "player") return "the player";
  if (kind == EnvKind::FrozenLake && id == "target0") return "target";
  return id;
}

}  // namespace

std::string describe(const Relation& rel, EnvKind kind) {
  const Relation r = display_orientation(rel);
  const std::string subject = display_name(r.subject, kind);
  const std::string object = display_name(r.object, kind);
  if (r.same_place()) return subject + " is at the same place as " + object;

  std::string out = subject + " is ";
  if (r.vertical == Vertical::SameRow) {
    out += "at the same row and ";
    out += r.horizontal == Horizontal::Left ? "to the left of " : "to the right of ";
  } else {
    out += r.vertical == Vertical::Above ? "above and " : "below and ";
    if (r.horizontal == Horizontal::SameColumn) out += "at the same column as ";
    else out += r.horizontal == Horizontal::Left ? "on the left side of " : "on the right side of ";
  }
  return out + object;
}

std::string describe(const RelationSet& rs, EnvKind kind) {
  std::vector<Relation> ordered;
  for (const auto& r : rs) ordered.push_back(display_orientation(r));
  std::sort(ordered.begin(), ordered.end(), [](const Relation& a, const Relation& b) {
    return std::tie(a.object, a.subject) < std::tie(b.object, b.subject);
  });
  std::string out;
  for (const auto& r : ordered) {
    if (!out.empty()) out += ", ";
    out += describe(r, kind);
  }
  return out;
}

std::string describe_compact(const Relation& rel) {
  const Relation r = display_orientation(rel);
  if (r.same_place()) return r.subject + " same place " + r.object;
  std::string out = r.subject + ' ';
  out += r.vertical == Vertical::Above ? "above" : (r.vertical == Vertical::Below ? "below" : "same row");
  out += ' ';
  out += r.horizontal == Horizontal::Left ? "left" : (r.horizontal == Horizontal::Right ? "right" : "same column");
  return out + ' ' + r.object;
}

std::string describe_compact(const RelationSet& rs) {
  std::string out;
  for (const auto& r : rs) {
    if (!out.empty()) out += ", ";
    out += describe_compact(r);
  }
  return out;
}

std::string_view to_string(Vertical v) {
  switch (v) {
    case Vertical::Above: return "above";
    case Vertical::Below: return "below";
    case Vertical::SameRow: return "same-row";
  }
  return "?";
}

std::string_view to_string(Horizontal h) {
  switch (h) {
    case Horizontal::Left: return "left";
    case Horizontal::Right: return "right";
    case Horizontal::SameColumn: return "same-column";
  }
  return "?";
}

}  // namespace wmrl
