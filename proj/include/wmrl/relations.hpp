#pragma once

#include <compare>
#include <initializer_list>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "wmrl/grid.hpp"

namespace wmrl {

enum class Vertical { Above, Below, SameRow };
enum class Horizontal { Left, Right, SameColumn };

// Subject relative to object: (box0, Above, SameColumn, player) reads
// "box0 is above the player, same column". SameRow+SameColumn is the
// coincidence ("same place") tuple.
struct Relation {
  std::string subject;
  Vertical vertical = Vertical::SameRow;
  Horizontal horizontal = Horizontal::SameColumn;
  std::string object;

  bool same_place() const { return vertical == Vertical::SameRow && horizontal == Horizontal::SameColumn; }
  auto operator<=>(const Relation&) const = default;
};

Relation mirror(const Relation& r);
// Orientation with the lexicographically smaller id as subject.
Relation canonical(const Relation& r);
Relation relation_between(std::string subject, GridPos subject_pos, std::string object, GridPos object_pos);

// Set of canonical relations. insert() canonicalizes, so mirrored phrasings
// of the same fact collapse to one entry.
class RelationSet {
 public:
  RelationSet() = default;
  RelationSet(std::initializer_list<Relation> rs) {
    for (const auto& r : rs) insert(r);
  }

  void insert(const Relation& r) { items_.insert(canonical(r)); }
  bool contains(const Relation& r) const { return items_.count(canonical(r)) > 0; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  const std::set<Relation>& items() const { return items_; }
  bool operator==(const RelationSet&) const = default;

 private:
  std::set<Relation> items_;
};

RelationSet mirror(const RelationSet& rs);

// Entity ids: "player", "box<i>", "target<i>", "hole<i>". The FrozenLake goal
// is "target0".
std::string entity_id(std::string_view kind, int index);
// Maps "box", "Box2", "goal", "target" etc. to a canonical id; empty if the
// word is not an entity.
std::string normalize_entity(std::string_view word);

RelationSet extract_relations(const EnvState& state);

// Display orientation: non-player entity first, target before box.
Relation display_orientation(const Relation& r);

// One English sentence per relation, e.g.
// "box0 is above and at the same column as the player".
std::string describe(const Relation& r, EnvKind kind);
std::string describe(const RelationSet& rs, EnvKind kind);

// Short form used by the scripted agents, e.g. "target0 below right player".
std::string describe_compact(const Relation& r);
std::string describe_compact(const RelationSet& rs);

std::string_view to_string(Vertical v);
std::string_view to_string(Horizontal h);

}  // namespace wmrl
