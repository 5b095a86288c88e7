#pragma once

// Entity-list augmentation: the type-indexed mention pool, the four list
// operations (add, delete, replace, swap), and the type-tagged condition
// sequence fed to the generator.

#include <algorithm>
#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ner_aug/common.hpp"
#include "ner_aug/corpus.hpp"

namespace ner_aug {

enum class AugOp { None, Add, Delete, Replace, Swap, All };

inline std::string_view to_string(AugOp op) {
  switch (op) {
    case AugOp::None: return "none";
    case AugOp::Add: return "add";
    case AugOp::Delete: return "delete";
    case AugOp::Replace: return "replace";
    case AugOp::Swap: return "swap";
    case AugOp::All: return "all";
  }
  return "?";
}

inline AugOp parse_aug_op(std::string_view s) {
  for (AugOp op : {AugOp::None, AugOp::Add, AugOp::Delete, AugOp::Replace,
                   AugOp::Swap, AugOp::All})
    if (to_string(op) == s) return op;
  throw Error("unknown augmentation op '" + std::string(s) + "'");
}

/// `All` stands for the four concrete operations, each applied to its own
/// copy of the list.
inline std::vector<AugOp> expand_op(AugOp op) {
  if (op == AugOp::All)
    return {AugOp::Add, AugOp::Delete, AugOp::Replace, AugOp::Swap};
  return {op};
}

class DraftError : public Error {
 public:
  enum class Code { NoCandidate, TooFewEntities, EmptyDraft, NotConcrete };
  DraftError(Code code, const std::string& what) : Error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct DraftItem {
  Surface surface;
  EntityType type;

  bool operator==(const DraftItem&) const = default;
};

/// An entity list detached from any text.
struct EntityListDraft {
  std::vector<DraftItem> items;
  AugOp provenance = AugOp::None;
  std::size_t source = 0;

  bool contains_surface(const Surface& s) const {
    return std::any_of(items.begin(), items.end(),
                       [&](const DraftItem& it) { return it.surface == s; });
  }

  bool operator==(const EntityListDraft&) const = default;
};

inline EntityListDraft draft_from_sentence(const AnnotatedSentence& s,
                                           std::size_t source = 0) {
  EntityListDraft d;
  d.source = source;
  for (const auto& e : s.entities) d.items.push_back({e.surface, e.type});
  return d;
}

/// Distinct mention surfaces per type, in order of first corpus occurrence.
/// Multi-part surfaces keep their part structure.
class EntityPool {
 public:
  bool insert(const EntityType& type, const Surface& surface) {
    auto& list = by_type_[type];
    if (std::find(list.begin(), list.end(), surface) != list.end()) return false;
    list.push_back(surface);
    return true;
  }

  const std::vector<Surface>& mentions(const EntityType& type) const {
    static const std::vector<Surface> kEmpty;
    auto it = by_type_.find(type);
    return it == by_type_.end() ? kEmpty : it->second;
  }

  const std::map<EntityType, std::vector<Surface>>& by_type() const { return by_type_; }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [t, v] : by_type_) n += v.size();
    return n;
  }

  bool empty() const { return by_type_.empty(); }

 private:
  std::map<EntityType, std::vector<Surface>> by_type_;
};

inline EntityPool build_pool(const std::vector<AnnotatedSentence>& train) {
  EntityPool pool;
  for (const auto& s : train)
    for (const auto& e : s.entities) pool.insert(e.type, e.surface);
  return pool;
}

namespace detail {

inline std::vector<const Surface*> candidates_for(const EntityListDraft& draft,
                                                  const EntityType& type,
                                                  const EntityPool& pool) {
  std::vector<const Surface*> out;
  for (const auto& s : pool.mentions(type))
    if (!draft.contains_surface(s)) out.push_back(&s);
  return out;
}

/// Positions whose type still has an unused pool mention, with those mentions.
inline std::vector<std::pair<std::size_t, std::vector<const Surface*>>>
eligible_positions(const EntityListDraft& draft, const EntityPool& pool) {
  std::vector<std::pair<std::size_t, std::vector<const Surface*>>> out;
  for (std::size_t m = 0; m < draft.items.size(); ++m) {
    auto c = candidates_for(draft, draft.items[m].type, pool);
    if (!c.empty()) out.emplace_back(m, std::move(c));
  }
  return out;
}

inline void require_nonempty(const EntityListDraft& d) {
  if (d.items.empty())
    throw DraftError(DraftError::Code::EmptyDraft, "entity list is empty");
}

}  // namespace detail

/// Inserts a pool mention of the same type right after a sampled entity.
inline EntityListDraft op_add(const EntityListDraft& draft, const EntityPool& pool,
                              Rng& rng) {
  detail::require_nonempty(draft);
  auto eligible = detail::eligible_positions(draft, pool);
  if (eligible.empty())
    throw DraftError(DraftError::Code::NoCandidate, "add: pool has no unused mention");
  const auto& [m, cands] = eligible[rng.below(eligible.size())];
  const Surface& pick = *cands[rng.below(cands.size())];
  EntityListDraft out = draft;
  out.items.insert(out.items.begin() + static_cast<std::ptrdiff_t>(m) + 1,
                   DraftItem{pick, draft.items[m].type});
  out.provenance = AugOp::Add;
  return out;
}

inline EntityListDraft op_delete(const EntityListDraft& draft, Rng& rng) {
  if (draft.items.size() < 2)
    throw DraftError(DraftError::Code::TooFewEntities,
                     "delete: needs at least two entities");
  EntityListDraft out = draft;
  out.items.erase(out.items.begin() +
                  static_cast<std::ptrdiff_t>(rng.below(draft.items.size())));
  out.provenance = AugOp::Delete;
  return out;
}

/// Replaces a sampled entity by an unused pool mention of the same type.
inline EntityListDraft op_replace(const EntityListDraft& draft, const EntityPool& pool,
                                  Rng& rng) {
  detail::require_nonempty(draft);
  auto eligible = detail::eligible_positions(draft, pool);
  if (eligible.empty())
    throw DraftError(DraftError::Code::NoCandidate,
                     "replace: pool has no unused mention");
  const auto& [m, cands] = eligible[rng.below(eligible.size())];
  EntityListDraft out = draft;
  out.items[m].surface = *cands[rng.below(cands.size())];
  out.provenance = AugOp::Replace;
  return out;
}

inline EntityListDraft swap_positions(const EntityListDraft& draft, std::size_t i,
                                      std::size_t j) {
  EntityListDraft out = draft;
  std::swap(out.items.at(i), out.items.at(j));
  out.provenance = AugOp::Swap;
  return out;
}

/// Exchanges two distinct, uniformly sampled positions.
inline EntityListDraft op_swap(const EntityListDraft& draft, Rng& rng) {
  const std::size_t n = draft.items.size();
  if (n < 2)
    throw DraftError(DraftError::Code::TooFewEntities,
                     "swap: needs at least two entities");
  const std::size_t i = rng.below(n);
  std::size_t j = rng.below(n - 1);
  if (j >= i) ++j;
  return swap_positions(draft, i, j);
}

inline EntityListDraft apply_op(const EntityListDraft& draft, AugOp op,
                                const EntityPool& pool, Rng& rng) {
  switch (op) {
    case AugOp::None: {
      detail::require_nonempty(draft);
      EntityListDraft out = draft;
      out.provenance = AugOp::None;
      return out;
    }
    case AugOp::Add: return op_add(draft, pool, rng);
    case AugOp::Delete: return op_delete(draft, rng);
    case AugOp::Replace: return op_replace(draft, pool, rng);
    case AugOp::Swap: return op_swap(draft, rng);
    case AugOp::All: break;
  }
  throw DraftError(DraftError::Code::NotConcrete,
                   "'all' must be expanded before application");
}

// ---------------------------------------------------------------------------
// Condition sequence: [T] surface [/T] per entity. Parts of a discontinuous
// surface are separated by the gap token.

inline constexpr std::string_view kGapToken = "[]";

struct ConditionSequence {
  std::vector<std::string> tokens;
  bool operator==(const ConditionSequence&) const = default;
};

class ConditionError : public Error {
 public:
  enum class Code { UnbalancedTags, UnknownTagToken, UnrepresentableSurface };
  ConditionError(Code code, const std::string& what) : Error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

inline std::string open_tag(const EntityType& t) { return "[" + t.name() + "]"; }
inline std::string close_tag(const EntityType& t) { return "[/" + t.name() + "]"; }

inline ConditionSequence serialize_condition(const EntityListDraft& draft) {
  using C = ConditionError::Code;
  ConditionSequence seq;
  for (const auto& item : draft.items) {
    const std::string close = close_tag(item.type);
    if (item.surface.empty())
      throw ConditionError(C::UnbalancedTags, "empty surface");
    seq.tokens.push_back(open_tag(item.type));
    for (std::size_t p = 0; p < item.surface.size(); ++p) {
      if (item.surface[p].empty())
        throw ConditionError(C::UnbalancedTags, "empty surface part");
      if (p > 0) seq.tokens.emplace_back(kGapToken);
      for (const auto& tok : item.surface[p]) {
        if (tok == close || tok == kGapToken)
          throw ConditionError(C::UnrepresentableSurface,
                               "surface token '" + tok + "' collides with tag syntax");
        seq.tokens.push_back(tok);
      }
    }
    seq.tokens.push_back(close);
  }
  return seq;
}

inline EntityListDraft deserialize_condition(const ConditionSequence& seq) {
  using C = ConditionError::Code;
  EntityListDraft draft;
  const auto& t = seq.tokens;
  std::size_t i = 0;
  while (i < t.size()) {
    const std::string& open = t[i];
    if (open.size() < 3 || open.front() != '[' || open.back() != ']' || open[1] == '/' ||
        !EntityType::is_valid(std::string_view(open).substr(1, open.size() - 2)))
      throw ConditionError(C::UnknownTagToken,
                           "expected an open tag at position " + std::to_string(i) +
                               ", got '" + open + "'");
    EntityType type(open.substr(1, open.size() - 2));
    const std::string close = close_tag(type);
    Surface surface(1);
    bool closed = false;
    for (++i; i < t.size(); ++i) {
      if (t[i] == close) {
        closed = true;
        ++i;
        break;
      }
      if (t[i] == kGapToken) {
        if (surface.back().empty())
          throw ConditionError(C::UnbalancedTags, "empty part in " + open);
        surface.emplace_back();
      } else {
        surface.back().push_back(t[i]);
      }
    }
    if (!closed) throw ConditionError(C::UnbalancedTags, open + " is never closed");
    if (surface.back().empty())
      throw ConditionError(C::UnbalancedTags, "empty surface in " + open);
    draft.items.push_back({std::move(surface), std::move(type)});
  }
  return draft;
}

}  // namespace ner_aug
