#pragma once

// Marks generated text with the entity list it was conditioned on, by exact
// whole-token matching. Texts where any entity cannot be placed are rejected.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ner_aug/corpus.hpp"
#include "ner_aug/entity_ops.hpp"

namespace ner_aug {

struct Rejection {
  enum class Reason { Mismatch, ModeViolation, Duplicate };
  Reason reason;
  std::size_t entity;  // index into the draft
  TaskKind mode;
  std::string message;
};

inline std::string_view to_string(Rejection::Reason r) {
  switch (r) {
    case Rejection::Reason::Mismatch: return "mismatch";
    case Rejection::Reason::ModeViolation: return "mode-violation";
    case Rejection::Reason::Duplicate: return "duplicate";
  }
  return "?";
}

class MarkOutcome {
 public:
  MarkOutcome(AnnotatedSentence s, std::size_t repeated)
      : value_(std::move(s)), repeated_(repeated) {}
  MarkOutcome(Rejection r) : value_(std::move(r)) {}  // NOLINT(implicit)

  bool marked() const { return std::holds_alternative<AnnotatedSentence>(value_); }
  const AnnotatedSentence& sentence() const { return std::get<AnnotatedSentence>(value_); }
  const Rejection& rejection() const { return std::get<Rejection>(value_); }
  /// Entities whose surface could also have matched elsewhere in the text.
  std::size_t repeated_mentions() const { return repeated_; }

 private:
  std::variant<AnnotatedSentence, Rejection> value_;
  std::size_t repeated_ = 0;
};

namespace marker_detail {

inline constexpr std::size_t npos = static_cast<std::size_t>(-1);

inline bool matches_at(const std::vector<std::string>& tokens,
                       const std::vector<std::string>& part, std::size_t at) {
  if (part.empty() || at + part.size() > tokens.size()) return false;
  for (std::size_t k = 0; k < part.size(); ++k)
    if (tokens[at + k] != part[k]) return false;
  return true;
}

inline std::size_t count_occurrences(const std::vector<std::string>& tokens,
                                     const std::vector<std::string>& part) {
  std::size_t n = 0;
  for (std::size_t p = 0; p < tokens.size(); ++p) n += matches_at(tokens, part, p);
  return n;
}

inline bool repeated(const std::vector<std::string>& tokens, const Surface& surface) {
  for (const auto& part : surface)
    if (count_occurrences(tokens, part) > 1) return true;
  return false;
}

inline std::string surface_text(const Surface& s) {
  std::string out;
  for (std::size_t p = 0; p < s.size(); ++p) {
    if (p) out += " ... ";
    for (std::size_t k = 0; k < s[p].size(); ++k) {
      if (k) out += ' ';
      out += s[p][k];
    }
  }
  return out;
}

inline Rejection reject(Rejection::Reason reason, std::size_t i, const DraftItem& item,
                        TaskKind mode, const std::string& what) {
  return {reason, i, mode,
          "entity " + std::to_string(i) + " '" + surface_text(item.surface) + "' (" +
              item.type.name() + "): " + what};
}

inline std::optional<Rejection> check_single_part(const EntityListDraft& draft,
                                                  TaskKind mode) {
  for (std::size_t i = 0; i < draft.items.size(); ++i)
    if (draft.items[i].surface.size() != 1)
      return reject(Rejection::Reason::ModeViolation, i, draft.items[i], mode,
                    "multi-part entity not allowed");
  return std::nullopt;
}

inline std::optional<Rejection> find_duplicate(const std::vector<Entity>& ents,
                                               const EntityListDraft& draft, TaskKind mode) {
  for (std::size_t i = 0; i < ents.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (ents[i].same_annotation(ents[j]))
        return reject(Rejection::Reason::Duplicate, i, draft.items[i], mode,
                      "same span and type as entity " + std::to_string(j));
  return std::nullopt;
}

}  // namespace marker_detail

/// Leftmost occurrence per entity in draft order, never overlapping an
/// entity placed earlier.
inline MarkOutcome match_flat(const std::vector<std::string>& tokens,
                              const EntityListDraft& draft) {
  using namespace marker_detail;
  if (auto r = check_single_part(draft, TaskKind::Flat)) return *r;
  AnnotatedSentence out{tokens, {}};
  std::vector<bool> used(tokens.size(), false);
  std::size_t rep = 0;
  for (std::size_t i = 0; i < draft.items.size(); ++i) {
    const auto& item = draft.items[i];
    const auto& part = item.surface.front();
    std::size_t found = npos;
    for (std::size_t p = 0; p < tokens.size() && found == npos; ++p) {
      if (!matches_at(tokens, part, p)) continue;
      bool free = true;
      for (std::size_t k = p; k < p + part.size(); ++k) free = free && !used[k];
      if (free) found = p;
    }
    if (found == npos)
      return reject(Rejection::Reason::Mismatch, i, item, TaskKind::Flat, "not found in text");
    for (std::size_t k = found; k < found + part.size(); ++k) used[k] = true;
    rep += repeated(tokens, item.surface);
    out.entities.push_back(
        make_entity(tokens, {Span{found, found + part.size() - 1}}, item.type));
  }
  return MarkOutcome(std::move(out), rep);
}

/// Each entity independently takes its leftmost occurrence; spans of
/// different entities may overlap.
inline MarkOutcome match_nested(const std::vector<std::string>& tokens,
                                const EntityListDraft& draft) {
  using namespace marker_detail;
  if (auto r = check_single_part(draft, TaskKind::Nested)) return *r;
  AnnotatedSentence out{tokens, {}};
  std::size_t rep = 0;
  for (std::size_t i = 0; i < draft.items.size(); ++i) {
    const auto& item = draft.items[i];
    const auto& part = item.surface.front();
    std::size_t found = npos;
    for (std::size_t p = 0; p < tokens.size() && found == npos; ++p)
      if (matches_at(tokens, part, p)) found = p;
    if (found == npos)
      return reject(Rejection::Reason::Mismatch, i, item, TaskKind::Nested,
                    "not found in text");
    rep += repeated(tokens, item.surface);
    out.entities.push_back(
        make_entity(tokens, {Span{found, found + part.size() - 1}}, item.type));
  }
  if (auto r = find_duplicate(out.entities, draft, TaskKind::Nested)) return *r;
  return MarkOutcome(std::move(out), rep);
}

/// Parts are matched left to right, each search starting after the previous
/// part's end.
inline MarkOutcome match_discontinuous(const std::vector<std::string>& tokens,
                                       const EntityListDraft& draft) {
  using namespace marker_detail;
  AnnotatedSentence out{tokens, {}};
  std::size_t rep = 0;
  for (std::size_t i = 0; i < draft.items.size(); ++i) {
    const auto& item = draft.items[i];
    std::vector<Span> spans;
    std::size_t from = 0;
    for (const auto& part : item.surface) {
      std::size_t found = npos;
      for (std::size_t p = from; p < tokens.size() && found == npos; ++p)
        if (matches_at(tokens, part, p)) found = p;
      if (found == npos)
        return reject(Rejection::Reason::Mismatch, i, item, TaskKind::Discontinuous,
                      "part '" + surface_text({part}) + "' not found in order");
      spans.push_back({found, found + part.size() - 1});
      from = found + part.size();
    }
    rep += repeated(tokens, item.surface);
    out.entities.push_back(make_entity(tokens, std::move(spans), item.type));
  }
  if (auto r = find_duplicate(out.entities, draft, TaskKind::Discontinuous)) return *r;
  return MarkOutcome(std::move(out), rep);
}

/// Dispatches on the task kind and re-validates the marked sentence.
inline MarkOutcome mark(const std::vector<std::string>& tokens, const EntityListDraft& draft,
                        TaskKind kind) {
  MarkOutcome out = kind == TaskKind::Flat     ? match_flat(tokens, draft)
                    : kind == TaskKind::Nested ? match_nested(tokens, draft)
                                               : match_discontinuous(tokens, draft);
  if (!out.marked()) return out;
  auto violations = validate(out.sentence(), kind);
  if (!violations.empty()) {
    const auto& v = violations.front();
    return Rejection{Rejection::Reason::ModeViolation, v.entity, kind, v.message};
  }
  return out;
}

}  // namespace ner_aug
