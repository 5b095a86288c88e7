#pragma once

// Annotated NER corpora: domain types, validation against task kinds, and the
// two on-disk formats (BIO columns for flat corpora, span JSON lines for
// nested and discontinuous ones).

#include <algorithm>
#include <compare>
#include <cstddef>
#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include "ner_aug/common.hpp"

namespace ner_aug {

class CorpusError : public Error {
 public:
  enum class Code {
    MalformedLine,
    DanglingI,
    EmptyCorpus,
    NotFlat,
    SchemaError,
    IndexOutOfRange,
    OverlapWithinEntity,
    DuplicateEntity,
    InvalidType,
  };

  CorpusError(Code code, std::size_t line, const std::string& what)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what),
        code_(code),
        line_(line) {}

  Code code() const { return code_; }
  /// 1-based input line, 0 when not tied to a line.
  std::size_t line() const { return line_; }

 private:
  Code code_;
  std::size_t line_;
};

class EntityType {
 public:
  explicit EntityType(std::string name) : name_(std::move(name)) {
    if (!is_valid(name_)) {
      throw CorpusError(CorpusError::Code::InvalidType, 0,
                        "invalid entity type '" + name_ + "'");
    }
  }

  /// Non-empty, no whitespace, none of `[` `]` `/` (reserved by the condition
  /// tag syntax).
  static bool is_valid(std::string_view name) {
    if (name.empty()) return false;
    for (unsigned char c : name) {
      if (c == '[' || c == ']' || c == '/' || c == ' ' || c == '\t' ||
          c == '\n' || c == '\r' || c == '\v' || c == '\f')
        return false;
    }
    return true;
  }

  const std::string& name() const { return name_; }

  auto operator<=>(const EntityType&) const = default;

 private:
  std::string name_;
};

/// Inclusive 0-based token range.
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start + 1; }
  auto operator<=>(const Span&) const = default;
};

/// Mention text split into its parts; one part per span.
using Surface = std::vector<std::vector<std::string>>;

struct Entity {
  std::vector<Span> spans;
  EntityType type;
  Surface surface;

  bool is_multi_span() const { return spans.size() > 1; }

  /// Token-index membership over all spans.
  bool covers(std::size_t index) const {
    return std::any_of(spans.begin(), spans.end(), [&](const Span& s) {
      return s.start <= index && index <= s.end;
    });
  }

  bool same_annotation(const Entity& other) const {
    return spans == other.spans && type == other.type;
  }

  bool operator==(const Entity&) const = default;
};

struct AnnotatedSentence {
  std::vector<std::string> tokens;
  std::vector<Entity> entities;

  bool operator==(const AnnotatedSentence&) const = default;
};

enum class TaskKind { Flat, Nested, Discontinuous };

inline std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Flat: return "flat";
    case TaskKind::Nested: return "nested";
    case TaskKind::Discontinuous: return "disc";
  }
  return "?";
}

inline bool spans_overlap(const Entity& a, const Entity& b) {
  for (const auto& x : a.spans)
    for (const auto& y : b.spans)
      if (x.start <= y.end && y.start <= x.end) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  enum class Kind {
    EmptyEntity,
    InvalidSpan,
    IndexOutOfRange,
    SpanOrder,
    SurfaceMismatch,
    Duplicate,
    Overlap,
    MultiSpan,
  };

  Kind kind;
  std::size_t entity;
  std::size_t other;  // second entity for pairwise violations, else == entity
  std::string message;
};

/// Reports every violation of the sentence invariants and of the task-kind
/// constraints. An empty result means the sentence is valid for `kind`.
inline std::vector<Violation> validate(const AnnotatedSentence& sentence,
                                       TaskKind kind) {
  using K = Violation::Kind;
  std::vector<Violation> out;
  const auto& ents = sentence.entities;
  const std::size_t n = sentence.tokens.size();

  for (std::size_t i = 0; i < ents.size(); ++i) {
    const Entity& e = ents[i];
    auto report = [&](K k, std::string msg) {
      out.push_back({k, i, i, "entity " + std::to_string(i) + ": " + msg});
    };
    if (e.spans.empty()) {
      report(K::EmptyEntity, "no spans");
      continue;
    }
    bool spans_ok = true;
    for (std::size_t j = 0; j < e.spans.size(); ++j) {
      const Span& s = e.spans[j];
      if (s.start > s.end) {
        report(K::InvalidSpan, "span start " + std::to_string(s.start) +
                                   " > end " + std::to_string(s.end));
        spans_ok = false;
      } else if (s.end >= n) {
        report(K::IndexOutOfRange, "span end " + std::to_string(s.end) +
                                       " outside " + std::to_string(n) +
                                       " tokens");
        spans_ok = false;
      }
      if (j > 0 && s.start <= e.spans[j - 1].end) {
        report(K::SpanOrder, "spans not strictly ordered");
        spans_ok = false;
      }
    }
    if (spans_ok) {
      bool match = e.surface.size() == e.spans.size();
      for (std::size_t j = 0; match && j < e.spans.size(); ++j) {
        const Span& s = e.spans[j];
        match = e.surface[j].size() == s.length() &&
                std::equal(e.surface[j].begin(), e.surface[j].end(),
                           sentence.tokens.begin() + s.start);
      }
      if (!match) report(K::SurfaceMismatch, "surface differs from tokens");
    }
    if (kind != TaskKind::Discontinuous && e.spans.size() > 1) {
      report(K::MultiSpan, "multi-span entity not allowed for " +
                               std::string(to_string(kind)));
    }
  }

  for (std::size_t i = 0; i < ents.size(); ++i) {
    for (std::size_t j = i + 1; j < ents.size(); ++j) {
      if (ents[i].same_annotation(ents[j])) {
        out.push_back({K::Duplicate, i, j,
                       "entities " + std::to_string(i) + " and " +
                           std::to_string(j) + " are identical"});
      } else if (kind == TaskKind::Flat && spans_overlap(ents[i], ents[j])) {
        out.push_back({K::Overlap, i, j,
                       "entities " + std::to_string(i) + " and " +
                           std::to_string(j) + " overlap"});
      }
    }
  }
  return out;
}

/// Builds an entity with its surface cache, checking spans against `tokens`.
inline Entity make_entity(const std::vector<std::string>& tokens,
                          std::vector<Span> spans, EntityType type) {
  using C = CorpusError::Code;
  if (spans.empty()) throw CorpusError(C::SchemaError, 0, "entity without spans");
  Surface surface;
  for (std::size_t j = 0; j < spans.size(); ++j) {
    const Span& s = spans[j];
    if (s.start > s.end)
      throw CorpusError(C::IndexOutOfRange, 0,
                        "invalid span [" + std::to_string(s.start) + "," +
                            std::to_string(s.end) + "]");
    if (s.end >= tokens.size())
      throw CorpusError(C::IndexOutOfRange, 0,
                        "span end " + std::to_string(s.end) + " outside " +
                            std::to_string(tokens.size()) + " tokens");
    if (j > 0 && s.start <= spans[j - 1].end)
      throw CorpusError(C::OverlapWithinEntity, 0,
                        "spans within one entity must be strictly ordered");
    surface.emplace_back(tokens.begin() + s.start, tokens.begin() + s.end + 1);
  }
  return Entity{std::move(spans), std::move(type), std::move(surface)};
}

// ---------------------------------------------------------------------------
// BIO columns: `token<TAB>tag`, blank line between sentences.

namespace detail {

inline std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline bool token_representable_in_bio(const std::string& tok) {
  return !tok.empty() && tok.find_first_of("\t\n\r") == std::string::npos;
}

}  // namespace detail

inline std::vector<AnnotatedSentence> parse_bio(std::istream& in) {
  using C = CorpusError::Code;
  std::vector<AnnotatedSentence> out;
  AnnotatedSentence cur;
  struct Open {
    std::size_t start;
    std::string type;
  };
  std::vector<Open> open;  // at most one element
  std::vector<std::pair<Span, std::string>> runs;

  auto close_run = [&](std::size_t end) {
    if (!open.empty()) {
      runs.push_back({Span{open.back().start, end}, open.back().type});
      open.clear();
    }
  };
  auto flush = [&] {
    if (cur.tokens.empty()) return;
    close_run(cur.tokens.size() - 1);
    for (auto& [span, type] : runs)
      cur.entities.push_back(make_entity(cur.tokens, {span}, EntityType(type)));
    out.push_back(std::move(cur));
    cur = {};
    runs.clear();
  };

  const auto lines = detail::read_lines(in);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string& line = lines[ln];
    const std::size_t lineno = ln + 1;
    if (line.empty()) {
      flush();
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw CorpusError(C::MalformedLine, lineno, "expected token<TAB>tag");
    std::string token = line.substr(0, tab);
    std::string tag = line.substr(tab + 1);
    if (token.empty()) throw CorpusError(C::MalformedLine, lineno, "empty token");
    const std::size_t idx = cur.tokens.size();
    cur.tokens.push_back(std::move(token));

    if (tag == "O") {
      if (idx > 0) close_run(idx - 1);
      continue;
    }
    if (tag.size() < 3 || (tag[0] != 'B' && tag[0] != 'I') || tag[1] != '-' ||
        !EntityType::is_valid(std::string_view(tag).substr(2)))
      throw CorpusError(C::MalformedLine, lineno, "bad tag '" + tag + "'");
    std::string type = tag.substr(2);
    if (tag[0] == 'B') {
      if (idx > 0) close_run(idx - 1);
      open.push_back({idx, std::move(type)});
    } else if (open.empty() || open.back().type != type) {
      throw CorpusError(C::DanglingI, lineno,
                        "I-" + type + " without preceding B-" + type + "/I-" + type);
    }
  }
  flush();
  if (out.empty()) throw CorpusError(C::EmptyCorpus, 0, "no sentences in input");
  return out;
}

inline std::vector<AnnotatedSentence> parse_bio(const std::string& text) {
  std::istringstream in(text);
  return parse_bio(in);
}

inline std::string emit_bio(const std::vector<AnnotatedSentence>& sentences) {
  using C = CorpusError::Code;
  std::string out;
  for (std::size_t si = 0; si < sentences.size(); ++si) {
    const auto& s = sentences[si];
    if (s.tokens.empty())
      throw CorpusError(C::SchemaError, 0,
                        "sentence " + std::to_string(si) + " has no tokens");
    auto violations = validate(s, TaskKind::Flat);
    if (!violations.empty())
      throw CorpusError(C::NotFlat, 0,
                        "sentence " + std::to_string(si) + ": " +
                            violations.front().message);
    std::vector<std::string> tags(s.tokens.size(), "O");
    for (const auto& e : s.entities) {
      const Span& sp = e.spans.front();
      tags[sp.start] = "B-" + e.type.name();
      for (std::size_t i = sp.start + 1; i <= sp.end; ++i)
        tags[i] = "I-" + e.type.name();
    }
    if (si > 0) out += '\n';
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      if (!detail::token_representable_in_bio(s.tokens[i]))
        throw CorpusError(C::SchemaError, 0,
                          "token not representable in BIO: '" + s.tokens[i] + "'");
      out += s.tokens[i];
      out += '\t';
      out += tags[i];
      out += '\n';
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Span JSON lines:
//   {"tokens":[...],"entities":[{"spans":[[s,d],...],"type":"..."}]}

namespace detail {

inline std::size_t json_index(const nlohmann::json& v, std::size_t lineno) {
  using C = CorpusError::Code;
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_integer())
    throw CorpusError(C::IndexOutOfRange, lineno, "negative span index");
  throw CorpusError(C::SchemaError, lineno, "span index must be an integer");
}

inline AnnotatedSentence sentence_from_json(const nlohmann::json& j,
                                            std::size_t lineno) {
  using C = CorpusError::Code;
  auto schema = [&](const std::string& msg) {
    return CorpusError(C::SchemaError, lineno, msg);
  };
  if (!j.is_object()) throw schema("expected a JSON object");
  auto tok_it = j.find("tokens");
  auto ent_it = j.find("entities");
  if (tok_it == j.end() || !tok_it->is_array()) throw schema("missing \"tokens\" array");
  if (ent_it == j.end() || !ent_it->is_array()) throw schema("missing \"entities\" array");

  AnnotatedSentence s;
  for (const auto& t : *tok_it) {
    if (!t.is_string()) throw schema("tokens must be strings");
    s.tokens.push_back(t.get<std::string>());
  }
  if (s.tokens.empty()) throw schema("empty token list");

  for (const auto& e : *ent_it) {
    if (!e.is_object()) throw schema("entity must be an object");
    auto sp_it = e.find("spans");
    auto ty_it = e.find("type");
    if (sp_it == e.end() || !sp_it->is_array() || sp_it->empty())
      throw schema("entity needs a non-empty \"spans\" array");
    if (ty_it == e.end() || !ty_it->is_string()) throw schema("entity needs a \"type\" string");
    const std::string type = ty_it->get<std::string>();
    if (!EntityType::is_valid(type)) throw schema("invalid entity type '" + type + "'");
    std::vector<Span> spans;
    for (const auto& p : *sp_it) {
      if (!p.is_array() || p.size() != 2) throw schema("span must be [start,end]");
      spans.push_back({json_index(p[0], lineno), json_index(p[1], lineno)});
    }
    try {
      s.entities.push_back(make_entity(s.tokens, std::move(spans), EntityType(type)));
    } catch (const CorpusError& err) {
      throw CorpusError(err.code(), lineno, err.what());
    }
  }
  for (std::size_t a = 0; a < s.entities.size(); ++a)
    for (std::size_t b = a + 1; b < s.entities.size(); ++b)
      if (s.entities[a].same_annotation(s.entities[b]))
        throw CorpusError(C::DuplicateEntity, lineno,
                          "duplicate entity " + std::to_string(b));
  return s;
}

}  // namespace detail

inline std::vector<AnnotatedSentence> parse_spans(std::istream& in) {
  std::vector<AnnotatedSentence> out;
  const auto lines = detail::read_lines(in);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (lines[ln].find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(lines[ln]);
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(CorpusError::Code::SchemaError, ln + 1,
                        std::string("invalid JSON: ") + e.what());
    }
    out.push_back(detail::sentence_from_json(j, ln + 1));
  }
  if (out.empty())
    throw CorpusError(CorpusError::Code::EmptyCorpus, 0, "no sentences in input");
  return out;
}

inline std::vector<AnnotatedSentence> parse_spans(const std::string& text) {
  std::istringstream in(text);
  return parse_spans(in);
}

/// Canonical form: fixed key order, no whitespace, UTF-8, one line per
/// sentence, LF-terminated.
inline std::string emit_spans(const std::vector<AnnotatedSentence>& sentences) {
  using C = CorpusError::Code;
  std::string out;
  for (std::size_t si = 0; si < sentences.size(); ++si) {
    const auto& s = sentences[si];
    if (s.tokens.empty())
      throw CorpusError(C::SchemaError, 0,
                        "sentence " + std::to_string(si) + " has no tokens");
    auto violations = validate(s, TaskKind::Discontinuous);
    if (!violations.empty())
      throw CorpusError(C::SchemaError, 0,
                        "sentence " + std::to_string(si) + ": " +
                            violations.front().message);
    nlohmann::ordered_json j;
    j["tokens"] = s.tokens;
    j["entities"] = nlohmann::ordered_json::array();
    for (const auto& e : s.entities) {
      nlohmann::ordered_json spans = nlohmann::ordered_json::array();
      for (const auto& sp : e.spans) spans.push_back({sp.start, sp.end});
      nlohmann::ordered_json ej;
      ej["spans"] = std::move(spans);
      ej["type"] = e.type.name();
      j["entities"].push_back(std::move(ej));
    }
    try {
      out += j.dump();
    } catch (const nlohmann::json::exception& e) {
      throw CorpusError(C::SchemaError, 0,
                        "sentence " + std::to_string(si) + ": " + e.what());
    }
    out += '\n';
  }
  return out;
}

enum class CorpusFormat { Bio, Spans };

inline std::vector<AnnotatedSentence> parse_corpus(std::istream& in, CorpusFormat f) {
  return f == CorpusFormat::Bio ? parse_bio(in) : parse_spans(in);
}

inline std::string emit_corpus(const std::vector<AnnotatedSentence>& s, CorpusFormat f) {
  return f == CorpusFormat::Bio ? emit_bio(s) : emit_spans(s);
}

}  // namespace ner_aug
