#pragma once

// Conditional next-token scoring. A scorer maps (condition, prefix) to a
// log-probability distribution over its vocabulary. This header holds the
// contract, a uniform scorer, the n-gram stand-in for a fine-tuned generator,
// a copy-mixture decorator, and perplexity evaluation.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ner_aug/common.hpp"
#include "ner_aug/entity_ops.hpp"

namespace ner_aug {

inline constexpr std::string_view kBos = "<s>";
inline constexpr std::string_view kEos = "</s>";
inline constexpr std::string_view kUnk = "<unk>";
inline constexpr std::string_view kSep = "<sep>";

class ScorerError : public Error {
 public:
  enum class Code {
    Timeout,
    ProtocolError,
    ServerError,
    Unreachable,
    InvalidRequest,
    ZeroProbability,
    EmptyTraining,
  };
  ScorerError(Code code, const std::string& what) : Error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct ScoreRequest {
  std::vector<std::string> condition;
  std::vector<std::string> prefix;  // y_1 .. y_{t-1}; never contains EOS
  std::optional<std::size_t> top_k;
};

/// Parallel arrays. A full response covers the whole vocabulary and is
/// normalized; a truncated one carries only the top entries.
struct ScoreResponse {
  std::vector<std::string> tokens;
  std::vector<double> logprobs;
  bool truncated = false;

  std::optional<double> lookup(std::string_view token) const {
    for (std::size_t i = 0; i < tokens.size(); ++i)
      if (tokens[i] == token) return logprobs[i];
    return std::nullopt;
  }
};

template <typename S>
concept TokenScorer = requires(const S& s, const ScoreRequest& r) {
  { s.score(r) } -> std::convertible_to<ScoreResponse>;
};

/// Runtime-polymorphic scorer, for code that picks an implementation from
/// configuration.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual ScoreResponse score(const ScoreRequest& req) const = 0;
};

inline double logsumexp(const std::vector<double>& xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

inline bool is_normalized(const ScoreResponse& r, double tol = 1e-6) {
  return std::abs(logsumexp(r.logprobs)) <= tol;
}

inline void check_request(const ScoreRequest& req) {
  if (std::find(req.prefix.begin(), req.prefix.end(), kEos) != req.prefix.end())
    throw ScorerError(ScorerError::Code::InvalidRequest, "prefix contains EOS");
  if (req.top_k && *req.top_k == 0)
    throw ScorerError(ScorerError::Code::InvalidRequest, "top_k must be positive");
}

/// Keeps the k best entries (log-prob descending, token ascending on ties).
inline ScoreResponse truncate_top_k(const ScoreResponse& full, std::size_t k) {
  std::vector<std::size_t> idx(full.tokens.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (full.logprobs[a] != full.logprobs[b]) return full.logprobs[a] > full.logprobs[b];
    return full.tokens[a] < full.tokens[b];
  });
  idx.resize(std::min(k, idx.size()));
  ScoreResponse out;
  out.truncated = true;
  for (auto i : idx) {
    out.tokens.push_back(full.tokens[i]);
    out.logprobs.push_back(full.logprobs[i]);
  }
  return out;
}

class UniformScorer final : public Scorer {
 public:
  explicit UniformScorer(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
    if (vocab_.empty()) throw Error("UniformScorer: empty vocabulary");
  }

  ScoreResponse score(const ScoreRequest& req) const override {
    check_request(req);
    ScoreResponse r;
    r.tokens = vocab_;
    r.logprobs.assign(vocab_.size(), -std::log(static_cast<double>(vocab_.size())));
    return req.top_k ? truncate_top_k(r, *req.top_k) : r;
  }

 private:
  std::vector<std::string> vocab_;
};

// ---------------------------------------------------------------------------
// Vocabulary

class Vocab {
 public:
  using Id = std::uint32_t;

  Vocab() {
    for (auto t : {kBos, kEos, kUnk, kSep}) add(std::string(t));
  }

  Id add(const std::string& token) {
    auto [it, inserted] = index_.try_emplace(token, static_cast<Id>(tokens_.size()));
    if (inserted) tokens_.push_back(token);
    return it->second;
  }

  /// Unknown tokens map to UNK.
  Id id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? unk() : it->second;
  }

  bool contains(std::string_view token) const {
    return index_.count(std::string(token)) > 0;
  }

  const std::string& token(Id id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }

  Id bos() const { return 0; }
  Id eos() const { return 1; }
  Id unk() const { return 2; }
  Id sep() const { return 3; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, Id> index_;
};

// ---------------------------------------------------------------------------
// n-gram model over condition ++ SEP ++ BOS ++ text ++ EOS

enum class Smoothing {
  /// Stupid backoff (factor 0.4) with an add-one unigram floor, normalized
  /// over the vocabulary.
  StupidBackoff,
  /// Maximum likelihood at the longest observed context; unseen events get
  /// zero probability.
  None,
};

struct TrainingPair {
  ConditionSequence condition;
  std::vector<std::string> text;
};

class NGramModel final : public Scorer {
 public:
  static constexpr double kBackoff = 0.4;

  struct ContextCounts {
    std::uint64_t total = 0;
    std::map<Vocab::Id, std::uint64_t> next;
  };

  NGramModel(std::size_t order, Smoothing smoothing = Smoothing::StupidBackoff)
      : order_(order), smoothing_(smoothing) {
    if (order == 0) throw Error("n-gram order must be at least 1");
  }

  std::size_t order() const { return order_; }
  Smoothing smoothing() const { return smoothing_; }
  const Vocab& vocab() const { return vocab_; }

  /// Adds every m-gram (m <= order) of one training sequence.
  void add_sequence(const std::vector<std::string>& seq) {
    std::vector<Vocab::Id> ids;
    ids.reserve(seq.size());
    for (const auto& t : seq) ids.push_back(vocab_.add(t));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t k = 0; k < order_ && k <= i; ++k) {
        std::vector<Vocab::Id> ctx(ids.begin() + static_cast<std::ptrdiff_t>(i - k),
                                   ids.begin() + static_cast<std::ptrdiff_t>(i));
        auto& c = counts_[ctx];
        ++c.total;
        ++c.next[ids[i]];
      }
    }
  }

  /// Count of `next` after `context` (tokens as strings; empty context gives
  /// the unigram count).
  std::uint64_t count(const std::vector<std::string>& context,
                      std::string_view next) const {
    auto c = find(to_ids(context));
    if (!c || !vocab_.contains(next)) return 0;
    auto it = c->next.find(vocab_.id(next));
    return it == c->next.end() ? 0 : it->second;
  }

  std::uint64_t context_total(const std::vector<std::string>& context) const {
    auto c = find(to_ids(context));
    return c ? c->total : 0;
  }

  const std::map<std::vector<Vocab::Id>, ContextCounts>& counts() const { return counts_; }

  /// Full-vocabulary probabilities (not logs) for the given history of ids.
  std::vector<double> distribution(const std::vector<Vocab::Id>& history) const {
    const std::size_t v = vocab_.size();
    const std::size_t max_ctx = std::min(order_ - 1, history.size());
    std::vector<double> p(v, -1.0);

    if (smoothing_ == Smoothing::None) {
      for (std::size_t len = max_ctx + 1; len-- > 0;) {
        std::vector<Vocab::Id> ctx(history.end() - static_cast<std::ptrdiff_t>(len),
                                   history.end());
        if (auto c = find(ctx); c && c->total > 0) {
          std::fill(p.begin(), p.end(), 0.0);
          for (auto [w, n] : c->next)
            p[w] = static_cast<double>(n) / static_cast<double>(c->total);
          return p;
        }
      }
      std::fill(p.begin(), p.end(), 0.0);
      return p;
    }

    double weight = 1.0;
    for (std::size_t len = max_ctx; len >= 1; --len) {
      std::vector<Vocab::Id> ctx(history.end() - static_cast<std::ptrdiff_t>(len),
                                 history.end());
      if (auto c = find(ctx)) {
        for (auto [w, n] : c->next)
          if (p[w] < 0)
            p[w] = weight * static_cast<double>(n) / static_cast<double>(c->total);
      }
      weight *= kBackoff;
    }
    const ContextCounts* uni = find({});
    const double n_tokens = uni ? static_cast<double>(uni->total) : 0.0;
    const double denom = n_tokens + static_cast<double>(v);
    for (std::size_t w = 0; w < v; ++w) {
      if (p[w] >= 0) continue;
      double c = 0;
      if (uni) {
        auto it = uni->next.find(static_cast<Vocab::Id>(w));
        if (it != uni->next.end()) c = static_cast<double>(it->second);
      }
      p[w] = weight * (c + 1.0) / denom;
    }
    const double z = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& x : p) x /= z;
    return p;
  }

  std::vector<Vocab::Id> history_ids(const ScoreRequest& req) const {
    std::vector<Vocab::Id> h;
    h.reserve(req.condition.size() + req.prefix.size() + 2);
    for (const auto& t : req.condition) h.push_back(vocab_.id(t));
    h.push_back(vocab_.sep());
    h.push_back(vocab_.bos());
    for (const auto& t : req.prefix) h.push_back(vocab_.id(t));
    return h;
  }

  ScoreResponse score(const ScoreRequest& req) const override {
    check_request(req);
    const auto p = distribution(history_ids(req));
    ScoreResponse r;
    r.tokens = vocab_.tokens();
    r.logprobs.reserve(p.size());
    for (double x : p)
      r.logprobs.push_back(x > 0 ? std::log(x) : -std::numeric_limits<double>::infinity());
    return req.top_k ? truncate_top_k(r, *req.top_k) : r;
  }

 private:
  std::vector<Vocab::Id> to_ids(const std::vector<std::string>& toks) const {
    std::vector<Vocab::Id> ids;
    for (const auto& t : toks) ids.push_back(vocab_.id(t));
    return ids;
  }

  const ContextCounts* find(const std::vector<Vocab::Id>& ctx) const {
    auto it = counts_.find(ctx);
    return it == counts_.end() ? nullptr : &it->second;
  }

  std::size_t order_;
  Smoothing smoothing_;
  Vocab vocab_;
  std::map<std::vector<Vocab::Id>, ContextCounts> counts_;
};

inline std::vector<std::string> training_sequence(const TrainingPair& pair) {
  std::vector<std::string> seq = pair.condition.tokens;
  seq.emplace_back(kSep);
  seq.emplace_back(kBos);
  seq.insert(seq.end(), pair.text.begin(), pair.text.end());
  seq.emplace_back(kEos);
  return seq;
}

inline NGramModel train_ngram(const std::vector<TrainingPair>& pairs, std::size_t order,
                              Smoothing smoothing = Smoothing::StupidBackoff) {
  if (pairs.empty())
    throw ScorerError(ScorerError::Code::EmptyTraining, "no training pairs");
  NGramModel model(order, smoothing);
  for (const auto& p : pairs) model.add_sequence(training_sequence(p));
  return model;
}

/// Entity-to-text pairs from an annotated corpus, in corpus entity order.
inline std::vector<TrainingPair> training_pairs(
    const std::vector<AnnotatedSentence>& corpus) {
  std::vector<TrainingPair> out;
  out.reserve(corpus.size());
  for (const auto& s : corpus)
    out.push_back({serialize_condition(draft_from_sentence(s)), s.tokens});
  return out;
}

// ---------------------------------------------------------------------------

/// Mixes an inner scorer with a uniform distribution over the surface tokens
/// of the condition: P = (1 - w) * P_inner + w * P_copy.
template <TokenScorer Inner>
class CopyMixScorer final : public Scorer {
 public:
  CopyMixScorer(const Inner& inner, double weight) : inner_(inner), weight_(weight) {
    if (!(weight >= 0.0 && weight < 1.0)) throw Error("copy weight must be in [0, 1)");
  }

  ScoreResponse score(const ScoreRequest& req) const override {
    check_request(req);
    ScoreRequest inner_req = req;
    inner_req.top_k.reset();
    ScoreResponse base = inner_.score(inner_req);
    const auto copy = copy_tokens(req.condition);
    if (weight_ == 0.0 || copy.empty())
      return req.top_k ? truncate_top_k(base, *req.top_k) : base;

    std::map<std::string, double> copy_mass;
    for (const auto& t : copy) copy_mass[t] += 1.0 / static_cast<double>(copy.size());

    ScoreResponse out;
    out.truncated = base.truncated;
    for (std::size_t i = 0; i < base.tokens.size(); ++i) {
      double p = (1.0 - weight_) * std::exp(base.logprobs[i]);
      if (auto it = copy_mass.find(base.tokens[i]); it != copy_mass.end()) {
        p += weight_ * it->second;
        copy_mass.erase(it);
      }
      out.tokens.push_back(base.tokens[i]);
      out.logprobs.push_back(std::log(p));
    }
    for (const auto& [t, m] : copy_mass) {
      out.tokens.push_back(t);
      out.logprobs.push_back(std::log(weight_ * m));
    }
    return req.top_k ? truncate_top_k(out, *req.top_k) : out;
  }

  static std::vector<std::string> copy_tokens(const std::vector<std::string>& condition) {
    std::vector<std::string> out;
    try {
      for (const auto& item : deserialize_condition({condition}).items)
        for (const auto& part : item.surface) out.insert(out.end(), part.begin(), part.end());
    } catch (const Error&) {
      return {};
    }
    return out;
  }

 private:
  const Inner& inner_;
  double weight_;
};

// ---------------------------------------------------------------------------

/// exp(-(1/N) * sum log Pr(y_t | y_<t, condition)), N = |text| + 1 (EOS
/// included). Tokens missing from a response fall back to UNK when the
/// scorer reports it.
template <TokenScorer S>
double perplexity(const S& scorer, const std::vector<std::string>& condition,
                  const std::vector<std::string>& text) {
  if (text.empty())
    throw ScorerError(ScorerError::Code::InvalidRequest, "perplexity of empty text");
  ScoreRequest req{condition, {}, std::nullopt};
  double mean = 0.0;
  for (std::size_t t = 0; t <= text.size(); ++t) {
    const std::string_view target = t < text.size() ? std::string_view(text[t]) : kEos;
    const ScoreResponse r = scorer.score(req);
    auto lp = r.lookup(target);
    if (!lp) lp = r.lookup(kUnk);
    if (!lp || !std::isfinite(*lp))
      throw ScorerError(ScorerError::Code::ZeroProbability,
                        "zero probability for '" + std::string(target) + "' at step " +
                            std::to_string(t));
    // Running mean stays exact when every term is equal.
    mean += (*lp - mean) / static_cast<double>(t + 1);
    if (t < text.size()) req.prefix.push_back(text[t]);
  }
  return std::exp(-mean);
}

}  // namespace ner_aug
