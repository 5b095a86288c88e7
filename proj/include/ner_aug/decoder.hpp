#pragma once

// Greedy, beam, and diversity beam search over a TokenScorer.
//
// Each step expands every unfinished beam, ranks that parent's candidates by
// log-probability (rank 1 = best), keeps the parent's top `beam_width`, and
// selects the `beam_width` best of all kept candidates plus the frozen
// finished beams. In diverse mode a candidate of sibling rank k competes with
// key  raw_score - gamma * k,  so lower-ranked siblings yield to the best
// children of other parents. The penalty shapes selection only: a beam's
// raw_score is the plain sum of its token log-probabilities, and adj_score
// is the key under which the beam was last selected.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "ner_aug/common.hpp"
#include "ner_aug/scorer.hpp"

namespace ner_aug {

enum class DecodeMode { Greedy, Beam, DiverseBeam };

class DecodeError : public Error {
 public:
  enum class Code { InvalidConfig, NothingToExpand, TooLarge };
  DecodeError(Code code, const std::string& what) : Error(what), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct DecodeConfig {
  std::size_t beam_width = 3;
  double gamma = 10.0;
  std::size_t max_len = 512;
  DecodeMode mode = DecodeMode::DiverseBeam;
  std::string eos = std::string(kEos);
  /// Ask the scorer for only this many entries per step (truncated replies).
  std::optional<std::size_t> top_k;

  std::size_t width() const { return mode == DecodeMode::Greedy ? 1 : beam_width; }
  double penalty() const { return mode == DecodeMode::DiverseBeam ? gamma : 0.0; }

  void validate() const {
    using C = DecodeError::Code;
    if (beam_width == 0) throw DecodeError(C::InvalidConfig, "beam width must be >= 1");
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
      throw DecodeError(C::InvalidConfig, "gamma must be finite and >= 0");
    if (max_len == 0) throw DecodeError(C::InvalidConfig, "max_len must be >= 1");
    if (top_k && *top_k == 0) throw DecodeError(C::InvalidConfig, "top_k must be >= 1");
  }
};

/// A partial or finished hypothesis. `tokens` never includes EOS.
struct BeamState {
  std::vector<std::string> tokens;
  double raw_score = 0.0;
  double adj_score = 0.0;
  bool finished = false;

  bool operator==(const BeamState&) const = default;
};

/// Strict order: adj_score descending, then token sequence ascending,
/// unfinished before finished.
inline bool beam_before(const BeamState& a, const BeamState& b) {
  if (a.adj_score != b.adj_score) return a.adj_score > b.adj_score;
  if (a.tokens != b.tokens) return a.tokens < b.tokens;
  return !a.finished && b.finished;
}

struct BeamSet {
  std::vector<BeamState> beams;

  static BeamSet initial() { return BeamSet{{BeamState{}}}; }

  bool all_finished() const {
    return std::all_of(beams.begin(), beams.end(),
                       [](const BeamState& b) { return b.finished; });
  }

  bool operator==(const BeamSet&) const = default;
};

struct RankedToken {
  std::string token;
  double logprob;
};

/// Candidates of one scorer reply sorted by log-probability descending,
/// token ascending on ties; zero-probability entries dropped.
inline std::vector<RankedToken> rank_candidates(const ScoreResponse& r) {
  std::vector<RankedToken> out;
  out.reserve(r.tokens.size());
  for (std::size_t i = 0; i < r.tokens.size(); ++i)
    if (std::isfinite(r.logprobs[i])) out.push_back({r.tokens[i], r.logprobs[i]});
  std::sort(out.begin(), out.end(), [](const RankedToken& a, const RankedToken& b) {
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    return a.token < b.token;
  });
  return out;
}

template <TokenScorer S>
BeamSet step_expand(const BeamSet& beams, const S& scorer,
                    const std::vector<std::string>& condition, const DecodeConfig& cfg) {
  if (beams.all_finished())
    throw DecodeError(DecodeError::Code::NothingToExpand, "every beam is finished");
  const std::size_t width = cfg.width();
  const double gamma = cfg.penalty();

  std::vector<BeamState> pool;
  for (const auto& parent : beams.beams) {
    if (parent.finished) {
      pool.push_back(parent);
      continue;
    }
    const auto ranked = rank_candidates(scorer.score({condition, parent.tokens, cfg.top_k}));
    const std::size_t keep = std::min(width, ranked.size());
    for (std::size_t r = 0; r < keep; ++r) {
      BeamState child;
      child.tokens = parent.tokens;
      child.finished = ranked[r].token == cfg.eos;
      if (!child.finished) child.tokens.push_back(ranked[r].token);
      child.raw_score = parent.raw_score + ranked[r].logprob;
      child.adj_score = child.raw_score - gamma * static_cast<double>(r + 1);
      pool.push_back(std::move(child));
    }
  }
  const std::size_t take = std::min(width, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take), pool.end(),
                    beam_before);
  pool.resize(take);
  return BeamSet{std::move(pool)};
}

struct DecodeResult {
  /// Finished beams ordered by adj_score; when no beam finished within
  /// max_len, the unfinished final beams instead.
  std::vector<BeamState> hypotheses;
  bool complete = false;
};

inline DecodeResult finish_result(BeamSet beams) {
  DecodeResult out;
  for (auto& b : beams.beams)
    if (b.finished) out.hypotheses.push_back(b);
  out.complete = !out.hypotheses.empty();
  if (!out.complete) out.hypotheses = std::move(beams.beams);
  return out;
}

/// Runs step_expand from the empty hypothesis until every beam has finished
/// or max_len steps were taken; returns the final beam set.
template <TokenScorer S>
BeamSet search(const S& scorer, const std::vector<std::string>& condition,
               const DecodeConfig& cfg) {
  cfg.validate();
  BeamSet beams = BeamSet::initial();
  for (std::size_t step = 0; step < cfg.max_len && !beams.all_finished(); ++step) {
    beams = step_expand(beams, scorer, condition, cfg);
    if (beams.beams.empty()) break;
  }
  return beams;
}

template <TokenScorer S>
DecodeResult decode(const S& scorer, const std::vector<std::string>& condition,
                    const DecodeConfig& cfg) {
  return finish_result(search(scorer, condition, cfg));
}

/// Argmax at every step.
template <TokenScorer S>
std::vector<std::string> decode_greedy(const S& scorer,
                                       const std::vector<std::string>& condition,
                                       DecodeConfig cfg) {
  cfg.mode = DecodeMode::Greedy;
  cfg.validate();
  std::vector<std::string> out;
  for (std::size_t step = 0; step < cfg.max_len; ++step) {
    const auto ranked = rank_candidates(scorer.score({condition, out, cfg.top_k}));
    if (ranked.empty() || ranked.front().token == cfg.eos) break;
    out.push_back(ranked.front().token);
  }
  return out;
}

}  // namespace ner_aug
