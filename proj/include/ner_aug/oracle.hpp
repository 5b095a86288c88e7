#pragma once

// Exhaustive reference for the decoder on small instances. The whole search
// tree up to the horizon is scored first; each step then picks the subset of
// admissible candidates with the largest total key by enumerating subsets.
// Shares no selection code with decoder.hpp beyond the config and result
// types.

#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "ner_aug/decoder.hpp"

namespace ner_aug {

namespace oracle_detail {

struct Child {
  std::string token;
  double logprob;
  std::size_t rank;  // 1-based among the parent's finite candidates
};

using Tree = std::map<std::vector<std::string>, std::vector<Child>>;

template <TokenScorer S>
void build_tree(const S& scorer, const std::vector<std::string>& condition,
                const std::string& eos, std::size_t horizon,
                std::vector<std::string>& prefix, Tree& tree) {
  const ScoreResponse r = scorer.score({condition, prefix, std::nullopt});
  std::vector<Child> kids;
  for (std::size_t i = 0; i < r.tokens.size(); ++i)
    if (std::isfinite(r.logprobs[i])) kids.push_back({r.tokens[i], r.logprobs[i], 0});
  // rank = 1 + number of strictly better siblings
  for (auto& k : kids) {
    std::size_t better = 0;
    for (const auto& o : kids)
      if (o.logprob > k.logprob || (o.logprob == k.logprob && o.token < k.token)) ++better;
    k.rank = better + 1;
  }
  tree[prefix] = kids;
  if (prefix.size() + 1 >= horizon) return;
  for (const auto& k : kids) {
    if (k.token == eos) continue;
    prefix.push_back(k.token);
    build_tree(scorer, condition, eos, horizon, prefix, tree);
    prefix.pop_back();
  }
}

struct Node {
  std::vector<std::string> tokens;
  bool finished;
  double key;
};

/// Raw score recomputed from the root along the path.
inline double path_score(const Tree& tree, const std::vector<std::string>& tokens,
                         bool finished, const std::string& eos) {
  double total = 0.0;
  std::vector<std::string> prefix;
  const std::size_t steps = tokens.size() + (finished ? 1 : 0);
  for (std::size_t t = 0; t < steps; ++t) {
    const std::string& next = t < tokens.size() ? tokens[t] : eos;
    const auto& kids = tree.at(prefix);
    bool found = false;
    for (const auto& k : kids)
      if (k.token == next) {
        total += k.logprob;
        found = true;
        break;
      }
    if (!found) throw Error("oracle: path leaves the tree");
    if (t < tokens.size()) prefix.push_back(next);
  }
  return total;
}

/// Tie order between candidates with equal keys: tokens ascending,
/// unfinished first.
inline bool node_less(const Node& a, const Node& b) {
  if (a.key != b.key) return a.key > b.key;
  if (a.tokens != b.tokens) return a.tokens < b.tokens;
  return !a.finished && b.finished;
}

inline double binomial(std::size_t n, std::size_t k) {
  double c = 1.0;
  for (std::size_t i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c;
}

/// Picks `k` members maximizing the sum of keys. Members of a subset are
/// summed in node order so that rounding is monotone; equal sums fall back to
/// comparing the ordered member lists.
inline std::vector<Node> best_subset(std::vector<Node> cands, std::size_t k) {
  // Put candidates in node order once; subsets enumerated as increasing index
  // tuples are then already sorted.
  for (std::size_t i = 0; i < cands.size(); ++i)
    for (std::size_t j = i + 1; j < cands.size(); ++j)
      if (node_less(cands[j], cands[i])) std::swap(cands[i], cands[j]);
  if (k >= cands.size()) return cands;

  if (binomial(cands.size(), k) > 200000.0) {
    cands.resize(k);  // prefix of the node order is the maximizer
    return cands;
  }
  std::vector<std::size_t> idx(k), best;
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  double best_sum = -std::numeric_limits<double>::infinity();
  for (;;) {
    double sum = 0.0;
    for (auto i : idx) sum += cands[i].key;
    bool better = best.empty() || sum > best_sum;
    if (!better && sum == best_sum) {
      for (std::size_t p = 0; p < k; ++p) {
        if (idx[p] == best[p]) continue;
        better = idx[p] < best[p];
        break;
      }
    }
    if (better) {
      best = idx;
      best_sum = sum;
    }
    std::size_t p = k;
    while (p > 0 && idx[p - 1] == cands.size() - k + (p - 1)) --p;
    if (p == 0) break;
    ++idx[p - 1];
    for (std::size_t q = p; q < k; ++q) idx[q] = idx[q - 1] + 1;
  }
  std::vector<Node> out;
  for (auto i : best) out.push_back(cands[i]);
  return out;
}

}  // namespace oracle_detail

inline constexpr double kOracleLimit = 1e6;

/// Exhaustive simulation of the decoder's step semantics with max_len =
/// horizon.
template <TokenScorer S>
DecodeResult oracle_decode(const S& scorer, const std::vector<std::string>& condition,
                           const DecodeConfig& cfg, std::size_t horizon) {
  using namespace oracle_detail;
  cfg.validate();
  const std::size_t vocab = scorer.score({condition, {}, std::nullopt}).tokens.size();
  if (std::pow(static_cast<double>(vocab), static_cast<double>(horizon)) > kOracleLimit)
    throw DecodeError(DecodeError::Code::TooLarge, "oracle instance too large");

  Tree tree;
  std::vector<std::string> prefix;
  if (horizon > 0) build_tree(scorer, condition, cfg.eos, horizon, prefix, tree);

  const std::size_t width = cfg.mode == DecodeMode::Greedy ? 1 : cfg.beam_width;
  const double gamma = cfg.mode == DecodeMode::DiverseBeam ? cfg.gamma : 0.0;

  std::vector<Node> current{{{}, false, 0.0}};
  for (std::size_t t = 0; t < horizon; ++t) {
    bool any_open = false;
    for (const auto& n : current) any_open |= !n.finished;
    if (!any_open) break;
    std::vector<Node> cands;
    for (const auto& n : current) {
      if (n.finished) {
        cands.push_back(n);
        continue;
      }
      for (const auto& kid : tree.at(n.tokens)) {
        if (kid.rank > width) continue;
        Node c{n.tokens, kid.token == cfg.eos, 0.0};
        if (!c.finished) c.tokens.push_back(kid.token);
        c.key = path_score(tree, c.tokens, c.finished, cfg.eos) -
                gamma * static_cast<double>(kid.rank);
        cands.push_back(std::move(c));
      }
    }
    current = best_subset(std::move(cands), width);
    if (current.empty()) break;
  }

  BeamSet final_set;
  for (const auto& n : current)
    final_set.beams.push_back(
        {n.tokens, path_score(tree, n.tokens, n.finished, cfg.eos), n.key, n.finished});
  return finish_result(std::move(final_set));
}

}  // namespace ner_aug
