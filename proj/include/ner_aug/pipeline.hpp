#pragma once

// End-to-end augmentation: corpus -> entity pool -> augmented entity lists ->
// decoded texts -> marked sentences, plus a run report.

#include <atomic>
#include <chrono>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include "ner_aug/corpus.hpp"
#include "ner_aug/decoder.hpp"
#include "ner_aug/entity_ops.hpp"
#include "ner_aug/marker.hpp"
#include "ner_aug/scorer.hpp"
#include "ner_aug/wire.hpp"

namespace ner_aug {

class PipelineError : public Error {
 public:
  using Error::Error;
};

struct ScorerSpec {
  enum class Kind { NGram, External };
  Kind kind = Kind::NGram;
  std::size_t order = 3;
  std::string endpoint;
  std::chrono::milliseconds timeout{30000};

  /// "ngram:ORDER" or "external:URL".
  static ScorerSpec parse(const std::string& s) {
    ScorerSpec spec;
    if (s.rfind("ngram:", 0) == 0) {
      const std::string num = s.substr(6);
      if (num.empty() || num.find_first_not_of("0123456789") != std::string::npos)
        throw PipelineError("bad n-gram order in '" + s + "'");
      spec.order = std::stoul(num);
      if (spec.order == 0) throw PipelineError("n-gram order must be >= 1");
      return spec;
    }
    if (s == "ngram") return spec;
    if (s.rfind("external:", 0) == 0 && s.size() > 9) {
      spec.kind = Kind::External;
      spec.endpoint = s.substr(9);
      wire::Endpoint::parse(spec.endpoint);
      return spec;
    }
    throw PipelineError("scorer must be ngram:ORDER or external:URL, got '" + s + "'");
  }

  std::string str() const {
    return kind == Kind::NGram ? "ngram:" + std::to_string(order) : "external:" + endpoint;
  }
};

inline CorpusFormat parse_format(const std::string& s) {
  if (s == "bio") return CorpusFormat::Bio;
  if (s == "spans") return CorpusFormat::Spans;
  throw PipelineError("format must be bio or spans, got '" + s + "'");
}

inline std::string_view to_string(CorpusFormat f) {
  return f == CorpusFormat::Bio ? "bio" : "spans";
}

inline TaskKind parse_task(const std::string& s) {
  if (s == "flat") return TaskKind::Flat;
  if (s == "nested") return TaskKind::Nested;
  if (s == "disc") return TaskKind::Discontinuous;
  throw PipelineError("task must be flat, nested or disc, got '" + s + "'");
}

struct PipelineConfig {
  std::string input;
  CorpusFormat format = CorpusFormat::Bio;
  TaskKind task = TaskKind::Flat;
  std::vector<AugOp> ops{AugOp::All};
  std::size_t multiple = 3;
  std::size_t beam_width = 3;
  double gamma = 10.0;
  std::size_t max_len = 512;
  std::uint64_t seed = 0;
  ScorerSpec scorer;
  /// Weight of the condition-copy mixture on top of the n-gram scorer.
  double copy_weight = 0.0;
  std::size_t threads = 1;
  std::string output;

  void validate() const {
    if (multiple == 0) throw PipelineError("multiple must be >= 1");
    if (ops.empty()) throw PipelineError("at least one op is required");
    if (threads == 0) throw PipelineError("threads must be >= 1");
    if (format == CorpusFormat::Bio && task != TaskKind::Flat)
      throw PipelineError("the bio format only supports the flat task");
    if (!(copy_weight >= 0.0 && copy_weight < 1.0))
      throw PipelineError("copy weight must be in [0, 1)");
    decode_config().validate();
  }

  DecodeConfig decode_config() const {
    DecodeConfig d;
    d.beam_width = beam_width;
    d.gamma = gamma;
    d.max_len = max_len;
    d.mode = DecodeMode::DiverseBeam;
    return d;
  }

  /// The configured ops with `all` expanded, duplicates dropped.
  std::vector<AugOp> op_cycle() const {
    std::vector<AugOp> out;
    for (AugOp op : ops)
      for (AugOp c : expand_op(op))
        if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    return out;
  }
};

struct OpStats {
  std::size_t attempts = 0;
  std::size_t skipped_no_candidate = 0;
  std::size_t skipped_too_few = 0;
  std::size_t drafts = 0;
  std::size_t decode_failed = 0;
  std::size_t decoded = 0;
  std::size_t marked = 0;
  std::size_t rejected = 0;
  std::size_t rejected_mismatch = 0;  // subset of rejected
  std::size_t repeated_mentions = 0;

  OpStats& operator+=(const OpStats& o) {
    attempts += o.attempts;
    skipped_no_candidate += o.skipped_no_candidate;
    skipped_too_few += o.skipped_too_few;
    drafts += o.drafts;
    decode_failed += o.decode_failed;
    decoded += o.decoded;
    marked += o.marked;
    rejected += o.rejected;
    rejected_mismatch += o.rejected_mismatch;
    repeated_mentions += o.repeated_mentions;
    return *this;
  }

  /// attempts = drafts + skips, drafts = decoded + failures,
  /// decoded = marked + rejected.
  bool consistent() const {
    return attempts == drafts + skipped_no_candidate + skipped_too_few &&
           drafts == decoded + decode_failed && decoded == marked + rejected &&
           rejected_mismatch <= rejected;
  }

  bool operator==(const OpStats&) const = default;
};

struct RunReport {
  std::vector<std::pair<AugOp, OpStats>> per_op;
  OpStats totals;
  std::size_t original_sentences = 0;
  std::size_t augmented_sentences = 0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  nlohmann::ordered_json config_echo;

  bool consistent() const {
    OpStats sum;
    for (const auto& [op, s] : per_op) {
      if (!s.consistent()) return false;
      sum += s;
    }
    return sum == totals && totals.consistent() && totals.marked == augmented_sentences;
  }
};

inline nlohmann::ordered_json to_json(const OpStats& s) {
  nlohmann::ordered_json j;
  j["attempts"] = s.attempts;
  j["skipped_no_candidate"] = s.skipped_no_candidate;
  j["skipped_too_few"] = s.skipped_too_few;
  j["drafts"] = s.drafts;
  j["decode_failed"] = s.decode_failed;
  j["decoded"] = s.decoded;
  j["marked"] = s.marked;
  j["rejected"] = s.rejected;
  j["rejected_mismatch"] = s.rejected_mismatch;
  j["repeated_mentions"] = s.repeated_mentions;
  return j;
}

/// Wall time is left out unless asked for, so identical runs give identical
/// reports.
inline nlohmann::ordered_json to_json(const RunReport& r, bool include_timing = false) {
  nlohmann::ordered_json j;
  j["seed"] = r.seed;
  j["config"] = r.config_echo;
  j["original_sentences"] = r.original_sentences;
  j["augmented_sentences"] = r.augmented_sentences;
  nlohmann::ordered_json ops = nlohmann::ordered_json::object();
  for (const auto& [op, s] : r.per_op) ops[std::string(to_string(op))] = to_json(s);
  j["ops"] = std::move(ops);
  j["totals"] = to_json(r.totals);
  if (include_timing) j["wall_seconds"] = r.wall_seconds;
  return j;
}

inline nlohmann::ordered_json echo(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["input"] = c.input;
  j["format"] = to_string(c.format);
  j["task"] = to_string(c.task);
  auto ops = nlohmann::ordered_json::array();
  for (AugOp op : c.ops) ops.push_back(to_string(op));
  j["ops"] = std::move(ops);
  j["multiple"] = c.multiple;
  j["beam_width"] = c.beam_width;
  j["gamma"] = c.gamma;
  j["max_len"] = c.max_len;
  j["scorer"] = c.scorer.str();
  j["copy_weight"] = c.copy_weight;
  j["output"] = c.output;
  return j;
}

struct RunResult {
  RunReport report;
  /// Augmented sentences grouped by op (cycle order), then by source
  /// sentence and replica.
  std::vector<AnnotatedSentence> augmented;
};

namespace pipeline_detail {

struct ItemOutcome {
  OpStats stats;
  std::optional<AnnotatedSentence> sentence;
};

template <TokenScorer S>
ItemOutcome augment_one(const AnnotatedSentence& source, std::size_t index, AugOp op,
                        std::size_t op_index, std::size_t replica, const EntityPool& pool,
                        const S& scorer, const PipelineConfig& cfg) {
  ItemOutcome out;
  out.stats.attempts = 1;
  Rng rng(derive_seed(cfg.seed, {index, op_index, replica}));
  EntityListDraft draft;
  try {
    draft = apply_op(draft_from_sentence(source, index), op, pool, rng);
  } catch (const DraftError& e) {
    if (e.code() == DraftError::Code::NoCandidate)
      ++out.stats.skipped_no_candidate;
    else
      ++out.stats.skipped_too_few;
    return out;
  }
  out.stats.drafts = 1;

  DecodeResult decoded;
  try {
    const ConditionSequence cond = serialize_condition(draft);
    decoded = decode(scorer, cond.tokens, cfg.decode_config());
  } catch (const Error&) {
    ++out.stats.decode_failed;
    return out;
  }
  out.stats.decoded = 1;

  std::optional<Rejection> first_rejection;
  for (const auto& hyp : decoded.hypotheses) {
    MarkOutcome m = mark(hyp.tokens, draft, cfg.task);
    if (m.marked()) {
      out.stats.marked = 1;
      out.stats.repeated_mentions = m.repeated_mentions();
      out.sentence = m.sentence();
      return out;
    }
    if (!first_rejection) first_rejection = m.rejection();
  }
  out.stats.rejected = 1;
  if (!first_rejection || first_rejection->reason == Rejection::Reason::Mismatch)
    out.stats.rejected_mismatch = 1;
  return out;
}

}  // namespace pipeline_detail

/// Augments `corpus` with an already-constructed scorer. Items are processed
/// on `cfg.threads` workers; results do not depend on the thread count.
template <TokenScorer S>
RunResult augment_corpus(const std::vector<AnnotatedSentence>& corpus, const S& scorer,
                         const PipelineConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto cycle = cfg.op_cycle();
  const EntityPool pool = build_pool(corpus);

  struct Item {
    std::size_t sentence, replica, op_index;
  };
  std::vector<Item> items;
  items.reserve(corpus.size() * cfg.multiple);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    for (std::size_t r = 0; r < cfg.multiple; ++r)
      items.push_back({i, r, (i * cfg.multiple + r) % cycle.size()});

  std::vector<pipeline_detail::ItemOutcome> results(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < items.size();) {
      const Item& it = items[k];
      results[k] = pipeline_detail::augment_one(corpus[it.sentence], it.sentence,
                                                cycle[it.op_index], it.op_index, it.replica,
                                                pool, scorer, cfg);
    }
  };
  const std::size_t n_threads = std::min(cfg.threads, std::max<std::size_t>(1, items.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  RunResult out;
  RunReport& rep = out.report;
  rep.seed = cfg.seed;
  rep.config_echo = echo(cfg);
  rep.original_sentences = corpus.size();
  for (std::size_t oi = 0; oi < cycle.size(); ++oi) {
    OpStats s;
    for (std::size_t k = 0; k < items.size(); ++k) {
      if (items[k].op_index != oi) continue;
      s += results[k].stats;
      if (results[k].sentence) out.augmented.push_back(*results[k].sentence);
    }
    rep.per_op.emplace_back(cycle[oi], s);
    rep.totals += s;
  }
  rep.augmented_sentences = out.augmented.size();
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// A scorer built from configuration: the n-gram model trained on the corpus
/// (optionally mixed with condition copying) or an external client.
class ConfiguredScorer final : public Scorer {
 public:
  ConfiguredScorer(const PipelineConfig& cfg, const std::vector<AnnotatedSentence>& corpus) {
    if (cfg.scorer.kind == ScorerSpec::Kind::NGram) {
      ngram_ = std::make_unique<NGramModel>(train_ngram(training_pairs(corpus), cfg.scorer.order));
      if (cfg.copy_weight > 0.0)
        copy_ = std::make_unique<CopyMixScorer<NGramModel>>(*ngram_, cfg.copy_weight);
    } else {
      external_ = std::make_unique<wire::ExternalScorer>(wire::Endpoint::parse(cfg.scorer.endpoint),
                                                         cfg.scorer.timeout);
      try {
        external_->score({{}, {}, 1});
      } catch (const Error& e) {
        throw PipelineError(std::string("external scorer unavailable: ") + e.what());
      }
    }
  }

  ScoreResponse score(const ScoreRequest& req) const override {
    if (copy_) return copy_->score(req);
    if (ngram_) return ngram_->score(req);
    return external_->score(req);
  }

 private:
  std::unique_ptr<NGramModel> ngram_;
  std::unique_ptr<CopyMixScorer<NGramModel>> copy_;
  std::unique_ptr<wire::ExternalScorer> external_;
};

inline std::vector<AnnotatedSentence> read_corpus(const std::string& path, CorpusFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PipelineError("cannot open input '" + path + "'");
  return parse_corpus(in, format);
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw PipelineError("cannot open output '" + path + "'");
  out << data;
  if (!out) throw PipelineError("write to '" + path + "' failed");
}

/// Original corpus followed by the augmented sentences, in the input format.
inline std::string render_output(const std::vector<AnnotatedSentence>& corpus,
                                 const RunResult& result, CorpusFormat format) {
  std::vector<AnnotatedSentence> all = corpus;
  all.insert(all.end(), result.augmented.begin(), result.augmented.end());
  return emit_corpus(all, format);
}

/// Full run from configuration: reads the input, builds the scorer, writes
/// the augmented corpus to cfg.output when set.
inline RunReport run(const PipelineConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto corpus = read_corpus(cfg.input, cfg.format);
  const ConfiguredScorer scorer(cfg, corpus);
  RunResult result = augment_corpus(corpus, scorer, cfg);
  if (!cfg.output.empty()) write_file(cfg.output, render_output(corpus, result, cfg.format));
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result.report;
}

/// One complete run per gamma, all sharing the seed. The scorer is built once.
inline std::vector<RunResult> sweep_gamma(const PipelineConfig& cfg,
                                          const std::vector<double>& gammas,
                                          const std::vector<AnnotatedSentence>& corpus,
                                          const Scorer& scorer) {
  if (gammas.empty()) throw PipelineError("gamma sweep needs at least one value");
  std::vector<RunResult> out;
  for (double g : gammas) {
    PipelineConfig c = cfg;
    c.gamma = g;
    out.push_back(augment_corpus(corpus, scorer, c));
  }
  return out;
}

/// Output path for one gamma of a sweep: "out.bio" -> "out.gamma-10.bio".
inline std::string sweep_output_path(const std::string& path, double gamma) {
  std::ostringstream g;
  g << gamma;
  const auto slash = path.find_last_of('/');
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash) ||
      dot == (slash == std::string::npos ? 0 : slash + 1))
    return path + ".gamma-" + g.str();
  return path.substr(0, dot) + ".gamma-" + g.str() + path.substr(dot);
}

}  // namespace ner_aug
