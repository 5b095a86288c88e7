#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ner_aug/pipeline.hpp"

using namespace ner_aug;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = NER_AUG_FIXTURE_DIR;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PipelineConfig toy_config() {
  PipelineConfig cfg;
  cfg.input = kFixtures + "/toy20.bio";
  cfg.seed = 7;
  return cfg;
}

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("ner_aug_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(PipelineConfig, Validation) {
  auto bad = [](auto mutate) {
    PipelineConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), Error);
  };
  bad([](PipelineConfig& c) { c.multiple = 0; });
  bad([](PipelineConfig& c) { c.ops.clear(); });
  bad([](PipelineConfig& c) { c.threads = 0; });
  bad([](PipelineConfig& c) { c.task = TaskKind::Nested; });
  bad([](PipelineConfig& c) { c.beam_width = 0; });
  bad([](PipelineConfig& c) { c.gamma = -1; });
  bad([](PipelineConfig& c) { c.copy_weight = 1.0; });
  PipelineConfig ok;
  ok.format = CorpusFormat::Spans;
  ok.task = TaskKind::Discontinuous;
  EXPECT_NO_THROW(ok.validate());
}

TEST(PipelineConfig, OpCycle) {
  PipelineConfig c;
  EXPECT_EQ(c.op_cycle(), (std::vector<AugOp>{AugOp::Add, AugOp::Delete, AugOp::Replace, AugOp::Swap}));
  c.ops = {AugOp::Swap, AugOp::All, AugOp::None};
  EXPECT_EQ(c.op_cycle(),
            (std::vector<AugOp>{AugOp::Swap, AugOp::Add, AugOp::Delete, AugOp::Replace, AugOp::None}));
}

TEST(ScorerSpec, Parse) {
  EXPECT_EQ(ScorerSpec::parse("ngram:4").order, 4u);
  EXPECT_EQ(ScorerSpec::parse("ngram").order, 3u);
  auto ext = ScorerSpec::parse("external:tcp://localhost:9000");
  EXPECT_EQ(ext.kind, ScorerSpec::Kind::External);
  EXPECT_EQ(ext.str(), "external:tcp://localhost:9000");
  for (const char* bad : {"ngram:0", "ngram:x", "ngram:", "external:", "external:nohost", "gpt"})
    EXPECT_THROW(ScorerSpec::parse(bad), Error) << bad;
}

TEST(SweepOutputPath, InsertsGammaBeforeExtension) {
  EXPECT_EQ(sweep_output_path("out.bio", 10), "out.gamma-10.bio");
  EXPECT_EQ(sweep_output_path("dir.v1/out", 0.5), "dir.v1/out.gamma-0.5");
  EXPECT_EQ(sweep_output_path("a/b.jsonl", 0), "a/b.gamma-0.jsonl");
  EXPECT_EQ(sweep_output_path(".hidden", 1), ".hidden.gamma-1");
}

TEST(Pipeline, ToyRunIsConsistentAndBounded) {
  const auto cfg = toy_config();
  const auto corpus = read_corpus(cfg.input, cfg.format);
  ASSERT_EQ(corpus.size(), 20u);
  const ConfiguredScorer scorer(cfg, corpus);
  const RunResult r = augment_corpus(corpus, scorer, cfg);
  EXPECT_TRUE(r.report.consistent());
  EXPECT_EQ(r.report.totals.attempts, 60u);
  EXPECT_LE(r.augmented.size(), 60u);
  EXPECT_GT(r.augmented.size(), 0u);
  for (const auto& s : r.augmented) EXPECT_TRUE(validate(s, TaskKind::Flat).empty());
  // Output is the input followed by the augmented part and parses back.
  const auto text = render_output(corpus, r, CorpusFormat::Bio);
  EXPECT_EQ(parse_bio(text).size(), 20u + r.augmented.size());
  EXPECT_EQ(text.substr(0, slurp(cfg.input).size()), slurp(cfg.input));
}

TEST(Pipeline, DeterministicAcrossThreadCounts) {
  auto cfg = toy_config();
  const auto corpus = read_corpus(cfg.input, cfg.format);
  const ConfiguredScorer scorer(cfg, corpus);
  const RunResult one = augment_corpus(corpus, scorer, cfg);
  cfg.threads = 4;
  const RunResult four = augment_corpus(corpus, scorer, cfg);
  EXPECT_EQ(one.augmented, four.augmented);
  EXPECT_EQ(one.report.totals, four.report.totals);
  cfg.seed = 8;
  const RunResult other = augment_corpus(corpus, scorer, cfg);
  EXPECT_EQ(other.report.totals.attempts, one.report.totals.attempts);
}

TEST(Pipeline, SingleSweepEqualsRun) {
  auto cfg = toy_config();
  cfg.gamma = 0.5;
  const auto corpus = read_corpus(cfg.input, cfg.format);
  const ConfiguredScorer scorer(cfg, corpus);
  const auto sweep = sweep_gamma(cfg, {0.5}, corpus, scorer);
  const auto direct = augment_corpus(corpus, scorer, cfg);
  ASSERT_EQ(sweep.size(), 1u);
  EXPECT_EQ(sweep[0].augmented, direct.augmented);
  EXPECT_EQ(to_json(sweep[0].report), to_json(direct.report));
  EXPECT_THROW(sweep_gamma(cfg, {}, corpus, scorer), PipelineError);
}

TEST(Pipeline, SpansInputWithDiscontinuousTask) {
  PipelineConfig cfg;
  cfg.input = kFixtures + "/mixed.jsonl";
  cfg.format = CorpusFormat::Spans;
  cfg.task = TaskKind::Discontinuous;
  cfg.copy_weight = 0.3;
  cfg.multiple = 4;
  const auto corpus = read_corpus(cfg.input, cfg.format);
  const ConfiguredScorer scorer(cfg, corpus);
  const RunResult r = augment_corpus(corpus, scorer, cfg);
  EXPECT_TRUE(r.report.consistent());
  for (const auto& s : r.augmented) EXPECT_TRUE(validate(s, TaskKind::Discontinuous).empty());
  EXPECT_EQ(parse_spans(render_output(corpus, r, CorpusFormat::Spans)).size(),
            corpus.size() + r.augmented.size());
}

TEST(Pipeline, ExternalScorerMatchesInProcess) {
  auto cfg = toy_config();
  cfg.multiple = 1;
  const auto corpus = read_corpus(cfg.input, cfg.format);
  const NGramModel model = train_ngram(training_pairs(corpus), cfg.scorer.order);
  wire::LineServer server(wire::scorer_handler(model));
  const RunResult local = augment_corpus(corpus, model, cfg);

  auto ext_cfg = cfg;
  ext_cfg.scorer = ScorerSpec::parse("external:tcp://" + server.endpoint().str());
  ext_cfg.threads = 3;
  const ConfiguredScorer remote(ext_cfg, corpus);
  const RunResult via_wire = augment_corpus(corpus, remote, ext_cfg);
  EXPECT_EQ(local.augmented, via_wire.augmented);
  EXPECT_EQ(local.report.totals, via_wire.report.totals);
}

TEST(Pipeline, UnreachableExternalScorerFailsAtStartup) {
  std::string port;
  {
    wire::LineServer probe([](const std::string& s) { return s; });
    port = std::to_string(probe.port());
  }
  auto cfg = toy_config();
  cfg.scorer = ScorerSpec::parse("external:127.0.0.1:" + port);
  cfg.scorer.timeout = std::chrono::milliseconds(500);
  EXPECT_THROW(ConfiguredScorer(cfg, read_corpus(cfg.input, cfg.format)), PipelineError);
}

TEST(Pipeline, NoEntitySentencesAreSkipped) {
  auto corpus = parse_bio("a\tO\nb\tO\n\nEU\tB-ORG\nsaid\tO\n");
  PipelineConfig cfg;
  cfg.ops = {AugOp::Delete};
  cfg.multiple = 2;
  UniformScorer scorer({"EU", "said", std::string(kEos)});
  const RunResult r = augment_corpus(corpus, scorer, cfg);
  EXPECT_EQ(r.report.totals.attempts, 4u);
  EXPECT_EQ(r.report.totals.skipped_too_few, 4u);
  EXPECT_TRUE(r.augmented.empty());
  EXPECT_TRUE(r.report.consistent());
}

TEST(Cli, RunsAndIsByteDeterministic) {
  const std::string bin = NER_AUG_AUGMENT_BIN;
  const auto out1 = scratch("a.bio"), out2 = scratch("b.bio");
  const auto rep1 = scratch("a.json"), rep2 = scratch("b.json");
  auto cmd = [&](const fs::path& out, const fs::path& rep) {
    return bin + " --input " + kFixtures + "/toy20.bio --seed 3 --out " + out.string() +
           " --report " + rep.string() + " 2>/dev/null";
  };
  ASSERT_EQ(std::system(cmd(out1, rep1).c_str()), 0);
  ASSERT_EQ(std::system(cmd(out2, rep2).c_str()), 0);
  EXPECT_EQ(slurp(out1), slurp(out2));
  const auto j1 = nlohmann::json::parse(slurp(rep1));
  EXPECT_EQ(j1["totals"]["attempts"], 60);
  EXPECT_FALSE(j1.contains("wall_seconds"));
  // Identical except for the output path in the config echo.
  auto j2 = nlohmann::json::parse(slurp(rep2));
  j2["config"]["output"] = j1["config"]["output"];
  EXPECT_EQ(j1, j2);

  const auto sweep_out = scratch("s.bio");
  const auto sweep_rep = scratch("s.json");
  const std::string sweep = bin + " --input " + kFixtures + "/toy20.bio --out " +
                            sweep_out.string() + " --report " + sweep_rep.string() +
                            " --sweep-gamma 0,10 2>/dev/null";
  ASSERT_EQ(std::system(sweep.c_str()), 0);
  EXPECT_TRUE(fs::exists(scratch("s.gamma-0.bio")));
  EXPECT_TRUE(fs::exists(scratch("s.gamma-10.bio")));
  EXPECT_EQ(nlohmann::json::parse(slurp(sweep_rep))["sweep"].size(), 2u);

  const std::string bad = bin + " --input " + kFixtures + "/toy20.bio --out " +
                          out1.string() + " --multiple 0 2>/dev/null";
  EXPECT_NE(std::system(bad.c_str()), 0);
  const std::string nested = bin + " --input " + kFixtures + "/toy20.bio --out " +
                             out1.string() + " --task nested 2>/dev/null";
  EXPECT_NE(std::system(nested.c_str()), 0);
  fs::remove_all(out1.parent_path());
}
