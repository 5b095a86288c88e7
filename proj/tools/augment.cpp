// augment: entity-list augmentation and conditioned generation for NER corpora.

#include <chrono>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ner_aug/pipeline.hpp"

namespace {

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> parse_gammas(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : split_commas(s)) {
    std::size_t used = 0;
    double g = std::stod(item, &used);
    if (used != item.size()) throw ner_aug::PipelineError("bad gamma '" + item + "'");
    out.push_back(g);
  }
  if (out.empty()) throw ner_aug::PipelineError("--sweep-gamma needs at least one value");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace ner_aug;

  CLI::App app{"Augment an NER corpus by generating text from augmented entity lists"};
  std::string format = "bio", task = "flat", ops = "all", scorer = "ngram:3";
  std::string report_path, sweep;
  long long timeout_ms = 30000;
  bool report_timing = false;
  PipelineConfig cfg;

  app.add_option("--input", cfg.input, "input corpus")->required();
  app.add_option("--format", format, "corpus format")
      ->check(CLI::IsMember({"bio", "spans"}))
      ->capture_default_str();
  app.add_option("--task", task, "task kind")
      ->check(CLI::IsMember({"flat", "nested", "disc"}))
      ->capture_default_str();
  app.add_option("--ops", ops, "comma-separated: none,add,delete,replace,swap,all")
      ->capture_default_str();
  app.add_option("--multiple", cfg.multiple, "augmented sentences attempted per input")
      ->capture_default_str();
  app.add_option("--beam-width", cfg.beam_width, "beam width B")->capture_default_str();
  app.add_option("--gamma", cfg.gamma, "diversity penalty weight")->capture_default_str();
  app.add_option("--max-len", cfg.max_len, "generation length cap")->capture_default_str();
  app.add_option("--seed", cfg.seed, "global random seed")->capture_default_str();
  app.add_option("--scorer", scorer, "ngram:ORDER or external:HOST:PORT")
      ->capture_default_str();
  app.add_option("--timeout-ms", timeout_ms, "external scorer request timeout")
      ->capture_default_str();
  app.add_option("--copy-weight", cfg.copy_weight,
                 "mix n-gram scores with copying condition tokens (0 disables)")
      ->capture_default_str();
  app.add_option("--threads", cfg.threads, "worker threads")->capture_default_str();
  app.add_option("--out", cfg.output, "augmented corpus output")->required();
  app.add_option("--report", report_path, "write the run report (JSON) here");
  app.add_flag("--report-timing", report_timing, "include wall time in the report");
  app.add_option("--sweep-gamma", sweep, "comma-separated gammas; one run per value");

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.format = parse_format(format);
    cfg.task = parse_task(task);
    cfg.ops.clear();
    for (const auto& op : split_commas(ops)) cfg.ops.push_back(parse_aug_op(op));
    cfg.scorer = ScorerSpec::parse(scorer);
    cfg.scorer.timeout = std::chrono::milliseconds(timeout_ms);
    cfg.validate();

    const auto corpus = read_corpus(cfg.input, cfg.format);
    const ConfiguredScorer model(cfg, corpus);

    nlohmann::ordered_json report_json;
    if (sweep.empty()) {
      const auto start = std::chrono::steady_clock::now();
      RunResult result = augment_corpus(corpus, model, cfg);
      write_file(cfg.output, render_output(corpus, result, cfg.format));
      result.report.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      report_json = to_json(result.report, report_timing);
      std::cerr << "augment: " << corpus.size() << " input, "
                << result.report.augmented_sentences << " augmented sentences -> "
                << cfg.output << "\n";
    } else {
      const auto gammas = parse_gammas(sweep);
      const auto results = sweep_gamma(cfg, gammas, corpus, model);
      report_json["sweep"] = nlohmann::ordered_json::array();
      for (std::size_t i = 0; i < gammas.size(); ++i) {
        const std::string path = sweep_output_path(cfg.output, gammas[i]);
        write_file(path, render_output(corpus, results[i], cfg.format));
        nlohmann::ordered_json entry;
        entry["gamma"] = gammas[i];
        entry["output"] = path;
        entry["report"] = to_json(results[i].report, report_timing);
        report_json["sweep"].push_back(std::move(entry));
        std::cerr << "augment: gamma " << gammas[i] << ": "
                  << results[i].report.augmented_sentences << " augmented sentences -> "
                  << path << "\n";
      }
    }
    if (!report_path.empty()) write_file(report_path, report_json.dump() + "\n");
  } catch (const std::exception& e) {
    std::cerr << "augment: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
