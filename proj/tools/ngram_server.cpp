// ngram_server: serves an n-gram scorer trained on a corpus over the scorer
// wire protocol, so `augment --scorer external:...` can be exercised locally.

#include <csignal>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "ner_aug/pipeline.hpp"

namespace {
volatile std::sig_atomic_t g_stop = 0;
void on_signal(int) { g_stop = 1; }
}  // namespace

int main(int argc, char** argv) {
  using namespace ner_aug;

  CLI::App app{"Serve an n-gram scorer over the scorer wire protocol"};
  std::string input, format = "bio", host = "127.0.0.1";
  std::size_t order = 3;
  std::uint16_t port = 0;
  double copy_weight = 0.0;
  app.add_option("--input", input, "training corpus")->required();
  app.add_option("--format", format, "corpus format")
      ->check(CLI::IsMember({"bio", "spans"}))
      ->capture_default_str();
  app.add_option("--order", order, "n-gram order")->capture_default_str();
  app.add_option("--copy-weight", copy_weight, "condition-copy mixture weight")
      ->capture_default_str();
  app.add_option("--host", host, "bind address")->capture_default_str();
  app.add_option("--port", port, "port (0 picks a free one)")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    const auto corpus = read_corpus(input, parse_format(format));
    const NGramModel model = train_ngram(training_pairs(corpus), order);
    const CopyMixScorer<NGramModel> mixed(model, copy_weight);
    wire::LineServer server(wire::scorer_handler(mixed), host, port);
    std::cout << "listening on " << server.endpoint().str() << std::endl;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) ::pause();
  } catch (const std::exception& e) {
    std::cerr << "ngram_server: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
