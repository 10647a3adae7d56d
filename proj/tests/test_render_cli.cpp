#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "cli.hpp"
#include "docsim/corpus.hpp"
#include "docsim/geometry.hpp"
#include "docsim/render.hpp"
#include "support/oracles.hpp"

using namespace docsim;

namespace {

Mat mat_of(std::vector<std::vector<double>> rows) {
  Mat m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j)
      m.at(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

int count_substr(const std::string& hay, const std::string& needle) {
  int count = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos;
       pos = hay.find(needle, pos + 1))
    ++count;
  return count;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("a perfect page renders only green and yellow") {
  Rng rng(3);
  Page p = oracles::random_page(rng, 6);
  for (auto& b : p.boxes) b.labels.clear();
  p.boxes[0].labels = {1};
  p.boxes[3].labels = {2};
  Mat truth = labels_matrix(p, 5);
  std::string svg = page_svg(p, truth, truth);
  CHECK(count_substr(svg, "#d43b3b\" fill-opacity") == 0);  // no red boxes
  CHECK(count_substr(svg, "#3b6fd4\" fill-opacity") == 0);  // no blue boxes
  CHECK(count_substr(svg, "#2e8b57\" fill-opacity") == 2);
  CHECK(count_substr(svg, "#e8c547\" fill-opacity") == 4);
}

TEST_CASE("missing predictions paint every annotated box red") {
  Rng rng(5);
  Page p = oracles::random_page(rng, 5);
  for (auto& b : p.boxes) b.labels.clear();
  p.boxes[1].labels = {0};
  p.boxes[4].labels = {3};
  Mat truth = labels_matrix(p, 5);
  Mat empty(truth.rows, truth.cols);
  std::string svg = page_svg(p, empty, truth);
  CHECK(count_substr(svg, "#d43b3b\" fill-opacity") == 2);
  CHECK(count_substr(svg, "#e8c547\" fill-opacity") == 3);
}

TEST_CASE("box colors follow the miss > extra > tp > tn precedence") {
  Rng rng(7);
  Page p = oracles::random_page(rng, 3);
  for (auto& b : p.boxes) b.labels.clear();
  p.boxes[0].labels = {};      // predicted extra -> blue
  p.boxes[1].labels = {1, 2};  // one class missed -> red even though one hit
  p.boxes[2].labels = {};      // clean -> yellow
  Mat truth = labels_matrix(p, 4);
  Mat pred = mat_of({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 0, 0}});
  std::string svg = page_svg(p, pred, truth);
  CHECK(count_substr(svg, "#3b6fd4\" fill-opacity") == 1);
  CHECK(count_substr(svg, "#d43b3b\" fill-opacity") == 1);
  CHECK(count_substr(svg, "#e8c547\" fill-opacity") == 1);
  CHECK(count_substr(svg, "#2e8b57\" fill-opacity") == 0);

  // Every box appears exactly once (plus background and 4 legend rects).
  CHECK(count_substr(svg, "<rect") == 3 + 1 + 4);
}

TEST_CASE("rendering is byte-identical across runs") {
  Rng rng(9);
  Page p = oracles::random_page(rng, 10);
  for (auto& b : p.boxes) b.labels.clear();
  p.boxes[2].labels = {1};
  Mat truth = labels_matrix(p, 3);
  CHECK(page_svg(p, truth, truth) == page_svg(p, truth, truth));

  GeometryConfig geom;
  NeighborIndex idx = neighborhood_graph(p, geom);
  CHECK(graph_svg(p, idx) == graph_svg(p, idx));
}

TEST_CASE("the CLI drives the whole pipeline end to end") {
  const std::string dir = "/tmp/docsim_cli_test";
  std::remove((dir + "/corpus.jsonl").c_str());
  (void)system(("mkdir -p " + dir).c_str());

  std::ofstream cfg(dir + "/synth.json");
  cfg << R"({"layout_family_count":2,"docs_per_family":6,"boxes_min":12,"boxes_max":16,)"
      << R"("label_density":0.18,"class_count":8,"seed":5})";
  cfg.close();

  std::string corpus_path = dir + "/corpus.jsonl";
  CHECK(cli::run({"gen", "--config", dir + "/synth.json", "--out", corpus_path}) == 0);

  // Deterministic bytes for the same config.
  std::string again = dir + "/corpus2.jsonl";
  CHECK(cli::run({"gen", "--config", dir + "/synth.json", "--out", again}) == 0);
  CHECK(slurp(corpus_path) == slurp(again));

  CHECK(cli::run({"split", "--corpus", corpus_path, "--ratios", "0.7,0.15,0.15", "--seed", "3",
                  "--classes", "8"}) == 0);

  // Bad ratios are a validation error.
  CHECK(cli::run({"split", "--corpus", corpus_path, "--ratios", "0.5,0.1,0.1"}) == 1);

  CHECK(cli::run({"nearest", "--corpus", corpus_path, "--out", dir + "/nearest.jsonl",
                  "--split", "test", "--classes", "8"}) == 0);
  std::string triples = slurp(dir + "/nearest.jsonl");
  CHECK(triples.find("query") != std::string::npos);

  // Neighbor-graph rendering via the `render graph` form.
  Corpus c = read_corpus(corpus_path, 8);
  std::string page_id = c.pages[0].doc_id;
  CHECK(cli::run({"render", "graph", "--corpus", corpus_path, "--page", page_id, "--out",
                  dir + "/graph.svg", "--classes", "8"}) == 0);
  CHECK(slurp(dir + "/graph.svg").find("<svg") == 0);

  // Train a tiny simple model, then evaluate and render predictions.
  std::ofstream mcfg(dir + "/model.json");
  mcfg << R"({"block":{"feature_dim":8,"heads":2,"char_channels":[4],"gcn_width":8}})";
  mcfg.close();
  CHECK(cli::run({"train", "--arch", "simple", "--config", dir + "/model.json", "--corpus",
                  corpus_path, "--out", dir + "/ckpt.json", "--history", dir + "/history.csv",
                  "--classes", "8", "--seed", "2", "--max-epochs", "2", "--patience", "5"}) ==
        0);
  CHECK(slurp(dir + "/history.csv").find("epoch,train_loss") == 0);

  CHECK(cli::run({"eval", "--ckpt", dir + "/ckpt.json", "--corpus", corpus_path, "--split",
                  "test", "--report", dir + "/report.json", "--classes", "8"}) == 0);
  std::string report = slurp(dir + "/report.json");
  CHECK(report.find("micro_f1") != std::string::npos);
  CHECK(report.find("wall_seconds") == std::string::npos);

  // The split command rewrote the corpus in place; reload to find a test page.
  std::string test_page;
  Corpus after = read_corpus(corpus_path, 8);
  for (const Page& p : after.pages)
    if (p.split == Split::kTest) {
      test_page = p.doc_id;
      break;
    }
  REQUIRE(!test_page.empty());
  CHECK(cli::run({"render", "--corpus", corpus_path, "--page", test_page, "--ckpt",
                  dir + "/ckpt.json", "--out", dir + "/page.svg", "--classes", "8"}) == 0);
  CHECK(slurp(dir + "/page.svg").find("<svg") == 0);

  // Missing files surface as exit code 1.
  CHECK(cli::run({"eval", "--ckpt", dir + "/nope.json", "--corpus", corpus_path}) == 1);
  CHECK(cli::run({"gen", "--config", dir + "/missing.json", "--out", again}) == 1);

  // A small ablation grid through the CLI.
  std::ofstream aspec(dir + "/ablate.json");
  aspec << R"({"budget":{"max_epochs":2,"patience":5,"seed":4},"cells":[)"
        << R"({"name":"s1","model":{"arch":"simple","block":{"feature_dim":8,"heads":2,)"
        << R"("char_channels":[4],"gcn_width":8}}}]})";
  aspec.close();
  CHECK(cli::run({"ablate", "--spec", dir + "/ablate.json", "--corpus", corpus_path,
                  "--out-json", dir + "/table.json", "--out-text", dir + "/table.txt",
                  "--classes", "8", "--jobs", "2"}) == 0);
  CHECK(slurp(dir + "/table.json").find("\"ok\": true") != std::string::npos);
  CHECK(slurp(dir + "/table.txt").find("s1") != std::string::npos);
}
