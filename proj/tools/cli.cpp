#include "cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "docsim/architectures.hpp"
#include "docsim/baselines.hpp"
#include "docsim/checkpoint.hpp"
#include "docsim/corpus.hpp"
#include "docsim/eval.hpp"
#include "docsim/neighbors.hpp"
#include "docsim/render.hpp"
#include "docsim/verification.hpp"

namespace docsim::cli {

namespace {

using nlohmann::json;

SynthConfig synth_config_from_file(const std::string& path) {
  SynthConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream f(path);
  if (!f) throw ValidationError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ParseError(std::string("synth config: ") + e.what());
  }
  cfg.layout_family_count = j.value("layout_family_count", cfg.layout_family_count);
  cfg.docs_per_family = j.value("docs_per_family", cfg.docs_per_family);
  cfg.boxes_min = j.value("boxes_min", cfg.boxes_min);
  cfg.boxes_max = j.value("boxes_max", cfg.boxes_max);
  cfg.label_density = j.value("label_density", cfg.label_density);
  cfg.anchor_jitter = j.value("anchor_jitter", cfg.anchor_jitter);
  cfg.text_jitter = j.value("text_jitter", cfg.text_jitter);
  cfg.class_count = j.value("class_count", cfg.class_count);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

std::vector<double> parse_ratios(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(std::stod(part));
  if (out.size() != 3) throw ConfigError("--ratios needs three comma-separated values");
  return out;
}

RetrievalPolicy policy_from(const std::string& mode, const std::string& scope) {
  RetrievalPolicy p;
  if (mode == "embedding") p.mode = RetrievalMode::kEmbedding;
  else if (mode == "random") p.mode = RetrievalMode::kRandom;
  else if (mode == "oracle-best") p.mode = RetrievalMode::kOracleBest;
  else throw ConfigError("unknown policy: " + mode);
  if (scope == "prev") p.scope = CandidateScope::kSameSplitPrevious;
  else if (scope == "prev+train") p.scope = CandidateScope::kPlusTrainSet;
  else throw ConfigError("unknown scope: " + scope);
  return p;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open for writing: " + path);
  f << content;
  if (!f) throw ValidationError("write failed: " + path);
}

int find_page(const Corpus& corpus, const std::string& id) {
  std::string doc = id;
  int page_no = -1;
  auto hash = id.find('#');
  if (hash != std::string::npos) {
    doc = id.substr(0, hash);
    page_no = std::stoi(id.substr(hash + 1));
  }
  for (int i = 0; i < static_cast<int>(corpus.pages.size()); ++i) {
    const Page& p = corpus.pages[static_cast<std::size_t>(i)];
    if (p.doc_id == doc && (page_no < 0 || p.page_no == page_no)) return i;
  }
  throw ValidationError("page not found: " + id);
}

struct TrainArgs {
  std::string arch = "qa";
  std::string config_path, corpus_path, out_path, history_path;
  std::string policy = "embedding", scope = "prev", target = "classes";
  bool qa_no_query_all = false, qa_no_skip = false, qa_no_filter = false, qa_no_fov = false;
  int classes = 35;
  std::uint64_t seed = 1;
  int max_epochs = 200, patience = 20, batch = 4;
  double lr = 1e-3, augment = 0.01;
};

ModelConfig model_config_from(const TrainArgs& a) {
  ModelConfig mc;
  if (!a.config_path.empty()) {
    std::ifstream f(a.config_path);
    if (!f) throw ValidationError("cannot open config file: " + a.config_path);
    std::stringstream ss;
    ss << f.rdbuf();
    mc = model_config_from_json_text(ss.str());
  }
  mc.arch = a.arch;
  mc.class_count = a.classes;
  if (a.qa_no_query_all) mc.qa.query_all = false;
  if (a.qa_no_skip) mc.qa.skip_connection = false;
  if (a.qa_no_filter) mc.qa.filter = false;
  if (a.qa_no_fov) mc.qa.field_of_view = false;
  auto t = target_from_name(a.target);
  if (!t) throw ConfigError("unknown target: " + a.target);
  mc.target = *t;
  mc.init_seed = a.seed;
  return mc;
}

int cmd_gen(const std::string& config_path, const std::string& out,
            std::optional<std::uint64_t> seed) {
  SynthConfig cfg = synth_config_from_file(config_path);
  if (seed) cfg.seed = *seed;
  Corpus corpus = generate_synthetic(cfg);
  write_corpus(corpus, out);
  std::printf("wrote %zu pages (%d families, class_count %d) to %s\n", corpus.pages.size(),
              cfg.layout_family_count, cfg.class_count, out.c_str());
  return 0;
}

int cmd_split(const std::string& corpus_path, const std::string& out,
              const std::string& ratios_text, std::uint64_t seed, int classes) {
  Corpus corpus = read_corpus(corpus_path, classes);
  std::vector<double> r = parse_ratios(ratios_text);
  split_corpus(corpus, r[0], r[1], r[2], seed);
  write_corpus(corpus, out.empty() ? corpus_path : out);
  long tr = corpus.pages_in_split(Split::kTrain).size();
  long va = corpus.pages_in_split(Split::kValidation).size();
  long te = corpus.pages_in_split(Split::kTest).size();
  std::printf("split pages: train=%ld validation=%ld test=%ld\n", tr, va, te);
  return 0;
}

int cmd_train(const TrainArgs& a) {
  Corpus corpus = read_corpus(a.corpus_path, a.classes);
  validate_corpus(corpus);
  ModelConfig mc = model_config_from(a);
  std::unique_ptr<ExtractionModel> model = make_model(mc);
  RetrievalPolicy policy = policy_from(a.policy, a.scope);
  TrainBudget budget;
  budget.max_epochs = a.max_epochs;
  budget.patience = a.patience;
  budget.batch_pages = a.batch;
  budget.learning_rate = a.lr;
  budget.augment_rate = a.augment;
  budget.seed = a.seed;

  TrainResult result;
  if (model->params().size() > 0) {
    result = train_loop(*model, corpus, policy, budget);
    std::printf("trained %zu epochs, best epoch %d (val loss %.6f)\n", result.history.size(),
                result.best_epoch, result.best_val_loss);
    std::printf("retrieval audit: %ld nearest-page selections, %ld constraint violations\n",
                result.pairs_selected, result.pair_violations);
  } else {
    std::printf("%s has no trainable parameters; saving as-is\n", mc.arch.c_str());
  }
  save_checkpoint(a.out_path, *model);
  std::printf("checkpoint written to %s (config %s)\n", a.out_path.c_str(),
              config_hash(mc).c_str());
  if (!a.history_path.empty()) write_text_file(a.history_path, history_csv(result.history));
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& corpus_path, const std::string& split,
             const std::string& report_path, const std::string& policy_name,
             const std::string& scope_name, std::uint64_t seed, bool timings, int classes) {
  Corpus corpus = read_corpus(corpus_path, classes);
  std::unique_ptr<ExtractionModel> model = load_checkpoint(ckpt);
  auto sp = split_from_name(split);
  if (!sp || *sp == Split::kUnassigned) throw ConfigError("unknown split: " + split);
  EvalReport report =
      evaluate_model(*model, corpus, *sp, policy_from(policy_name, scope_name), seed);
  std::fputs(eval_report_text(report).c_str(), stdout);
  if (!report_path.empty())
    write_text_file(report_path, eval_report_json(report, timings));
  return 0;
}

int cmd_nearest(const std::string& corpus_path, const std::string& out,
                const std::string& split, const std::string& policy_name,
                const std::string& scope_name, std::uint64_t seed, int classes) {
  Corpus corpus = read_corpus(corpus_path, classes);
  auto sp = split_from_name(split);
  if (!sp) throw ConfigError("unknown split: " + split);
  std::vector<int> pages = corpus.pages_in_split(*sp);
  if (pages.empty()) throw ConfigError("split has no pages: " + split);
  std::vector<PageEmbedding> embeddings = embed_corpus(corpus);
  RetrievalPolicy policy = policy_from(policy_name, scope_name);

  std::vector<int> order_local = make_epoch_order(static_cast<int>(pages.size()), seed, 0x00e7a1);
  RetrievalContext ctx;
  ctx.corpus = &corpus;
  ctx.embeddings = &embeddings;
  for (int lo : order_local) ctx.epoch_order.push_back(pages[static_cast<std::size_t>(lo)]);
  if (policy.scope == CandidateScope::kPlusTrainSet && *sp != Split::kTrain)
    ctx.extra_candidates = corpus.pages_in_split(Split::kTrain);

  Rng rng(seed ^ 0xe5a1ULL);
  std::ostringstream os;
  for (std::size_t pos = 0; pos < ctx.epoch_order.size(); ++pos) {
    int q = ctx.epoch_order[pos];
    std::optional<int> n = nearest_page(q, static_cast<int>(pos), ctx, policy, rng);
    json j;
    const Page& qp = corpus.pages[static_cast<std::size_t>(q)];
    j["query"] = qp.doc_id + "#" + std::to_string(qp.page_no);
    if (n) {
      const Page& np = corpus.pages[static_cast<std::size_t>(*n)];
      j["nearest"] = np.doc_id + "#" + std::to_string(np.page_no);
      j["distance"] = embedding_distance(embeddings[static_cast<std::size_t>(q)],
                                         embeddings[static_cast<std::size_t>(*n)]);
    } else {
      j["nearest"] = nullptr;
    }
    os << j.dump() << "\n";
  }
  write_text_file(out, os.str());
  std::printf("wrote %zu nearest-page records to %s\n", ctx.epoch_order.size(), out.c_str());
  return 0;
}

int cmd_render(bool graph_mode, const std::string& corpus_path, const std::string& page_id,
               const std::string& ckpt, const std::string& out, int neighbors, int classes) {
  Corpus corpus = read_corpus(corpus_path, classes);
  int page_idx = find_page(corpus, page_id);
  const Page& page = corpus.pages[static_cast<std::size_t>(page_idx)];

  if (graph_mode) {
    GeometryConfig geom;
    geom.neighbors_per_edge = neighbors;
    render_graph_svg(page, neighborhood_graph(page, geom), out);
    std::printf("wrote neighbor graph of %s to %s\n", page_id.c_str(), out.c_str());
    return 0;
  }

  if (ckpt.empty()) throw ConfigError("prediction rendering needs --ckpt");
  std::unique_ptr<ExtractionModel> model = load_checkpoint(ckpt);

  // Rendering picks the embedding-nearest other-document page of the same
  // split, without the training-order constraint.
  const Page* near = nullptr;
  int near_idx = -1;
  if (model->uses_pair()) {
    std::vector<PageEmbedding> embeddings = embed_corpus(corpus);
    double best = -1.0;
    for (int i = 0; i < static_cast<int>(corpus.pages.size()); ++i) {
      const Page& cand = corpus.pages[static_cast<std::size_t>(i)];
      if (cand.doc_id == page.doc_id || cand.split != page.split) continue;
      double d = embedding_distance(embeddings[static_cast<std::size_t>(page_idx)],
                                    embeddings[static_cast<std::size_t>(i)]);
      if (best < 0.0 || d < best) {
        best = d;
        near_idx = i;
      }
    }
    if (near_idx >= 0) near = &corpus.pages[static_cast<std::size_t>(near_idx)];
  }

  PairBuilderConfig pb;
  pb.geometry.neighbors_per_edge = model->config().neighbors_per_edge;
  pb.geometry.fov_k = model->config().fov_k;
  pb.geometry.fov_max_dist = model->config().fov_max_dist;
  pb.target = model->config().target;
  pb.class_count = model->config().class_count;
  Rng rng(0);
  PairSample sample = build_pair_sample(page, near, pb, rng, page_idx, near_idx);
  Mat pred = model->predict(sample);
  for (double& x : pred.v) x = x > 0.5 ? 1.0 : 0.0;
  render_page_svg(page, pred, sample.ref_labels, out);
  std::printf("wrote prediction rendering of %s to %s\n", page_id.c_str(), out.c_str());
  return 0;
}

int cmd_gradcheck(bool quick) {
  int reps = quick ? 3 : 20;
  bool all_pass = true;
  std::printf("%-24s %14s %10s %s\n", "check", "max_rel_err", "tolerance", "status");
  for (const GradCheckEntry& e : run_primitive_grad_checks(reps)) {
    std::printf("%-24s %14.3e %10.0e %s\n", e.name.c_str(), e.max_rel_err, e.tolerance,
                e.pass ? "ok" : "FAIL");
    all_pass = all_pass && e.pass;
  }
  for (const GradCheckEntry& e : run_architecture_grad_checks()) {
    std::printf("%-24s %14.3e %10.0e %s\n", e.name.c_str(), e.max_rel_err, e.tolerance,
                e.pass ? "ok" : "FAIL");
    all_pass = all_pass && e.pass;
  }
  if (!all_pass) {
    std::fprintf(stderr, "gradient check failed\n");
    return 2;
  }
  return 0;
}

int cmd_ablate(const std::string& spec_path, const std::string& corpus_path,
               const std::string& out_json, const std::string& out_text, int jobs,
               int classes) {
  Corpus corpus = read_corpus(corpus_path, classes);
  std::ifstream f(spec_path);
  if (!f) throw ValidationError("cannot open ablation spec: " + spec_path);
  std::stringstream ss;
  ss << f.rdbuf();
  json j;
  try {
    j = json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ParseError(std::string("ablation spec: ") + e.what());
  }

  TrainBudget base_budget;
  if (j.contains("budget")) {
    const json& b = j["budget"];
    base_budget.max_epochs = b.value("max_epochs", base_budget.max_epochs);
    base_budget.patience = b.value("patience", base_budget.patience);
    base_budget.batch_pages = b.value("batch_pages", base_budget.batch_pages);
    base_budget.learning_rate = b.value("learning_rate", base_budget.learning_rate);
    base_budget.augment_rate = b.value("augment_rate", base_budget.augment_rate);
    base_budget.seed = b.value("seed", base_budget.seed);
  }

  std::vector<AblationCell> cells;
  for (const json& cj : j.at("cells")) {
    AblationCell cell;
    cell.name = cj.at("name").get<std::string>();
    cell.model = model_config_from_json_text(cj.value("model", json::object()).dump());
    cell.model.class_count = classes;
    cell.model.init_seed = base_budget.seed;
    cell.policy = policy_from(cj.value("policy", std::string("embedding")),
                              cj.value("scope", std::string("prev")));
    cell.budget = base_budget;
    cells.push_back(std::move(cell));
  }

  std::vector<CellResult> results = ablation_runner(cells, corpus, jobs);
  std::string table = ablation_table_text(results);
  std::fputs(table.c_str(), stdout);
  if (!out_json.empty()) write_text_file(out_json, ablation_table_json(results));
  if (!out_text.empty()) write_text_file(out_text, table);
  for (const CellResult& r : results)
    if (!r.ok) return 2;
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"similarity-aware information extraction for structured documents"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
  std::string gen_config, gen_out;
  std::uint64_t gen_seed = 0;
  bool gen_seed_set = false;
  gen->add_option("--config", gen_config, "synthesis config JSON");
  gen->add_option("--out", gen_out, "output corpus file (JSON Lines)")->required();
  gen->add_option("--seed", gen_seed, "override the config seed")
      ->each([&](const std::string&) { gen_seed_set = true; });

  // split
  auto* split = app.add_subcommand("split", "assign train/validation/test per document");
  std::string split_corpus_path, split_out, split_ratios = "0.8,0.1,0.1";
  std::uint64_t split_seed = 1;
  int split_classes = 35;
  split->add_option("--corpus", split_corpus_path, "corpus file")->required();
  split->add_option("--out", split_out, "output file (default: in place)");
  split->add_option("--ratios", split_ratios, "train,validation,test ratios");
  split->add_option("--seed", split_seed, "shuffle seed");
  split->add_option("--classes", split_classes, "class count");

  // train
  auto* train = app.add_subcommand("train", "train a model");
  TrainArgs ta;
  train->add_option("--arch", ta.arch, "simple|triplet|pairwise|qa|linear|copypaste");
  train->add_option("--config", ta.config_path, "model config JSON");
  train->add_option("--corpus", ta.corpus_path, "corpus file")->required();
  train->add_option("--out", ta.out_path, "checkpoint output path")->required();
  train->add_option("--history", ta.history_path, "training history CSV path");
  train->add_flag("--qa-no-query-all", ta.qa_no_query_all, "disable the query-all flow");
  train->add_flag("--qa-no-skip", ta.qa_no_skip, "disable the skip connection");
  train->add_flag("--qa-no-filter", ta.qa_no_filter, "disable near-page filtering");
  train->add_flag("--qa-no-fov", ta.qa_no_fov, "disable the field-of-view channel");
  train->add_option("--policy", ta.policy, "embedding|random|oracle-best");
  train->add_option("--scope", ta.scope, "prev|prev+train");
  train->add_option("--target", ta.target, "classes|same-length");
  train->add_option("--classes", ta.classes, "class count");
  train->add_option("--seed", ta.seed, "run seed (controls all randomness)");
  train->add_option("--max-epochs", ta.max_epochs, "epoch budget");
  train->add_option("--patience", ta.patience, "early-stopping patience");
  train->add_option("--batch", ta.batch, "pages per batch");
  train->add_option("--lr", ta.lr, "Adam learning rate");
  train->add_option("--augment", ta.augment, "train-time augmentation rate");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt, ev_corpus, ev_split = "test", ev_report, ev_policy = "embedding",
              ev_scope = "prev";
  std::uint64_t ev_seed = 1;
  bool ev_timings = false;
  int ev_classes = 35;
  eval->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  eval->add_option("--corpus", ev_corpus, "corpus file")->required();
  eval->add_option("--split", ev_split, "train|validation|test");
  eval->add_option("--report", ev_report, "report JSON output path");
  eval->add_option("--policy", ev_policy, "embedding|random|oracle-best");
  eval->add_option("--scope", ev_scope, "prev|prev+train");
  eval->add_option("--seed", ev_seed, "evaluation seed");
  eval->add_flag("--timings", ev_timings, "include wall time in the report file");
  eval->add_option("--classes", ev_classes, "class count");

  // nearest
  auto* nearest = app.add_subcommand("nearest", "dump nearest-page assignments");
  std::string nr_corpus, nr_out, nr_split = "test", nr_policy = "embedding", nr_scope = "prev";
  std::uint64_t nr_seed = 1;
  int nr_classes = 35;
  nearest->add_option("--corpus", nr_corpus, "corpus file")->required();
  nearest->add_option("--out", nr_out, "output JSON Lines path")->required();
  nearest->add_option("--split", nr_split, "split to scan");
  nearest->add_option("--policy", nr_policy, "embedding|random|oracle-best");
  nearest->add_option("--scope", nr_scope, "prev|prev+train");
  nearest->add_option("--seed", nr_seed, "epoch-order seed");
  nearest->add_option("--classes", nr_classes, "class count");

  // render (prediction rendering plus a `graph` sub-mode)
  auto* render = app.add_subcommand("render", "render a page to SVG");
  std::string rd_corpus, rd_page, rd_ckpt, rd_out;
  int rd_neighbors = 1, rd_classes = 35;
  render->add_option("--corpus", rd_corpus, "corpus file")->required();
  render->add_option("--page", rd_page, "page id (doc_id or doc_id#page_no)")->required();
  render->add_option("--ckpt", rd_ckpt, "checkpoint (prediction mode)");
  render->add_option("--out", rd_out, "output SVG path")->required();
  render->add_option("--classes", rd_classes, "class count");
  auto* render_graph = render->add_subcommand("graph", "draw the neighbor graph instead");
  render_graph->add_option("--neighbors", rd_neighbors, "neighbors per edge");
  render_graph->fallthrough();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  bool gc_quick = false;
  gradcheck->add_flag("--quick", gc_quick, "fewer random shapes per primitive");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "train and evaluate a grid of cells");
  std::string ab_spec, ab_corpus, ab_json, ab_text;
  int ab_jobs = 1, ab_classes = 35;
  ablate->add_option("--spec", ab_spec, "ablation spec JSON")->required();
  ablate->add_option("--corpus", ab_corpus, "corpus file")->required();
  ablate->add_option("--out-json", ab_json, "machine-readable table path");
  ablate->add_option("--out-text", ab_text, "aligned text table path");
  ablate->add_option("--jobs", ab_jobs, "parallel cells");
  ablate->add_option("--classes", ab_classes, "class count");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed())
      return cmd_gen(gen_config, gen_out,
                     gen_seed_set ? std::optional<std::uint64_t>(gen_seed) : std::nullopt);
    if (split->parsed())
      return cmd_split(split_corpus_path, split_out, split_ratios, split_seed, split_classes);
    if (train->parsed()) return cmd_train(ta);
    if (eval->parsed())
      return cmd_eval(ev_ckpt, ev_corpus, ev_split, ev_report, ev_policy, ev_scope, ev_seed,
                      ev_timings, ev_classes);
    if (nearest->parsed())
      return cmd_nearest(nr_corpus, nr_out, nr_split, nr_policy, nr_scope, nr_seed, nr_classes);
    if (render->parsed())
      return cmd_render(render_graph->parsed(), rd_corpus, rd_page, rd_ckpt, rd_out,
                        rd_neighbors, rd_classes);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_quick);
    if (ablate->parsed())
      return cmd_ablate(ab_spec, ab_corpus, ab_json, ab_text, ab_jobs, ab_classes);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "runtime failure: %s\n", e.what());
    return 2;
  }
  return 1;
}

}  // namespace docsim::cli
