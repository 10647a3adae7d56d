#include "docsim/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <thread>

#include "docsim/checkpoint.hpp"
#include "json.hpp"

namespace docsim {

using nlohmann::json;

namespace {

struct Confusion {
  long tp = 0, fp = 0, fn = 0;
};

void accumulate(Confusion* c, const Mat& pred, const Mat& truth) {
  if (pred.rows != truth.rows || pred.cols != truth.cols)
    throw ShapeError("metric: prediction and truth shapes differ");
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    bool p = pred.v[i] > 0.5;
    bool t = truth.v[i] > 0.5;
    if (p && t) ++c->tp;
    else if (p && !t) ++c->fp;
    else if (!p && t) ++c->fn;
  }
}

double f1_from(const Confusion& c) {
  if (c.tp == 0 && c.fp == 0 && c.fn == 0) return 1.0;
  return 2.0 * c.tp / static_cast<double>(2 * c.tp + c.fp + c.fn);
}

}  // namespace

double micro_f1(const std::vector<Mat>& predictions, const std::vector<Mat>& truths) {
  if (predictions.size() != truths.size())
    throw ShapeError("micro_f1: page count mismatch");
  Confusion c;
  for (std::size_t p = 0; p < predictions.size(); ++p)
    accumulate(&c, predictions[p], truths[p]);
  return f1_from(c);
}

double micro_f1(const Mat& predictions, const Mat& truth) {
  Confusion c;
  accumulate(&c, predictions, truth);
  return f1_from(c);
}

double oracle_scaled_f1(const std::vector<Mat>& predictions, const std::vector<Mat>& truths,
                        const std::vector<std::set<int>>& near_class_sets) {
  if (predictions.size() != truths.size() || predictions.size() != near_class_sets.size())
    throw ShapeError("oracle_scaled_f1: page count mismatch");
  Confusion c;
  for (std::size_t p = 0; p < predictions.size(); ++p) {
    Mat pred = predictions[p];
    Mat truth = truths[p];
    const std::set<int>& present = near_class_sets[p];
    for (int col = 0; col < truth.cols; ++col) {
      if (present.count(col)) continue;
      for (int row = 0; row < truth.rows; ++row) {
        pred.at(row, col) = 0.0;
        truth.at(row, col) = 0.0;
      }
    }
    accumulate(&c, pred, truth);
  }
  return f1_from(c);
}

std::vector<ClassStats> per_class_report(const std::vector<Mat>& predictions,
                                         const std::vector<Mat>& truths, int class_count) {
  std::vector<Confusion> conf(static_cast<std::size_t>(class_count));
  for (std::size_t p = 0; p < predictions.size(); ++p) {
    const Mat& pred = predictions[p];
    const Mat& truth = truths[p];
    if (pred.cols != class_count || truth.cols != class_count)
      throw ShapeError("per_class_report: class count mismatch");
    for (int i = 0; i < pred.rows; ++i)
      for (int c = 0; c < class_count; ++c) {
        bool pv = pred.at(i, c) > 0.5;
        bool tv = truth.at(i, c) > 0.5;
        Confusion& cc = conf[static_cast<std::size_t>(c)];
        if (pv && tv) ++cc.tp;
        else if (pv) ++cc.fp;
        else if (tv) ++cc.fn;
      }
  }
  std::vector<ClassStats> out;
  for (int c = 0; c < class_count; ++c) {
    const Confusion& cc = conf[static_cast<std::size_t>(c)];
    ClassStats s;
    s.cls = c;
    s.support = cc.tp + cc.fn;
    s.predicted = cc.tp + cc.fp;
    s.vacuous = s.support == 0 && s.predicted == 0;
    s.precision = s.predicted > 0 ? static_cast<double>(cc.tp) / s.predicted : (s.vacuous ? 1.0 : 0.0);
    s.recall = s.support > 0 ? static_cast<double>(cc.tp) / s.support : (s.vacuous ? 1.0 : 0.0);
    s.f1 = f1_from(cc);
    out.push_back(s);
  }
  return out;
}

namespace {

json report_to_json(const EvalReport& r, bool include_timing) {
  json j;
  j["arch"] = r.arch;
  j["split"] = r.split;
  j["config_hash"] = r.config_hash;
  j["micro_f1"] = r.micro;
  if (r.oracle_scaled) j["oracle_scaled_micro_f1"] = *r.oracle_scaled;
  if (r.oracle_hit_rate) j["oracle_hit_rate"] = *r.oracle_hit_rate;
  j["pages_evaluated"] = r.pages_evaluated;
  j["pages_skipped_no_candidate"] = r.pages_skipped_no_candidate;
  json per = json::array();
  for (const ClassStats& s : r.per_class) {
    per.push_back({{"class", s.cls},
                   {"precision", s.precision},
                   {"recall", s.recall},
                   {"f1", s.f1},
                   {"support", s.support},
                   {"predicted", s.predicted},
                   {"vacuous", s.vacuous}});
  }
  j["per_class"] = per;
  if (include_timing) j["wall_seconds"] = r.wall_seconds;
  return j;
}

}  // namespace

std::string eval_report_json(const EvalReport& report, bool include_timing) {
  return report_to_json(report, include_timing).dump(2) + "\n";
}

std::string eval_report_text(const EvalReport& report) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-10s split=%-11s micro_f1=%.4f", report.arch.c_str(),
                report.split.c_str(), report.micro);
  os << buf;
  if (report.oracle_scaled) {
    std::snprintf(buf, sizeof(buf), " oracle_scaled=%.4f", *report.oracle_scaled);
    os << buf;
  }
  if (report.oracle_hit_rate) {
    std::snprintf(buf, sizeof(buf), " hits=%.4f", *report.oracle_hit_rate);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), " pages=%d skipped=%d", report.pages_evaluated,
                report.pages_skipped_no_candidate);
  os << buf << "\n";
  return os.str();
}

std::string history_csv(const std::vector<EpochStats>& history) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,val_micro_f1\n";
  char buf[160];
  for (const EpochStats& e : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_loss,
                  e.val_micro_f1);
    os << buf;
  }
  return os.str();
}

std::vector<double> compute_class_weights(const Corpus& corpus, const ModelConfig& config,
                                          double cap) {
  int c_eff = config.effective_class_count();
  std::vector<long> positives(static_cast<std::size_t>(c_eff), 0);
  long total_boxes = 0;
  for (const Page& p : corpus.pages) {
    if (p.split != Split::kTrain) continue;
    for (const WordBox& b : p.boxes) {
      ++total_boxes;
      if (config.target == TargetKind::kClasses) {
        for (int l : b.labels) ++positives[static_cast<std::size_t>(l)];
      } else {
        ++positives[static_cast<std::size_t>(length_class(b.text))];
      }
    }
  }
  std::vector<double> weights(static_cast<std::size_t>(c_eff), 1.0);
  for (int c = 0; c < c_eff; ++c) {
    long pos = positives[static_cast<std::size_t>(c)];
    double w = pos > 0 ? static_cast<double>(total_boxes) / (static_cast<double>(c_eff) * pos)
                       : cap;
    weights[static_cast<std::size_t>(c)] = std::min(cap, std::max(1.0, w));
  }
  return weights;
}

namespace {

PairBuilderConfig builder_config(const ModelConfig& mc, double augment_rate) {
  PairBuilderConfig pb;
  pb.geometry.neighbors_per_edge = mc.neighbors_per_edge;
  pb.geometry.fov_k = mc.fov_k;
  pb.geometry.fov_max_dist = mc.fov_max_dist;
  pb.target = mc.target;
  pb.class_count = mc.class_count;
  pb.augment_rate = augment_rate;
  return pb;
}

// Near-page assignment for every page of `order`, honoring the
// previous-in-order and different-document constraints. Returns corpus page
// index or -1 per position, and audits the constraints.
std::vector<int> assign_nearest(const Corpus& corpus,
                                const std::vector<PageEmbedding>& embeddings,
                                const std::vector<int>& order,
                                const std::vector<int>& extras, const RetrievalPolicy& policy,
                                Rng& rng, long* selected, long* violations) {
  RetrievalContext ctx;
  ctx.corpus = &corpus;
  ctx.embeddings = &embeddings;
  ctx.epoch_order = order;
  ctx.extra_candidates = extras;
  std::vector<int> result(order.size(), -1);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    int query = order[pos];
    std::optional<int> near = nearest_page(query, static_cast<int>(pos), ctx, policy, rng);
    if (!near) continue;
    result[pos] = *near;
    if (selected) ++*selected;
    if (violations) {
      bool precedes_or_extra = false;
      for (std::size_t k = 0; k < pos; ++k)
        if (order[k] == *near) precedes_or_extra = true;
      if (std::find(extras.begin(), extras.end(), *near) != extras.end())
        precedes_or_extra = true;
      bool diff_doc = corpus.pages[static_cast<std::size_t>(*near)].doc_id !=
                      corpus.pages[static_cast<std::size_t>(query)].doc_id;
      if (!precedes_or_extra || !diff_doc) ++*violations;
    }
  }
  return result;
}

std::set<int> near_class_set_of(const Mat& near_labels, int real_count) {
  std::set<int> out;
  for (int j = 0; j < std::min(real_count, near_labels.rows); ++j)
    for (int c = 0; c < near_labels.cols; ++c)
      if (near_labels.at(j, c) > 0.5) out.insert(c);
  return out;
}

void oracle_counts_from_labels(const Mat& ref_labels, const std::set<int>& near_classes,
                               long* hits, long* annotated) {
  for (int i = 0; i < ref_labels.rows; ++i) {
    bool any = false, all = true;
    for (int c = 0; c < ref_labels.cols; ++c) {
      if (ref_labels.at(i, c) > 0.5) {
        any = true;
        if (!near_classes.count(c)) all = false;
      }
    }
    if (!any) continue;
    ++*annotated;
    if (all) ++*hits;
  }
}

}  // namespace

TrainResult train_loop(ExtractionModel& model, const Corpus& corpus,
                       const RetrievalPolicy& policy, const TrainBudget& budget) {
  std::vector<int> train_pages = corpus.pages_in_split(Split::kTrain);
  std::vector<int> val_pages = corpus.pages_in_split(Split::kValidation);
  if (train_pages.empty()) throw ConfigError("training split is empty");
  if (val_pages.empty()) throw ConfigError("validation split is empty");
  if (budget.max_epochs < 1) throw ConfigError("max_epochs must be at least 1");

  model.set_class_weights(compute_class_weights(corpus, model.config()));
  std::vector<PageEmbedding> embeddings = embed_corpus(corpus);

  PairBuilderConfig train_pb = builder_config(model.config(), budget.augment_rate);
  PairBuilderConfig eval_pb = builder_config(model.config(), 0.0);

  ad::AdamConfig adam_cfg;
  adam_cfg.lr = budget.learning_rate;
  ad::AdamState adam;
  adam.init_for(model.params());

  // Fixed validation protocol so the early-stopping signal is comparable
  // across epochs.
  std::vector<int> val_order_local = make_epoch_order(static_cast<int>(val_pages.size()),
                                                      budget.seed, 0x7fff0000);
  std::vector<int> val_order(val_order_local.size());
  for (std::size_t i = 0; i < val_order_local.size(); ++i)
    val_order[i] = val_pages[static_cast<std::size_t>(val_order_local[i])];

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<ad::Tensor> best_params;

  const bool pair_model = model.uses_pair();

  for (int epoch = 1; epoch <= budget.max_epochs; ++epoch) {
    // ---- training pass
    std::vector<int> order_local =
        make_epoch_order(static_cast<int>(train_pages.size()), budget.seed, epoch);
    std::vector<int> order(order_local.size());
    for (std::size_t i = 0; i < order_local.size(); ++i)
      order[i] = train_pages[static_cast<std::size_t>(order_local[i])];

    Rng retrieval_rng(budget.seed ^ (0xabcd0001ULL * static_cast<std::uint64_t>(epoch)));
    std::vector<int> near_assign(order.size(), -1);
    if (pair_model) {
      near_assign = assign_nearest(corpus, embeddings, order, {}, policy, retrieval_rng,
                                   &result.pairs_selected, &result.pair_violations);
    }

    Rng augment_rng(budget.seed ^ (0x5151a3b7ULL * static_cast<std::uint64_t>(epoch)));
    double epoch_loss = 0.0;
    long loss_samples = 0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      std::size_t batch_end = std::min(order.size(), pos + static_cast<std::size_t>(budget.batch_pages));
      ad::Tape tape;
      ad::BoundParams bound = bind_params(tape, model.params(), true);
      ad::Var batch_loss;
      int batch_count = 0;
      for (std::size_t k = pos; k < batch_end; ++k) {
        int page_idx = order[k];
        const Page* near = nullptr;
        if (pair_model) {
          if (near_assign[k] < 0) {
            ++result.samples_skipped_no_candidate;
            continue;
          }
          near = &corpus.pages[static_cast<std::size_t>(near_assign[k])];
        }
        PairSample sample =
            build_pair_sample(corpus.pages[static_cast<std::size_t>(page_idx)], near, train_pb,
                              augment_rng, page_idx, near_assign[k]);
        if (!model.trainable_sample(sample)) {
          ++result.samples_skipped_no_candidate;
          continue;
        }
        ad::Var loss = model.sample_loss(tape, bound, sample);
        batch_loss = batch_count == 0 ? loss : ad::add(batch_loss, loss);
        ++batch_count;
      }
      if (batch_count > 0) {
        ad::Var mean_loss = ad::scale(batch_loss, 1.0 / batch_count);
        tape.backward(mean_loss);
        auto grads = ad::collect_grads(tape, bound, model.params());
        ad::adam_step(model.params(), grads, adam, adam_cfg);
        epoch_loss += mean_loss.val()[0] * batch_count;
        loss_samples += batch_count;
      }
      pos = batch_end;
    }
    double train_loss = loss_samples > 0 ? epoch_loss / static_cast<double>(loss_samples) : 0.0;

    // ---- validation pass
    Rng val_retrieval_rng(budget.seed ^ 0x77aa11ULL);
    std::vector<int> val_near(val_order.size(), -1);
    if (pair_model) {
      long dummy_sel = 0, dummy_vio = 0;
      val_near = assign_nearest(corpus, embeddings, val_order, {}, policy, val_retrieval_rng,
                                &dummy_sel, &dummy_vio);
    }
    Rng unused_rng(0);
    double val_loss_sum = 0.0;
    long val_count = 0;
    std::vector<Mat> val_preds, val_truths;
    for (std::size_t k = 0; k < val_order.size(); ++k) {
      const Page* near = nullptr;
      if (pair_model) {
        if (val_near[k] < 0) continue;
        near = &corpus.pages[static_cast<std::size_t>(val_near[k])];
      }
      PairSample sample =
          build_pair_sample(corpus.pages[static_cast<std::size_t>(val_order[k])], near, eval_pb,
                            unused_rng, val_order[k], val_near[k]);
      if (!model.trainable_sample(sample)) continue;
      ad::Tape tape;
      ad::BoundParams bound = bind_params(tape, model.params(), false);
      val_loss_sum += model.sample_loss(tape, bound, sample).val()[0];
      ++val_count;
      val_preds.push_back(model.predict(sample));
      val_truths.push_back(sample.ref_labels);
    }
    double val_loss = val_count > 0 ? val_loss_sum / static_cast<double>(val_count)
                                    : std::numeric_limits<double>::infinity();
    double val_f1 = val_preds.empty() ? 0.0 : micro_f1(val_preds, val_truths);

    result.history.push_back({epoch, train_loss, val_loss, val_f1});

    if (val_loss < best_val) {
      best_val = val_loss;
      result.best_epoch = epoch;
      since_best = 0;
      best_params.clear();
      for (int i = 0; i < model.params().size(); ++i)
        best_params.push_back(model.params().tensor(i));
    } else {
      ++since_best;
    }
    if (since_best >= budget.patience) break;
  }

  // The model keeps the best-validation parameters, never the last ones.
  if (!best_params.empty()) {
    for (int i = 0; i < model.params().size(); ++i)
      model.params().tensor(i) = best_params[static_cast<std::size_t>(i)];
  }
  result.best_val_loss = best_val;
  return result;
}

EvalReport evaluate_model(const ExtractionModel& model, const Corpus& corpus, Split split,
                          const RetrievalPolicy& policy, std::uint64_t seed) {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<int> pages = corpus.pages_in_split(split);
  if (pages.empty()) throw ConfigError("evaluation split is empty: " + split_name(split));

  std::vector<PageEmbedding> embeddings = embed_corpus(corpus);
  PairBuilderConfig pb = builder_config(model.config(), 0.0);
  const bool pair_model = model.uses_pair();

  std::vector<int> order_local =
      make_epoch_order(static_cast<int>(pages.size()), seed, 0x00e7a1);
  std::vector<int> order(order_local.size());
  for (std::size_t i = 0; i < order_local.size(); ++i)
    order[i] = pages[static_cast<std::size_t>(order_local[i])];

  std::vector<int> extras;
  if (policy.scope == CandidateScope::kPlusTrainSet && split != Split::kTrain)
    extras = corpus.pages_in_split(Split::kTrain);

  Rng retrieval_rng(seed ^ 0xe5a1ULL);
  std::vector<int> near_assign(order.size(), -1);
  long selected = 0, violations = 0;
  if (pair_model)
    near_assign = assign_nearest(corpus, embeddings, order, extras, policy, retrieval_rng,
                                 &selected, &violations);

  EvalReport report;
  report.arch = model.config().arch;
  report.split = split_name(split);
  report.config_hash = config_hash(model.config());

  Rng unused_rng(0);
  std::vector<Mat> preds, truths;
  std::vector<std::set<int>> near_sets;
  long hits = 0, annotated = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Page* near = nullptr;
    if (pair_model) {
      if (near_assign[k] < 0) {
        ++report.pages_skipped_no_candidate;
        continue;
      }
      near = &corpus.pages[static_cast<std::size_t>(near_assign[k])];
    }
    PairSample sample = build_pair_sample(corpus.pages[static_cast<std::size_t>(order[k])],
                                          near, pb, unused_rng, order[k], near_assign[k]);
    preds.push_back(model.predict(sample));
    truths.push_back(sample.ref_labels);
    if (pair_model) {
      std::set<int> near_set = near_class_set_of(sample.near_labels, sample.near_inputs.real_count);
      oracle_counts_from_labels(sample.ref_labels, near_set, &hits, &annotated);
      near_sets.push_back(std::move(near_set));
    }
    ++report.pages_evaluated;
  }

  report.micro = preds.empty() ? 0.0 : micro_f1(preds, truths);
  if (model.vote_based() && pair_model && !preds.empty())
    report.oracle_scaled = oracle_scaled_f1(preds, truths, near_sets);
  if (pair_model && annotated > 0)
    report.oracle_hit_rate = static_cast<double>(hits) / static_cast<double>(annotated);
  report.per_class =
      per_class_report(preds, truths, model.config().effective_class_count());
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

std::vector<CellResult> ablation_runner(const std::vector<AblationCell>& cells,
                                        const Corpus& corpus, int jobs) {
  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> next{0};
  int workers = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));

  auto run_cell = [&](std::size_t idx) {
    const AblationCell& cell = cells[idx];
    CellResult& out = results[idx];
    out.name = cell.name;
    try {
      std::unique_ptr<ExtractionModel> model = make_model(cell.model);
      if (model->params().size() > 0)
        out.train = train_loop(*model, corpus, cell.policy, cell.budget);
      out.report = evaluate_model(*model, corpus, Split::kTest, cell.policy, cell.budget.seed);
      out.ok = true;
    } catch (const std::exception& e) {
      out.ok = false;
      out.error = e.what();
    }
  };

  if (workers == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i = next.fetch_add(1);
          if (i >= cells.size()) return;
          run_cell(i);
        }
      });
    for (std::thread& th : pool) th.join();
  }
  return results;
}

std::string ablation_table_text(const std::vector<CellResult>& results) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-28s %-9s %9s %13s %7s %6s\n", "cell", "arch", "micro_f1",
                "oracle_scaled", "hits", "epochs");
  os << buf;
  for (const CellResult& r : results) {
    if (!r.ok) {
      std::snprintf(buf, sizeof(buf), "%-28s FAILED: %s\n", r.name.c_str(), r.error.c_str());
      os << buf;
      continue;
    }
    std::string oracle = r.report.oracle_scaled
                             ? [&] {
                                 char b[32];
                                 std::snprintf(b, sizeof(b), "%.4f", *r.report.oracle_scaled);
                                 return std::string(b);
                               }()
                             : std::string("-");
    std::string hits = r.report.oracle_hit_rate
                           ? [&] {
                               char b[32];
                               std::snprintf(b, sizeof(b), "%.4f", *r.report.oracle_hit_rate);
                               return std::string(b);
                             }()
                           : std::string("-");
    std::snprintf(buf, sizeof(buf), "%-28s %-9s %9.4f %13s %7s %6zu\n", r.name.c_str(),
                  r.report.arch.c_str(), r.report.micro, oracle.c_str(), hits.c_str(),
                  r.train.history.size());
    os << buf;
  }
  return os.str();
}

std::string ablation_table_json(const std::vector<CellResult>& results, bool include_timing) {
  json cells = json::array();
  for (const CellResult& r : results) {
    json c;
    c["name"] = r.name;
    c["ok"] = r.ok;
    if (!r.ok) {
      c["error"] = r.error;
    } else {
      c["report"] = json::parse(eval_report_json(r.report, include_timing));
      c["best_epoch"] = r.train.best_epoch;
      c["epochs_run"] = r.train.history.size();
      c["pairs_selected"] = r.train.pairs_selected;
      c["pair_violations"] = r.train.pair_violations;
    }
    cells.push_back(c);
  }
  json j;
  j["cells"] = cells;
  return j.dump(2) + "\n";
}

}  // namespace docsim
