#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "docsim/architectures.hpp"
#include "docsim/corpus.hpp"
#include "docsim/neighbors.hpp"

namespace docsim {

// Micro F1 over all (box, class) cells: 2TP / (2TP + FP + FN); 1.0 when the
// confusion is empty. Scores above 0.5 count as positive predictions.
double micro_f1(const std::vector<Mat>& predictions, const std::vector<Mat>& truths);
double micro_f1(const Mat& predictions, const Mat& truth);

// Truth cells whose class is absent from the page's nearest page are removed
// from both sides before scoring, so errors impossible under the retrieved
// page do not count.
double oracle_scaled_f1(const std::vector<Mat>& predictions, const std::vector<Mat>& truths,
                        const std::vector<std::set<int>>& near_class_sets);

struct ClassStats {
  int cls = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  long support = 0;    // positive truth cells
  long predicted = 0;  // positive prediction cells
  bool vacuous = false;  // no support and no predictions; f1 reported as 1
};
std::vector<ClassStats> per_class_report(const std::vector<Mat>& predictions,
                                         const std::vector<Mat>& truths, int class_count);

struct EvalReport {
  std::string arch;
  std::string split;
  std::string config_hash;
  double micro = 0.0;
  std::optional<double> oracle_scaled;  // vote-based models only
  std::optional<double> oracle_hit_rate;
  std::vector<ClassStats> per_class;
  int pages_evaluated = 0;
  int pages_skipped_no_candidate = 0;
  double wall_seconds = 0.0;
};

// JSON form; timing is included only on request so that report files are
// byte-identical across reruns with the same seed.
std::string eval_report_json(const EvalReport& report, bool include_timing = false);
std::string eval_report_text(const EvalReport& report);

struct TrainBudget {
  int max_epochs = 200;
  int patience = 20;      // early-stopping window on validation loss
  int batch_pages = 4;
  double learning_rate = 1e-3;
  double augment_rate = 0.01;
  std::uint64_t seed = 1;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_micro_f1 = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  // Retrieval protocol audit over the whole run: selections made and
  // selections violating the previous-in-order / different-document rule.
  long pairs_selected = 0;
  long pair_violations = 0;
  long samples_skipped_no_candidate = 0;
};

std::string history_csv(const std::vector<EpochStats>& history);

// Per-epoch: reshuffle, rebuild nearest-page assignments, batched Adam
// steps; early stopping on validation loss with the best-validation
// parameters restored into the model at the end.
TrainResult train_loop(ExtractionModel& model, const Corpus& corpus,
                       const RetrievalPolicy& policy, const TrainBudget& budget);

// Positive-class weights min(cap, total / (C * positives_c)) over the train
// split in the model's target space.
std::vector<double> compute_class_weights(const Corpus& corpus, const ModelConfig& config,
                                          double cap = 50.0);

EvalReport evaluate_model(const ExtractionModel& model, const Corpus& corpus, Split split,
                          const RetrievalPolicy& policy, std::uint64_t seed);

struct AblationCell {
  std::string name;
  ModelConfig model;
  RetrievalPolicy policy;
  TrainBudget budget;
};

struct CellResult {
  std::string name;
  bool ok = false;
  std::string error;
  EvalReport report;
  TrainResult train;
};

// Trains and evaluates every cell on the same corpus; cells run in parallel
// up to `jobs` workers, each fully independent and internally deterministic.
// Per-cell failures are recorded and the run continues.
std::vector<CellResult> ablation_runner(const std::vector<AblationCell>& cells,
                                        const Corpus& corpus, int jobs = 1);

std::string ablation_table_text(const std::vector<CellResult>& results);
std::string ablation_table_json(const std::vector<CellResult>& results,
                                bool include_timing = false);

}  // namespace docsim
