#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "docsim/autodiff.hpp"
#include "docsim/blocks.hpp"
#include "docsim/corpus.hpp"
#include "docsim/features.hpp"
#include "docsim/geometry.hpp"

namespace docsim {

// Alternative diagnostic target: two boxes are "similar" when their texts
// have the same codepoint length. Lengths are bucketed into classes so the
// voting and metric machinery is shared with the class target.
enum class TargetKind { kClasses, kSameLength };
inline constexpr int kLengthClassCount = 40;

std::string target_name(TargetKind t);
std::optional<TargetKind> target_from_name(const std::string& s);

int length_class(const std::string& text);

// One training/evaluation instance: a reference page plus (for pair models)
// its retrieved nearest page with known labels. Label matrices live in the
// active target space.
struct PairSample {
  PageInputs ref_inputs;
  Mat ref_labels;      // N x C_eff ground truth
  Page ref_page;       // value copy; used by copypaste and rendering
  bool has_near = false;
  PageInputs near_inputs;
  Mat near_labels;     // M x C_eff
  Page near_page;
  std::vector<std::vector<int>> fov;  // N x fov_k indexes into near boxes
  int ref_corpus_index = -1;
  int near_corpus_index = -1;
};

struct PairBuilderConfig {
  GeometryConfig geometry;
  TargetKind target = TargetKind::kClasses;
  int class_count = 35;
  double augment_rate = 0.0;  // applied to the reference page features only

  int effective_class_count() const {
    return target == TargetKind::kClasses ? class_count : kLengthClassCount;
  }
};

PairSample build_pair_sample(const Page& ref, const Page* near, const PairBuilderConfig& config,
                             Rng& rng, int ref_corpus_index = -1, int near_corpus_index = -1);

// The tiled truth over all (ref box, kept near box) combinations. Filtering
// keeps only annotated near boxes; under the same-length target every box is
// annotated, so filtering has no effect there.
struct PairMatrix {
  std::vector<int> kept;  // column -> near box index
  Mat truth_similar;      // N x M' in {0,1}
  Mat pred_dist;          // N x M', filled by the forward passes

  int pair_columns() const { return static_cast<int>(kept.size()); }
};

PairMatrix tile_and_filter(const Mat& ref_labels, const Mat& near_labels, int near_real_count,
                           bool filter_on);

struct TripletConfig {
  double margin = 0.2;  // alpha
  enum class Variant { kTripletLike, kLossless, kBoth };
  Variant variant = Variant::kTripletLike;
  enum class Distance { kEuclidean, kCosine };
  Distance distance = Distance::kEuclidean;
  bool add_class_info = false;
  bool calibration = false;
  double triplet_weight = 1.0;
  double lossless_weight = 1.0;
  double calibration_weight = 1.0;
};

struct PairwiseConfig {
  bool add_class_info = true;
  bool refine = false;
  int hidden = 0;  // 0 means block feature_dim
};

struct QAConfig {
  bool query_all = true;
  bool skip_connection = true;
  bool filter = true;
  bool field_of_view = true;
};

// Loss pieces of the distance-matrix formulation, exposed for the oracle
// tests. pos/neg are masked distances over the whole matrix:
//   triplet_like = max(0, alpha + max(pos) + min(-neg))
//   lossless     = sum(pos) - sum(neg)
struct TripletLossParts {
  double triplet_like = 0.0;
  double lossless = 0.0;
  bool had_positive = false;
  bool had_negative = false;
};
TripletLossParts triplet_losses(const PairMatrix& matrix, double margin);

// Ensemble voting: per class present on the near page, the score of a ref
// box is the max similarity to a near box of that class; predict when the
// score exceeds the threshold. Distances are mapped through exp(-d) first.
// Classes absent from the near page are never predicted.
Mat vote_classes(const Mat& similarity, bool inputs_are_distances,
                 const std::vector<int>& kept, const Mat& near_labels, double threshold);

// Alternative-target truth override (exposed for tests).
Mat same_length_truth(const std::vector<std::string>& ref_texts,
                      const std::vector<std::string>& near_texts,
                      const std::vector<int>& kept);

// 1 - <a,b>/(|a||b|) row-pairwise, composed from primitives.
ad::Var cosine_distance(ad::Var a, ad::Var b);

struct ModelConfig {
  std::string arch = "qa";  // simple | triplet | pairwise | qa | linear | copypaste
  BlockConfig block;
  TripletConfig triplet;
  PairwiseConfig pairwise;
  QAConfig qa;
  TargetKind target = TargetKind::kClasses;
  int class_count = 35;
  int neighbors_per_edge = 1;
  int fov_k = 5;
  double fov_max_dist = 0.25;
  double vote_threshold = 0.5;
  std::uint64_t init_seed = 7;

  int effective_class_count() const {
    return target == TargetKind::kClasses ? class_count : kLengthClassCount;
  }
};

class ExtractionModel {
 public:
  explicit ExtractionModel(ModelConfig config) : cfg_(std::move(config)) {}
  virtual ~ExtractionModel() = default;

  const ModelConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

  // Per-class positive weights used in the BCE losses; defaults to ones.
  void set_class_weights(std::vector<double> weights);
  const std::vector<double>& class_weights() const { return class_weights_; }

  virtual bool uses_pair() const = 0;
  // True for models that predict via similarity voting; the oracle-scaled
  // metric applies to these.
  virtual bool vote_based() const { return false; }
  virtual bool trainable_sample(const PairSample& sample) const;

  // Scalar training loss for one sample; parameters must be bound on tape.
  virtual ad::Var sample_loss(ad::Tape& tape, const ad::BoundParams& bound,
                              const PairSample& sample) const = 0;

  // N x C_eff scores in [0,1]; thresholding happens in the evaluator.
  virtual Mat predict(const PairSample& sample) const = 0;

  // Degenerate pair-matrix encounters (no positive or no negative pair).
  long degenerate_pair_count() const { return degenerate_pairs_; }

 protected:
  Mat loss_weights(const Mat& target, const std::vector<bool>& pad_mask) const;

  ModelConfig cfg_;
  ad::ParamStore params_;
  std::vector<double> class_weights_;
  mutable long degenerate_pairs_ = 0;
};

std::unique_ptr<ExtractionModel> make_model(const ModelConfig& config);

// Verification hook: the populated distance matrix of a triplet model for
// one sample, computed through the same forward pass the loss uses.
PairMatrix triplet_pair_matrix(const ExtractionModel& model, const PairSample& sample);

}  // namespace docsim
