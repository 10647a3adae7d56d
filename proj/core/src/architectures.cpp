#include "docsim/architectures.hpp"

#include <algorithm>
#include <cmath>

#include "docsim/baselines.hpp"

namespace docsim {

using ad::Shape;
using ad::Tensor;
using ad::Var;

std::string target_name(TargetKind t) {
  return t == TargetKind::kClasses ? "classes" : "same-length";
}

std::optional<TargetKind> target_from_name(const std::string& s) {
  if (s == "classes") return TargetKind::kClasses;
  if (s == "same-length" || s == "same_length") return TargetKind::kSameLength;
  return std::nullopt;
}

int length_class(const std::string& text) {
  int len = static_cast<int>(decode_utf8(text).size());
  return std::clamp(len, 1, kLengthClassCount) - 1;
}

namespace {

Mat target_labels(const Page& page, const PairBuilderConfig& cfg) {
  if (cfg.target == TargetKind::kClasses)
    return labels_matrix(page, cfg.class_count);
  Mat m(static_cast<int>(page.boxes.size()), kLengthClassCount);
  for (int i = 0; i < m.rows; ++i)
    m.at(i, length_class(page.boxes[static_cast<std::size_t>(i)].text)) = 1.0;
  return m;
}

}  // namespace

PairSample build_pair_sample(const Page& ref, const Page* near, const PairBuilderConfig& config,
                             Rng& rng, int ref_corpus_index, int near_corpus_index) {
  PairSample s;
  s.ref_page = ref;
  s.ref_corpus_index = ref_corpus_index;
  OrderInfo ref_order = reading_order(ref, config.geometry);
  NeighborIndex ref_neigh = neighborhood_graph(ref, config.geometry);
  s.ref_inputs = assemble_page_inputs(ref, ref_order, ref_neigh, config.augment_rate, rng);
  s.ref_labels = target_labels(ref, config);

  if (near != nullptr) {
    s.has_near = true;
    s.near_page = *near;
    s.near_corpus_index = near_corpus_index;
    OrderInfo near_order = reading_order(*near, config.geometry);
    NeighborIndex near_neigh = neighborhood_graph(*near, config.geometry);
    s.near_inputs =
        assemble_page_inputs(*near, near_order, near_neigh, config.augment_rate, rng);
    s.near_labels = target_labels(*near, config);
    s.fov = field_of_view(ref, *near, config.geometry);
  }
  return s;
}

PairMatrix tile_and_filter(const Mat& ref_labels, const Mat& near_labels, int near_real_count,
                           bool filter_on) {
  if (ref_labels.cols != near_labels.cols)
    throw ShapeError("tile_and_filter: label spaces disagree");
  PairMatrix pm;
  for (int j = 0; j < near_real_count; ++j) {
    if (filter_on) {
      double row_sum = 0.0;
      for (int c = 0; c < near_labels.cols; ++c) row_sum += near_labels.at(j, c);
      if (row_sum <= 0.0) continue;
    }
    pm.kept.push_back(j);
  }
  int n = ref_labels.rows;
  int m = pm.pair_columns();
  pm.truth_similar = Mat(n, m);
  pm.pred_dist = Mat(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      bool share = false;
      int nj = pm.kept[static_cast<std::size_t>(j)];
      for (int c = 0; c < ref_labels.cols && !share; ++c)
        share = ref_labels.at(i, c) > 0.5 && near_labels.at(nj, c) > 0.5;
      pm.truth_similar.at(i, j) = share ? 1.0 : 0.0;
    }
  return pm;
}

TripletLossParts triplet_losses(const PairMatrix& matrix, double margin) {
  TripletLossParts parts;
  double max_pos = 0.0, max_neg = 0.0, sum_pos = 0.0, sum_neg = 0.0;
  for (int i = 0; i < matrix.truth_similar.rows; ++i)
    for (int j = 0; j < matrix.truth_similar.cols; ++j) {
      double d = matrix.pred_dist.at(i, j);
      if (matrix.truth_similar.at(i, j) > 0.5) {
        parts.had_positive = true;
        max_pos = std::max(max_pos, d);
        sum_pos += d;
      } else {
        parts.had_negative = true;
        max_neg = std::max(max_neg, d);
        sum_neg += d;
      }
    }
  parts.triplet_like = std::max(0.0, margin + max_pos - max_neg);
  parts.lossless = sum_pos - sum_neg;
  return parts;
}

Mat vote_classes(const Mat& similarity, bool inputs_are_distances, const std::vector<int>& kept,
                 const Mat& near_labels, double threshold) {
  if (similarity.cols != static_cast<int>(kept.size()))
    throw ShapeError("vote_classes: similarity columns do not match kept map");
  Mat out(similarity.rows, near_labels.cols);
  for (int i = 0; i < similarity.rows; ++i) {
    for (int j = 0; j < similarity.cols; ++j) {
      double s = similarity.at(i, j);
      if (inputs_are_distances) s = std::exp(-s);
      int nj = kept[static_cast<std::size_t>(j)];
      for (int c = 0; c < near_labels.cols; ++c) {
        if (near_labels.at(nj, c) > 0.5 && s > out.at(i, c)) out.at(i, c) = s;
      }
    }
  }
  for (double& x : out.v) x = x > threshold ? 1.0 : 0.0;
  return out;
}

Mat same_length_truth(const std::vector<std::string>& ref_texts,
                      const std::vector<std::string>& near_texts,
                      const std::vector<int>& kept) {
  Mat truth(static_cast<int>(ref_texts.size()), static_cast<int>(kept.size()));
  for (int i = 0; i < truth.rows; ++i)
    for (int j = 0; j < truth.cols; ++j) {
      const std::string& a = ref_texts[static_cast<std::size_t>(i)];
      const std::string& b = near_texts[static_cast<std::size_t>(kept[static_cast<std::size_t>(j)])];
      truth.at(i, j) = decode_utf8(a).size() == decode_utf8(b).size() ? 1.0 : 0.0;
    }
  return truth;
}

Var cosine_distance(Var a, Var b) {
  Var na = ad::vsqrt(ad::add_const(ad::reduce_sum_axis(ad::mul(a, a), 1), 1e-12));
  Var nb = ad::vsqrt(ad::add_const(ad::reduce_sum_axis(ad::mul(b, b), 1), 1e-12));
  Var inv_na = ad::reshape(ad::reciprocal(na), {a.shape()[0], 1});
  Var inv_nb = ad::reshape(ad::reciprocal(nb), {1, b.shape()[0]});
  Var dots = ad::matmul(a, ad::transpose(b));
  Var cos = ad::mul(ad::mul(dots, inv_na), inv_nb);
  return ad::add_const(ad::neg(cos), 1.0);
}

void ExtractionModel::set_class_weights(std::vector<double> weights) {
  class_weights_ = std::move(weights);
}

bool ExtractionModel::trainable_sample(const PairSample& sample) const {
  return !uses_pair() || sample.has_near;
}

Mat ExtractionModel::loss_weights(const Mat& target, const std::vector<bool>& pad_mask) const {
  Mat w(target.rows, target.cols);
  for (int i = 0; i < target.rows; ++i) {
    bool real = i < static_cast<int>(pad_mask.size()) ? pad_mask[static_cast<std::size_t>(i)]
                                                      : true;
    for (int c = 0; c < target.cols; ++c) {
      if (!real) continue;  // zero sample weight on pad rows
      double cw = 1.0;
      if (target.at(i, c) > 0.5 && c < static_cast<int>(class_weights_.size()))
        cw = class_weights_[static_cast<std::size_t>(c)];
      w.at(i, c) = cw;
    }
  }
  return w;
}

namespace {

Var real_rows(Var x, const PageInputs& in) {
  if (in.padded_count == in.real_count) return x;
  return ad::slice(x, 0, 0, in.real_count);
}

Var row_bias(Var bias) {
  const Shape& s = bias.shape();
  if (s.size() == 2) return bias;
  return ad::reshape(bias, {1, s[0]});
}

Mat pad_labels(const Mat& labels, int rows) {
  if (labels.rows == rows) return labels;
  Mat out(rows, labels.cols);
  std::copy(labels.v.begin(), labels.v.end(), out.v.begin());
  return out;
}

std::vector<int> annotated_rows(const Mat& labels, int real_count) {
  std::vector<int> kept;
  for (int j = 0; j < real_count; ++j) {
    double s = 0.0;
    for (int c = 0; c < labels.cols; ++c) s += labels.at(j, c);
    if (s > 0.0) kept.push_back(j);
  }
  return kept;
}

// ---------------------------------------------------------------- simple

class SimpleModel : public ExtractionModel {
 public:
  explicit SimpleModel(ModelConfig cfg) : ExtractionModel(std::move(cfg)) {
    Rng rng(cfg_.init_seed);
    block_ = make_block_params(params_, "block", kBoxFeatureDim,
                               4 * cfg_.neighbors_per_edge + 1, cfg_.block, rng);
    int c = cfg_.effective_class_count();
    head_w_ = params_.add("head.weight", ad::glorot(cfg_.block.feature_dim, c, rng));
    head_b_ = params_.add("head.bias", Tensor::zeros({1, c}));
  }

  bool uses_pair() const override { return false; }

  Var forward(ad::Tape& tape, const ad::BoundParams& bound, const PairSample& s) const {
    Var emb = basic_building_block(tape, bound, block_, s.ref_inputs, cfg_.block);
    Var logits = ad::add(ad::matmul(emb, bound[head_w_]), row_bias(bound[head_b_]));
    return ad::sigmoid(logits);
  }

  Var sample_loss(ad::Tape& tape, const ad::BoundParams& bound,
                  const PairSample& s) const override {
    Var probs = forward(tape, bound, s);
    Mat target = pad_labels(s.ref_labels, s.ref_inputs.padded_count);
    Mat weights = loss_weights(target, s.ref_inputs.pad_mask);
    return ad::bce(probs, page_constants(tape, target), page_constants(tape, weights));
  }

  Mat predict(const PairSample& s) const override {
    ad::Tape tape;
    ad::BoundParams bound = bind_params(tape, params_, false);
    Var probs = real_rows(forward(tape, bound, s), s.ref_inputs);
    Mat out(s.ref_inputs.real_count, cfg_.effective_class_count());
    out.v = probs.val();
    return out;
  }

 private:
  BlockParams block_;
  int head_w_ = -1, head_b_ = -1;
};

// ---------------------------------------------------------------- triplet

class TripletModel : public ExtractionModel {
 public:
  explicit TripletModel(ModelConfig cfg) : ExtractionModel(std::move(cfg)) {
    Rng rng(cfg_.init_seed);
    block_ = make_block_params(params_, "block", kBoxFeatureDim,
                               4 * cfg_.neighbors_per_edge + 1, cfg_.block, rng);
    if (cfg_.triplet.calibration) {
      cal_a_ = params_.add("calibration.scale", Tensor::scalar(-1.0));
      cal_b_ = params_.add("calibration.bias", Tensor::scalar(0.5));
    }
  }

  bool uses_pair() const override { return true; }
  bool vote_based() const override { return true; }

  bool trainable_sample(const PairSample& s) const override {
    return s.has_near &&
           !tile_and_filter(s.ref_labels, s.near_labels, s.near_inputs.real_count, true)
                .kept.empty();
  }

  // Distance matrix over (ref box, kept near box); the siamese block runs on
  // both pages with the same bound parameters.
  std::pair<Var, PairMatrix> forward_distances(ad::Tape& tape, const ad::BoundParams& bound,
                                               const PairSample& s) const {
    PairMatrix pm = tile_and_filter(s.ref_labels, s.near_labels, s.near_inputs.real_count, true);
    Var ref_emb = real_rows(basic_building_block(tape, bound, block_, s.ref_inputs, cfg_.block),
                            s.ref_inputs);
    Var near_emb = real_rows(
        basic_building_block(tape, bound, block_, s.near_inputs, cfg_.block), s.near_inputs);
    Var near_kept = ad::gather_rows(near_emb, pm.kept);

    Var a = ref_emb, b = near_kept;
    if (cfg_.triplet.add_class_info) {
      int c = cfg_.effective_class_count();
      Mat kept_labels(pm.pair_columns(), c);
      for (int j = 0; j < pm.pair_columns(); ++j)
        for (int cc = 0; cc < c; ++cc)
          kept_labels.at(j, cc) = s.near_labels.at(pm.kept[static_cast<std::size_t>(j)], cc);
      b = ad::concat({b, page_constants(tape, kept_labels)}, 1);
      a = ad::concat({a, tape.constant(Tensor::zeros({s.ref_inputs.real_count, c}))}, 1);
    }
    Var dist = cfg_.triplet.distance == TripletConfig::Distance::kEuclidean
                   ? ad::pairwise_sqdist(a, b)
                   : cosine_distance(a, b);
    pm.pred_dist.v = dist.val();
    return {dist, pm};
  }

  Var sample_loss(ad::Tape& tape, const ad::BoundParams& bound,
                  const PairSample& s) const override {
    auto [dist, pm] = forward_distances(tape, bound, s);
    int n = pm.truth_similar.rows, m = pm.truth_similar.cols;
    Var truth = page_constants(tape, pm.truth_similar);
    Mat inv = pm.truth_similar;
    for (double& x : inv.v) x = 1.0 - x;
    Var pos = ad::mul(dist, truth);
    Var negm = ad::mul(dist, page_constants(tape, inv));

    TripletLossParts host = triplet_losses(pm, cfg_.triplet.margin);
    if (!host.had_positive || !host.had_negative) ++degenerate_pairs_;

    Var flat_pos = ad::reshape(pos, {n * m});
    Var flat_neg = ad::reshape(negm, {n * m});
    Var tl = ad::relu(ad::add_const(
        ad::sub(ad::reduce_max(flat_pos, 0), ad::reduce_max(flat_neg, 0)),
        cfg_.triplet.margin));
    Var ll = ad::sub(ad::reduce_sum(pos), ad::reduce_sum(negm));

    const TripletConfig& tc = cfg_.triplet;
    Var total = tape.constant(Tensor::scalar(0.0));
    if (tc.variant != TripletConfig::Variant::kLossless)
      total = ad::add(total, ad::scale(tl, tc.triplet_weight));
    if (tc.variant != TripletConfig::Variant::kTripletLike)
      total = ad::add(total, ad::scale(ll, tc.lossless_weight));
    total = ad::scale(total, 1.0 / static_cast<double>(n));  // averaged over word-boxes

    if (tc.calibration) {
      Var logits = ad::add(ad::mul(dist, bound[cal_a_]), bound[cal_b_]);
      Var cal = ad::bce(ad::sigmoid(logits), truth,
                        tape.constant(Tensor::full({n, m}, 1.0)));
      total = ad::add(total, ad::scale(cal, tc.calibration_weight));
    }
    return total;
  }

  Mat predict(const PairSample& s) const override {
    int c = cfg_.effective_class_count();
    if (!s.has_near) return Mat(s.ref_inputs.real_count, c);
    ad::Tape tape;
    ad::BoundParams bound = bind_params(tape, params_, false);
    auto [dist, pm] = forward_distances(tape, bound, s);
    (void)dist;
    if (pm.kept.empty()) return Mat(s.ref_inputs.real_count, c);
    return vote_classes(pm.pred_dist, true, pm.kept, s.near_labels, cfg_.vote_threshold);
  }

 private:
  BlockParams block_;
  int cal_a_ = -1, cal_b_ = -1;
};

// ---------------------------------------------------------------- pairwise

class PairwiseModel : public ExtractionModel {
 public:
  explicit PairwiseModel(ModelConfig cfg) : ExtractionModel(std::move(cfg)) {
    Rng rng(cfg_.init_seed);
    block_ = make_block_params(params_, "block", kBoxFeatureDim,
                               4 * cfg_.neighbors_per_edge + 1, cfg_.block, rng);
    int d = cfg_.block.feature_dim;
    int c = cfg_.effective_class_count();
    int in = 2 * d + (cfg_.pairwise.add_class_info ? c : 0);
    hidden_dim_ = cfg_.pairwise.hidden > 0 ? cfg_.pairwise.hidden : d;
    w1_ = params_.add("pair.hidden.weight", ad::glorot(in, hidden_dim_, rng));
    b1_ = params_.add("pair.hidden.bias", Tensor::zeros({1, hidden_dim_}));
    int out_in = hidden_dim_ + (cfg_.pairwise.refine ? d : 0);
    w2_ = params_.add("pair.out.weight", ad::glorot(out_in, 1, rng));
    b2_ = params_.add("pair.out.bias", Tensor::zeros({1, 1}));
    if (cfg_.pairwise.refine) {
      std::string p = "refine.attn";
      refine_.wq = params_.add(p + ".wq", ad::glorot(d, d, rng));
      refine_.wk = params_.add(p + ".wk", ad::glorot(d, d, rng));
      refine_.wv = params_.add(p + ".wv", ad::glorot(d, d, rng));
      refine_.wo = params_.add(p + ".wo", ad::glorot(d, d, rng));
      refine_.bo = params_.add(p + ".bo", Tensor::zeros({1, d}));
      refine_.ln_gain = params_.add(p + ".ln.gain", Tensor::full({d}, 1.0));
      refine_.ln_bias = params_.add(p + ".ln.bias", Tensor::zeros({d}));
    }
  }

  bool uses_pair() const override { return true; }
  bool vote_based() const override { return true; }

  bool trainable_sample(const PairSample& s) const override {
    return s.has_near &&
           !tile_and_filter(s.ref_labels, s.near_labels, s.near_inputs.real_count, true)
                .kept.empty();
  }

  std::pair<Var, PairMatrix> forward_pairs(ad::Tape& tape, const ad::BoundParams& bound,
                                           const PairSample& s) const {
    PairMatrix pm = tile_and_filter(s.ref_labels, s.near_labels, s.near_inputs.real_count, true);
    int n = s.ref_inputs.real_count;
    int m = pm.pair_columns();
    Var ref_emb = real_rows(basic_building_block(tape, bound, block_, s.ref_inputs, cfg_.block),
                            s.ref_inputs);
    Var near_emb = real_rows(
        basic_building_block(tape, bound, block_, s.near_inputs, cfg_.block), s.near_inputs);
    Var near_kept_emb = ad::gather_rows(near_emb, pm.kept);
    Var near_kept = near_kept_emb;
    if (cfg_.pairwise.add_class_info) {
      int c = cfg_.effective_class_count();
      Mat kept_labels(m, c);
      for (int j = 0; j < m; ++j)
        for (int cc = 0; cc < c; ++cc)
          kept_labels.at(j, cc) = s.near_labels.at(pm.kept[static_cast<std::size_t>(j)], cc);
      near_kept = ad::concat({near_kept, page_constants(tape, kept_labels)}, 1);
    }

    // All combinations in lexicographic (i, j) order.
    std::vector<int> rep(static_cast<std::size_t>(n) * m), tile(static_cast<std::size_t>(n) * m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) {
        rep[static_cast<std::size_t>(i * m + j)] = i;
        tile[static_cast<std::size_t>(i * m + j)] = j;
      }
    Var pair_feats =
        ad::concat({ad::gather_rows(ref_emb, rep), ad::gather_rows(near_kept, tile)}, 1);
    Var hidden = ad::relu(ad::add(ad::matmul(pair_feats, bound[w1_]), row_bias(bound[b1_])));

    if (cfg_.pairwise.refine) {
      Var all = ad::concat({ref_emb, near_kept_emb}, 0);
      std::vector<bool> mask(static_cast<std::size_t>(all.shape()[0]), true);
      Var refined = attention(all, all, all, mask, cfg_.block.heads,
                              bind_attn(bound, refine_));
      Var pooled = ad::scale(ad::reduce_sum_axis(refined, 0),
                             1.0 / static_cast<double>(all.shape()[0]));
      Var pooled_row = ad::reshape(pooled, {1, cfg_.block.feature_dim});
      std::vector<int> zeros_idx(static_cast<std::size_t>(n) * m, 0);
      hidden = ad::concat({hidden, ad::gather_rows(pooled_row, zeros_idx)}, 1);
    }

    Var logits = ad::add(ad::matmul(hidden, bound[w2_]), row_bias(bound[b2_]));
    Var probs = ad::reshape(ad::sigmoid(logits), {n, m});
    pm.pred_dist.v = probs.val();  // similarity, not a distance, for this model
    return {probs, pm};
  }

  Var sample_loss(ad::Tape& tape, const ad::BoundParams& bound,
                  const PairSample& s) const override {
    auto [probs, pm] = forward_pairs(tape, bound, s);
    long pos = 0, neg = 0;
    for (double x : pm.truth_similar.v) (x > 0.5 ? pos : neg) += 1;
    if (pos == 0 || neg == 0) ++degenerate_pairs_;
    double wp = pos > 0 ? std::clamp(static_cast<double>(neg) / static_cast<double>(pos), 1.0,
                                     50.0)
                        : 1.0;
    Mat weights(pm.truth_similar.rows, pm.truth_similar.cols);
    for (std::size_t i = 0; i < weights.v.size(); ++i)
      weights.v[i] = pm.truth_similar.v[i] > 0.5 ? wp : 1.0;
    return ad::bce(probs, page_constants(tape, pm.truth_similar),
                   page_constants(tape, weights));
  }

  Mat predict(const PairSample& s) const override {
    int c = cfg_.effective_class_count();
    if (!s.has_near) return Mat(s.ref_inputs.real_count, c);
    ad::Tape tape;
    ad::BoundParams bound = bind_params(tape, params_, false);
    PairMatrix pm = tile_and_filter(s.ref_labels, s.near_labels, s.near_inputs.real_count, true);
    if (pm.kept.empty()) return Mat(s.ref_inputs.real_count, c);
    auto [probs, pm2] = forward_pairs(tape, bound, s);
    (void)probs;
    return vote_classes(pm2.pred_dist, false, pm2.kept, s.near_labels, cfg_.vote_threshold);
  }

 private:
  BlockParams block_;
  AttnLayerParams refine_;
  int hidden_dim_ = 0;
  int w1_ = -1, b1_ = -1, w2_ = -1, b2_ = -1;
};

// ---------------------------------------------------------------- QA

class QaModel : public ExtractionModel {
 public:
  explicit QaModel(ModelConfig cfg) : ExtractionModel(std::move(cfg)) {
    Rng rng(cfg_.init_seed);
    block_ = make_block_params(params_, "block", kBoxFeatureDim,
                               4 * cfg_.neighbors_per_edge + 1, cfg_.block, rng);
    int d = cfg_.block.feature_dim;
    int c = cfg_.effective_class_count();
    int q_in = d + (cfg_.qa.field_of_view ? d + c : 0);
    q_proj_w_ = params_.add("qa.query.weight", ad::glorot(q_in, d, rng));
    q_proj_b_ = params_.add("qa.query.bias", Tensor::zeros({1, d}));
    kv_proj_w_ = params_.add("qa.kv.weight", ad::glorot(d + c, d, rng));
    kv_proj_b_ = params_.add("qa.kv.bias", Tensor::zeros({1, d}));
    attn_.wq = params_.add("qa.attn.wq", ad::glorot(d, d, rng));
    attn_.wk = params_.add("qa.attn.wk", ad::glorot(d, d, rng));
    attn_.wv = params_.add("qa.attn.wv", ad::glorot(d, d, rng));
    attn_.wo = params_.add("qa.attn.wo", ad::glorot(d, d, rng));
    attn_.bo = params_.add("qa.attn.bo", Tensor::zeros({1, d}));
    attn_.ln_gain = params_.add("qa.attn.ln.gain", Tensor::full({d}, 1.0));
    attn_.ln_bias = params_.add("qa.attn.ln.bias", Tensor::zeros({d}));
    int head_in = cfg_.qa.skip_connection ? 2 * d : d;
    head_w_ = params_.add("qa.head.weight", ad::glorot(head_in, c, rng));
    head_b_ = params_.add("qa.head.bias", Tensor::zeros({1, c}));
  }

  bool uses_pair() const override { return true; }

  Var forward(ad::Tape& tape, const ad::BoundParams& bound, const PairSample& s) const {
    int d = cfg_.block.feature_dim;
    int c = cfg_.effective_class_count();
    int n = s.ref_inputs.real_count;
    Var ref_emb = real_rows(basic_building_block(tape, bound, block_, s.ref_inputs, cfg_.block),
                            s.ref_inputs);

    Var near_content;  // [M, d + c]
    int near_real = 0;
    std::vector<int> kept;
    if (s.has_near) {
      near_real = s.near_inputs.real_count;
      Var near_emb = real_rows(
          basic_building_block(tape, bound, block_, s.near_inputs, cfg_.block), s.near_inputs);
      Mat near_lab = pad_labels(s.near_labels, near_real);
      near_content = ad::concat({near_emb, page_constants(tape, near_lab)}, 1);
      kept = cfg_.qa.filter ? annotated_rows(s.near_labels, near_real) : [&] {
        std::vector<int> all(static_cast<std::size_t>(near_real));
        for (int j = 0; j < near_real; ++j) all[static_cast<std::size_t>(j)] = j;
        return all;
      }();
    }

    // Keys/values: label-augmented near boxes, optionally the reference
    // boxes themselves with zero label channels.
    std::vector<Var> key_parts;
    if (!kept.empty()) key_parts.push_back(ad::gather_rows(near_content, kept));
    if (cfg_.qa.query_all)
      key_parts.push_back(
          ad::concat({ref_emb, tape.constant(Tensor::zeros({n, c}))}, 1));
    Var keys_in = key_parts.empty()
                      ? tape.constant(Tensor::zeros({0, d + c}))
                      : (key_parts.size() == 1 ? key_parts[0] : ad::concat(key_parts, 0));

    Var q_in = ref_emb;
    if (cfg_.qa.field_of_view) {
      // Pooled content of the geometrically projected near boxes.
      Var fov_feat;
      if (s.has_near && !s.fov.empty()) {
        int fov_k = static_cast<int>(s.fov[0].size());
        Var source = ad::concat({near_content, tape.constant(Tensor::zeros({1, d + c}))}, 0);
        std::vector<int> flat;
        flat.reserve(static_cast<std::size_t>(n) * fov_k);
        Tensor inv_counts = Tensor::zeros({n, 1});
        for (int i = 0; i < n; ++i) {
          int cnt = 0;
          for (int idx : s.fov[static_cast<std::size_t>(i)]) {
            flat.push_back(idx == kNoNeighbor ? near_real : idx);
            if (idx != kNoNeighbor) ++cnt;
          }
          inv_counts.v[static_cast<std::size_t>(i)] = cnt > 0 ? 1.0 / cnt : 0.0;
        }
        Var gathered = ad::reshape(ad::gather_rows(source, flat), {n, fov_k, d + c});
        Var pooled = ad::reduce_sum_axis(gathered, 1);
        fov_feat = ad::mul(pooled, tape.constant(inv_counts));
      } else {
        fov_feat = tape.constant(Tensor::zeros({n, d + c}));
      }
      q_in = ad::concat({ref_emb, fov_feat}, 1);
    }
    Var queries = ad::add(ad::matmul(q_in, bound[q_proj_w_]), row_bias(bound[q_proj_b_]));
    Var kv = ad::add(ad::matmul(keys_in, bound[kv_proj_w_]), row_bias(bound[kv_proj_b_]));

    std::vector<bool> mask(static_cast<std::size_t>(kv.shape()[0]), true);
    Var attn_out = attention(queries, kv, kv, mask, cfg_.block.heads, bind_attn(bound, attn_));

    Var head_in = cfg_.qa.skip_connection ? ad::concat({attn_out, ref_emb}, 1) : attn_out;
    Var logits = ad::add(ad::matmul(head_in, bound[head_w_]), row_bias(bound[head_b_]));
    return ad::sigmoid(logits);
  }

  Var sample_loss(ad::Tape& tape, const ad::BoundParams& bound,
                  const PairSample& s) const override {
    Var probs = forward(tape, bound, s);
    std::vector<bool> all_real(static_cast<std::size_t>(s.ref_inputs.real_count), true);
    Mat weights = loss_weights(s.ref_labels, all_real);
    return ad::bce(probs, page_constants(tape, s.ref_labels), page_constants(tape, weights));
  }

  Mat predict(const PairSample& s) const override {
    ad::Tape tape;
    ad::BoundParams bound = bind_params(tape, params_, false);
    Var probs = forward(tape, bound, s);
    Mat out(s.ref_inputs.real_count, cfg_.effective_class_count());
    out.v = probs.val();
    return out;
  }

 private:
  BlockParams block_;
  AttnLayerParams attn_;
  int q_proj_w_ = -1, q_proj_b_ = -1, kv_proj_w_ = -1, kv_proj_b_ = -1;
  int head_w_ = -1, head_b_ = -1;
};

// ---------------------------------------------------------------- linear

class LinearModel : public ExtractionModel {
 public:
  explicit LinearModel(ModelConfig cfg) : ExtractionModel(std::move(cfg)) {
    if (cfg_.target != TargetKind::kClasses)
      throw ConfigError("linear baseline supports the class target only");
    Rng rng(cfg_.init_seed);
    int f = kBoxFeatureDim;
    int c = cfg_.class_count;
    in_dim_ = 2 * f + c * f;
    w_ = params_.add("linear.weight", ad::glorot(in_dim_, c, rng));
    b_ = params_.add("linear.bias", Tensor::zeros({1, c}));
  }

  bool uses_pair() const override { return true; }

  // One linear layer over [own features | mean near features | per-class
  // max-pooled near features]; no hidden nonlinearity anywhere.
  Mat build_inputs(const PairSample& s) const {
    int f = kBoxFeatureDim;
    int c = cfg_.class_count;
    int n = s.ref_inputs.real_count;
    Mat x(n, in_dim_);
    const Mat& rf = s.ref_inputs.box_features;
    int m = s.has_near ? s.near_inputs.real_count : 0;
    std::vector<double> mean_near(static_cast<std::size_t>(f), 0.0);
    Mat class_max(c, f);
    if (m > 0) {
      const Mat& nf = s.near_inputs.box_features;
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < f; ++k) mean_near[static_cast<std::size_t>(k)] += nf.at(j, k);
      for (double& v : mean_near) v /= m;
      for (int cc = 0; cc < c; ++cc)
        for (int j = 0; j < m; ++j) {
          if (s.near_labels.at(j, cc) <= 0.5) continue;
          for (int k = 0; k < f; ++k)
            class_max.at(cc, k) = std::max(class_max.at(cc, k), nf.at(j, k));
        }
    }
    for (int i = 0; i < n; ++i) {
      int col = 0;
      for (int k = 0; k < f; ++k) x.at(i, col++) = rf.at(i, k);
      for (int k = 0; k < f; ++k) x.at(i, col++) = mean_near[static_cast<std::size_t>(k)];
      for (int cc = 0; cc < c; ++cc)
        for (int k = 0; k < f; ++k) x.at(i, col++) = class_max.at(cc, k);
    }
    return x;
  }

  Var forward(ad::Tape& tape, const ad::BoundParams& bound, const PairSample& s) const {
    Var x = page_constants(tape, build_inputs(s));
    return ad::sigmoid(ad::add(ad::matmul(x, bound[w_]), row_bias(bound[b_])));
  }

  Var sample_loss(ad::Tape& tape, const ad::BoundParams& bound,
                  const PairSample& s) const override {
    Var probs = forward(tape, bound, s);
    std::vector<bool> all_real(static_cast<std::size_t>(s.ref_inputs.real_count), true);
    Mat weights = loss_weights(s.ref_labels, all_real);
    return ad::bce(probs, page_constants(tape, s.ref_labels), page_constants(tape, weights));
  }

  Mat predict(const PairSample& s) const override {
    ad::Tape tape;
    ad::BoundParams bound = bind_params(tape, params_, false);
    Var probs = forward(tape, bound, s);
    Mat out(s.ref_inputs.real_count, cfg_.class_count);
    out.v = probs.val();
    return out;
  }

 private:
  int in_dim_ = 0;
  int w_ = -1, b_ = -1;
};

// ---------------------------------------------------------------- copypaste

class CopypasteModel : public ExtractionModel {
 public:
  explicit CopypasteModel(ModelConfig cfg) : ExtractionModel(std::move(cfg)) {}

  bool uses_pair() const override { return true; }

  Var sample_loss(ad::Tape& tape, const ad::BoundParams&, const PairSample&) const override {
    return tape.constant(Tensor::scalar(0.0));
  }

  Mat predict(const PairSample& s) const override {
    if (!s.has_near) return Mat(s.ref_inputs.real_count, cfg_.effective_class_count());
    return copypaste_predict(s.ref_page, s.near_page, s.near_labels);
  }
};

}  // namespace

std::unique_ptr<ExtractionModel> make_model(const ModelConfig& config) {
  const std::string& a = config.arch;
  if (a == "simple") return std::make_unique<SimpleModel>(config);
  if (a == "triplet") return std::make_unique<TripletModel>(config);
  if (a == "pairwise") return std::make_unique<PairwiseModel>(config);
  if (a == "qa") return std::make_unique<QaModel>(config);
  if (a == "linear") return std::make_unique<LinearModel>(config);
  if (a == "copypaste") return std::make_unique<CopypasteModel>(config);
  throw ConfigError("unknown architecture: " + a);
}

PairMatrix triplet_pair_matrix(const ExtractionModel& model, const PairSample& sample) {
  const auto* triplet = dynamic_cast<const TripletModel*>(&model);
  if (triplet == nullptr) throw ConfigError("triplet_pair_matrix needs a triplet model");
  ad::Tape tape;
  ad::BoundParams bound = bind_params(tape, model.params(), false);
  return triplet->forward_distances(tape, bound, sample).second;
}

}  // namespace docsim
