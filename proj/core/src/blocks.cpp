#include "docsim/blocks.hpp"

#include <cmath>

namespace docsim {

using ad::Shape;
using ad::Tensor;
using ad::Var;

void BlockConfig::validate() const {
  if (feature_dim <= 0) throw ConfigError("feature_dim must be positive");
  if (attention_layers < 1) throw ConfigError("attention_layers must be at least 1");
  if (heads < 1 || feature_dim % heads != 0)
    throw ConfigError("feature_dim must be divisible by heads");
  if (char_channels.empty()) throw ConfigError("need at least one char-conv layer");
  for (int c : char_channels)
    if (c <= 0) throw ConfigError("char-conv widths must be positive");
  if (char_kernel_width % 2 == 0 || seq_kernel_width % 2 == 0)
    throw ConfigError("kernel widths must be odd");
}

namespace {

Tensor conv_kernel_init(int width, int cin, int cout, Rng& rng) {
  double limit = std::sqrt(6.0 / (width * cin + cout));
  Tensor t = Tensor::zeros({width, cin, cout});
  for (double& x : t.v) x = rng.uniform(-limit, limit);
  return t;
}

}  // namespace

BlockParams make_block_params(ad::ParamStore& store, const std::string& prefix,
                              int box_feature_dim, int neighbor_width,
                              const BlockConfig& config, Rng& rng) {
  config.validate();
  BlockParams bp;
  int cin = alphabet::kSize;
  for (std::size_t l = 0; l < config.char_channels.size(); ++l) {
    int cout = config.char_channels[l];
    bp.char_kernels.push_back(store.add(
        prefix + ".char" + std::to_string(l) + ".kernel",
        conv_kernel_init(config.char_kernel_width, cin, cout, rng)));
    bp.char_biases.push_back(
        store.add(prefix + ".char" + std::to_string(l) + ".bias", Tensor::zeros({cout})));
    cin = cout;
  }

  int concat_dim = box_feature_dim + config.char_out();
  int gcn_in = concat_dim * neighbor_width;
  bp.gcn_w = store.add(prefix + ".gcn.weight", ad::glorot(gcn_in, config.gcn_out(), rng));
  bp.gcn_b = store.add(prefix + ".gcn.bias", Tensor::zeros({config.gcn_out()}));

  bp.seq_kernel = store.add(
      prefix + ".seq.kernel",
      conv_kernel_init(config.seq_kernel_width, config.gcn_out(), config.feature_dim, rng));
  bp.seq_bias = store.add(prefix + ".seq.bias", Tensor::zeros({config.feature_dim}));

  int d = config.feature_dim;
  for (int l = 0; l < config.attention_layers; ++l) {
    AttnLayerParams ap;
    std::string p = prefix + ".attn" + std::to_string(l);
    ap.wq = store.add(p + ".wq", ad::glorot(d, d, rng));
    ap.wk = store.add(p + ".wk", ad::glorot(d, d, rng));
    ap.wv = store.add(p + ".wv", ad::glorot(d, d, rng));
    ap.wo = store.add(p + ".wo", ad::glorot(d, d, rng));
    ap.bo = store.add(p + ".bo", Tensor::zeros({1, d}));
    ap.ln_gain = store.add(p + ".ln.gain", Tensor::full({d}, 1.0));
    ap.ln_bias = store.add(p + ".ln.bias", Tensor::zeros({d}));
    bp.attn.push_back(ap);
  }

  bp.out_w = store.add(prefix + ".out.weight", ad::glorot(d, d, rng));
  bp.out_b = store.add(prefix + ".out.bias", Tensor::zeros({1, d}));
  return bp;
}

AttnLayerVars bind_attn(const ad::BoundParams& bound, const AttnLayerParams& p) {
  return {bound[p.wq], bound[p.wk], bound[p.wv], bound[p.wo],
          bound[p.bo], bound[p.ln_gain], bound[p.ln_bias]};
}

Var page_constants(ad::Tape& tape, const Mat& m) {
  return tape.constant(Tensor({m.rows, m.cols}, m.v));
}

Var mask_rows(Var x, const std::vector<bool>& keep) {
  const Shape& s = x.shape();
  if (s.size() != 2 || s[0] != static_cast<int>(keep.size()))
    throw ShapeError("mask_rows: mask length does not match rows");
  Tensor col = Tensor::zeros({s[0], 1});
  for (int i = 0; i < s[0]; ++i) col.v[static_cast<std::size_t>(i)] = keep[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  return ad::mul(x, x.tape()->constant(col));
}

Var char_encoder(ad::Tape& tape, const ad::BoundParams& bound, const BlockParams& bp,
                 const PageInputs& inputs, const BlockConfig& config) {
  (void)config;  // widths are baked into the parameter shapes
  int n = inputs.padded_count;
  int a = alphabet::kSize;
  Tensor onehot = Tensor::zeros({n, kCharsPerWord, a});
  for (int i = 0; i < n; ++i) {
    const Mat& m = inputs.char_onehots[static_cast<std::size_t>(i)];
    std::copy(m.v.begin(), m.v.end(),
              onehot.v.begin() + static_cast<std::ptrdiff_t>(i) * kCharsPerWord * a);
  }
  Var x = tape.constant(onehot);
  for (std::size_t l = 0; l < bp.char_kernels.size(); ++l) {
    x = ad::conv1d(x, bound[bp.char_kernels[l]], bound[bp.char_biases[l]]);
    x = ad::relu(x);
  }
  Var pooled = ad::reduce_max(x, 1);  // [n, char_out]
  return mask_rows(pooled, inputs.pad_mask);
}

namespace {

Var row_bias(Var bias) {
  const Shape& s = bias.shape();
  if (s.size() == 2) return bias;
  return ad::reshape(bias, {1, s[0]});
}

}  // namespace

Var graph_conv(Var features, const std::vector<std::vector<int>>& neighbor_ids, Var weight,
               Var bias) {
  const Shape& s = features.shape();
  if (s.size() != 2) throw ShapeError("graph_conv: features must be 2-D");
  int n = s[0], f = s[1];
  if (static_cast<int>(neighbor_ids.size()) != n)
    throw ShapeError("graph_conv: neighbor table rows do not match feature rows");
  int width = neighbor_ids.empty() ? 0 : static_cast<int>(neighbor_ids[0].size());

  // Sentinels resolve to an all-zero row appended to the source.
  ad::Tape& tape = *features.tape();
  Var source = ad::concat({features, tape.constant(Tensor::zeros({1, f}))}, 0);
  std::vector<int> flat;
  flat.reserve(static_cast<std::size_t>(n) * width);
  for (const auto& row : neighbor_ids) {
    if (static_cast<int>(row.size()) != width)
      throw ShapeError("graph_conv: ragged neighbor table");
    for (int idx : row) flat.push_back(idx == kNoNeighbor ? n : idx);
  }
  Var gathered = ad::gather_rows(source, flat);            // [n*width, f]
  Var stacked = ad::reshape(gathered, {n, width * f});     // neighbor blocks side by side
  return ad::add(ad::matmul(stacked, weight), row_bias(bias));
}

Var seq_conv(Var features, const std::vector<int>& seq_order, Var kernel, Var bias) {
  const Shape& s = features.shape();
  if (s.size() != 2) throw ShapeError("seq_conv: features must be 2-D");
  int n = s[0], f = s[1];
  if (static_cast<int>(seq_order.size()) != n)
    throw ShapeError("seq_conv: order length does not match rows");

  std::vector<int> by_position(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    int pos = seq_order[static_cast<std::size_t>(i)];
    if (pos < 0 || pos >= n || by_position[static_cast<std::size_t>(pos)] != -1)
      throw ShapeError("seq_conv: order is not a permutation");
    by_position[static_cast<std::size_t>(pos)] = i;
  }
  Var ordered = ad::gather_rows(features, by_position);
  Var conv_in = ad::reshape(ordered, {1, n, f});
  Var conv_out = ad::conv1d(conv_in, kernel, bias);
  int cout = conv_out.shape()[2];
  Var back = ad::gather_rows(ad::reshape(conv_out, {n, cout}), seq_order);
  return back;
}

Var attention(Var queries, Var keys, Var values, const std::vector<bool>& key_mask, int heads,
              const AttnLayerVars& p) {
  const Shape& sq = queries.shape();
  const Shape& sk = keys.shape();
  if (sq.size() != 2 || sk.size() != 2 || values.shape() != sk)
    throw ShapeError("attention: bad input shapes");
  int d = sq[1];
  if (sk[1] != d) throw ShapeError("attention: query/key width mismatch");
  if (d % heads != 0) throw ShapeError("attention: width not divisible by heads");
  int nq = sq[0], nk = sk[0];
  if (static_cast<int>(key_mask.size()) != nk)
    throw ShapeError("attention: mask length does not match keys");
  int dh = d / heads;

  ad::Tape& tape = *queries.tape();
  Var q = ad::matmul(queries, p.wq);
  Var k = ad::matmul(keys, p.wk);
  Var v = ad::matmul(values, p.wv);

  // Zero sentinel key/value row; only attendable when no real key is valid.
  Var zero_row = tape.constant(Tensor::zeros({1, d}));
  k = ad::concat({k, zero_row}, 0);
  v = ad::concat({v, zero_row}, 0);

  bool any_valid = false;
  for (bool b : key_mask) any_valid = any_valid || b;
  Tensor bias_mat = Tensor::zeros({nq, nk + 1});
  for (int i = 0; i < nq; ++i) {
    for (int j = 0; j < nk; ++j)
      if (!key_mask[static_cast<std::size_t>(j)])
        bias_mat.v[static_cast<std::size_t>(i) * (nk + 1) + j] = -1e9;
    if (any_valid) bias_mat.v[static_cast<std::size_t>(i) * (nk + 1) + nk] = -1e9;
  }
  Var mask_bias = tape.constant(bias_mat);

  std::vector<Var> head_outs;
  double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    Var qh = ad::slice(q, 1, h * dh, dh);
    Var kh = ad::slice(k, 1, h * dh, dh);
    Var vh = ad::slice(v, 1, h * dh, dh);
    Var logits = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_scale);
    Var weights = ad::softmax_rows(ad::add(logits, mask_bias));
    head_outs.push_back(ad::matmul(weights, vh));
  }
  Var concat_heads = heads == 1 ? head_outs[0] : ad::concat(head_outs, 1);
  Var projected = ad::add(ad::matmul(concat_heads, p.wo), row_bias(p.bo));
  Var residual = ad::add(projected, queries);
  return ad::layer_norm_rows(residual, p.ln_gain, p.ln_bias);
}

Var basic_building_block(ad::Tape& tape, const ad::BoundParams& bound, const BlockParams& bp,
                         const PageInputs& inputs, const BlockConfig& config) {
  Var chars = char_encoder(tape, bound, bp, inputs, config);
  Var box_feats = page_constants(tape, inputs.box_features);
  Var x = ad::concat({box_feats, chars}, 1);

  x = graph_conv(x, inputs.neighbor_ids, bound[bp.gcn_w], bound[bp.gcn_b]);
  x = mask_rows(ad::relu(x), inputs.pad_mask);

  x = seq_conv(x, inputs.seq_order, bound[bp.seq_kernel], bound[bp.seq_bias]);
  x = mask_rows(ad::relu(x), inputs.pad_mask);

  for (const AttnLayerParams& ap : bp.attn) {
    x = attention(x, x, x, inputs.pad_mask, config.heads, bind_attn(bound, ap));
    x = mask_rows(x, inputs.pad_mask);
  }

  Var out = ad::add(ad::matmul(x, bound[bp.out_w]), row_bias(bound[bp.out_b]));
  return mask_rows(out, inputs.pad_mask);
}

}  // namespace docsim
