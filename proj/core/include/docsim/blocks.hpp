#pragma once

#include <string>
#include <vector>

#include "docsim/autodiff.hpp"
#include "docsim/features.hpp"

namespace docsim {

struct BlockConfig {
  int feature_dim = 64;            // per-box embedding width D
  int attention_layers = 1;
  int heads = 4;
  std::vector<int> char_channels = {16, 24};  // stacked char-conv widths
  int char_kernel_width = 3;
  int seq_kernel_width = 3;
  int gcn_width = 0;               // 0 means feature_dim

  int gcn_out() const { return gcn_width > 0 ? gcn_width : feature_dim; }
  int char_out() const { return char_channels.back(); }
  void validate() const;
};

// Handles into a ParamStore for one basic building block. The same handles
// are used for both pages of a pair, which is what makes the block siamese.
struct AttnLayerParams {
  int wq = -1, wk = -1, wv = -1, wo = -1, bo = -1, ln_gain = -1, ln_bias = -1;
};

struct BlockParams {
  std::vector<int> char_kernels;
  std::vector<int> char_biases;
  int gcn_w = -1, gcn_b = -1;
  int seq_kernel = -1, seq_bias = -1;
  std::vector<AttnLayerParams> attn;
  int out_w = -1, out_b = -1;
};

BlockParams make_block_params(ad::ParamStore& store, const std::string& prefix,
                              int box_feature_dim, int neighbor_width,
                              const BlockConfig& config, Rng& rng);

// Attention parameters as one bundle of bound Vars.
struct AttnLayerVars {
  ad::Var wq, wk, wv, wo, bo, ln_gain, ln_bias;
};
AttnLayerVars bind_attn(const ad::BoundParams& bound, const AttnLayerParams& p);

// Stacked 1-D convolutions with relu and a max-pool over the character axis.
// Zero one-hot rows (pads) yield zero outputs when biases are zero; the
// block re-zeroes pad rows explicitly after every stage regardless.
ad::Var char_encoder(ad::Tape& tape, const ad::BoundParams& bound, const BlockParams& bp,
                     const PageInputs& inputs, const BlockConfig& config);

// Gather each box's [self, neighbors] feature rows and apply one shared
// dense layer. Sentinel indexes contribute a zero row. Linear by contract.
ad::Var graph_conv(ad::Var features, const std::vector<std::vector<int>>& neighbor_ids,
                   ad::Var weight, ad::Var bias);

// 1-D convolution over the boxes arranged in reading order, zero padded at
// the sequence ends; rows come back in input order. Linear by contract.
ad::Var seq_conv(ad::Var features, const std::vector<int>& seq_order, ad::Var kernel,
                 ad::Var bias);

// Scaled dot-product multi-head attention, dense projection, residual and
// layer norm. key_mask marks valid key rows; a query with no valid key
// attends to an internal zero sentinel row instead.
ad::Var attention(ad::Var queries, ad::Var keys, ad::Var values,
                  const std::vector<bool>& key_mask, int heads, const AttnLayerVars& p);

// Full shared encoder: concat [box features | char encoding] -> graph conv
// -> seq conv -> self-attention layers -> dense to feature_dim. Pad rows are
// zero throughout and never influence real rows.
ad::Var basic_building_block(ad::Tape& tape, const ad::BoundParams& bound,
                             const BlockParams& bp, const PageInputs& inputs,
                             const BlockConfig& config);

// Host-side helpers shared by the model code.
ad::Var page_constants(ad::Tape& tape, const Mat& m);             // leaf without grad
ad::Var mask_rows(ad::Var x, const std::vector<bool>& keep);      // zero out masked rows

}  // namespace docsim
