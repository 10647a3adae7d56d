#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "docsim/common.hpp"

namespace docsim::ad {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Plain shaped value array. Lives outside any tape; parameters and constants
// are Tensors, graph nodes are Vars.
struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  Tensor(Shape s, std::vector<double> values);
  static Tensor zeros(Shape s);
  static Tensor full(Shape s, double value);
  static Tensor scalar(double value);
};

// Glorot-uniform init for a [fan_in, fan_out] matrix.
Tensor glorot(int fan_in, int fan_out, Rng& rng);

class Tape;

// Handle to one node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  const Shape& shape() const;
  const std::vector<double>& val() const;
  double scalar() const;

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Records primitive applications; parents always precede children, so one
// reverse sweep visits every node exactly once. Single-threaded for the
// duration of one forward/backward pass.
class Tape {
 public:
  struct Node {
    Shape shape;
    std::vector<double> val;
    std::vector<double> grad;  // allocated during backward
    bool requires_grad = false;
    std::function<void(Tape&)> backprop;  // empty for leaves
  };

  Var leaf(const Tensor& t, bool requires_grad);
  Var constant(const Tensor& t) { return leaf(t, false); }

  // Scalar root only. Gradients are then readable for every requires_grad
  // node via grad().
  void backward(Var root);

  const std::vector<double>& grad(Var v) const;
  bool has_grad(Var v) const;

  int size() const { return static_cast<int>(nodes_.size()); }
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  // Used by primitives.
  Var emit(Shape shape, std::vector<double> val, bool requires_grad,
           std::function<void(Tape&)> backprop);
  std::vector<double>& grad_buffer(int id);

 private:
  std::vector<Node> nodes_;
};

// ---- primitive catalog ----
// Elementwise binaries broadcast over: equal shapes, scalar against any
// shape, row [1,K] against [N,K], and column [N,1] against [N,K].
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_const(Var a, double c);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var concat(const std::vector<Var>& parts, int axis);
Var slice(Var a, int axis, int start, int len);
Var reshape(Var a, Shape s);

// Row gather from a 2-D source; backward scatter-adds. Out-of-range indexes
// throw; sentinel values must be remapped to a real (zero) row beforehand.
Var gather_rows(Var a, const std::vector<int>& indices);

// Same-length 1-D convolution over the middle axis of [B, T, Cin] with an
// odd-width kernel [W, Cin, Cout] and bias [Cout], zero-padded at the ends.
Var conv1d(Var x, Var kernel, Var bias);

Var reduce_max(Var a, int axis);   // removes the axis; ties pick the first
Var reduce_sum_axis(Var a, int axis);
Var reduce_sum(Var a);             // all elements -> scalar
Var reduce_mean(Var a);
Var softmax_rows(Var a);           // softmax over the last axis of a 2-D input
Var sigmoid(Var a);
Var relu(Var a);
Var vsqrt(Var a);
Var reciprocal(Var a);

// Per-row normalization over the last axis of [N, D] with gain/bias [D].
Var layer_norm_rows(Var x, Var gain, Var bias);

// a: [N, D], b: [M, D] -> [N, M] of squared Euclidean distances.
Var pairwise_sqdist(Var a, Var b);

// Weighted binary cross-entropy, normalized by the weight sum (zero weight
// sum yields zero loss). target and weight are treated as constants.
Var bce(Var pred, Var target, Var weight);

// ---- verification ----
// Compares tape gradients of a scalar function against central finite
// differences. Relative error uses max(|a|, |b|, 1e-8) as denominator.
// max_coords_per_input == 0 checks every coordinate; a positive value checks
// a deterministic random subset per input. Coordinates whose absolute
// analytic/finite-difference gap stays below absolute_floor count as exact;
// this filters double-precision residue on gradients that are exactly zero
// by symmetry (for example a bias that cancels out of every pairwise
// distance) without masking real defects, which show up at the gradient's
// own magnitude.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;
double grad_check(const ScalarFn& fn, const std::vector<Tensor>& inputs, double eps,
                  int max_coords_per_input = 0, double absolute_floor = 0.0);

// ---- parameters and optimizer ----
class ParamStore {
 public:
  int add(const std::string& name, Tensor t);
  int index_of(const std::string& name) const;  // -1 when absent
  int size() const { return static_cast<int>(tensors_.size()); }
  Tensor& tensor(int i) { return tensors_[static_cast<std::size_t>(i)]; }
  const Tensor& tensor(int i) const { return tensors_[static_cast<std::size_t>(i)]; }
  const std::string& name(int i) const { return names_[static_cast<std::size_t>(i)]; }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
};

// All parameters leafed onto one tape, aligned with the store by index.
struct BoundParams {
  std::vector<Var> vars;
  const Var& operator[](int i) const { return vars[static_cast<std::size_t>(i)]; }
};
BoundParams bind_params(Tape& tape, const ParamStore& params, bool requires_grad = true);

// Gradients for every parameter after backward(); zeros where a parameter
// did not participate.
std::vector<std::vector<double>> collect_grads(const Tape& tape, const BoundParams& bound,
                                               const ParamStore& params);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m, v;
  long step = 0;

  void init_for(const ParamStore& params);
};

void adam_step(ParamStore& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, const AdamConfig& config);

}  // namespace docsim::ad
