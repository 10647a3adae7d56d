#include "docsim/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace docsim::ad {

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), v(std::move(values)) {
  if (static_cast<std::int64_t>(v.size()) != numel(shape))
    throw ShapeError("Tensor: value count does not match shape " + shape_str(shape));
}

Tensor Tensor::zeros(Shape s) {
  std::int64_t n = numel(s);
  return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
}

Tensor Tensor::full(Shape s, double value) {
  std::int64_t n = numel(s);
  return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor glorot(int fan_in, int fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t = Tensor::zeros({fan_in, fan_out});
  for (double& x : t.v) x = rng.uniform(-limit, limit);
  return t;
}

const Shape& Var::shape() const { return tape_->node(id_).shape; }
const std::vector<double>& Var::val() const { return tape_->node(id_).val; }

double Var::scalar() const {
  if (numel(shape()) != 1) throw ShapeError("scalar() on tensor of shape " + shape_str(shape()));
  return val()[0];
}

Var Tape::leaf(const Tensor& t, bool requires_grad) {
  return emit(t.shape, t.v, requires_grad, nullptr);
}

Var Tape::emit(Shape shape, std::vector<double> val, bool requires_grad,
               std::function<void(Tape&)> backprop) {
  Node n;
  n.shape = std::move(shape);
  n.val = std::move(val);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

std::vector<double>& Tape::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) n.grad.assign(n.val.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw ShapeError("backward: root from another tape");
  if (numel(root.shape()) != 1) throw ShapeError("backward: root must be scalar");
  grad_buffer(root.id())[0] = 1.0;
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.empty() || !n.backprop) continue;
    n.backprop(*this);
  }
}

const std::vector<double>& Tape::grad(Var v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.grad.empty()) throw ShapeError("grad: node has no gradient");
  return n.grad;
}

bool Tape::has_grad(Var v) const {
  return !nodes_[static_cast<std::size_t>(v.id())].grad.empty();
}

namespace {

void check_same_tape(Var a, Var b, const char* op) {
  if (a.tape() != b.tape())
    throw ShapeError(std::string(op) + ": operands live on different tapes");
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

// Index strides for the supported broadcast forms.
struct Bcast {
  Shape out;
  int rows = 1, cols = 1;
  // Strides of each operand over (row, col) of the output.
  std::int64_t ar = 0, ac = 0, br = 0, bc = 0;
};

Bcast resolve_broadcast(const char* op, const Shape& a, const Shape& b) {
  Bcast r;
  std::int64_t na = numel(a), nb = numel(b);
  if (a == b) {
    r.out = a;
    r.rows = 1;
    r.cols = static_cast<int>(na);
    r.ar = 0, r.ac = 1, r.br = 0, r.bc = 1;
    return r;
  }
  if (nb == 1) {
    r.out = a;
    r.rows = 1;
    r.cols = static_cast<int>(na);
    r.ar = 0, r.ac = 1, r.br = 0, r.bc = 0;
    return r;
  }
  if (na == 1) {
    r.out = b;
    r.rows = 1;
    r.cols = static_cast<int>(nb);
    r.ar = 0, r.ac = 0, r.br = 0, r.bc = 1;
    return r;
  }
  auto as_row = [](const Shape& s, int k) {
    return (s.size() == 1 && s[0] == k) || (s.size() == 2 && s[0] == 1 && s[1] == k);
  };
  auto as_col = [](const Shape& s, int n) { return s.size() == 2 && s[0] == n && s[1] == 1; };
  if (a.size() == 2) {
    int n = a[0], k = a[1];
    if (as_row(b, k)) {
      r.out = a, r.rows = n, r.cols = k;
      r.ar = k, r.ac = 1, r.br = 0, r.bc = 1;
      return r;
    }
    if (as_col(b, n)) {
      r.out = a, r.rows = n, r.cols = k;
      r.ar = k, r.ac = 1, r.br = 1, r.bc = 0;
      return r;
    }
  }
  if (b.size() == 2) {
    int n = b[0], k = b[1];
    if (as_row(a, k)) {
      r.out = b, r.rows = n, r.cols = k;
      r.ar = 0, r.ac = 1, r.br = k, r.bc = 1;
      return r;
    }
    if (as_col(a, n)) {
      r.out = b, r.rows = n, r.cols = k;
      r.ar = 1, r.ac = 0, r.br = k, r.bc = 1;
      return r;
    }
  }
  shape_fail(op, a, b);
}

template <typename Fwd, typename BwdA, typename BwdB>
Var emit_binary(const char* op, Var a, Var b, Fwd fwd, BwdA bwd_a, BwdB bwd_b) {
  check_same_tape(a, b, op);
  Tape& t = *a.tape();
  Bcast bc = resolve_broadcast(op, a.shape(), b.shape());
  std::vector<double> out(static_cast<std::size_t>(numel(bc.out)));
  const auto& av = a.val();
  const auto& bv = b.val();
  std::size_t o = 0;
  for (int i = 0; i < bc.rows; ++i)
    for (int j = 0; j < bc.cols; ++j, ++o)
      out[o] = fwd(av[static_cast<std::size_t>(i * bc.ar + j * bc.ac)],
                   bv[static_cast<std::size_t>(i * bc.br + j * bc.bc)]);
  bool rg = t.node(a.id()).requires_grad || t.node(b.id()).requires_grad;
  int aid = a.id(), bid = b.id();
  Var result = t.emit(bc.out, std::move(out), rg, nullptr);
  if (rg) {
    int self = result.id();
    t.node(self).backprop = [self, aid, bid, bc, bwd_a, bwd_b](Tape& tp) {
      const auto& g = tp.node(self).grad;
      const auto& av2 = tp.node(aid).val;
      const auto& bv2 = tp.node(bid).val;
      bool need_a = tp.node(aid).requires_grad;
      bool need_b = tp.node(bid).requires_grad;
      std::vector<double>* da = need_a ? &tp.grad_buffer(aid) : nullptr;
      std::vector<double>* db = need_b ? &tp.grad_buffer(bid) : nullptr;
      std::size_t o2 = 0;
      for (int i = 0; i < bc.rows; ++i)
        for (int j = 0; j < bc.cols; ++j, ++o2) {
          std::size_t ia = static_cast<std::size_t>(i * bc.ar + j * bc.ac);
          std::size_t ib = static_cast<std::size_t>(i * bc.br + j * bc.bc);
          double gv = g[o2];
          if (gv == 0.0) continue;
          if (da) (*da)[ia] += bwd_a(gv, av2[ia], bv2[ib]);
          if (db) (*db)[ib] += bwd_b(gv, av2[ia], bv2[ib]);
        }
    };
  }
  return result;
}

template <typename Fwd, typename Bwd>
Var emit_unary(Var a, Fwd fwd, Bwd bwd) {
  Tape& t = *a.tape();
  const auto& av = a.val();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  bool rg = t.node(a.id()).requires_grad;
  int aid = a.id();
  Var result = t.emit(a.shape(), std::move(out), rg, nullptr);
  if (rg) {
    int self = result.id();
    t.node(self).backprop = [self, aid, bwd](Tape& tp) {
      const auto& g = tp.node(self).grad;
      const auto& x = tp.node(aid).val;
      const auto& y = tp.node(self).val;
      auto& da = tp.grad_buffer(aid);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (g[i] != 0.0) da[i] += bwd(g[i], x[i], y[i]);
    };
  }
  return result;
}

// Flatten a shape as [outer, axis_len, inner] around one axis.
struct AxisView {
  std::int64_t outer = 1, len = 1, inner = 1;
  Shape reduced;
};

AxisView axis_view(const Shape& s, int axis, const char* op) {
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(s));
  AxisView v;
  for (int i = 0; i < axis; ++i) v.outer *= s[static_cast<std::size_t>(i)];
  v.len = s[static_cast<std::size_t>(axis)];
  for (int i = axis + 1; i < static_cast<int>(s.size()); ++i)
    v.inner *= s[static_cast<std::size_t>(i)];
  for (int i = 0; i < static_cast<int>(s.size()); ++i)
    if (i != axis) v.reduced.push_back(s[static_cast<std::size_t>(i)]);
  if (v.reduced.empty()) v.reduced = {1};
  return v;
}

}  // namespace

Var add(Var a, Var b) {
  return emit_binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Var sub(Var a, Var b) {
  return emit_binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Var mul(Var a, Var b) {
  return emit_binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  return emit_unary(
      a, [s](double x) { return s * x; }, [s](double g, double, double) { return s * g; });
}

Var add_const(Var a, double c) {
  return emit_unary(
      a, [c](double x) { return x + c; }, [](double g, double, double) { return g; });
}

Var sigmoid(Var a) {
  return emit_unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double g, double, double y) { return g * y * (1.0 - y); });
}

Var relu(Var a) {
  return emit_unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double g, double x, double) { return x > 0.0 ? g : 0.0; });
}

Var vsqrt(Var a) {
  for (double x : a.val())
    if (x <= 0.0) throw ShapeError("vsqrt: input must be positive");
  return emit_unary(
      a, [](double x) { return std::sqrt(x); },
      [](double g, double, double y) { return g / (2.0 * y); });
}

Var reciprocal(Var a) {
  return emit_unary(
      a, [](double x) { return 1.0 / x; },
      [](double g, double x, double) { return -g / (x * x); });
}

Var matmul(Var a, Var b) {
  check_same_tape(a, b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) shape_fail("matmul", sa, sb);
  int n = sa[0], k = sa[1], m = sb[1];
  Tape& t = *a.tape();
  std::vector<double> out(static_cast<std::size_t>(n) * m, 0.0);
  const auto& av = a.val();
  const auto& bv = b.val();
  for (int i = 0; i < n; ++i) {
    const double* arow = &av[static_cast<std::size_t>(i) * k];
    double* orow = &out[static_cast<std::size_t>(i) * m];
    for (int kk = 0; kk < k; ++kk) {
      double x = arow[kk];
      if (x == 0.0) continue;
      const double* brow = &bv[static_cast<std::size_t>(kk) * m];
      for (int j = 0; j < m; ++j) orow[j] += x * brow[j];
    }
  }
  bool rg = t.node(a.id()).requires_grad || t.node(b.id()).requires_grad;
  int aid = a.id(), bid = b.id();
  Var result = t.emit({n, m}, std::move(out), rg, nullptr);
  if (rg) {
    int self = result.id();
    t.node(self).backprop = [self, aid, bid, n, k, m](Tape& tp) {
      const auto& g = tp.node(self).grad;
      const auto& av2 = tp.node(aid).val;
      const auto& bv2 = tp.node(bid).val;
      if (tp.node(aid).requires_grad) {
        auto& da = tp.grad_buffer(aid);
        for (int i = 0; i < n; ++i) {
          const double* grow = &g[static_cast<std::size_t>(i) * m];
          double* darow = &da[static_cast<std::size_t>(i) * k];
          for (int kk = 0; kk < k; ++kk) {
            const double* brow = &bv2[static_cast<std::size_t>(kk) * m];
            double s = 0.0;
            for (int j = 0; j < m; ++j) s += grow[j] * brow[j];
            darow[kk] += s;
          }
        }
      }
      if (tp.node(bid).requires_grad) {
        auto& db = tp.grad_buffer(bid);
        for (int i = 0; i < n; ++i) {
          const double* arow = &av2[static_cast<std::size_t>(i) * k];
          const double* grow = &g[static_cast<std::size_t>(i) * m];
          for (int kk = 0; kk < k; ++kk) {
            double x = arow[kk];
            if (x == 0.0) continue;
            double* dbrow = &db[static_cast<std::size_t>(kk) * m];
            for (int j = 0; j < m; ++j) dbrow[j] += x * grow[j];
          }
        }
      }
    };
  }
  return result;
}

Var transpose(Var a) {
  const Shape& s = a.shape();
  if (s.size() != 2) throw ShapeError("transpose: need 2-D, got " + shape_str(s));
  int n = s[0], m = s[1];
  Tape& t = *a.tape();
  std::vector<double> out(static_cast<std::size_t>(n) * m);
  const auto& av = a.val();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      out[static_cast<std::size_t>(j) * n + i] = av[static_cast<std::size_t>(i) * m + j];
  bool rg = t.node(a.id()).requires_grad;
  int aid = a.id();
  Var result = t.emit({m, n}, std::move(out), rg, nullptr);
  if (rg) {
    int self = result.id();
    t.node(self).backprop = [self, aid, n, m](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& da = tp.grad_buffer(aid);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
          da[static_cast<std::size_t>(i) * m + j] += g[static_cast<std::size_t>(j) * n + i];
    };
  }
  return result;
}

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Tape& t = *parts[0].tape();
  Shape base = parts[0].shape();
  for (const Var& p : parts) {
    check_same_tape(parts[0], p, "concat");
    if (p.shape().size() != base.size()) shape_fail("concat", base, p.shape());
    for (int d = 0; d < static_cast<int>(base.size()); ++d)
      if (d != axis && p.shape()[static_cast<std::size_t>(d)] != base[static_cast<std::size_t>(d)])
        shape_fail("concat", base, p.shape());
  }
  AxisView v0 = axis_view(base, axis, "concat");
  std::int64_t total_len = 0;
  std::vector<std::int64_t> lens;
  for (const Var& p : parts) {
    AxisView v = axis_view(p.shape(), axis, "concat");
    lens.push_back(v.len);
    total_len += v.len;
  }
  Shape out_shape = base;
  out_shape[static_cast<std::size_t>(axis)] = static_cast<int>(total_len);

  std::vector<double> out(static_cast<std::size_t>(v0.outer * total_len * v0.inner));
  std::int64_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto& pv = parts[pi].val();
    std::int64_t len = lens[pi];
    for (std::int64_t o = 0; o < v0.outer; ++o)
      for (std::int64_t l = 0; l < len; ++l)
        for (std::int64_t in = 0; in < v0.inner; ++in)
          out[static_cast<std::size_t>((o * total_len + offset + l) * v0.inner + in)] =
              pv[static_cast<std::size_t>((o * len + l) * v0.inner + in)];
    offset += len;
  }

  bool rg = false;
  std::vector<int> pids;
  for (const Var& p : parts) {
    rg = rg || t.node(p.id()).requires_grad;
    pids.push_back(p.id());
  }
  Var result = t.emit(out_shape, std::move(out), rg, nullptr);
  if (rg) {
    int self = result.id();
    std::int64_t outer = v0.outer, inner = v0.inner;
    t.node(self).backprop = [self, pids, lens, outer, inner, total_len](Tape& tp) {
      const auto& g = tp.node(self).grad;
      std::int64_t off = 0;
      for (std::size_t pi = 0; pi < pids.size(); ++pi) {
        std::int64_t len = lens[pi];
        if (tp.node(pids[pi]).requires_grad) {
          auto& da = tp.grad_buffer(pids[pi]);
          for (std::int64_t o = 0; o < outer; ++o)
            for (std::int64_t l = 0; l < len; ++l)
              for (std::int64_t in = 0; in < inner; ++in)
                da[static_cast<std::size_t>((o * len + l) * inner + in)] +=
                    g[static_cast<std::size_t>((o * total_len + off + l) * inner + in)];
        }
        off += len;
      }
    };
  }
  return result;
}

Var slice(Var a, int axis, int start, int len) {
  AxisView v = axis_view(a.shape(), axis, "slice");
  if (start < 0 || len <= 0 || start + len > v.len)
    throw ShapeError("slice: range [" + std::to_string(start) + "," +
                     std::to_string(start + len) + ") out of bounds for axis length " +
                     std::to_string(v.len));
  Shape out_shape = a.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  Tape& t = *a.tape();
  const auto& av = a.val();
  std::vector<double> out(static_cast<std::size_t>(v.outer * len * v.inner));
  for (std::int64_t o = 0; o < v.outer; ++o)
    for (std::int64_t l = 0; l < len; ++l)
      for (std::int64_t in = 0; in < v.inner; ++in)
        out[static_cast<std::size_t>((o * len + l) * v.inner + in)] =
            av[static_cast<std::size_t>((o * v.len + start + l) * v.inner + in)];
  bool rg = t.node(a.id()).requires_grad;
  int aid = a.id();
  Var result = t.emit(out_shape, std::move(out), rg, nullptr);
  if (rg) {
    int self = result.id();
    t.node(self).backprop = [self, aid, v, start, len](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& da = tp.grad_buffer(aid);
      for (std::int64_t o = 0; o < v.outer; ++o)
        for (std::int64_t l = 0; l < len; ++l)
          for (std::int64_t in = 0; in < v.inner; ++in)
            da[static_cast<std::size_t>((o * v.len + start + l) * v.inner + in)] +=
                g[static_cast<std::size_t>((o * len + l) * v.inner + in)];
    };
  }
  return result;
}

Var reshape(Var a, Shape s) {
  if (numel(s) != numel(a.shape()))
    throw ShapeError("reshape: cannot reshape " + shape_str(a.shape()) + " to " + shape_str(s));
  Tape& t = *a.tape();
  bool rg = t.node(a.id()).requires_grad;
  int aid = a.id();
  Var result = t.emit(std::move(s), a.val(), rg, nullptr);
  if (rg) {
    int self = result.id();
    t.node(self).backprop = [self, aid](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& da = tp.grad_buffer(aid);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    };
  }
  return result;
}

Var gather_rows(Var a, const std::vector<int>& indices) {
  const Shape& s = a.shape();
  if (s.size() != 2) throw ShapeError("gather: need 2-D source, got " + shape_str(s));
  int rows = s[0], cols = s[1];
  for (int idx : indices)
    if (idx < 0 || idx >= rows)
      throw ShapeError("gather: index " + std::to_string(idx) + " out of range [0," +
                       std::to_string(rows) + ")");
  Tape& t = *a.tape();
  const auto& av = a.val();
  int k = static_cast<int>(indices.size());
  std::vector<double> out(static_cast<std::size_t>(k) * cols);
  for (int i = 0; i < k; ++i)
    std::copy_n(&av[static_cast<std::size_t>(indices[static_cast<std::size_t>(i)]) * cols], cols,
                &out[static_cast<std::size_t>(i) * cols]);
  bool rg = t.node(a.id()).requires_grad;
  int aid = a.id();
  Var result = t.emit({k, cols}, std::move(out), rg, nullptr);
  if (rg) {
    int self = result.id();
    std::vector<int> idx = indices;
    t.node(self).backprop = [self, aid, idx, cols](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& da = tp.grad_buffer(aid);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const double* grow = &g[i * static_cast<std::size_t>(cols)];
        double* darow = &da[static_cast<std::size_t>(idx[i]) * cols];
        for (int c = 0; c < cols; ++c) darow[c] += grow[c];
      }
    };
  }
  return result;
}

Var conv1d(Var x, Var kernel, Var bias) {
  check_same_tape(x, kernel, "conv1d");
  check_same_tape(x, bias, "conv1d");
  const Shape& sx = x.shape();
  const Shape& sk = kernel.shape();
  if (sx.size() != 3 || sk.size() != 3) shape_fail("conv1d", sx, sk);
  int B = sx[0], T = sx[1], Ci = sx[2];
  int W = sk[0], Co = sk[2];
  if (sk[1] != Ci) shape_fail("conv1d", sx, sk);
  if (W % 2 == 0) throw ShapeError("conv1d: kernel width must be odd");
  if (bias.shape() != Shape{Co} && bias.shape() != Shape{1, Co})
    throw ShapeError("conv1d: bias shape " + shape_str(bias.shape()) + " does not match Cout " +
                     std::to_string(Co));
  int off = (W - 1) / 2;

  Tape& t = *x.tape();
  const auto& xv = x.val();
  const auto& kv = kernel.val();
  const auto& bv = bias.val();
  std::vector<double> out(static_cast<std::size_t>(B) * T * Co);
  for (int b = 0; b < B; ++b)
    for (int tt = 0; tt < T; ++tt)
      for (int co = 0; co < Co; ++co)
        out[(static_cast<std::size_t>(b) * T + tt) * Co + co] = bv[static_cast<std::size_t>(co)];
  // Scatter each nonzero input into the outputs it feeds; zero inputs
  // (one-hot tails, pad rows) cost nothing.
  for (int b = 0; b < B; ++b)
    for (int s = 0; s < T; ++s) {
      const double* xrow = &xv[(static_cast<std::size_t>(b) * T + s) * Ci];
      for (int ci = 0; ci < Ci; ++ci) {
        double xval = xrow[ci];
        if (xval == 0.0) continue;
        for (int w = 0; w < W; ++w) {
          int tout = s - w + off;
          if (tout < 0 || tout >= T) continue;
          const double* krow = &kv[(static_cast<std::size_t>(w) * Ci + ci) * Co];
          double* orow = &out[(static_cast<std::size_t>(b) * T + tout) * Co];
          for (int co = 0; co < Co; ++co) orow[co] += xval * krow[co];
        }
      }
    }

  bool rg = t.node(x.id()).requires_grad || t.node(kernel.id()).requires_grad ||
            t.node(bias.id()).requires_grad;
  int xid = x.id(), kid = kernel.id(), bid = bias.id();
  Var result = t.emit({B, T, Co}, std::move(out), rg, nullptr);
  if (rg) {
    int self = result.id();
    t.node(self).backprop = [self, xid, kid, bid, B, T, Ci, W, Co, off](Tape& tp) {
      const auto& g = tp.node(self).grad;
      const auto& xv2 = tp.node(xid).val;
      const auto& kv2 = tp.node(kid).val;
      if (tp.node(bid).requires_grad) {
        auto& db = tp.grad_buffer(bid);
        for (int b = 0; b < B; ++b)
          for (int tt = 0; tt < T; ++tt) {
            const double* grow = &g[(static_cast<std::size_t>(b) * T + tt) * Co];
            for (int co = 0; co < Co; ++co) db[static_cast<std::size_t>(co)] += grow[co];
          }
      }
      if (tp.node(kid).requires_grad) {
        auto& dk = tp.grad_buffer(kid);
        for (int b = 0; b < B; ++b)
          for (int s = 0; s < T; ++s) {
            const double* xrow = &xv2[(static_cast<std::size_t>(b) * T + s) * Ci];
            for (int ci = 0; ci < Ci; ++ci) {
              double xval = xrow[ci];
              if (xval == 0.0) continue;
              for (int w = 0; w < W; ++w) {
                int tout = s - w + off;
                if (tout < 0 || tout >= T) continue;
                const double* grow = &g[(static_cast<std::size_t>(b) * T + tout) * Co];
                double* dkrow = &dk[(static_cast<std::size_t>(w) * Ci + ci) * Co];
                for (int co = 0; co < Co; ++co) dkrow[co] += xval * grow[co];
              }
            }
          }
      }
      if (tp.node(xid).requires_grad) {
        auto& dx = tp.grad_buffer(xid);
        for (int b = 0; b < B; ++b)
          for (int s = 0; s < T; ++s) {
            double* dxrow = &dx[(static_cast<std::size_t>(b) * T + s) * Ci];
            for (int w = 0; w < W; ++w) {
              int tout = s - w + off;
              if (tout < 0 || tout >= T) continue;
              const double* grow = &g[(static_cast<std::size_t>(b) * T + tout) * Co];
              for (int ci = 0; ci < Ci; ++ci) {
                const double* krow = &kv2[(static_cast<std::size_t>(w) * Ci + ci) * Co];
                double s2 = 0.0;
                for (int co = 0; co < Co; ++co) s2 += krow[co] * grow[co];
                dxrow[ci] += s2;
              }
            }
          }
      }
    };
  }
  return result;
}

Var reduce_max(Var a, int axis) {
  AxisView v = axis_view(a.shape(), axis, "reduce_max");
  Tape& t = *a.tape();
  const auto& av = a.val();
  std::vector<double> out(static_cast<std::size_t>(v.outer * v.inner));
  std::vector<std::int64_t> argmax(out.size());
  for (std::int64_t o = 0; o < v.outer; ++o)
    for (std::int64_t in = 0; in < v.inner; ++in) {
      std::int64_t best = 0;
      double bv = av[static_cast<std::size_t>((o * v.len) * v.inner + in)];
      for (std::int64_t l = 1; l < v.len; ++l) {
        double x = av[static_cast<std::size_t>((o * v.len + l) * v.inner + in)];
        if (x > bv) {
          bv = x;
          best = l;
        }
      }
      out[static_cast<std::size_t>(o * v.inner + in)] = bv;
      argmax[static_cast<std::size_t>(o * v.inner + in)] = (o * v.len + best) * v.inner + in;
    }
  bool rg = t.node(a.id()).requires_grad;
  int aid = a.id();
  Var result = t.emit(v.reduced, std::move(out), rg, nullptr);
  if (rg) {
    int self = result.id();
    t.node(self).backprop = [self, aid, argmax](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& da = tp.grad_buffer(aid);
      for (std::size_t i = 0; i < g.size(); ++i)
        da[static_cast<std::size_t>(argmax[i])] += g[i];
    };
  }
  return result;
}

Var reduce_sum_axis(Var a, int axis) {
  AxisView v = axis_view(a.shape(), axis, "reduce_sum");
  Tape& t = *a.tape();
  const auto& av = a.val();
  std::vector<double> out(static_cast<std::size_t>(v.outer * v.inner), 0.0);
  for (std::int64_t o = 0; o < v.outer; ++o)
    for (std::int64_t l = 0; l < v.len; ++l)
      for (std::int64_t in = 0; in < v.inner; ++in)
        out[static_cast<std::size_t>(o * v.inner + in)] +=
            av[static_cast<std::size_t>((o * v.len + l) * v.inner + in)];
  bool rg = t.node(a.id()).requires_grad;
  int aid = a.id();
  Var result = t.emit(v.reduced, std::move(out), rg, nullptr);
  if (rg) {
    int self = result.id();
    t.node(self).backprop = [self, aid, v](Tape& tp) {
      const auto& g = tp.node(self).grad;
      auto& da = tp.grad_buffer(aid);
      for (std::int64_t o = 0; o < v.outer; ++o)
        for (std::int64_t l = 0; l < v.len; ++l)
          for (std::int64_t in = 0; in < v.inner; ++in)
            da[static_cast<std::size_t>((o * v.len + l) * v.inner + in)] +=
                g[static_cast<std::size_t>(o * v.inner + in)];
    };
  }
  return result;
}

Var reduce_sum(Var a) {
  std::int64_t n = numel(a.shape());
  Var flat = reshape(a, {static_cast<int>(n)});
  return reduce_sum_axis(flat, 0);
}

Var reduce_mean(Var a) {
  std::int64_t n = numel(a.shape());
  return scale(reduce_sum(a), 1.0 / static_cast<double>(n));
}

Var softmax_rows(Var a) {
  const Shape& s = a.shape();
  if (s.size() != 2) throw ShapeError("softmax: need 2-D, got " + shape_str(s));
  int n = s[0], k = s[1];
  Tape& t = *a.tape();
  const auto& av = a.val();
  std::vector<double> out(av.size());
  for (int i = 0; i < n; ++i) {
    const double* row = &av[static_cast<std::size_t>(i) * k];
    double* orow = &out[static_cast<std::size_t>(i) * k];
    double mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (int j = 0; j < k; ++j) orow[j] /= sum;
  }
  bool rg = t.node(a.id()).requires_grad;
  int aid = a.id();
  Var result = t.emit(s, std::move(out), rg, nullptr);
  if (rg) {
    int self = result.id();
    t.node(self).backprop = [self, aid, n, k](Tape& tp) {
      const auto& g = tp.node(self).grad;
      const auto& y = tp.node(self).val;
      auto& da = tp.grad_buffer(aid);
      for (int i = 0; i < n; ++i) {
        const double* yrow = &y[static_cast<std::size_t>(i) * k];
        const double* grow = &g[static_cast<std::size_t>(i) * k];
        double dot = 0.0;
        for (int j = 0; j < k; ++j) dot += grow[j] * yrow[j];
        double* darow = &da[static_cast<std::size_t>(i) * k];
        for (int j = 0; j < k; ++j) darow[j] += yrow[j] * (grow[j] - dot);
      }
    };
  }
  return result;
}

Var layer_norm_rows(Var x, Var gain, Var bias) {
  check_same_tape(x, gain, "layer_norm");
  check_same_tape(x, bias, "layer_norm");
  const Shape& s = x.shape();
  if (s.size() != 2) throw ShapeError("layer_norm: need 2-D, got " + shape_str(s));
  int n = s[0], d = s[1];
  if (numel(gain.shape()) != d || numel(bias.shape()) != d)
    throw ShapeError("layer_norm: gain/bias must have " + std::to_string(d) + " entries");
  constexpr double kEps = 1e-5;

  Tape& t = *x.tape();
  const auto& xv = x.val();
  const auto& gv = gain.val();
  const auto& bv = bias.val();
  std::vector<double> out(xv.size());
  std::vector<double> mean(static_cast<std::size_t>(n)), istd(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double* row = &xv[static_cast<std::size_t>(i) * d];
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += row[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= d;
    double is = 1.0 / std::sqrt(var + kEps);
    mean[static_cast<std::size_t>(i)] = mu;
    istd[static_cast<std::size_t>(i)] = is;
    double* orow = &out[static_cast<std::size_t>(i) * d];
    for (int j = 0; j < d; ++j) orow[j] = (row[j] - mu) * is * gv[static_cast<std::size_t>(j)] +
                                          bv[static_cast<std::size_t>(j)];
  }
  bool rg = t.node(x.id()).requires_grad || t.node(gain.id()).requires_grad ||
            t.node(bias.id()).requires_grad;
  int xid = x.id(), gid = gain.id(), bid = bias.id();
  Var result = t.emit(s, std::move(out), rg, nullptr);
  if (rg) {
    int self = result.id();
    t.node(self).backprop = [self, xid, gid, bid, n, d, mean, istd](Tape& tp) {
      const auto& g = tp.node(self).grad;
      const auto& xv2 = tp.node(xid).val;
      const auto& gv2 = tp.node(gid).val;
      bool need_x = tp.node(xid).requires_grad;
      bool need_g = tp.node(gid).requires_grad;
      bool need_b = tp.node(bid).requires_grad;
      std::vector<double>* dx = need_x ? &tp.grad_buffer(xid) : nullptr;
      std::vector<double>* dg = need_g ? &tp.grad_buffer(gid) : nullptr;
      std::vector<double>* db = need_b ? &tp.grad_buffer(bid) : nullptr;
      for (int i = 0; i < n; ++i) {
        const double* xrow = &xv2[static_cast<std::size_t>(i) * d];
        const double* grow = &g[static_cast<std::size_t>(i) * d];
        double mu = mean[static_cast<std::size_t>(i)];
        double is = istd[static_cast<std::size_t>(i)];
        double dxhat_mean = 0.0, dxhat_xhat_mean = 0.0;
        for (int j = 0; j < d; ++j) {
          double xhat = (xrow[j] - mu) * is;
          double dxhat = grow[j] * gv2[static_cast<std::size_t>(j)];
          dxhat_mean += dxhat;
          dxhat_xhat_mean += dxhat * xhat;
          if (dg) (*dg)[static_cast<std::size_t>(j)] += grow[j] * xhat;
          if (db) (*db)[static_cast<std::size_t>(j)] += grow[j];
        }
        dxhat_mean /= d;
        dxhat_xhat_mean /= d;
        if (dx) {
          double* dxrow = &(*dx)[static_cast<std::size_t>(i) * d];
          for (int j = 0; j < d; ++j) {
            double xhat = (xrow[j] - mu) * is;
            double dxhat = grow[j] * gv2[static_cast<std::size_t>(j)];
            dxrow[j] += is * (dxhat - dxhat_mean - xhat * dxhat_xhat_mean);
          }
        }
      }
    };
  }
  return result;
}

Var pairwise_sqdist(Var a, Var b) {
  check_same_tape(a, b, "pairwise_sqdist");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[1]) shape_fail("pairwise_sqdist", sa, sb);
  int n = sa[0], m = sb[0], d = sa[1];
  Tape& t = *a.tape();
  const auto& av = a.val();
  const auto& bv = b.val();
  std::vector<double> out(static_cast<std::size_t>(n) * m, 0.0);
  for (int i = 0; i < n; ++i) {
    const double* arow = &av[static_cast<std::size_t>(i) * d];
    for (int j = 0; j < m; ++j) {
      const double* brow = &bv[static_cast<std::size_t>(j) * d];
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        double diff = arow[k] - brow[k];
        s += diff * diff;
      }
      out[static_cast<std::size_t>(i) * m + j] = s;
    }
  }
  bool rg = t.node(a.id()).requires_grad || t.node(b.id()).requires_grad;
  int aid = a.id(), bid = b.id();
  Var result = t.emit({n, m}, std::move(out), rg, nullptr);
  if (rg) {
    int self = result.id();
    t.node(self).backprop = [self, aid, bid, n, m, d](Tape& tp) {
      const auto& g = tp.node(self).grad;
      const auto& av2 = tp.node(aid).val;
      const auto& bv2 = tp.node(bid).val;
      bool need_a = tp.node(aid).requires_grad;
      bool need_b = tp.node(bid).requires_grad;
      std::vector<double>* da = need_a ? &tp.grad_buffer(aid) : nullptr;
      std::vector<double>* db = need_b ? &tp.grad_buffer(bid) : nullptr;
      for (int i = 0; i < n; ++i) {
        const double* arow = &av2[static_cast<std::size_t>(i) * d];
        for (int j = 0; j < m; ++j) {
          double gv = g[static_cast<std::size_t>(i) * m + j];
          if (gv == 0.0) continue;
          const double* brow = &bv2[static_cast<std::size_t>(j) * d];
          for (int k = 0; k < d; ++k) {
            double diff = 2.0 * (arow[k] - brow[k]) * gv;
            if (da) (*da)[static_cast<std::size_t>(i) * d + k] += diff;
            if (db) (*db)[static_cast<std::size_t>(j) * d + k] -= diff;
          }
        }
      }
    };
  }
  return result;
}

namespace {
constexpr double kBceClamp = 1e-12;
}

Var bce(Var pred, Var target, Var weight) {
  check_same_tape(pred, target, "bce");
  check_same_tape(pred, weight, "bce");
  if (pred.shape() != target.shape() || pred.shape() != weight.shape())
    throw ShapeError("bce: pred " + shape_str(pred.shape()) + ", target " +
                     shape_str(target.shape()) + " and weight " + shape_str(weight.shape()) +
                     " must agree");
  Tape& t = *pred.tape();
  const auto& pv = pred.val();
  const auto& tv = target.val();
  const auto& wv = weight.val();
  double wsum = 0.0, loss = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    double p = std::clamp(pv[i], kBceClamp, 1.0 - kBceClamp);
    loss += wv[i] * -(tv[i] * std::log(p) + (1.0 - tv[i]) * std::log(1.0 - p));
    wsum += wv[i];
  }
  double out = wsum > 0.0 ? loss / wsum : 0.0;
  bool rg = t.node(pred.id()).requires_grad;
  int pid = pred.id(), tid = target.id(), wid = weight.id();
  Var result = t.emit({1}, {out}, rg, nullptr);
  if (rg) {
    int self = result.id();
    t.node(self).backprop = [self, pid, tid, wid, wsum](Tape& tp) {
      if (wsum <= 0.0) return;
      double g = tp.node(self).grad[0];
      if (g == 0.0) return;
      const auto& pv2 = tp.node(pid).val;
      const auto& tv2 = tp.node(tid).val;
      const auto& wv2 = tp.node(wid).val;
      auto& dp = tp.grad_buffer(pid);
      for (std::size_t i = 0; i < pv2.size(); ++i) {
        if (wv2[i] == 0.0) continue;
        double p = std::clamp(pv2[i], kBceClamp, 1.0 - kBceClamp);
        dp[i] += g * wv2[i] * (p - tv2[i]) / (p * (1.0 - p)) / wsum;
      }
    };
  }
  return result;
}

double grad_check(const ScalarFn& fn, const std::vector<Tensor>& inputs, double eps,
                  int max_coords_per_input, double absolute_floor) {
  if (eps <= 0.0) throw ConfigError("grad_check: eps must be positive");

  auto eval = [&](const std::vector<Tensor>& ins) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(ins.size());
    for (const Tensor& t : ins) vars.push_back(tape.leaf(t, false));
    Var y = fn(tape, vars);
    if (numel(y.shape()) != 1) throw ShapeError("grad_check: function output is not scalar");
    return y.val()[0];
  };

  // Analytic pass.
  Tape tape;
  std::vector<Var> vars;
  for (const Tensor& t : inputs) vars.push_back(tape.leaf(t, true));
  Var y = fn(tape, vars);
  if (numel(y.shape()) != 1) throw ShapeError("grad_check: function output is not scalar");
  tape.backward(y);

  double max_rel = 0.0;
  std::vector<Tensor> work = inputs;
  for (std::size_t ii = 0; ii < inputs.size(); ++ii) {
    std::size_t n = inputs[ii].v.size();
    std::vector<std::size_t> coords;
    if (max_coords_per_input <= 0 || n <= static_cast<std::size_t>(max_coords_per_input)) {
      coords.resize(n);
      for (std::size_t c = 0; c < n; ++c) coords[c] = c;
    } else {
      Rng rng(0x9dc5f00dULL ^ (ii * 0x9e3779b97f4a7c15ULL));
      std::set<std::size_t> chosen;
      while (chosen.size() < static_cast<std::size_t>(max_coords_per_input))
        chosen.insert(static_cast<std::size_t>(rng.next_below(n)));
      coords.assign(chosen.begin(), chosen.end());
    }
    const std::vector<double>* analytic =
        tape.has_grad(vars[ii]) ? &tape.grad(vars[ii]) : nullptr;
    for (std::size_t c : coords) {
      double saved = work[ii].v[c];
      work[ii].v[c] = saved + eps;
      double fp = eval(work);
      work[ii].v[c] = saved - eps;
      double fm = eval(work);
      work[ii].v[c] = saved;
      double fd = (fp - fm) / (2.0 * eps);
      double an = analytic ? (*analytic)[c] : 0.0;
      if (std::abs(an - fd) <= absolute_floor) continue;
      double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

int ParamStore::add(const std::string& name, Tensor t) {
  if (index_of(name) >= 0) throw ConfigError("duplicate parameter name: " + name);
  names_.push_back(name);
  tensors_.push_back(std::move(t));
  return static_cast<int>(tensors_.size()) - 1;
}

int ParamStore::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  return -1;
}

BoundParams bind_params(Tape& tape, const ParamStore& params, bool requires_grad) {
  BoundParams bound;
  bound.vars.reserve(static_cast<std::size_t>(params.size()));
  for (int i = 0; i < params.size(); ++i)
    bound.vars.push_back(tape.leaf(params.tensor(i), requires_grad));
  return bound;
}

std::vector<std::vector<double>> collect_grads(const Tape& tape, const BoundParams& bound,
                                               const ParamStore& params) {
  std::vector<std::vector<double>> grads(static_cast<std::size_t>(params.size()));
  for (int i = 0; i < params.size(); ++i) {
    const Var& v = bound.vars[static_cast<std::size_t>(i)];
    if (tape.has_grad(v))
      grads[static_cast<std::size_t>(i)] = tape.grad(v);
    else
      grads[static_cast<std::size_t>(i)].assign(params.tensor(i).v.size(), 0.0);
  }
  return grads;
}

void AdamState::init_for(const ParamStore& params) {
  m.assign(static_cast<std::size_t>(params.size()), {});
  v.assign(static_cast<std::size_t>(params.size()), {});
  for (int i = 0; i < params.size(); ++i) {
    m[static_cast<std::size_t>(i)].assign(params.tensor(i).v.size(), 0.0);
    v[static_cast<std::size_t>(i)].assign(params.tensor(i).v.size(), 0.0);
  }
  step = 0;
}

void adam_step(ParamStore& params, const std::vector<std::vector<double>>& grads,
               AdamState& state, const AdamConfig& config) {
  if (static_cast<int>(grads.size()) != params.size())
    throw ShapeError("adam_step: gradient count does not match parameter count");
  if (state.m.size() != grads.size()) state.init_for(params);
  state.step += 1;
  double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (int i = 0; i < params.size(); ++i) {
    auto& theta = params.tensor(i).v;
    const auto& g = grads[static_cast<std::size_t>(i)];
    if (g.size() != theta.size()) throw ShapeError("adam_step: gradient shape mismatch");
    auto& m = state.m[static_cast<std::size_t>(i)];
    auto& v = state.v[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
      v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
      double mhat = m[k] / bc1;
      double vhat = v[k] / bc2;
      theta[k] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
    }
  }
}

}  // namespace docsim::ad
