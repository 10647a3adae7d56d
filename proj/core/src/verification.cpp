#include "docsim/verification.hpp"

#include <cmath>
#include <functional>

#include "docsim/architectures.hpp"
#include "docsim/autodiff.hpp"

namespace docsim {

namespace {

using ad::Shape;
using ad::Tensor;
using ad::Var;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& x : t.v) x = rng.uniform(lo, hi);
  return t;
}

// Values pairwise distinct and away from zero, so max-reductions and relu
// stay differentiable at the checked point.
Tensor generic_tensor(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (std::size_t i = 0; i < t.v.size(); ++i) {
    double sign = rng.next_below(2) == 0 ? -1.0 : 1.0;
    t.v[i] = sign * rng.uniform(0.15, 1.0) + 1e-4 * static_cast<double>(i);
  }
  return t;
}

// Scalarize through a fixed random weighting so every output cell carries a
// distinct gradient.
Var weighted_sum(ad::Tape& tape, Var x, Rng& rng) {
  Tensor w = random_tensor(x.shape(), rng, 0.2, 1.0);
  return ad::reduce_sum(ad::mul(x, tape.constant(w)));
}

struct Case {
  std::string name;
  std::function<double(Rng&)> run;  // returns max relative error
};

double check(const ad::ScalarFn& fn, const std::vector<Tensor>& inputs) {
  return ad::grad_check(fn, inputs, 1e-4);
}

std::vector<Case> primitive_cases() {
  std::vector<Case> cases;
  auto dims = [](Rng& rng) { return 1 + static_cast<int>(rng.next_below(4)); };

  cases.push_back({"add", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    Rng wr = rng.fork(1);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::add(v[0], v[1]), w);
        },
        {generic_tensor({n, k}, rng), generic_tensor({n, k}, rng)});
  }});
  cases.push_back({"add.row_broadcast", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    Rng wr = rng.fork(2);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::add(v[0], v[1]), w);
        },
        {generic_tensor({n, k}, rng), generic_tensor({1, k}, rng)});
  }});
  cases.push_back({"add.col_broadcast", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    Rng wr = rng.fork(3);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::add(v[0], v[1]), w);
        },
        {generic_tensor({n, k}, rng), generic_tensor({n, 1}, rng)});
  }});
  cases.push_back({"sub", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    Rng wr = rng.fork(4);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::sub(v[0], v[1]), w);
        },
        {generic_tensor({n, k}, rng), generic_tensor({n, k}, rng)});
  }});
  cases.push_back({"mul", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    Rng wr = rng.fork(5);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::mul(v[0], v[1]), w);
        },
        {generic_tensor({n, k}, rng), generic_tensor({n, k}, rng)});
  }});
  cases.push_back({"mul.scalar_broadcast", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    Rng wr = rng.fork(6);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::mul(v[0], v[1]), w);
        },
        {generic_tensor({n, k}, rng), generic_tensor({1}, rng)});
  }});
  cases.push_back({"scale_add_const", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    Rng wr = rng.fork(7);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::add_const(ad::scale(v[0], 0.7), 0.3), w);
        },
        {generic_tensor({n, k}, rng)});
  }});
  cases.push_back({"matmul", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1, m = dims(rng) + 1;
    Rng wr = rng.fork(8);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::matmul(v[0], v[1]), w);
        },
        {generic_tensor({n, k}, rng), generic_tensor({k, m}, rng)});
  }});
  cases.push_back({"transpose", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    Rng wr = rng.fork(9);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::transpose(v[0]), w);
        },
        {generic_tensor({n, k}, rng)});
  }});
  cases.push_back({"concat", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1, k2 = dims(rng) + 1;
    Rng wr = rng.fork(10);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::concat({v[0], v[1]}, 1), w);
        },
        {generic_tensor({n, k}, rng), generic_tensor({n, k2}, rng)});
  }});
  cases.push_back({"slice", [dims](Rng& rng) {
    int n = dims(rng) + 2, k = dims(rng) + 2;
    Rng wr = rng.fork(11);
    return check(
        [&wr, k](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::slice(v[0], 1, 1, k - 1), w);
        },
        {generic_tensor({n, k}, rng)});
  }});
  cases.push_back({"reshape", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    Rng wr = rng.fork(12);
    return check(
        [&wr, n, k](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::reshape(v[0], {k, n}), w);
        },
        {generic_tensor({n, k}, rng)});
  }});
  cases.push_back({"gather.scatter_add", [dims](Rng& rng) {
    int n = dims(rng) + 2, k = dims(rng) + 1;
    std::vector<int> idx;
    for (int i = 0; i < n + 2; ++i)
      idx.push_back(static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n))));
    Rng wr = rng.fork(13);
    return check(
        [&wr, idx](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::gather_rows(v[0], idx), w);
        },
        {generic_tensor({n, k}, rng)});
  }});
  cases.push_back({"conv1d", [dims](Rng& rng) {
    int b = dims(rng), tlen = dims(rng) + 2, ci = dims(rng), co = dims(rng);
    Rng wr = rng.fork(14);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::conv1d(v[0], v[1], v[2]), w);
        },
        {generic_tensor({b, tlen, ci}, rng), generic_tensor({3, ci, co}, rng),
         generic_tensor({co}, rng)});
  }});
  cases.push_back({"reduce_max", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 2;
    Rng wr = rng.fork(15);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::reduce_max(v[0], 1), w);
        },
        {generic_tensor({n, k}, rng)});
  }});
  cases.push_back({"reduce_sum_axis", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    Rng wr = rng.fork(16);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::reduce_sum_axis(v[0], 0), w);
        },
        {generic_tensor({n, k}, rng)});
  }});
  cases.push_back({"reduce_mean", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    return check(
        [](ad::Tape& t, const std::vector<Var>& v) {
          (void)t;
          return ad::reduce_mean(v[0]);
        },
        {generic_tensor({n, k}, rng)});
  }});
  cases.push_back({"softmax", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 2;
    Rng wr = rng.fork(17);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::softmax_rows(v[0]), w);
        },
        {generic_tensor({n, k}, rng)});
  }});
  cases.push_back({"sigmoid", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    Rng wr = rng.fork(18);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::sigmoid(v[0]), w);
        },
        {generic_tensor({n, k}, rng)});
  }});
  cases.push_back({"relu", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    Rng wr = rng.fork(19);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::relu(v[0]), w);
        },
        {generic_tensor({n, k}, rng)});
  }});
  cases.push_back({"vsqrt", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    Rng wr = rng.fork(20);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::vsqrt(v[0]), w);
        },
        {random_tensor({n, k}, rng, 0.4, 2.0)});
  }});
  cases.push_back({"reciprocal", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    Rng wr = rng.fork(21);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::reciprocal(v[0]), w);
        },
        {random_tensor({n, k}, rng, 0.5, 2.0)});
  }});
  cases.push_back({"layer_norm", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 2;
    Rng wr = rng.fork(22);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::layer_norm_rows(v[0], v[1], v[2]), w);
        },
        {generic_tensor({n, k}, rng), random_tensor({k}, rng, 0.5, 1.5),
         random_tensor({k}, rng, -0.3, 0.3)});
  }});
  cases.push_back({"pairwise_sqdist", [dims](Rng& rng) {
    int n = dims(rng) + 1, m = dims(rng) + 1, d = dims(rng) + 1;
    Rng wr = rng.fork(23);
    return check(
        [&wr](ad::Tape& t, const std::vector<Var>& v) {
          Rng w = wr;
          return weighted_sum(t, ad::pairwise_sqdist(v[0], v[1]), w);
        },
        {generic_tensor({n, d}, rng), generic_tensor({m, d}, rng)});
  }});
  cases.push_back({"bce", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    Tensor target = Tensor::zeros({n, k});
    Tensor weight = Tensor::zeros({n, k});
    for (double& x : target.v) x = rng.next_below(2) ? 1.0 : 0.0;
    for (double& x : weight.v) x = rng.uniform(0.2, 2.0);
    return check(
        [target, weight](ad::Tape& t, const std::vector<Var>& v) {
          return ad::bce(v[0], t.constant(target), t.constant(weight));
        },
        {random_tensor({n, k}, rng, 0.1, 0.9)});
  }});
  cases.push_back({"bce.of_sigmoid", [dims](Rng& rng) {
    int n = dims(rng) + 1, k = dims(rng) + 1;
    Tensor target = Tensor::zeros({n, k});
    for (double& x : target.v) x = rng.next_below(2) ? 1.0 : 0.0;
    Tensor weight = Tensor::full({n, k}, 1.0);
    return check(
        [target, weight](ad::Tape& t, const std::vector<Var>& v) {
          return ad::bce(ad::sigmoid(v[0]), t.constant(target), t.constant(weight));
        },
        {generic_tensor({n, k}, rng)});
  }});
  return cases;
}

}  // namespace

std::vector<GradCheckEntry> run_primitive_grad_checks(int shapes_per_primitive) {
  std::vector<GradCheckEntry> out;
  for (const Case& c : primitive_cases()) {
    GradCheckEntry e;
    e.name = c.name;
    Rng rng(fnv1a64(c.name));
    for (int rep = 0; rep < shapes_per_primitive; ++rep) {
      Rng local = rng.fork(static_cast<std::uint64_t>(rep));
      e.max_rel_err = std::max(e.max_rel_err, c.run(local));
    }
    e.pass = e.max_rel_err < e.tolerance;
    out.push_back(e);
  }
  return out;
}

namespace {

Page tiny_page(bool near) {
  Page p;
  p.doc_id = near ? "gc_near" : "gc_ref";
  p.layout_family = "gc";
  auto box = [](const char* text, double l, double t, std::set<int> labels) {
    WordBox b;
    b.text = text;
    b.left = l;
    b.top = t;
    b.right = l + 0.11;
    b.bottom = t + 0.03;
    b.labels = std::move(labels);
    return b;
  };
  if (!near) {
    p.boxes = {box("Total:", 0.10, 0.10, {}), box("12.50", 0.25, 0.10, {0}),
               box("INV-1234", 0.60, 0.32, {1, 2}), box("Acme", 0.15, 0.55, {3}),
               box("note", 0.55, 0.75, {})};
  } else {
    p.boxes = {box("Sum:", 0.12, 0.12, {}), box("99.10", 0.27, 0.12, {0}),
               box("REF-77", 0.58, 0.30, {1}), box("extra", 0.50, 0.70, {})};
  }
  return p;
}

ModelConfig tiny_model_config(const std::string& arch) {
  ModelConfig mc;
  mc.arch = arch;
  mc.block.feature_dim = 8;
  mc.block.heads = 2;
  mc.block.char_channels = {4};
  mc.block.gcn_width = 8;
  mc.class_count = 5;
  mc.fov_k = 2;
  mc.init_seed = 11;
  return mc;
}

double architecture_grad_check(const ModelConfig& mc) {
  std::unique_ptr<ExtractionModel> model = make_model(mc);
  model->set_class_weights(std::vector<double>(
      static_cast<std::size_t>(mc.effective_class_count()), 2.0));

  PairBuilderConfig pb;
  pb.geometry.neighbors_per_edge = mc.neighbors_per_edge;
  pb.geometry.fov_k = mc.fov_k;
  pb.geometry.fov_max_dist = mc.fov_max_dist;
  pb.target = mc.target;
  pb.class_count = mc.class_count;
  Rng rng(0);
  Page ref = tiny_page(false);
  Page near = tiny_page(true);
  PairSample sample = build_pair_sample(
      ref, model->uses_pair() ? &near : nullptr, pb, rng);

  std::vector<ad::Tensor> inputs;
  for (int i = 0; i < model->params().size(); ++i)
    inputs.push_back(model->params().tensor(i));

  ad::ScalarFn fn = [&](ad::Tape& tape, const std::vector<Var>& vars) {
    ad::BoundParams bound;
    bound.vars = vars;
    return model->sample_loss(tape, bound, sample);
  };
  // The absolute floor ignores double-precision residue on symmetry-zero
  // gradients (shift-invariant parameters under distance losses).
  return ad::grad_check(fn, inputs, 1e-4, 0, 1e-9);
}

}  // namespace

std::vector<GradCheckEntry> run_architecture_grad_checks() {
  std::vector<GradCheckEntry> out;
  auto add = [&](const std::string& name, const ModelConfig& mc) {
    GradCheckEntry e;
    e.name = name;
    e.max_rel_err = architecture_grad_check(mc);
    e.pass = e.max_rel_err < e.tolerance;
    out.push_back(e);
  };

  add("loss.simple", tiny_model_config("simple"));

  // A wide margin keeps the clipped triplet term active at the random
  // initialization, so the max-reduction path carries gradient.
  ModelConfig triplet_like = tiny_model_config("triplet");
  triplet_like.triplet.variant = TripletConfig::Variant::kTripletLike;
  triplet_like.triplet.margin = 5.0;
  triplet_like.triplet.add_class_info = true;
  add("loss.triplet_like", triplet_like);

  ModelConfig lossless = tiny_model_config("triplet");
  lossless.triplet.variant = TripletConfig::Variant::kLossless;
  lossless.triplet.calibration = true;
  add("loss.triplet_lossless", lossless);

  ModelConfig cosine = tiny_model_config("triplet");
  cosine.triplet.variant = TripletConfig::Variant::kBoth;
  cosine.triplet.margin = 5.0;
  cosine.triplet.distance = TripletConfig::Distance::kCosine;
  add("loss.triplet_cosine", cosine);

  ModelConfig pairwise = tiny_model_config("pairwise");
  pairwise.pairwise.refine = true;
  add("loss.pairwise_refine", pairwise);

  ModelConfig qa = tiny_model_config("qa");
  add("loss.qa_all_flags", qa);

  add("loss.linear", tiny_model_config("linear"));
  return out;
}

}  // namespace docsim
