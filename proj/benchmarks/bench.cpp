#include <benchmark/benchmark.h>

#include "docsim/architectures.hpp"
#include "docsim/autodiff.hpp"
#include "docsim/corpus.hpp"
#include "docsim/eval.hpp"
#include "docsim/geometry.hpp"
#include "docsim/neighbors.hpp"

namespace {

using namespace docsim;
using ad::Tensor;

Tensor random_tensor(ad::Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.v) v = rng.uniform(-1, 1);
  return t;
}

void BM_matmul(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  Rng rng(1);
  Tensor a = random_tensor({n, 256}, rng);
  Tensor b = random_tensor({256, 64}, rng);
  for (auto _ : state) {
    ad::Tape tape;
    auto out = ad::matmul(tape.constant(a), tape.constant(b));
    benchmark::DoNotOptimize(out.val().data());
  }
}
BENCHMARK(BM_matmul)->Arg(32)->Arg(128);

void BM_matmul_backward(benchmark::State& state) {
  Rng rng(2);
  Tensor a = random_tensor({64, 256}, rng);
  Tensor b = random_tensor({256, 64}, rng);
  for (auto _ : state) {
    ad::Tape tape;
    auto va = tape.leaf(a, true);
    auto vb = tape.leaf(b, true);
    auto loss = ad::reduce_sum(ad::matmul(va, vb));
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(va).data());
  }
}
BENCHMARK(BM_matmul_backward);

void BM_conv1d_onehot(benchmark::State& state) {
  Rng rng(3);
  // One-hot rows: the forward pass skips zero inputs.
  Tensor x = Tensor::zeros({40, 40, 52});
  for (int b = 0; b < 40; ++b)
    for (int t = 0; t < 40; ++t)
      x.v[static_cast<std::size_t>((b * 40 + t) * 52 + static_cast<int>(rng.next_below(52)))] =
          1.0;
  Tensor k = random_tensor({3, 52, 16}, rng);
  Tensor bias = Tensor::zeros({16});
  for (auto _ : state) {
    ad::Tape tape;
    auto out = ad::conv1d(tape.constant(x), tape.constant(k), tape.constant(bias));
    benchmark::DoNotOptimize(out.val().data());
  }
}
BENCHMARK(BM_conv1d_onehot);

Corpus bench_corpus() {
  SynthConfig cfg;
  cfg.layout_family_count = 4;
  cfg.docs_per_family = 8;
  cfg.boxes_min = 26;
  cfg.boxes_max = 40;
  cfg.label_density = 0.10;
  cfg.seed = 5;
  Corpus c = generate_synthetic(cfg);
  split_corpus(c, 0.8, 0.1, 0.1, 1);
  return c;
}

void BM_generate_corpus(benchmark::State& state) {
  for (auto _ : state) {
    Corpus c = bench_corpus();
    benchmark::DoNotOptimize(c.pages.size());
  }
}
BENCHMARK(BM_generate_corpus);

void BM_geometry(benchmark::State& state) {
  Corpus c = bench_corpus();
  const Page& p = c.pages[0];
  GeometryConfig geom;
  for (auto _ : state) {
    auto order = reading_order(p, geom);
    auto neigh = neighborhood_graph(p, geom);
    benchmark::DoNotOptimize(order.primary.order.data());
    benchmark::DoNotOptimize(neigh.table.data());
  }
}
BENCHMARK(BM_geometry);

void BM_page_embedding(benchmark::State& state) {
  Corpus c = bench_corpus();
  for (auto _ : state) {
    auto emb = page_embedding(c.pages[0]);
    benchmark::DoNotOptimize(emb.values.data());
  }
}
BENCHMARK(BM_page_embedding);

void BM_qa_train_step(benchmark::State& state) {
  Corpus c = bench_corpus();
  ModelConfig mc;
  mc.arch = "qa";
  mc.class_count = 35;
  std::unique_ptr<ExtractionModel> model = make_model(mc);
  model->set_class_weights(compute_class_weights(c, mc));

  PairBuilderConfig pb;
  pb.class_count = mc.class_count;
  Rng rng(0);
  PairSample sample = build_pair_sample(c.pages[0], &c.pages[10], pb, rng);

  ad::AdamState adam;
  adam.init_for(model->params());
  for (auto _ : state) {
    ad::Tape tape;
    ad::BoundParams bound = bind_params(tape, model->params(), true);
    auto loss = model->sample_loss(tape, bound, sample);
    tape.backward(loss);
    auto grads = ad::collect_grads(tape, bound, model->params());
    ad::adam_step(model->params(), grads, adam, {});
    benchmark::DoNotOptimize(loss.val().data());
  }
}
BENCHMARK(BM_qa_train_step);

}  // namespace

BENCHMARK_MAIN();
