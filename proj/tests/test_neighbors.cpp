#include <set>

#include "doctest.h"
#include "docsim/corpus.hpp"
#include "docsim/neighbors.hpp"

using namespace docsim;

namespace {

Corpus two_family_corpus() {
  SynthConfig cfg;
  cfg.layout_family_count = 2;
  cfg.docs_per_family = 5;
  cfg.boxes_min = 30;
  cfg.boxes_max = 40;
  cfg.label_density = 0.08;
  cfg.seed = 77;
  return generate_synthetic(cfg);
}

}  // namespace

TEST_CASE("identical pages embed at distance zero and E is pinned") {
  Corpus c = two_family_corpus();
  PageEmbedding a = page_embedding(c.pages[0], 0);
  PageEmbedding b = page_embedding(c.pages[0], 0);
  CHECK(a.values.size() == kPageEmbeddingDim);
  CHECK(kPageEmbeddingDim == 2 * kTextFeatureDim + 64);
  CHECK(embedding_distance(a, b) == 0.0);
}

TEST_CASE("a jittered copy stays closer than another family") {
  Corpus c = two_family_corpus();
  const Page& base = c.pages[0];
  Rng rng(5);
  Page jittered = augment_page(base, 0.01, rng);

  PageEmbedding e_base = page_embedding(base);
  PageEmbedding e_jit = page_embedding(jittered);
  double d_jit = embedding_distance(e_base, e_jit);

  // Compare against every page of the other family.
  for (const Page& other : c.pages) {
    if (other.layout_family == base.layout_family) continue;
    double d_other = embedding_distance(e_base, page_embedding(other));
    CHECK(d_jit < d_other);
  }
}

TEST_CASE("epoch orders are deterministic bijections that vary by epoch") {
  std::vector<int> a = make_epoch_order(10, 3, 1);
  std::vector<int> b = make_epoch_order(10, 3, 1);
  CHECK(a == b);

  std::set<int> seen(a.begin(), a.end());
  CHECK(seen.size() == 10);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 9);

  bool any_diff = false;
  for (int epoch = 2; epoch <= 4; ++epoch)
    any_diff = any_diff || make_epoch_order(10, 3, epoch) != a;
  CHECK(any_diff);
}

TEST_CASE("nearest-page retrieval honors the protocol constraints") {
  Corpus c = two_family_corpus();
  std::vector<PageEmbedding> embeddings = embed_corpus(c);
  RetrievalContext ctx;
  ctx.corpus = &c;
  ctx.embeddings = &embeddings;
  ctx.epoch_order = make_epoch_order(static_cast<int>(c.pages.size()), 9, 0);

  RetrievalPolicy policy;
  Rng rng(1);

  // First page in the order has no candidates.
  CHECK(!nearest_page(ctx.epoch_order[0], 0, ctx, policy, rng).has_value());

  // Full-epoch soundness: every selection precedes the query and comes from
  // a different document.
  for (std::size_t pos = 1; pos < ctx.epoch_order.size(); ++pos) {
    int query = ctx.epoch_order[pos];
    auto near = nearest_page(query, static_cast<int>(pos), ctx, policy, rng);
    if (!near) continue;
    bool precedes = false;
    for (std::size_t k = 0; k < pos; ++k) precedes = precedes || ctx.epoch_order[k] == *near;
    CHECK(precedes);
    CHECK(c.pages[static_cast<std::size_t>(*near)].doc_id !=
          c.pages[static_cast<std::size_t>(query)].doc_id);
  }
}

TEST_CASE("a single candidate wins under every mode") {
  Corpus c = two_family_corpus();
  std::vector<PageEmbedding> embeddings = embed_corpus(c);
  RetrievalContext ctx;
  ctx.corpus = &c;
  ctx.embeddings = &embeddings;
  // Order starting with two pages of different documents.
  ctx.epoch_order = {0, static_cast<int>(c.pages.size()) - 1};

  Rng rng(2);
  for (RetrievalMode mode :
       {RetrievalMode::kEmbedding, RetrievalMode::kRandom, RetrievalMode::kOracleBest}) {
    RetrievalPolicy policy;
    policy.mode = mode;
    auto near = nearest_page(ctx.epoch_order[1], 1, ctx, policy, rng);
    REQUIRE(near.has_value());
    CHECK(*near == 0);
  }
}

TEST_CASE("embedding mode returns the distance argmin") {
  Corpus c = two_family_corpus();
  std::vector<PageEmbedding> embeddings = embed_corpus(c);
  RetrievalContext ctx;
  ctx.corpus = &c;
  ctx.embeddings = &embeddings;
  ctx.epoch_order = make_epoch_order(static_cast<int>(c.pages.size()), 21, 0);

  RetrievalPolicy policy;
  Rng rng(3);
  int pos = static_cast<int>(ctx.epoch_order.size()) - 1;
  int query = ctx.epoch_order[static_cast<std::size_t>(pos)];
  auto near = nearest_page(query, pos, ctx, policy, rng);
  REQUIRE(near.has_value());

  double best = embedding_distance(embeddings[static_cast<std::size_t>(query)],
                                   embeddings[static_cast<std::size_t>(*near)]);
  for (int cand : candidate_pages(query, pos, ctx)) {
    CHECK(best <= embedding_distance(embeddings[static_cast<std::size_t>(query)],
                                     embeddings[static_cast<std::size_t>(cand)]));
  }
}

TEST_CASE("plus-train scope strictly grows the candidate set") {
  Corpus c = two_family_corpus();
  split_corpus(c, 0.6, 0.2, 0.2, 4);
  std::vector<PageEmbedding> embeddings = embed_corpus(c);

  std::vector<int> val_pages = c.pages_in_split(Split::kValidation);
  REQUIRE(!val_pages.empty());

  RetrievalContext prev_ctx;
  prev_ctx.corpus = &c;
  prev_ctx.embeddings = &embeddings;
  prev_ctx.epoch_order = val_pages;

  RetrievalContext plus_ctx = prev_ctx;
  plus_ctx.extra_candidates = c.pages_in_split(Split::kTrain);

  for (std::size_t pos = 0; pos < val_pages.size(); ++pos) {
    std::vector<int> prev = candidate_pages(val_pages[pos], static_cast<int>(pos), prev_ctx);
    std::vector<int> plus = candidate_pages(val_pages[pos], static_cast<int>(pos), plus_ctx);
    std::set<int> plus_set(plus.begin(), plus.end());
    for (int p : prev) CHECK(plus_set.count(p) == 1);
    CHECK(plus.size() >= prev.size());
    CHECK(plus.size() > prev.size());  // train pages always add candidates here
  }
}
