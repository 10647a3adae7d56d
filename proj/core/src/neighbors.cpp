#include "docsim/neighbors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "docsim/baselines.hpp"

namespace docsim {

namespace {

// Each block is scaled to unit norm so the text pools (raw character counts,
// magnitudes up to dozens) cannot drown the layout histogram in the distance.
void normalize_block(std::vector<double>& values, std::size_t begin, std::size_t end) {
  double norm = 0.0;
  for (std::size_t i = begin; i < end; ++i) norm += values[i] * values[i];
  norm = std::sqrt(norm);
  if (norm <= 0.0) return;
  for (std::size_t i = begin; i < end; ++i) values[i] /= norm;
}

}  // namespace

PageEmbedding page_embedding(const Page& page, int page_index) {
  if (page.boxes.empty()) throw ValidationError("page_embedding: empty page");
  PageEmbedding emb;
  emb.page_index = page_index;
  emb.values.assign(kPageEmbeddingDim, 0.0);

  std::vector<double> mean(kTextFeatureDim, 0.0);
  std::vector<double> mx(kTextFeatureDim, std::numeric_limits<double>::lowest());
  for (const WordBox& b : page.boxes) {
    std::vector<double> f = text_features(b.text);
    for (int i = 0; i < kTextFeatureDim; ++i) {
      mean[static_cast<std::size_t>(i)] += f[static_cast<std::size_t>(i)];
      mx[static_cast<std::size_t>(i)] = std::max(mx[static_cast<std::size_t>(i)],
                                                 f[static_cast<std::size_t>(i)]);
    }
  }
  double inv_n = 1.0 / static_cast<double>(page.boxes.size());
  for (int i = 0; i < kTextFeatureDim; ++i) {
    emb.values[static_cast<std::size_t>(i)] = mean[static_cast<std::size_t>(i)] * inv_n;
    emb.values[static_cast<std::size_t>(kTextFeatureDim + i)] = mx[static_cast<std::size_t>(i)];
  }

  std::size_t grid_base = 2 * kTextFeatureDim;
  for (const WordBox& b : page.boxes) {
    int gx = std::min(kOccupancyGrid - 1, static_cast<int>(b.cx() * kOccupancyGrid));
    int gy = std::min(kOccupancyGrid - 1, static_cast<int>(b.cy() * kOccupancyGrid));
    emb.values[grid_base + static_cast<std::size_t>(gy * kOccupancyGrid + gx)] += inv_n;
  }

  normalize_block(emb.values, 0, static_cast<std::size_t>(kTextFeatureDim));
  normalize_block(emb.values, static_cast<std::size_t>(kTextFeatureDim), grid_base);
  normalize_block(emb.values, grid_base, emb.values.size());
  return emb;
}

std::vector<PageEmbedding> embed_corpus(const Corpus& corpus) {
  std::vector<PageEmbedding> out;
  out.reserve(corpus.pages.size());
  for (int i = 0; i < static_cast<int>(corpus.pages.size()); ++i)
    out.push_back(page_embedding(corpus.pages[static_cast<std::size_t>(i)], i));
  return out;
}

double embedding_distance(const PageEmbedding& a, const PageEmbedding& b) {
  if (a.values.size() != b.values.size())
    throw ShapeError("embedding_distance: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<int> make_epoch_order(int count, std::uint64_t seed, int epoch) {
  std::vector<int> order(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed ^ (0xe7037ed1a0b428dbULL * (static_cast<std::uint64_t>(epoch) + 1)));
  rng.shuffle(order);
  return order;
}

std::vector<int> candidate_pages(int query_page_index, int position_in_order,
                                 const RetrievalContext& context) {
  const Corpus& corpus = *context.corpus;
  const std::string& query_doc =
      corpus.pages[static_cast<std::size_t>(query_page_index)].doc_id;

  std::vector<int> candidates;
  for (int pos = 0; pos < position_in_order; ++pos) {
    int idx = context.epoch_order[static_cast<std::size_t>(pos)];
    if (corpus.pages[static_cast<std::size_t>(idx)].doc_id != query_doc)
      candidates.push_back(idx);
  }
  for (int idx : context.extra_candidates) {
    if (idx == query_page_index) continue;
    if (corpus.pages[static_cast<std::size_t>(idx)].doc_id != query_doc &&
        std::find(candidates.begin(), candidates.end(), idx) == candidates.end())
      candidates.push_back(idx);
  }
  return candidates;
}

std::optional<int> nearest_page(int query_page_index, int position_in_order,
                                const RetrievalContext& context, const RetrievalPolicy& policy,
                                Rng& rng) {
  const Corpus& corpus = *context.corpus;
  std::vector<int> candidates = candidate_pages(query_page_index, position_in_order, context);
  if (candidates.empty()) return std::nullopt;

  switch (policy.mode) {
    case RetrievalMode::kRandom:
      return candidates[static_cast<std::size_t>(rng.next_below(candidates.size()))];
    case RetrievalMode::kOracleBest: {
      int best = candidates[0];
      double best_hits = -1.0;
      for (int c : candidates) {
        double h = oracle_hits(corpus.pages[static_cast<std::size_t>(query_page_index)],
                               corpus.pages[static_cast<std::size_t>(c)])
                       .value_or(0.0);
        if (h > best_hits) {
          best_hits = h;
          best = c;
        }
      }
      return best;
    }
    case RetrievalMode::kEmbedding:
    default: {
      const auto& embs = *context.embeddings;
      int best = candidates[0];
      double best_dist = std::numeric_limits<double>::infinity();
      for (int c : candidates) {
        double d = embedding_distance(embs[static_cast<std::size_t>(query_page_index)],
                                      embs[static_cast<std::size_t>(c)]);
        if (d < best_dist) {  // strict: ties keep the earliest candidate
          best_dist = d;
          best = c;
        }
      }
      return best;
    }
  }
}

}  // namespace docsim
