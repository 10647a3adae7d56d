#pragma once

#include <optional>
#include <vector>

#include "docsim/corpus.hpp"
#include "docsim/features.hpp"

namespace docsim {

// Fixed page descriptor: mean and max pools of the per-box text features
// plus an 8x8 spatial occupancy histogram of box centers. Computed once and
// held fixed for the whole run.
inline constexpr int kOccupancyGrid = 8;
inline constexpr int kPageEmbeddingDim =
    2 * kTextFeatureDim + kOccupancyGrid * kOccupancyGrid;

struct PageEmbedding {
  int page_index = -1;
  std::vector<double> values;
};

PageEmbedding page_embedding(const Page& page, int page_index = -1);
std::vector<PageEmbedding> embed_corpus(const Corpus& corpus);

double embedding_distance(const PageEmbedding& a, const PageEmbedding& b);

enum class RetrievalMode { kEmbedding, kRandom, kOracleBest };
enum class CandidateScope { kSameSplitPrevious, kPlusTrainSet };

struct RetrievalPolicy {
  RetrievalMode mode = RetrievalMode::kEmbedding;
  CandidateScope scope = CandidateScope::kSameSplitPrevious;
  std::uint64_t epoch_seed = 0;
};

// Uniform permutation of [0, count), deterministic per (seed, epoch).
std::vector<int> make_epoch_order(int count, std::uint64_t seed, int epoch);

struct RetrievalContext {
  const Corpus* corpus = nullptr;
  const std::vector<PageEmbedding>* embeddings = nullptr;
  std::vector<int> epoch_order;       // corpus page indexes, already shuffled
  std::vector<int> extra_candidates;  // unordered pool (e.g. the train split)
};

// Pages strictly before position_in_order in the epoch order plus the extra
// candidates, always restricted to a different document, in selection order.
std::vector<int> candidate_pages(int query_page_index, int position_in_order,
                                 const RetrievalContext& context);

// Embedding mode returns the distance argmin over the candidates (ties to
// the earliest candidate), random mode a uniform pick, oracle-best the
// candidate with the highest oracle hit fraction. No candidate -> nullopt.
std::optional<int> nearest_page(int query_page_index, int position_in_order,
                                const RetrievalContext& context, const RetrievalPolicy& policy,
                                Rng& rng);

}  // namespace docsim
