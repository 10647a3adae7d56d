#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "docsim/common.hpp"
#include "docsim/corpus.hpp"
#include "docsim/geometry.hpp"

namespace docsim {

// Small dense row-major matrix for host-side data.
struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {}
  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

// Character inventory: 26 letters, 10 digits and 16 special symbols, applied
// to the deaccented lowercase form of a word. Everything else is discarded.
namespace alphabet {
inline constexpr int kSize = 52;
inline constexpr int kLetterCount = 26;
inline constexpr int kDigitCount = 10;

// Index of a Unicode codepoint in the inventory, or -1.
int index_of(char32_t cp);
char32_t symbol_at(int index);
}  // namespace alphabet

// UTF-8 decode; invalid bytes are skipped.
std::vector<char32_t> decode_utf8(const std::string& s);

// Fixed Latin transliteration: one codepoint to zero or more ASCII chars,
// lowercased. Unmapped codepoints pass through unchanged.
std::u32string deaccent_lower(char32_t cp);

bool is_uppercase_letter(char32_t cp);
bool is_lowercase_letter(char32_t cp);

inline constexpr int kCharsPerWord = 40;
inline constexpr int kTextFeatureDim = 3 * alphabet::kSize + 5 + 4;  // 165

// Handcrafted per-word vector: symbol counts over the kept characters, the
// same restricted to the first two and last two kept characters, codepoint
// length, uppercase/lowercase counts on the original text, letter and digit
// counts, and a four-channel multi-scale amount encoding
// clamp(|value| / r, 0, 1) for r in {1e1, 1e3, 1e5, 1e7} (zero when the word
// does not parse as a number).
std::vector<double> text_features(const std::string& word);

// Amount parse used by the feature above; exposed for tests.
bool parse_amount(const std::string& word, double* value);

// First 40 kept characters, one-hot; discarded characters are skipped, the
// tail is zero rows. Row-major 40 x alphabet::kSize.
Mat char_onehot(const std::string& word);

// 8 channels per integer: sin(p / 10000^(i/4)) for i in 0..3, then the
// matching cosines.
inline constexpr int kPosEmbedDim = 8;
std::vector<double> positional_embedding(int position);

inline constexpr int kOrderIntsPerBox = 6;  // (order, line, order-in-line) x 2 passes
inline constexpr int kBoxFeatureDim = 4 + kTextFeatureDim + kOrderIntsPerBox * kPosEmbedDim;

// Fixed-layout numeric inputs for one page. Rows beyond real_count are
// all-zero padding with pad_mask false and sentinel-only neighbor rows.
struct PageInputs {
  int real_count = 0;
  int padded_count = 0;
  Mat box_features;                        // padded_count x kBoxFeatureDim
  std::vector<Mat> char_onehots;           // padded_count entries, 40 x |alphabet|
  std::vector<std::vector<int>> neighbor_ids;  // padded_count x (4n+1)
  std::vector<int> seq_order;              // position of each row in reading order
  std::vector<bool> pad_mask;              // true for real boxes
};

// Concatenation order: [coordinates | text features | positional embeddings
// of (order, line, order-in-line) for the primary and rotated passes]. When
// augment_rate > 0 the coordinate and text-feature channels are perturbed
// multiplicatively by up to +-rate; one-hots and embeddings never are.
PageInputs assemble_page_inputs(const Page& page, const OrderInfo& order_info,
                                const NeighborIndex& neighbor_index, double augment_rate,
                                Rng& rng, int pad_to = 0);

// Multi-hot page labels, padded rows zero.
Mat labels_matrix(const Page& page, int class_count, int pad_to = 0);

// Version tag stored in checkpoints; loading fails on mismatch.
std::string feature_layout_version();

}  // namespace docsim
