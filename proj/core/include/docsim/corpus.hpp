#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "docsim/common.hpp"

namespace docsim {

inline constexpr int kMaxBoxes = 300;

enum class Split { kUnassigned, kTrain, kValidation, kTest };

std::string split_name(Split s);
std::optional<Split> split_from_name(const std::string& name);

// A whitespace-delimited text segment with its page-normalized rectangle and
// zero or more target classes. The atomic classification unit.
struct WordBox {
  std::string text;
  double left = 0.0, top = 0.0, right = 0.0, bottom = 0.0;
  std::set<int> labels;

  double cx() const { return 0.5 * (left + right); }
  double cy() const { return 0.5 * (top + bottom); }
  double width() const { return right - left; }
  double height() const { return bottom - top; }
};

struct Page {
  std::string doc_id;
  int page_no = 0;
  std::string layout_family;
  std::vector<WordBox> boxes;
  Split split = Split::kUnassigned;
};

struct Corpus {
  std::vector<Page> pages;
  int class_count = 35;

  std::vector<int> pages_in_split(Split s) const;
};

// Checks the WordBox/Page invariants; throws ValidationError naming the box.
void validate_page(const Page& page, int class_count);
void validate_corpus(const Corpus& corpus);

struct SynthConfig {
  int layout_family_count = 6;
  int docs_per_family = 11;
  int boxes_min = 30;
  int boxes_max = 48;
  double label_density = 0.08;   // target fraction of boxes carrying >= 1 class
  double anchor_jitter = 0.05;   // per-document displacement of family anchors
  double text_jitter = 0.01;     // reserved for train-time feature augmentation
  int class_count = 35;
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError naming the violated bound
};

// Deterministic synthetic corpus: each layout family anchors a subset of
// classes at fixed slots; each document jitters the anchors, re-realizes all
// texts and fills the page with distractor boxes. Every generated page
// carries at least two distinct annotated classes and no two pages share an
// identical box set.
Corpus generate_synthetic(const SynthConfig& config);

// JSON Lines, one page per line. Lossless round trip with read_corpus.
// class_count is not part of the record format; pass it when it differs
// from the default.
void write_corpus(const Corpus& corpus, const std::string& path);
std::string corpus_to_jsonl(const Corpus& corpus);
Corpus read_corpus(const std::string& path, int class_count = 35);
Corpus corpus_from_jsonl(const std::string& text, int class_count = 35);

// Per-document split assignment: all pages of a document land in one split.
// Counts use largest-remainder rounding; remainder ties resolve in
// train/validation/test order.
void split_corpus(Corpus& corpus, double train_ratio, double validation_ratio,
                  double test_ratio, std::uint64_t seed);

// Multiplies every coordinate by (1 + u), u uniform in [-rate, rate], clamped
// to [0, 1]. A draw producing a degenerate box is retried up to 10 times and
// then left unperturbed. Labels and texts are untouched.
Page augment_page(const Page& page, double rate, Rng& rng);

}  // namespace docsim
