#include "docsim/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>

namespace docsim {

namespace alphabet {

namespace {
// 26 letters, 10 digits, then the specials in a fixed order.
const char32_t kSpecials[] = {U' ', U',', U'.', U'-', U'+', U':', U'/', U'%',
                              U'?', U'$', U'£', U'€', U'#', U'(', U')', U'&'};
}  // namespace

int index_of(char32_t cp) {
  if (cp >= U'a' && cp <= U'z') return static_cast<int>(cp - U'a');
  if (cp >= U'0' && cp <= U'9') return kLetterCount + static_cast<int>(cp - U'0');
  for (int i = 0; i < 16; ++i)
    if (kSpecials[i] == cp) return kLetterCount + kDigitCount + i;
  return -1;
}

char32_t symbol_at(int index) {
  if (index < kLetterCount) return U'a' + static_cast<char32_t>(index);
  if (index < kLetterCount + kDigitCount)
    return U'0' + static_cast<char32_t>(index - kLetterCount);
  return kSpecials[index - kLetterCount - kDigitCount];
}

}  // namespace alphabet

std::vector<char32_t> decode_utf8(const std::string& s) {
  std::vector<char32_t> out;
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    char32_t cp = 0;
    int extra = 0;
    if (c < 0x80) {
      cp = c;
    } else if ((c & 0xe0) == 0xc0) {
      cp = c & 0x1f;
      extra = 1;
    } else if ((c & 0xf0) == 0xe0) {
      cp = c & 0x0f;
      extra = 2;
    } else if ((c & 0xf8) == 0xf0) {
      cp = c & 0x07;
      extra = 3;
    } else {
      ++i;
      continue;
    }
    if (i + static_cast<std::size_t>(extra) >= s.size() + (extra == 0 ? 1 : 0)) {
      // Truncated sequence.
      if (i + static_cast<std::size_t>(extra) >= s.size() && extra > 0) {
        ++i;
        continue;
      }
    }
    bool ok = true;
    for (int k = 1; k <= extra; ++k) {
      if (i + static_cast<std::size_t>(k) >= s.size() ||
          (static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]) & 0xc0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]) & 0x3f);
    }
    if (ok) {
      out.push_back(cp);
      i += static_cast<std::size_t>(extra) + 1;
    } else {
      ++i;
    }
  }
  return out;
}

namespace {

struct Translit {
  char32_t cp;
  const char* ascii;   // lowercase expansion
  bool upper;          // the source codepoint is an uppercase letter
};

// Latin-1 Supplement and the common part of Latin Extended-A.
const Translit kTable[] = {
    {U'À', "a", true},  {U'Á', "a", true},  {U'Â', "a", true},
    {U'Ã', "a", true},  {U'Ä', "a", true},  {U'Å', "a", true},
    {U'Æ', "ae", true}, {U'Ç', "c", true},  {U'È', "e", true},
    {U'É', "e", true},  {U'Ê', "e", true},  {U'Ë', "e", true},
    {U'Ì', "i", true},  {U'Í', "i", true},  {U'Î', "i", true},
    {U'Ï', "i", true},  {U'Ð', "d", true},  {U'Ñ', "n", true},
    {U'Ò', "o", true},  {U'Ó', "o", true},  {U'Ô', "o", true},
    {U'Õ', "o", true},  {U'Ö', "o", true},  {U'Ø', "o", true},
    {U'Ù', "u", true},  {U'Ú', "u", true},  {U'Û', "u", true},
    {U'Ü', "u", true},  {U'Ý', "y", true},  {U'Þ', "th", true},
    {U'ß', "ss", false},
    {U'à', "a", false}, {U'á', "a", false}, {U'â', "a", false},
    {U'ã', "a", false}, {U'ä', "a", false}, {U'å', "a", false},
    {U'æ', "ae", false}, {U'ç', "c", false}, {U'è', "e", false},
    {U'é', "e", false}, {U'ê', "e", false}, {U'ë', "e", false},
    {U'ì', "i", false}, {U'í', "i", false}, {U'î', "i", false},
    {U'ï', "i", false}, {U'ð', "d", false}, {U'ñ', "n", false},
    {U'ò', "o", false}, {U'ó', "o", false}, {U'ô', "o", false},
    {U'õ', "o", false}, {U'ö', "o", false}, {U'ø', "o", false},
    {U'ù', "u", false}, {U'ú', "u", false}, {U'û', "u", false},
    {U'ü', "u", false}, {U'ý', "y", false}, {U'þ', "th", false},
    {U'ÿ', "y", false},
    {U'Ā', "a", true},  {U'ā', "a", false}, {U'Ă', "a", true},
    {U'ă', "a", false}, {U'Ą', "a", true},  {U'ą', "a", false},
    {U'Ć', "c", true},  {U'ć', "c", false}, {U'Č', "c", true},
    {U'č', "c", false}, {U'Ď', "d", true},  {U'ď', "d", false},
    {U'Đ', "d", true},  {U'đ', "d", false}, {U'Ē', "e", true},
    {U'ē', "e", false}, {U'Ė', "e", true},  {U'ė', "e", false},
    {U'Ę', "e", true},  {U'ę', "e", false}, {U'Ě', "e", true},
    {U'ě', "e", false}, {U'Ğ', "g", true},  {U'ğ', "g", false},
    {U'Ī', "i", true},  {U'ī', "i", false}, {U'İ', "i", true},
    {U'ı', "i", false}, {U'Ł', "l", true},  {U'ł', "l", false},
    {U'Ń', "n", true},  {U'ń', "n", false}, {U'Ň', "n", true},
    {U'ň', "n", false}, {U'Ō', "o", true},  {U'ō', "o", false},
    {U'Ő', "o", true},  {U'ő', "o", false}, {U'Œ', "oe", true},
    {U'œ', "oe", false}, {U'Ŕ', "r", true},  {U'ŕ', "r", false},
    {U'Ř', "r", true},  {U'ř', "r", false}, {U'Ś', "s", true},
    {U'ś', "s", false}, {U'Ş', "s", true},  {U'ş', "s", false},
    {U'Š', "s", true},  {U'š', "s", false}, {U'Ť', "t", true},
    {U'ť', "t", false}, {U'Ū', "u", true},  {U'ū', "u", false},
    {U'Ů', "u", true},  {U'ů', "u", false}, {U'Ű', "u", true},
    {U'ű', "u", false}, {U'Ź', "z", true},  {U'ź', "z", false},
    {U'Ż', "z", true},  {U'ż', "z", false}, {U'Ž', "z", true},
    {U'ž', "z", false}, {U'Ÿ', "y", true},
};

const Translit* translit_lookup(char32_t cp) {
  for (const Translit& t : kTable)
    if (t.cp == cp) return &t;
  return nullptr;
}

}  // namespace

std::u32string deaccent_lower(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return std::u32string(1, cp - U'A' + U'a');
  if (const Translit* t = translit_lookup(cp)) {
    std::u32string out;
    for (const char* p = t->ascii; *p; ++p) out.push_back(static_cast<char32_t>(*p));
    return out;
  }
  return std::u32string(1, cp);
}

bool is_uppercase_letter(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return true;
  const Translit* t = translit_lookup(cp);
  return t != nullptr && t->upper;
}

bool is_lowercase_letter(char32_t cp) {
  if (cp >= U'a' && cp <= U'z') return true;
  const Translit* t = translit_lookup(cp);
  return t != nullptr && !t->upper;
}

namespace {

// Kept characters: deaccented, lowercased, restricted to the alphabet.
std::vector<int> kept_indices(const std::vector<char32_t>& cps) {
  std::vector<int> out;
  for (char32_t cp : cps)
    for (char32_t mapped : deaccent_lower(cp)) {
      int idx = alphabet::index_of(mapped);
      if (idx >= 0) out.push_back(idx);
    }
  return out;
}

// Leading/trailing whitespace never contributes to features; interior
// whitespace does (multi-word names).
std::vector<char32_t> trimmed_codepoints(const std::string& s) {
  std::vector<char32_t> cps = decode_utf8(s);
  auto is_ws = [](char32_t c) { return c == U' ' || c == U'\t' || c == U'\r' || c == U'\n'; };
  std::size_t a = 0, b = cps.size();
  while (a < b && is_ws(cps[a])) ++a;
  while (b > a && is_ws(cps[b - 1])) --b;
  return std::vector<char32_t>(cps.begin() + static_cast<std::ptrdiff_t>(a),
                               cps.begin() + static_cast<std::ptrdiff_t>(b));
}

}  // namespace

bool parse_amount(const std::string& word, double* value) {
  // Strip currency glyphs and spaces, allow one leading sign, then digits
  // with ',' thousands separators and at most one '.'.
  std::vector<char32_t> cps = decode_utf8(word);
  std::string cleaned;
  for (char32_t cp : cps) {
    if (cp == U'$' || cp == U'£' || cp == U'€' || cp == U' ') continue;
    if (cp > 0x7f) return false;
    cleaned.push_back(static_cast<char>(cp));
  }
  if (cleaned.empty()) return false;
  std::size_t start = 0;
  if (cleaned[0] == '+' || cleaned[0] == '-') start = 1;
  bool any_digit = false;
  bool seen_dot = false;
  std::string digits_only;
  if (start > 0) digits_only.push_back(cleaned[0]);
  for (std::size_t i = start; i < cleaned.size(); ++i) {
    char c = cleaned[i];
    if (c >= '0' && c <= '9') {
      any_digit = true;
      digits_only.push_back(c);
    } else if (c == ',') {
      continue;
    } else if (c == '.' && !seen_dot) {
      seen_dot = true;
      digits_only.push_back(c);
    } else {
      return false;
    }
  }
  if (!any_digit) return false;
  char* end = nullptr;
  double v = std::strtod(digits_only.c_str(), &end);
  if (end == nullptr || *end != '\0') return false;
  if (value) *value = std::abs(v);
  return true;
}

std::vector<double> text_features(const std::string& word) {
  std::vector<char32_t> cps = trimmed_codepoints(word);
  std::vector<int> kept = kept_indices(cps);
  std::vector<double> f(static_cast<std::size_t>(kTextFeatureDim), 0.0);

  const int A = alphabet::kSize;
  for (int idx : kept) f[static_cast<std::size_t>(idx)] += 1.0;
  int k = static_cast<int>(kept.size());
  for (int i = 0; i < std::min(2, k); ++i)
    f[static_cast<std::size_t>(A + kept[static_cast<std::size_t>(i)])] += 1.0;
  for (int i = std::max(0, k - 2); i < k; ++i)
    f[static_cast<std::size_t>(2 * A + kept[static_cast<std::size_t>(i)])] += 1.0;

  double upper = 0.0, lower = 0.0;
  for (char32_t cp : cps) {
    if (is_uppercase_letter(cp)) upper += 1.0;
    if (is_lowercase_letter(cp)) lower += 1.0;
  }
  double letters = 0.0, digit_count = 0.0;
  for (int idx : kept) {
    if (idx < alphabet::kLetterCount) letters += 1.0;
    else if (idx < alphabet::kLetterCount + alphabet::kDigitCount) digit_count += 1.0;
  }
  std::size_t base = static_cast<std::size_t>(3 * A);
  f[base + 0] = static_cast<double>(cps.size());
  f[base + 1] = upper;
  f[base + 2] = lower;
  f[base + 3] = letters;
  f[base + 4] = digit_count;

  double amount = 0.0;
  if (parse_amount(word, &amount)) {
    const double ranges[4] = {1e1, 1e3, 1e5, 1e7};
    for (int i = 0; i < 4; ++i)
      f[base + 5 + static_cast<std::size_t>(i)] = std::clamp(amount / ranges[i], 0.0, 1.0);
  }
  return f;
}

Mat char_onehot(const std::string& word) {
  Mat m(kCharsPerWord, alphabet::kSize);
  std::vector<int> kept = kept_indices(trimmed_codepoints(word));
  int rows = std::min<int>(kCharsPerWord, static_cast<int>(kept.size()));
  for (int i = 0; i < rows; ++i) m.at(i, kept[static_cast<std::size_t>(i)]) = 1.0;
  return m;
}

std::vector<double> positional_embedding(int position) {
  if (position < 0) throw ValidationError("positional_embedding: negative position");
  std::vector<double> out(kPosEmbedDim, 0.0);
  for (int i = 0; i < 4; ++i) {
    double denom = std::pow(10000.0, static_cast<double>(i) / 4.0);
    out[static_cast<std::size_t>(i)] = std::sin(position / denom);
    out[static_cast<std::size_t>(4 + i)] = std::cos(position / denom);
  }
  return out;
}

PageInputs assemble_page_inputs(const Page& page, const OrderInfo& order_info,
                                const NeighborIndex& neighbor_index, double augment_rate,
                                Rng& rng, int pad_to) {
  int n = static_cast<int>(page.boxes.size());
  if (static_cast<int>(order_info.primary.order.size()) != n ||
      static_cast<int>(neighbor_index.table.size()) != n)
    throw ShapeError("assemble_page_inputs: geometry products do not match the page");
  int padded = std::max(n, pad_to);

  PageInputs in;
  in.real_count = n;
  in.padded_count = padded;
  in.box_features = Mat(padded, kBoxFeatureDim);
  in.char_onehots.assign(static_cast<std::size_t>(padded), Mat(kCharsPerWord, alphabet::kSize));
  in.neighbor_ids.assign(static_cast<std::size_t>(padded),
                         std::vector<int>(static_cast<std::size_t>(neighbor_index.width()),
                                          kNoNeighbor));
  in.seq_order.assign(static_cast<std::size_t>(padded), 0);
  in.pad_mask.assign(static_cast<std::size_t>(padded), false);

  for (int i = 0; i < n; ++i) {
    const WordBox& b = page.boxes[static_cast<std::size_t>(i)];
    double coords[4] = {b.left, b.top, b.right, b.bottom};
    std::vector<double> tf = text_features(b.text);
    if (augment_rate > 0.0) {
      for (double& c : coords)
        c = std::clamp(c * (1.0 + rng.uniform(-augment_rate, augment_rate)), 0.0, 1.0);
      for (double& x : tf) x *= 1.0 + rng.uniform(-augment_rate, augment_rate);
    }
    int col = 0;
    for (double c : coords) in.box_features.at(i, col++) = c;
    for (double x : tf) in.box_features.at(i, col++) = x;
    const ReadingPass* passes[2] = {&order_info.primary, &order_info.rotated};
    for (const ReadingPass* pass : passes) {
      for (int value : {pass->order[static_cast<std::size_t>(i)],
                        pass->line_no[static_cast<std::size_t>(i)],
                        pass->order_in_line[static_cast<std::size_t>(i)]}) {
        for (double e : positional_embedding(value)) in.box_features.at(i, col++) = e;
      }
    }
    if (col != kBoxFeatureDim) throw ShapeError("assemble_page_inputs: bad feature layout");

    in.char_onehots[static_cast<std::size_t>(i)] = char_onehot(b.text);
    in.neighbor_ids[static_cast<std::size_t>(i)] =
        neighbor_index.table[static_cast<std::size_t>(i)];
    in.seq_order[static_cast<std::size_t>(i)] =
        order_info.primary.order[static_cast<std::size_t>(i)];
    in.pad_mask[static_cast<std::size_t>(i)] = true;
  }
  // Pads occupy the tail of the reading order so the permutation stays a
  // bijection over all rows.
  for (int i = n; i < padded; ++i) in.seq_order[static_cast<std::size_t>(i)] = i;
  return in;
}

Mat labels_matrix(const Page& page, int class_count, int pad_to) {
  int n = static_cast<int>(page.boxes.size());
  Mat m(std::max(n, pad_to), class_count);
  for (int i = 0; i < n; ++i)
    for (int l : page.boxes[static_cast<std::size_t>(i)].labels) {
      if (l < 0 || l >= class_count)
        throw ShapeError("labels_matrix: label " + std::to_string(l) +
                         " outside class count " + std::to_string(class_count));
      m.at(i, l) = 1.0;
    }
  return m;
}

std::string feature_layout_version() {
  return "flv1-a" + std::to_string(alphabet::kSize) + "-t" + std::to_string(kTextFeatureDim) +
         "-c" + std::to_string(kCharsPerWord) + "-f" + std::to_string(kBoxFeatureDim);
}

}  // namespace docsim
