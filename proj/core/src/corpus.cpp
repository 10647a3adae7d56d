#include "docsim/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace docsim {

using nlohmann::json;

std::string split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "validation";
    case Split::kTest: return "test";
    default: return "unassigned";
  }
}

std::optional<Split> split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  if (name == "test") return Split::kTest;
  if (name == "unassigned") return Split::kUnassigned;
  return std::nullopt;
}

std::vector<int> Corpus::pages_in_split(Split s) const {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(pages.size()); ++i)
    if (pages[i].split == s) out.push_back(i);
  return out;
}

namespace {

std::string trim_copy(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

void validate_page(const Page& page, int class_count) {
  for (std::size_t i = 0; i < page.boxes.size(); ++i) {
    const WordBox& b = page.boxes[i];
    auto fail = [&](const std::string& what) {
      throw ValidationError("doc " + page.doc_id + " box " + std::to_string(i) + ": " + what);
    };
    if (trim_copy(b.text).empty()) fail("empty text");
    if (!(b.left < b.right)) fail("left >= right");
    if (!(b.top < b.bottom)) fail("top >= bottom");
    for (double c : {b.left, b.top, b.right, b.bottom})
      if (!(c >= 0.0 && c <= 1.0)) fail("coordinate out of [0,1]");
    for (int l : b.labels)
      if (l < 0 || l >= class_count) fail("label out of range");
  }
  if (page.boxes.size() > kMaxBoxes)
    throw ValidationError("doc " + page.doc_id + ": more than " + std::to_string(kMaxBoxes) +
                          " boxes");
}

void validate_corpus(const Corpus& corpus) {
  std::map<std::string, Split> doc_split;
  for (const Page& p : corpus.pages) {
    validate_page(p, corpus.class_count);
    auto it = doc_split.find(p.doc_id);
    if (it == doc_split.end()) {
      doc_split.emplace(p.doc_id, p.split);
    } else if (it->second != p.split) {
      throw ValidationError("doc " + p.doc_id + ": pages straddle two splits");
    }
  }
}

namespace {
// Probability that a document instantiates a given family anchor; also the
// expected fraction a near page of the same family can answer for.
constexpr double kAnchorKeepProb = 0.72;
}  // namespace

void SynthConfig::validate() const {
  if (layout_family_count <= 0) throw ConfigError("layout_family_count must be positive");
  if (docs_per_family <= 0) throw ConfigError("docs_per_family must be positive");
  if (class_count <= 1) throw ConfigError("class_count must be at least 2");
  if (boxes_min <= 0 || boxes_max < boxes_min)
    throw ConfigError("boxes_per_page range must satisfy 0 < min <= max");
  if (boxes_max > kMaxBoxes)
    throw ConfigError("boxes_max exceeds MAX_BOXES (" + std::to_string(kMaxBoxes) + ")");
  if (!(label_density > 0.0 && label_density < 1.0))
    throw ConfigError("label_density must lie in (0,1)");
  if (anchor_jitter < 0.0 || anchor_jitter > 0.2)
    throw ConfigError("anchor_jitter must lie in [0,0.2]");
  if (text_jitter < 0.0 || text_jitter > 0.1)
    throw ConfigError("text_jitter must lie in [0,0.1]");

  double avg_boxes = 0.5 * (boxes_min + boxes_max);
  int anchors = static_cast<int>(std::lround(label_density * avg_boxes / kAnchorKeepProb));
  if (anchors < 2)
    throw ConfigError(
        "label_density " + std::to_string(label_density) + " with boxes range [" +
        std::to_string(boxes_min) + "," + std::to_string(boxes_max) +
        "] cannot reach the 2-annotated-classes-per-page floor");
  if (anchors > class_count)
    throw ConfigError("label_density requires " + std::to_string(anchors) +
                      " anchored classes per family, exceeding class_count " +
                      std::to_string(class_count));
  if (2 * anchors + 4 > boxes_min)
    throw ConfigError("boxes_min " + std::to_string(boxes_min) + " too small for " +
                      std::to_string(anchors) + " anchors plus captions");
}

namespace {

// Text realization. Five text types; a class maps to a type by id so that
// several classes share each surface form and text alone never identifies
// the class.
enum class TextType { kAmount, kDate, kId, kName, kKeyword };

TextType class_text_type(int cls) { return static_cast<TextType>(cls % 5); }

const std::vector<std::string>& name_lexicon() {
  static const std::vector<std::string> v = {
      "Acme",   "Borealis", "Cobalt",  "Dunmore", "Everly",  "Fairview", "Garnet",  "Halcyon",
      "Ingram", "Juniper",  "Keller",  "Lorimer", "Mercer",  "Norwood",  "Orchard", "Pinnacle",
      "Quill",  "Rowan",    "Sterling", "Thorne",  "Umber",   "Vantage",  "Walden",  "Yarrow"};
  return v;
}

const std::vector<std::string>& keyword_lexicon() {
  static const std::vector<std::string> v = {
      "Net30",    "Net60",   "Prepaid", "USD",     "EUR",      "GBP",     "Standard",
      "Express",  "Priority", "Wire",    "Cheque",  "Card",     "Monthly", "Quarterly",
      "Annual",   "Partial", "Final",   "Credit",  "Debit",    "Retail"};
  return v;
}

const std::vector<std::string>& distractor_words() {
  static const std::vector<std::string> v = {
      "description", "quantity", "unit",     "page",     "of",       "please",  "remit",
      "payment",     "thank",    "you",      "service",  "item",     "subtotal", "shipping",
      "handling",    "contact",  "phone",    "email",    "address",  "street",  "city",
      "country",     "registered", "company", "delivery", "period",   "account", "bank",
      "branch",      "swift",    "details",  "enclosed", "copy",     "original", "approved",
      "signature",   "authorized", "notes",  "misc",     "www"};
  return v;
}

const std::vector<std::string>& caption_pool(TextType t) {
  static const std::vector<std::string> amounts = {"Total:", "Amount:", "Balance:", "Sum:",
                                                   "Due:"};
  static const std::vector<std::string> dates = {"Date:", "Issued:", "Delivered:"};
  static const std::vector<std::string> ids = {"Ref:", "No:", "Code:", "Id:"};
  static const std::vector<std::string> names = {"Name:", "Contact:", "Attn:"};
  static const std::vector<std::string> keywords = {"Terms:", "Note:", "Type:"};
  switch (t) {
    case TextType::kAmount: return amounts;
    case TextType::kDate: return dates;
    case TextType::kId: return ids;
    case TextType::kName: return names;
    default: return keywords;
  }
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[static_cast<std::size_t>(rng.next_below(v.size()))];
}

std::string digits(Rng& rng, int count) {
  std::string s;
  for (int i = 0; i < count; ++i) s.push_back(static_cast<char>('0' + rng.next_below(10)));
  return s;
}

// Class-conditioned realization: a labeled field's surface form leans toward
// a class-specific band (magnitude, style, prefix, lexicon slice) with some
// probability, the way real document fields have characteristic value
// ranges. Distractors pass cls = -1 and draw from the generic mixture.
constexpr double kValueSkew = 0.6;

bool skewed(int cls, Rng& rng) { return cls >= 0 && rng.next_double() < kValueSkew; }

std::string realize_amount(int cls, Rng& rng) {
  double v;
  if (skewed(cls, rng)) {
    double lo = 0.5 + 2.6 * static_cast<double>(cls % 7) / 7.0;
    v = std::pow(10.0, rng.uniform(lo, lo + 1.4));
  } else {
    v = std::pow(10.0, rng.uniform(0.5, 4.5));
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  std::string raw(buf);
  switch (rng.next_below(3)) {
    case 0: return raw;
    case 1: {
      // thousands separator
      std::string intpart = raw.substr(0, raw.find('.'));
      std::string frac = raw.substr(raw.find('.'));
      std::string grouped;
      int n = 0;
      for (int i = static_cast<int>(intpart.size()) - 1; i >= 0; --i) {
        grouped.insert(grouped.begin(), intpart[static_cast<std::size_t>(i)]);
        if (++n % 3 == 0 && i > 0) grouped.insert(grouped.begin(), ',');
      }
      return grouped + frac;
    }
    default: {
      const char* cur[] = {"$", "€", "£"};
      return std::string(cur[rng.next_below(3)]) + raw;
    }
  }
}

std::string realize_date(int cls, Rng& rng) {
  int y = 2019 + static_cast<int>(rng.next_below(8));
  int m = 1 + static_cast<int>(rng.next_below(12));
  int d = 1 + static_cast<int>(rng.next_below(28));
  int style = skewed(cls, rng) ? cls % 3 : static_cast<int>(rng.next_below(3));
  char buf[32];
  switch (style) {
    case 0: std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d); break;
    case 1: std::snprintf(buf, sizeof(buf), "%02d/%02d/%04d", d, m, y); break;
    default: std::snprintf(buf, sizeof(buf), "%02d.%02d.%04d", d, m, y); break;
  }
  return buf;
}

std::string realize_id(int cls, Rng& rng) {
  static const std::vector<std::string> prefixes = {"INV", "ORD", "REF", "AC", "NO"};
  if (skewed(cls, rng))
    return prefixes[static_cast<std::size_t>(cls % 5)] + "-" +
           digits(rng, 4 + cls % 3);
  if (rng.next_below(2) == 0)
    return pick(prefixes, rng) + "-" + digits(rng, 4 + static_cast<int>(rng.next_below(3)));
  std::string s;
  for (int i = 0; i < 8; ++i) {
    if (rng.next_below(2) == 0)
      s.push_back(static_cast<char>('A' + rng.next_below(26)));
    else
      s.push_back(static_cast<char>('0' + rng.next_below(10)));
  }
  return s;
}

std::string realize_name(int cls, Rng& rng) {
  const auto& lex = name_lexicon();
  std::string s;
  if (skewed(cls, rng)) {
    // A class-specific slice of the lexicon.
    std::size_t slice = static_cast<std::size_t>(cls % 6) * 4;
    s = lex[slice + rng.next_below(4)];
  } else {
    s = pick(lex, rng);
  }
  if (rng.next_below(2) == 0) s += " " + pick(lex, rng);
  return s;
}

std::string realize_keyword(int cls, Rng& rng) {
  const auto& lex = keyword_lexicon();
  if (skewed(cls, rng)) {
    std::size_t slice = static_cast<std::size_t>(cls % 4) * 5;
    return lex[slice + rng.next_below(5)];
  }
  return pick(lex, rng);
}

std::string realize_text(TextType t, int cls, Rng& rng) {
  switch (t) {
    case TextType::kAmount: return realize_amount(cls, rng);
    case TextType::kDate: return realize_date(cls, rng);
    case TextType::kId: return realize_id(cls, rng);
    case TextType::kName: return realize_name(cls, rng);
    default: return realize_keyword(cls, rng);
  }
}

std::string realize_distractor(Rng& rng) {
  // Half plain vocabulary, half type-shaped strings so that surface form
  // never separates annotated from unannotated boxes.
  if (rng.next_below(2) == 0) return pick(distractor_words(), rng);
  return realize_text(static_cast<TextType>(rng.next_below(5)), -1, rng);
}

struct Anchor {
  int cls = 0;
  bool companion = false;   // second class rides on the same box
  double x = 0.0, y = 0.0;  // slot center
  double w = 0.1, h = 0.02;  // family-fixed rectangle, so zero jitter means
  double cap_w = 0.08, cap_h = 0.02;  // identical anchor geometry across docs
};

struct Family {
  std::string name;
  std::vector<Anchor> anchors;
  // Vendor-specific layout extends beyond the labeled fields: most
  // distractors cluster in family-fixed zones, the rest land anywhere.
  std::vector<std::pair<double, double>> distractor_zones;
};

// Canonical slot grid shared by all families. Families reuse slots with
// different classes, so a position alone never identifies the class.
std::vector<std::pair<double, double>> slot_grid() {
  std::vector<std::pair<double, double>> slots;
  const double xs[] = {0.10, 0.30, 0.50, 0.70, 0.88};
  for (int r = 0; r < 9; ++r) {
    double y = 0.07 + 0.105 * r;
    for (double x : xs) slots.emplace_back(x, y);
  }
  return slots;
}

constexpr int kCompanionStride = 17;

double box_width_for(const std::string& text) {
  double w = 0.011 * static_cast<double>(text.size());
  return std::clamp(w, 0.03, 0.26);
}

bool intersects(const WordBox& a, const WordBox& b) {
  return a.left < b.right && b.left < a.right && a.top < b.bottom && b.top < a.bottom;
}

WordBox make_box_sized(const std::string& text, double cx, double cy, double w, double h) {
  WordBox b;
  b.text = text;
  b.left = std::clamp(cx - 0.5 * w, 0.0, 1.0 - w - 1e-4);
  b.right = b.left + w;
  b.top = std::clamp(cy - 0.5 * h, 0.0, 1.0 - h - 1e-4);
  b.bottom = b.top + h;
  return b;
}

WordBox make_box(const std::string& text, double cx, double cy, Rng& rng) {
  return make_box_sized(text, cx, cy, box_width_for(text), rng.uniform(0.018, 0.024));
}

std::string page_fingerprint(const Page& p) {
  std::ostringstream os;
  std::vector<std::string> parts;
  for (const WordBox& b : p.boxes) {
    std::ostringstream bs;
    bs.precision(17);
    bs << b.text << '|' << b.left << '|' << b.top << '|' << b.right << '|' << b.bottom << '|';
    for (int l : b.labels) bs << l << ',';
    parts.push_back(bs.str());
  }
  std::sort(parts.begin(), parts.end());
  for (const auto& s : parts) os << s << ';';
  return os.str();
}

Page generate_document(const SynthConfig& cfg, const Family& fam, int doc_index,
                       Rng doc_rng) {
  Page page;
  page.doc_id = fam.name + "_d" + std::to_string(doc_index);
  page.page_no = 0;
  page.layout_family = fam.name;

  int target_boxes = doc_rng.uniform_int(cfg.boxes_min, cfg.boxes_max);

  // Instantiate anchors with dropout but keep at least two distinct classes.
  std::vector<int> chosen;
  for (int i = 0; i < static_cast<int>(fam.anchors.size()); ++i)
    if (doc_rng.next_double() < kAnchorKeepProb) chosen.push_back(i);
  for (int i = 0; chosen.size() < 2 && i < static_cast<int>(fam.anchors.size()); ++i)
    if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) chosen.push_back(i);
  std::sort(chosen.begin(), chosen.end());

  for (int ai : chosen) {
    const Anchor& a = fam.anchors[static_cast<std::size_t>(ai)];
    double dx = doc_rng.uniform(-cfg.anchor_jitter, cfg.anchor_jitter);
    double dy = doc_rng.uniform(-cfg.anchor_jitter, cfg.anchor_jitter);
    std::string text = realize_text(class_text_type(a.cls), a.cls, doc_rng);
    WordBox box = make_box_sized(text, a.x + dx, a.y + dy, a.w, a.h);
    box.labels.insert(a.cls);
    if (a.companion) box.labels.insert((a.cls + kCompanionStride) % cfg.class_count);
    page.boxes.push_back(box);

    // Caption to the left of the value; the caption names the text type,
    // never the class.
    std::string cap = pick(caption_pool(class_text_type(a.cls)), doc_rng);
    WordBox capbox = make_box_sized(cap, a.x + dx - 0.105, a.y + dy, a.cap_w, a.cap_h);
    if (!intersects(capbox, box)) page.boxes.push_back(capbox);
  }

  int guard = 0;
  while (static_cast<int>(page.boxes.size()) < target_boxes && guard < 10 * target_boxes) {
    ++guard;
    std::string text = realize_distractor(doc_rng);
    double cx, cy;
    if (!fam.distractor_zones.empty() && doc_rng.next_double() < 0.7) {
      auto [zx, zy] = fam.distractor_zones[static_cast<std::size_t>(
          doc_rng.next_below(fam.distractor_zones.size()))];
      cx = std::clamp(zx + doc_rng.uniform(-0.09, 0.09), 0.04, 0.96);
      cy = std::clamp(zy + doc_rng.uniform(-0.06, 0.06), 0.03, 0.97);
    } else {
      cx = doc_rng.uniform(0.06, 0.94);
      cy = doc_rng.uniform(0.03, 0.97);
    }
    WordBox b = make_box(text, cx, cy, doc_rng);
    bool clash = false;
    for (const WordBox& other : page.boxes)
      if (intersects(b, other)) {
        clash = true;
        break;
      }
    if (!clash) page.boxes.push_back(b);
  }
  return page;
}

}  // namespace

Corpus generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  Rng root(cfg.seed);
  Rng fam_rng = root.fork(0x11);

  double avg_boxes = 0.5 * (cfg.boxes_min + cfg.boxes_max);
  int anchors_per_family =
      static_cast<int>(std::lround(cfg.label_density * avg_boxes / kAnchorKeepProb));
  anchors_per_family = std::max(2, anchors_per_family);

  auto slots = slot_grid();
  // All families draw their anchors from one shared pool of slots, so the
  // same position carries different classes in different families and the
  // position alone never identifies the class.
  std::vector<int> slot_pool(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) slot_pool[i] = static_cast<int>(i);
  {
    Rng pool_rng = root.fork(0x33);
    pool_rng.shuffle(slot_pool);
    int pool_size = std::min<int>(static_cast<int>(slots.size()),
                                  std::max(2 * anchors_per_family + 4, 14));
    slot_pool.resize(static_cast<std::size_t>(pool_size));
  }

  std::vector<Family> families;
  for (int f = 0; f < cfg.layout_family_count; ++f) {
    Family fam;
    fam.name = "fam" + std::to_string(f);
    Rng r = fam_rng.fork(static_cast<std::uint64_t>(f));
    std::vector<int> class_ids(static_cast<std::size_t>(cfg.class_count));
    for (int i = 0; i < cfg.class_count; ++i) class_ids[static_cast<std::size_t>(i)] = i;
    r.shuffle(class_ids);
    std::vector<int> slot_ids = slot_pool;
    r.shuffle(slot_ids);
    for (int a = 0; a < anchors_per_family; ++a) {
      Anchor an;
      an.cls = class_ids[static_cast<std::size_t>(a)];
      an.companion = r.next_double() < 0.3;
      auto [x, y] = slots[static_cast<std::size_t>(slot_ids[static_cast<std::size_t>(a)])];
      an.x = x;
      an.y = y;
      an.w = r.uniform(0.08, 0.13);
      an.h = r.uniform(0.018, 0.024);
      an.cap_w = r.uniform(0.06, 0.09);
      an.cap_h = an.h;
      fam.anchors.push_back(an);
    }
    for (int z = 0; z < 6; ++z)
      fam.distractor_zones.emplace_back(r.uniform(0.10, 0.90), r.uniform(0.05, 0.95));
    families.push_back(std::move(fam));
  }

  Corpus corpus;
  corpus.class_count = cfg.class_count;
  std::set<std::string> fingerprints;
  Rng doc_rng = root.fork(0x22);
  for (int f = 0; f < cfg.layout_family_count; ++f) {
    for (int d = 0; d < cfg.docs_per_family; ++d) {
      std::uint64_t salt =
          static_cast<std::uint64_t>(f) * 1000003ULL + static_cast<std::uint64_t>(d);
      Page page;
      for (std::uint64_t attempt = 0;; ++attempt) {
        page = generate_document(cfg, families[static_cast<std::size_t>(f)], d,
                                 doc_rng.fork(salt * 31 + attempt));
        if (fingerprints.insert(page_fingerprint(page)).second) break;
        if (attempt > 50)
          throw ConfigError("could not generate distinct page for " + page.doc_id);
      }
      corpus.pages.push_back(std::move(page));
    }
  }
  validate_corpus(corpus);
  return corpus;
}

namespace {

json page_to_json(const Page& p) {
  json boxes = json::array();
  for (const WordBox& b : p.boxes) {
    json jb;
    jb["text"] = b.text;
    jb["box"] = {b.left, b.top, b.right, b.bottom};
    jb["labels"] = std::vector<int>(b.labels.begin(), b.labels.end());
    boxes.push_back(jb);
  }
  json j;
  j["doc_id"] = p.doc_id;
  j["page_no"] = p.page_no;
  j["layout_family"] = p.layout_family;
  j["split"] = split_name(p.split);
  j["boxes"] = boxes;
  return j;
}

Page page_from_json(const json& j, int line_no, int class_count) {
  auto bad = [&](const std::string& what) {
    throw ValidationError("line " + std::to_string(line_no) + ": " + what);
  };
  Page p;
  try {
    p.doc_id = j.at("doc_id").get<std::string>();
    p.page_no = j.at("page_no").get<int>();
    p.layout_family = j.value("layout_family", std::string());
    auto sp = split_from_name(j.value("split", std::string("unassigned")));
    if (!sp) bad("unknown split name");
    p.split = *sp;
    for (std::size_t bi = 0; bi < j.at("boxes").size(); ++bi) {
      const json& jb = j.at("boxes")[bi];
      WordBox b;
      b.text = jb.at("text").get<std::string>();
      const json& coords = jb.at("box");
      if (coords.size() != 4) bad("box " + std::to_string(bi) + ": box needs 4 coordinates");
      b.left = coords[0].get<double>();
      b.top = coords[1].get<double>();
      b.right = coords[2].get<double>();
      b.bottom = coords[3].get<double>();
      for (const json& l : jb.at("labels")) b.labels.insert(l.get<int>());
      p.boxes.push_back(std::move(b));
    }
  } catch (const json::exception& e) {
    throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
  }
  if (p.page_no < 0) bad("negative page_no");
  try {
    validate_page(p, class_count);
  } catch (const ValidationError& e) {
    bad(e.what());
  }
  return p;
}

}  // namespace

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::ostringstream os;
  for (const Page& p : corpus.pages) os << page_to_json(p).dump() << '\n';
  return os.str();
}

void write_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open for writing: " + path);
  f << corpus_to_jsonl(corpus);
  if (!f) throw ValidationError("write failed: " + path);
}

Corpus corpus_from_jsonl_impl(std::istream& in, int class_count) {
  Corpus corpus;
  corpus.class_count = class_count;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_copy(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    corpus.pages.push_back(page_from_json(j, line_no, class_count));
  }
  return corpus;
}

Corpus corpus_from_jsonl(const std::string& text, int class_count) {
  std::istringstream is(text);
  return corpus_from_jsonl_impl(is, class_count);
}

Corpus read_corpus(const std::string& path, int class_count) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open corpus file: " + path);
  return corpus_from_jsonl_impl(f, class_count);
}

void split_corpus(Corpus& corpus, double train_ratio, double validation_ratio,
                  double test_ratio, std::uint64_t seed) {
  double sum = train_ratio + validation_ratio + test_ratio;
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  if (train_ratio <= 0 || validation_ratio <= 0 || test_ratio <= 0)
    throw ConfigError("split ratios must be positive");

  std::vector<std::string> docs;
  for (const Page& p : corpus.pages)
    if (std::find(docs.begin(), docs.end(), p.doc_id) == docs.end()) docs.push_back(p.doc_id);
  if (docs.size() < 3)
    throw ConfigError("need at least 3 documents to form 3 splits, have " +
                      std::to_string(docs.size()));

  Rng rng(seed);
  rng.shuffle(docs);

  const double ratios[3] = {train_ratio, validation_ratio, test_ratio};
  int n = static_cast<int>(docs.size());
  int counts[3];
  double fracs[3];
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = ratios[i] * n;
    counts[i] = static_cast<int>(std::floor(exact));
    fracs[i] = exact - counts[i];
    assigned += counts[i];
  }
  // Largest remainder; ties resolve in train/validation/test order.
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (fracs[i] > fracs[best]) best = i;
    counts[best] += 1;
    fracs[best] = -1.0;
    ++assigned;
  }
  // No split may end up empty.
  for (int i = 0; i < 3; ++i) {
    if (counts[i] == 0) {
      int donor = 0;
      for (int j = 1; j < 3; ++j)
        if (counts[j] > counts[donor]) donor = j;
      counts[donor] -= 1;
      counts[i] += 1;
    }
  }

  std::map<std::string, Split> assignment;
  int idx = 0;
  const Split order[3] = {Split::kTrain, Split::kValidation, Split::kTest};
  for (int s = 0; s < 3; ++s)
    for (int k = 0; k < counts[s]; ++k) assignment[docs[static_cast<std::size_t>(idx++)]] = order[s];

  for (Page& p : corpus.pages) p.split = assignment.at(p.doc_id);
}

Page augment_page(const Page& page, double rate, Rng& rng) {
  if (rate < 0.0 || rate > 0.1) throw ConfigError("augment rate must lie in [0, 0.1]");
  Page out = page;
  if (rate == 0.0) return out;
  for (WordBox& b : out.boxes) {
    const WordBox original = b;
    bool ok = false;
    for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
      WordBox cand = original;
      cand.left = std::clamp(original.left * (1.0 + rng.uniform(-rate, rate)), 0.0, 1.0);
      cand.top = std::clamp(original.top * (1.0 + rng.uniform(-rate, rate)), 0.0, 1.0);
      cand.right = std::clamp(original.right * (1.0 + rng.uniform(-rate, rate)), 0.0, 1.0);
      cand.bottom = std::clamp(original.bottom * (1.0 + rng.uniform(-rate, rate)), 0.0, 1.0);
      if (cand.left < cand.right && cand.top < cand.bottom) {
        b = cand;
        ok = true;
      }
    }
    if (!ok) b = original;
  }
  return out;
}

}  // namespace docsim
