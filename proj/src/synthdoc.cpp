#include "vitlp/synthdoc.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "vitlp/rng.hpp"

namespace vitlp {

namespace {

// 3×5 dot-matrix rows; bit 2 is the left column.
struct GlyphRows {
  char c;
  std::array<std::uint8_t, kGlyphH> rows;
};

constexpr GlyphRows kFont[] = {
    {'a', {2, 5, 7, 5, 5}}, {'b', {6, 5, 6, 5, 6}}, {'c', {3, 4, 4, 4, 3}}, {'d', {6, 5, 5, 5, 6}},
    {'e', {7, 4, 6, 4, 7}}, {'f', {7, 4, 6, 4, 4}}, {'g', {3, 4, 5, 5, 3}}, {'h', {5, 5, 7, 5, 5}},
    {'i', {7, 2, 2, 2, 7}}, {'j', {1, 1, 1, 5, 2}}, {'k', {5, 5, 6, 5, 5}}, {'l', {4, 4, 4, 4, 7}},
    {'m', {5, 7, 7, 5, 5}}, {'n', {6, 5, 5, 5, 5}}, {'o', {2, 5, 5, 5, 2}}, {'p', {6, 5, 6, 4, 4}},
    {'q', {2, 5, 5, 6, 3}}, {'r', {6, 5, 6, 5, 5}}, {'s', {3, 4, 2, 1, 6}}, {'t', {7, 2, 2, 2, 2}},
    {'u', {5, 5, 5, 5, 7}}, {'v', {5, 5, 5, 5, 2}}, {'w', {5, 5, 7, 7, 5}}, {'x', {5, 5, 2, 5, 5}},
    {'y', {5, 5, 2, 2, 2}}, {'z', {7, 1, 2, 4, 7}}, {'0', {7, 5, 5, 5, 7}}, {'1', {2, 6, 2, 2, 7}},
    {'2', {6, 1, 2, 4, 7}}, {'3', {6, 1, 2, 1, 6}}, {'4', {5, 5, 7, 1, 1}}, {'5', {7, 4, 6, 1, 6}},
    {'6', {3, 4, 7, 5, 7}}, {'7', {7, 1, 2, 2, 2}}, {'8', {7, 5, 7, 5, 7}}, {'9', {7, 5, 7, 1, 6}},
    {'.', {0, 0, 0, 0, 2}}, {',', {0, 0, 0, 2, 4}}, {':', {0, 2, 0, 2, 0}}, {'-', {0, 0, 7, 0, 0}},
    {'?', {6, 1, 2, 0, 2}},
};

constexpr std::string_view kKeys[] = {"name", "date", "total", "id",   "city", "code",
                                      "tax",  "qty",  "zip",   "item", "ref",  "due"};

// Length weights for words of 1..8 characters; a long tail toward longer words.
constexpr int kLengthWeights[] = {4, 10, 16, 16, 12, 8, 5, 3};

int draw_length(Rng& rng, int max_len) {
  max_len = std::clamp(max_len, 1, 8);
  int total = 0;
  for (int i = 0; i < max_len; ++i) total += kLengthWeights[i];
  int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(total)));
  for (int i = 0; i < max_len; ++i) {
    if (r < kLengthWeights[i]) return i + 1;
    r -= kLengthWeights[i];
  }
  return max_len;
}

std::string random_word(Rng& rng, int max_len, bool numeric = false) {
  const int len = draw_length(rng, max_len);
  std::string w;
  for (int i = 0; i < len; ++i) {
    w.push_back(numeric ? static_cast<char>('0' + rng.below(10)) : static_cast<char>('a' + rng.below(26)));
  }
  return w;
}

struct Grid {
  int scale, margin, advance, pitch, cols, lines;

  Grid(const PageSpec& spec) : scale(spec.glyph_scale) {
    if (scale < 1) throw GenerationError("glyph scale must be ≥ 1");
    margin = 2 * scale;
    advance = (kGlyphW + 1) * scale;
    pitch = (kGlyphH + 1) * scale;
    cols = (spec.width - 2 * margin + scale) / advance;
    lines = (spec.height - 2 * margin - kGlyphH * scale) / pitch + 1;
    if (cols < 8 || lines < 2) throw GenerationError("canvas too small for the glyph grid");
  }
};

struct Placed {
  std::string word;
  int line, col, tag;
};

// Flows words into cells [col0, col1) of lines [line, line_end), wrapping at
// the column bound. Returns false if the region runs out of lines.
class Flow {
 public:
  Flow(int col0, int col1, int line0, int line_end)
      : col0_(col0), col1_(col1), line_(line0), line_end_(line_end), col_(col0) {}

  bool place(std::vector<Placed>& out, const std::string& word, int tag) {
    const int len = static_cast<int>(word.size());
    if (len > col1_ - col0_) return false;
    if (col_ != col0_ && col_ + len > col1_) {
      ++line_;
      col_ = col0_;
    }
    if (line_ >= line_end_) return false;
    out.push_back({word, line_, col_, tag});
    col_ += len + 1;
    if (col_ >= col1_) {
      ++line_;
      col_ = col0_;
    }
    return true;
  }

 private:
  int col0_, col1_, line_, line_end_, col_;
};

[[noreturn]] void too_small(int n) {
  throw GenerationError("canvas too small for " + std::to_string(n) + " words");
}

}  // namespace

std::string style_name(LayoutStyle s) {
  switch (s) {
    case LayoutStyle::Paragraph: return "paragraph";
    case LayoutStyle::TwoColumn: return "two-column";
    case LayoutStyle::Table: return "table";
    case LayoutStyle::List: return "list";
  }
  return "?";
}

LayoutStyle parse_style(const std::string& name) {
  for (int i = 0; i < kNumStyles; ++i) {
    if (style_name(static_cast<LayoutStyle>(i)) == name) return static_cast<LayoutStyle>(i);
  }
  throw std::invalid_argument("unknown layout style: " + name);
}

std::vector<std::uint8_t> render_glyph(char c, int scale) {
  if (scale < 1) throw std::invalid_argument("glyph scale must be ≥ 1");
  const GlyphRows* g = nullptr;
  for (const auto& f : kFont)
    if (f.c == c) g = &f;
  if (!g) throw EncodingError(std::string("no glyph for character '") + c + "'");
  const int w = kGlyphW * scale, h = kGlyphH * scale;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w * h), 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int bit = kGlyphW - 1 - x / scale;
      out[static_cast<std::size_t>(y * w + x)] = (g->rows[static_cast<std::size_t>(y / scale)] >> bit) & 1u;
    }
  return out;
}

RenderedPage generate_page(const PageSpec& spec) {
  if (spec.min_words < 1 || spec.max_words < spec.min_words) throw GenerationError("invalid word count range");
  const Grid grid(spec);
  Rng rng(spec.seed);

  // Long-tailed word count: geometric excess over the minimum.
  int n = spec.min_words;
  while (n < spec.max_words && rng.chance(9, 10)) ++n;

  std::vector<Placed> placed;
  std::vector<QaTarget> qa;
  std::vector<std::pair<std::string, std::size_t>> kv;  // key → index of value in `placed`
  const int cols = grid.cols, lines = grid.lines;

  switch (spec.style) {
    case LayoutStyle::Paragraph: {
      const int header = std::min(n - 1, 1 + static_cast<int>(rng.below(2)));
      Flow head(0, cols, 0, 1);
      for (int i = 0; i < header; ++i)
        if (!head.place(placed, random_word(rng, (cols - 1) / 2), kTagHeader)) too_small(n);
      Flow body(0, cols, 1, lines);
      for (int i = header; i < n; ++i)
        if (!body.place(placed, random_word(rng, 8), kTagBody)) too_small(n);
      break;
    }
    case LayoutStyle::TwoColumn: {
      Flow head(0, cols, 0, 1);
      head.place(placed, random_word(rng, std::min(8, cols)), kTagHeader);
      const int half = cols / 2;
      Flow left(0, half - 1, 1, lines), right(half, cols, 1, lines);
      const int max_len = std::min(half - 1, cols - half);
      bool in_left = true;
      for (int i = 1; i < n; ++i) {
        const std::string w = random_word(rng, max_len);
        if (in_left && !left.place(placed, w, kTagBody)) in_left = false;
        if (!in_left && !right.place(placed, w, kTagBody)) too_small(n);
      }
      break;
    }
    case LayoutStyle::Table: {
      const int pairs = std::max(1, (n - 1) / 2);
      if (pairs > lines - 1) too_small(n);
      const int value_col = 6;
      if (cols - value_col < 2) throw GenerationError("canvas too narrow for a table");
      std::vector<std::string_view> keys(std::begin(kKeys), std::end(kKeys));
      rng.shuffle(keys);
      Flow head(0, cols, 0, 1);
      head.place(placed, random_word(rng, std::min(8, cols)), kTagHeader);
      for (int r = 0; r < pairs; ++r) {
        placed.push_back({std::string(keys[static_cast<std::size_t>(r)]), 1 + r, 0, kTagKey});
        placed.push_back({random_word(rng, std::min(4, cols - value_col), rng.chance(1, 2)), 1 + r, value_col,
                          kTagValue});
        kv.emplace_back(std::string(keys[static_cast<std::size_t>(r)]), placed.size() - 1);
      }
      const auto probe = kKeys[rng.below(std::size(kKeys))];
      const bool present = std::any_of(kv.begin(), kv.end(), [&](const auto& p) { return p.first == probe; });
      qa.push_back({"?" + std::string(probe), present ? QaTarget::Kind::Yes : QaTarget::Kind::No, {}});
      break;
    }
    case LayoutStyle::List: {
      const int items = std::max(1, (n - 1) / 2);
      if (items > lines - 1) too_small(n);
      Flow head(0, cols, 0, 1);
      head.place(placed, random_word(rng, std::min(8, cols)), kTagHeader);
      for (int r = 0; r < items; ++r) {
        placed.push_back({"-", 1 + r, 0, kTagBody});
        placed.push_back({random_word(rng, std::min(8, cols - 2)), 1 + r, 2, kTagBody});
      }
      break;
    }
  }

  RenderedPage page;
  page.spec = spec;
  page.class_id = static_cast<int>(spec.style);
  page.image = Image(spec.height, spec.width, 1.0);
  const int gw = kGlyphW * grid.scale, gh = kGlyphH * grid.scale;
  std::vector<std::pair<WordBox, int>> boxes;
  std::vector<WordBox> placed_boxes;
  for (const auto& p : placed) {
    const int x0 = grid.margin + p.col * grid.advance;
    const int y0 = grid.margin + p.line * grid.pitch;
    for (std::size_t i = 0; i < p.word.size(); ++i) {
      const auto glyph = render_glyph(p.word[i], grid.scale);
      const int gx = x0 + static_cast<int>(i) * grid.advance;
      for (int y = 0; y < gh; ++y)
        for (int x = 0; x < gw; ++x)
          if (glyph[static_cast<std::size_t>(y * gw + x)]) page.image.at(y0 + y, gx + x) = 0.0;
    }
    const int x1 = x0 + (static_cast<int>(p.word.size()) - 1) * grid.advance + gw;
    const NormBox nb{static_cast<double>(x0) / spec.width, static_cast<double>(y0) / spec.height,
                     static_cast<double>(x1) / spec.width, static_cast<double>(y0 + gh) / spec.height};
    WordBox wb{p.word, quantize(nb)};
    boxes.emplace_back(wb, p.tag);
    placed_boxes.push_back(wb);
  }
  for (const auto& [key, idx] : kv) qa.push_back({key, QaTarget::Kind::Span, {placed_boxes[idx]}});

  std::vector<WordBox> words;
  for (const auto& b : boxes) words.push_back(b.first);
  sort_reading_order(words);
  // Reattach tags after ordering; boxes are unique because words never overlap.
  for (const auto& w : words) {
    for (const auto& [wb, tag] : boxes) {
      if (wb == w) {
        page.tags.push_back(tag);
        break;
      }
    }
  }
  page.words = std::move(words);
  page.qa = std::move(qa);
  return page;
}

std::vector<RenderedPage> make_corpus(const CorpusOptions& opts) {
  if (opts.n < 1) throw std::invalid_argument("corpus size must be ≥ 1");
  double total = 0;
  for (double w : opts.mix) {
    if (w < 0) throw std::invalid_argument("style mix weights must be non-negative");
    total += w;
  }
  if (total <= 0) throw std::invalid_argument("style mix has no positive weight");

  // Largest-remainder apportionment, then a seeded shuffle.
  std::array<int, kNumStyles> counts{};
  std::array<double, kNumStyles> rema{};
  int assigned = 0;
  for (int s = 0; s < kNumStyles; ++s) {
    const double exact = opts.n * opts.mix[static_cast<std::size_t>(s)] / total;
    counts[static_cast<std::size_t>(s)] = static_cast<int>(exact);
    rema[static_cast<std::size_t>(s)] = exact - counts[static_cast<std::size_t>(s)];
    assigned += counts[static_cast<std::size_t>(s)];
  }
  while (assigned < opts.n) {
    std::size_t best = 0;
    for (std::size_t s = 1; s < kNumStyles; ++s)
      if (rema[s] > rema[best]) best = s;
    ++counts[best];
    rema[best] = -1.0;
    ++assigned;
  }
  std::vector<LayoutStyle> styles;
  for (int s = 0; s < kNumStyles; ++s)
    for (int k = 0; k < counts[static_cast<std::size_t>(s)]; ++k) styles.push_back(static_cast<LayoutStyle>(s));
  Rng rng(mix_seed(opts.seed, 0xC0FFEE));
  rng.shuffle(styles);

  std::vector<RenderedPage> pages;
  pages.reserve(static_cast<std::size_t>(opts.n));
  for (int i = 0; i < opts.n; ++i) {
    PageSpec spec;
    spec.seed = mix_seed(opts.seed, static_cast<std::uint64_t>(i));
    spec.width = opts.width;
    spec.height = opts.height;
    spec.glyph_scale = opts.glyph_scale;
    spec.style = styles[static_cast<std::size_t>(i)];
    spec.min_words = 3;
    spec.max_words = 30;
    // Pages that overflow the canvas are clipped to its capacity.
    for (;;) {
      try {
        pages.push_back(generate_page(spec));
        break;
      } catch (const GenerationError&) {
        if (spec.max_words <= spec.min_words) throw;
        --spec.max_words;
      }
    }
  }
  return pages;
}

std::string format_annotation(const RenderedPage& page) {
  std::ostringstream os;
  os << "#vitlp-page 1\n";
  os << "#size " << page.spec.width << ' ' << page.spec.height << '\n';
  os << "#style " << style_name(page.spec.style) << '\n';
  os << "#class " << page.class_id << '\n';
  os << "#seed " << page.spec.seed << '\n';
  os << "#scale " << page.spec.glyph_scale << '\n';
  for (std::size_t i = 0; i < page.words.size(); ++i) {
    const auto& w = page.words[i];
    os << w.word << ' ' << w.box.x1 << ' ' << w.box.y1 << ' ' << w.box.x2 << ' ' << w.box.y2 << ' ' << page.tags[i]
       << '\n';
  }
  for (const auto& q : page.qa) {
    os << "#qa " << q.question;
    switch (q.kind) {
      case QaTarget::Kind::Yes: os << " yes"; break;
      case QaTarget::Kind::No: os << " no"; break;
      case QaTarget::Kind::Span:
        os << " span";
        for (const auto& a : q.answer) {
          const auto it = std::find(page.words.begin(), page.words.end(), a);
          if (it == page.words.end()) throw std::logic_error("qa answer is not a page word");
          os << ' ' << (it - page.words.begin());
        }
        break;
    }
    os << '\n';
  }
  return os.str();
}

RenderedPage parse_annotation(const std::string& text, Image image) {
  RenderedPage page;
  std::istringstream is(text);
  std::string line;
  bool header = false;
  std::vector<std::string> qa_lines;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string key;
      ls >> key;
      if (key == "#vitlp-page") {
        int v = 0;
        ls >> v;
        if (v != 1) throw std::runtime_error("unsupported page annotation version");
        header = true;
      } else if (key == "#size") {
        ls >> page.spec.width >> page.spec.height;
      } else if (key == "#style") {
        std::string s;
        ls >> s;
        page.spec.style = parse_style(s);
      } else if (key == "#class") {
        ls >> page.class_id;
      } else if (key == "#seed") {
        ls >> page.spec.seed;
      } else if (key == "#scale") {
        ls >> page.spec.glyph_scale;
      } else if (key == "#qa") {
        qa_lines.push_back(line);
      }
      continue;
    }
    WordBox w;
    int tag = 0;
    if (!(ls >> w.word >> w.box.x1 >> w.box.y1 >> w.box.x2 >> w.box.y2 >> tag)) {
      throw std::runtime_error("bad annotation line: " + line);
    }
    if (!w.box.valid()) throw RangeError("annotation box out of range: " + line);
    page.words.push_back(w);
    page.tags.push_back(tag);
  }
  if (!header) throw std::runtime_error("missing #vitlp-page header");
  for (const auto& l : qa_lines) {
    std::istringstream ls(l);
    std::string tag, kind;
    QaTarget q;
    ls >> tag >> q.question >> kind;
    if (kind == "yes") {
      q.kind = QaTarget::Kind::Yes;
    } else if (kind == "no") {
      q.kind = QaTarget::Kind::No;
    } else if (kind == "span") {
      std::size_t idx;
      while (ls >> idx) {
        if (idx >= page.words.size()) throw std::runtime_error("qa answer index out of range: " + l);
        q.answer.push_back(page.words[idx]);
      }
    } else {
      throw std::runtime_error("bad qa line: " + l);
    }
    page.qa.push_back(q);
  }
  if (image.width != page.spec.width || image.height != page.spec.height) {
    throw std::runtime_error("page image size does not match its annotation");
  }
  page.image = std::move(image);
  return page;
}

std::string git_blob_hash(const std::string& content) {
  const std::string data = "blob " + std::to_string(content.size()) + '\0' + content;
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1) {
    throw std::runtime_error("SHA-1 digest failed");
  }
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

namespace {

std::string page_stem(std::size_t i) {
  std::ostringstream os;
  os << "page_" << std::setw(4) << std::setfill('0') << i;
  return os.str();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void spill(const std::filesystem::path& p, const std::string& data) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os.write(data.data(), static_cast<std::streamsize>(data.size()));
}

}  // namespace

CorpusFiles write_corpus(const std::filesystem::path& dir, const std::vector<RenderedPage>& pages,
                         const CorpusOptions& opts) {
  std::filesystem::create_directories(dir / "pages");
  std::ostringstream man;
  man << "#vitlp-corpus 1\n";
  man << "#n " << pages.size() << '\n';
  man << "#seed " << opts.seed << '\n';
  man << "#size " << opts.width << ' ' << opts.height << '\n';
  man << "#mix";
  for (double m : opts.mix) man << ' ' << m;
  man << '\n';
  for (std::size_t i = 0; i < pages.size(); ++i) {
    const std::string stem = page_stem(i);
    const std::string pgm = encode_pgm(pages[i].image);
    const std::string ann = format_annotation(pages[i]);
    spill(dir / "pages" / (stem + ".pgm"), pgm);
    spill(dir / "pages" / (stem + ".txt"), ann);
    man << stem << ' ' << pages[i].spec.seed << ' ' << style_name(pages[i].spec.style) << ' ' << git_blob_hash(pgm)
        << ' ' << git_blob_hash(ann) << '\n';
  }
  CorpusFiles out{man.str(), git_blob_hash(man.str())};
  spill(dir / "corpus.txt", out.manifest);
  return out;
}

std::vector<RenderedPage> read_corpus(const std::filesystem::path& dir, std::string* hash) {
  const std::string manifest = slurp(dir / "corpus.txt");
  std::istringstream is(manifest);
  std::string line;
  std::vector<RenderedPage> pages;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string stem, style, pgm_hash, ann_hash;
    std::uint64_t seed = 0;
    if (!(ls >> stem >> seed >> style >> pgm_hash >> ann_hash)) throw std::runtime_error("bad manifest line: " + line);
    const std::string pgm = slurp(dir / "pages" / (stem + ".pgm"));
    const std::string ann = slurp(dir / "pages" / (stem + ".txt"));
    if (git_blob_hash(pgm) != pgm_hash || git_blob_hash(ann) != ann_hash) {
      throw std::runtime_error("corpus file hash mismatch for " + stem);
    }
    pages.push_back(parse_annotation(ann, decode_pgm(pgm)));
  }
  if (hash) *hash = git_blob_hash(manifest);
  return pages;
}

}  // namespace vitlp
