#include <doctest.h>

#include <filesystem>
#include <set>

#include "vitlp/segmenter.hpp"
#include "vitlp/synthdoc.hpp"

using namespace vitlp;

namespace {

// Ink bounding box inside `r` widened by one pixel left and right.
PixelRect ink_extent(const Image& img, const PixelRect& r) {
  PixelRect out{img.width, img.height, -1, -1};
  for (int y = r.y0; y < r.y1; ++y)
    for (int x = std::max(0, r.x0 - 1); x < std::min(img.width, r.x1 + 1); ++x)
      if (img.at(y, x) < 0.5) {
        out.x0 = std::min(out.x0, x);
        out.y0 = std::min(out.y0, y);
        out.x1 = std::max(out.x1, x + 1);
        out.y1 = std::max(out.y1, y + 1);
      }
  return out;
}

}  // namespace

TEST_CASE("glyphs are fixed and distinct") {
  std::set<std::vector<std::uint8_t>> seen;
  for (char c : Vocabulary::kAlphabet) {
    const auto g = render_glyph(c);
    CHECK(g.size() == static_cast<std::size_t>(kGlyphW * kGlyphH));
    CHECK(g == render_glyph(c));
    CHECK(std::count(g.begin(), g.end(), 1) > 0);
    seen.insert(g);
  }
  CHECK(seen.size() == Vocabulary::kAlphabet.size());
  CHECK(render_glyph('a') != render_glyph('b'));
  CHECK(render_glyph('a', 2).size() == static_cast<std::size_t>(4 * kGlyphW * kGlyphH));
  CHECK_THROWS(render_glyph(' '));
  CHECK_THROWS(render_glyph('A'));
}

TEST_CASE("pages are deterministic and geometrically exact") {
  const Vocabulary v;
  for (int style = 0; style < kNumStyles; ++style) {
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
      PageSpec spec;
      spec.seed = seed;
      spec.max_words = 10;
      spec.style = static_cast<LayoutStyle>(style);
      const auto page = generate_page(spec);
      const auto again = generate_page(spec);
      CHECK(page.image == again.image);
      CHECK(page.words == again.words);
      CHECK(page.tags == again.tags);
      CHECK(page.class_id == style);
      REQUIRE(page.tags.size() == page.words.size());
      CHECK(page.words.size() >= 3);

      for (std::size_t i = 0; i < page.words.size(); ++i) {
        const auto& w = page.words[i];
        CHECK(w.box.valid());
        CHECK_FALSE(w.box.degenerate());
        for (std::size_t j = i + 1; j < page.words.size(); ++j) CHECK(iou(w.box, page.words[j].box) == 0.0);
        // The box spans exactly the word's glyph cells and holds all of its ink.
        const PixelRect cells = to_pixels(w.box, 64, 64);
        CHECK(cells.y1 - cells.y0 == kGlyphH);
        CHECK(cells.x1 - cells.x0 == static_cast<int>(w.word.size()) * (kGlyphW + 1) - 1);
        const BBox back = quantize(NormBox{cells.x0 / 64.0, cells.y0 / 64.0, cells.x1 / 64.0, cells.y1 / 64.0});
        CHECK(back == w.box);
        const PixelRect ink = ink_extent(page.image, cells);
        CHECK(ink.x0 >= cells.x0);
        CHECK(ink.x1 <= cells.x1);
        CHECK(ink.x0 < ink.x1);
      }

      auto sorted = page.words;
      sort_reading_order(sorted);
      CHECK(sorted == page.words);
      CHECK(decode_sequence(v, encode_document(v, page.words)).words == page.words);

      for (const auto& q : page.qa) {
        if (q.kind != QaTarget::Kind::Span) continue;
        REQUIRE(q.answer.size() == 1);
        CHECK(std::find(page.words.begin(), page.words.end(), q.answer[0]) != page.words.end());
      }
      if (spec.style == LayoutStyle::Table) CHECK_FALSE(page.qa.empty());
    }
  }
}

TEST_CASE("page generation errors") {
  PageSpec tiny;
  tiny.width = 24;
  tiny.height = 24;
  CHECK_THROWS_AS(generate_page(tiny), GenerationError);
  PageSpec crowded;
  crowded.min_words = 200;
  crowded.max_words = 200;
  CHECK_THROWS_AS(generate_page(crowded), GenerationError);
}

TEST_CASE("corpus statistics and hash") {
  const Vocabulary v;
  const auto corpus = make_corpus({});
  REQUIRE(corpus.size() == 100);
  std::array<int, kNumStyles> classes{};
  int multi = 0, single = 0;
  for (const auto& p : corpus) {
    ++classes[static_cast<std::size_t>(p.class_id)];
    const auto k = segment_count(encode_document(v, p.words).size(), SegmentConfig{});
    (k >= 2 ? multi : single) += 1;
  }
  for (int c : classes) CHECK(std::abs(c - 25) <= 3);
  CHECK(multi >= 20);
  CHECK(single > 0);

  const auto dir = std::filesystem::temp_directory_path() / "vitlp_corpus_test";
  std::filesystem::remove_all(dir);
  const auto files = write_corpus(dir, corpus, {});
  CHECK(files.hash == "df7251608be73daa58168c1eb97dc3c261f7a7f0");
  std::string hash;
  const auto back = read_corpus(dir, &hash);
  CHECK(hash == files.hash);
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(back[i].words == corpus[i].words);
    CHECK(back[i].tags == corpus[i].tags);
    CHECK(back[i].class_id == corpus[i].class_id);
    CHECK(back[i].qa.size() == corpus[i].qa.size());
    CHECK(back[i].image == corpus[i].image);
  }
  const auto again = write_corpus(dir / "again", make_corpus({}), {});
  CHECK(again.hash == files.hash);
  std::filesystem::remove_all(dir);
}

TEST_CASE("annotation round trip") {
  PageSpec spec;
  spec.seed = 3;
  spec.style = LayoutStyle::Table;
  const auto page = generate_page(spec);
  const std::string text = format_annotation(page);
  CHECK(text.starts_with("#vitlp-page 1\n"));
  const auto back = parse_annotation(text, page.image);
  CHECK(back.words == page.words);
  CHECK(back.tags == page.tags);
  CHECK(back.class_id == page.class_id);
  REQUIRE(back.qa.size() == page.qa.size());
  for (std::size_t i = 0; i < page.qa.size(); ++i) {
    CHECK(back.qa[i].question == page.qa[i].question);
    CHECK(back.qa[i].kind == page.qa[i].kind);
    CHECK(back.qa[i].answer == page.qa[i].answer);
  }
  CHECK(format_annotation(back) == text);
  CHECK_THROWS(parse_annotation("#vitlp-page 1\nab 1 2 3\n", page.image));
}

TEST_CASE("git blob hash") {
  CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}
