#include <doctest.h>

#include "test_util.hpp"
#include "vitlp/infer.hpp"
#include "vitlp/pipeline.hpp"
#include "vitlp/synthdoc.hpp"

using namespace vitlp;

namespace {

ModelConfig small_config(int m) {
  ModelConfig c;
  c.d = 32;
  c.heads = 4;
  c.enc_layers = 1;
  c.dec_layers = 2;
  c.patch = 16;
  c.image_h = 64;
  c.image_w = 64;
  c.max_targets = m;
  return c;
}

}  // namespace

TEST_CASE("localization prf examples") {
  const BBox a{0, 0, 100, 100}, b{500, 500, 600, 600};
  auto r = localization_prf({a, b}, {a, b});
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 1.0);
  CHECK(r.f1 == 1.0);

  r = localization_prf({}, {a});
  CHECK(r.precision == 0.0);
  CHECK(r.recall == 0.0);
  CHECK(r.f1 == 0.0);
  r = localization_prf({}, {});
  CHECK(r.f1 == 0.0);

  // IoU 0.6 between a and `near`: overlap 60×100 over union 100×100.
  const BBox near{0, 0, 60, 100};
  CHECK(iou(near, a) == doctest::Approx(0.6).epsilon(1e-15));
  r = localization_prf({near}, {a, b});
  CHECK(r.matches == 1);
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 0.5);
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  // Below threshold never matches; one gold absorbs at most one prediction.
  CHECK(localization_prf({BBox{0, 0, 40, 100}}, {a}).matches == 0);
  CHECK(localization_prf({a, a}, {a}).matches == 1);
  // Greedy picks the best pair first.
  const BBox g1{0, 0, 100, 100}, g2{20, 0, 120, 100};
  const BBox p{10, 0, 110, 100};
  CHECK(localization_prf({p, g2}, {g1, g2}).matches == 2);
}

TEST_CASE("recognition prf examples") {
  auto r = recognition_prf({"a", "b", "b"}, {"b", "a", "b"});
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 1.0);
  CHECK(r.f1 == 1.0);
  r = recognition_prf({"a", "a"}, {"a"});
  CHECK(r.precision == 0.5);
  CHECK(r.recall == 1.0);
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  r = recognition_prf({"x"}, {"y"});
  CHECK(r.precision == 0.0);
  CHECK(r.recall == 0.0);
  CHECK(r.f1 == 0.0);
}

TEST_CASE("prf symmetry under swapping pred and gold") {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    std::vector<BBox> p, g;
    std::vector<std::string> ps, gs;
    for (int k = rng.range(0, 6); k > 0; --k) {
      const int x = rng.range(0, 300), y = rng.range(0, 300);
      p.push_back({x, y, x + rng.range(1, 200), y + rng.range(1, 200)});
      ps.push_back(std::string(1, static_cast<char>('a' + rng.below(3))));
    }
    for (int k = rng.range(0, 6); k > 0; --k) {
      const int x = rng.range(0, 300), y = rng.range(0, 300);
      g.push_back({x, y, x + rng.range(1, 200), y + rng.range(1, 200)});
      gs.push_back(std::string(1, static_cast<char>('a' + rng.below(3))));
    }
    const auto l1 = localization_prf(p, g), l2 = localization_prf(g, p);
    CHECK(l1.precision == l2.recall);
    CHECK(l1.recall == l2.precision);
    const auto r1 = recognition_prf(ps, gs), r2 = recognition_prf(gs, ps);
    CHECK(r1.precision == r2.recall);
    CHECK(r1.recall == r2.precision);
  }
}

TEST_CASE("anls examples") {
  CHECK(anls("total", {"total"}) == 1.0);
  CHECK(anls("abcd", {"abce"}) == 0.75);
  CHECK(anls("abcd", {"wxyz", "abce"}) == 0.75);
  // NL = 3/4 > 0.5 cuts to zero.
  CHECK(anls("abcd", {"axyz"}) == 0.0);
  CHECK(anls("ab", {"ax"}) == 0.5);
  CHECK(anls("", {""}) == 1.0);
  CHECK_THROWS(anls("a", {}));
  CHECK(levenshtein("kitten", "sitting") == 3);
  CHECK(levenshtein("", "abc") == 3);
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    std::string s;
    for (int k = rng.range(0, 8); k > 0; --k) s.push_back(static_cast<char>('a' + rng.below(4)));
    std::string t;
    for (int k = rng.range(0, 8); k > 0; --k) t.push_back(static_cast<char>('a' + rng.below(4)));
    CHECK(anls(s, {s}) == 1.0);
    const double v = anls(s, {t});
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("untrained generation honours the contract") {
  const Vocabulary v;
  const auto s = ModelState::init(small_config(8), 3);
  PageSpec spec;
  spec.seed = 4;
  spec.max_words = 10;
  const auto page = generate_page(spec);
  GenerationConfig cfg;
  cfg.seg = {8, 0.25};
  cfg.max_segments = 4;
  const auto r = generate_ocr(s, v, page.image, cfg);
  CHECK(r.segments_used >= 1);
  CHECK(r.segments_used <= 4);
  CHECK(r.segments.size() == r.segments_used);
  if (!r.finished) CHECK_FALSE(r.diagnostics.empty());
  // Generated hand-offs have exactly the training-time shape.
  for (std::size_t k = 0; k < r.segments.size(); ++k) {
    const auto& seg = r.segments[k];
    CHECK(seg.mode == (k == 0 ? SegmentMode::Beginning : SegmentMode::Continuation));
    CHECK(seg.loss_mask.size() == 1 + seg.prefix.size() + seg.targets.size());
    if (k > 0) {
      CHECK(seg.prefix == next_prefix(r.segments[k - 1], cfg.seg));
      CHECK(seg.prefix.size() == 2);
    }
    if (k + 1 < r.segments.size()) CHECK(seg.targets.size() == (k == 0 ? 8u : 6u));
  }
  for (const auto& e : r.sequence.entries()) CHECK(e.box.has_value() == (e.token == v.loc()));

  const auto again = generate_ocr(s, v, page.image, cfg);
  CHECK(again.sequence == r.sequence);

  CHECK_THROWS_AS(generate_ocr(s, v, Image(32, 32), cfg), MalformedInputError);
  GenerationConfig too_long;
  too_long.seg = {16, 0.25};
  CHECK_THROWS(generate_ocr(s, v, page.image, too_long));
  GenerationConfig zero;
  zero.max_segments = 0;
  CHECK_THROWS(generate_ocr(s, v, page.image, zero));

  // Inverted or otherwise unusable boxes end up in diagnostics, never in an exception.
  cfg.max_segments = 2;
  for (std::uint64_t seed = 10; seed < 16; ++seed) {
    const auto m = ModelState::init(small_config(8), seed);
    OcrResult out;
    CHECK_NOTHROW(out = generate_ocr(m, v, page.image, cfg));
    CHECK((out.diagnostics.empty() ? out.finished : true));
    for (const auto& w : out.words) CHECK(w.box.valid());
  }
}

TEST_CASE("untrained task heads honour the contract") {
  const Vocabulary v;
  const auto s = ModelState::init(small_config(64), 5);
  PageSpec spec;
  spec.seed = 2;
  spec.max_words = 16;
  spec.style = LayoutStyle::Table;
  const auto page = generate_page(spec);

  const int c = classify(s, v, page.image);
  CHECK(c >= 0);
  CHECK(c < 4);
  CHECK(classify(s, v, page.image) == c);

  const auto tags = label_tokens(s, v, page.image, page.words, SegmentConfig{});
  CHECK(tags.size() == page.words.size());
  const auto short_tags = label_tokens(s, v, page.image, page.words, SegmentConfig{8, 0.25});
  CHECK(short_tags.size() == page.words.size());
  CHECK(label_tokens(s, v, page.image, {page.words[0]}, SegmentConfig{}).size() == 1);

  const auto a = answer_question(s, v, page.image, "date");
  if (a.kind != Answer::Kind::Span) CHECK(a.words.empty());
  CHECK_THROWS(answer_question(s, v, page.image, ""));
}

TEST_CASE("memorized page is regenerated across continuation segments") {
  const Vocabulary v;
  PageSpec spec;
  spec.seed = 11;
  spec.min_words = 5;
  spec.max_words = 5;
  const std::vector<RenderedPage> pages{generate_page(spec)};
  const SegmentConfig seg{8, 0.25};
  const auto len = encode_document(v, pages[0].words).size();
  REQUIRE(segment_count(len, seg) >= 3);

  auto s = ModelState::init(small_config(8), 1);
  TrainOptions opts;
  opts.steps = 400;
  opts.batch = 8;
  opts.seg = seg;
  opts.optim.horizon = opts.steps;
  const auto logs = pretrain(s, v, pages, opts);
  CHECK(logs.back().total < logs.front().total);

  GenerationConfig cfg;
  cfg.seg = seg;
  const auto r = generate_ocr(s, v, pages[0].image, cfg);
  CHECK(r.finished);
  CHECK(r.segments_used >= 2);
  CHECK(r.segments_used == segment_count(len, seg));
  CHECK(r.words == pages[0].words);
  CHECK(r.diagnostics.empty());
}
