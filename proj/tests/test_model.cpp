#include <doctest.h>

#include <filesystem>

#include "test_util.hpp"
#include "vitlp/model.hpp"
#include "vitlp/ops.hpp"

using namespace vitlp;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d = 16;
  c.heads = 2;
  c.enc_layers = 1;
  c.dec_layers = 2;
  c.patch = 8;
  c.image_h = 32;
  c.image_w = 32;
  c.max_targets = 8;
  return c;
}

Image noise_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w);
  for (double& p : img.pixels) p = testing::uniform(rng, 0.0, 1.0);
  return img;
}

bool rows_equal(const Tensor& a, const Tensor& b, std::size_t r) {
  for (std::size_t c = 0; c < a.cols(); ++c)
    if (a.at(r, c) != b.at(r, c)) return false;
  return true;
}

DecoderInput sample_input(const Vocabulary& v) {
  DecoderInput in;
  in.push({v.bos(), std::nullopt});
  in.push({v.char_id('a'), std::nullopt});
  in.push({v.char_id('b'), std::nullopt});
  in.push({v.loc(), BBox{10, 20, 300, 400}});
  in.push({v.char_id('c'), std::nullopt});
  in.push({v.loc(), BBox{500, 20, 600, 90}});
  return in;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(ModelConfig{}.validate());
  CHECK(ModelConfig{}.num_patches() == 16);
  CHECK(ModelConfig{}.max_positions() == 66);
  auto c = small_config();
  c.d = 18;
  CHECK_THROWS(c.validate());
  c = small_config();
  c.heads = 3;
  CHECK_THROWS(c.validate());
  c = small_config();
  c.image_w = 36;
  CHECK_THROWS(c.validate());
  c = small_config();
  c.layout_bins = 1000;
  CHECK_THROWS(c.validate());
  CHECK(ModelConfig::from_map(small_config().to_map()).to_map() == small_config().to_map());
}

TEST_CASE("parameter shapes") {
  const auto s = ModelState::init(ModelConfig{}, 1);
  CHECK(s.word_emb.shape() == Shape{55, 64});
  CHECK(s.x_emb.shape() == Shape{1001, 16});
  CHECK(s.y_emb.shape() == Shape{1001, 16});
  CHECK(s.layout_hidden.shape() == Shape{64, 64});
  CHECK(s.layout_x_emb.shape() == Shape{1001, 64});
  CHECK(s.layout_y_emb.shape() == Shape{1001, 64});
  CHECK(s.layout_proj.shape() == Shape{1001, 64});
  CHECK(s.lm_head.weight.shape() == Shape{55, 64});
  CHECK(s.encoder.size() == 4);
  CHECK(s.decoder.size() == 2);
  // Input and layout-head coordinate tables are separate storage.
  CHECK(s.x_emb.node() != s.layout_x_emb.node());
  CHECK(s.enc_norm.gain.at(0) == 1.0);
  CHECK(s.enc_norm.bias.at(0) == 0.0);
}

TEST_CASE("init is deterministic per seed") {
  const auto a = ModelState::init(small_config(), 3);
  const auto b = ModelState::init(small_config(), 3);
  const auto c = ModelState::init(small_config(), 4);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  REQUIRE(pa.size() == pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(std::ranges::equal(pa[i].second.data(), pb[i].second.data()));
    if (!std::ranges::equal(pa[i].second.data(), pc[i].second.data())) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("checkpoint round trip") {
  const auto s = ModelState::init(small_config(), 9);
  const auto path = std::filesystem::temp_directory_path() / "vitlp_model_roundtrip.bin";
  s.to_checkpoint().save(path);
  const auto r = ModelState::from_checkpoint(Checkpoint::load(path));
  std::filesystem::remove(path);
  CHECK(r.config.to_map() == s.config.to_map());
  const auto ps = s.parameters(), pr = r.parameters();
  REQUIRE(ps.size() == pr.size());
  for (std::size_t i = 0; i < ps.size(); ++i) CHECK(std::ranges::equal(ps[i].second.data(), pr[i].second.data()));
}

TEST_CASE("encoder shapes and patch locality") {
  const auto s = ModelState::init(ModelConfig{}, 2);
  const Image img = noise_image(64, 64, 1);
  CHECK(encode_image(s, img).shape() == Shape{16, 64});
  CHECK_THROWS(encode_image(s, Image(32, 64)));

  const Image blank(64, 64, 1.0);
  const Tensor e1 = encode_image(s, blank), e2 = encode_image(s, blank);
  CHECK(std::ranges::equal(e1.data(), e2.data()));

  // Swap patch (0,0) with patch (1,2): before any block only rows 0 and 6 move.
  Image swapped = img;
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) std::swap(swapped.at(y, x), swapped.at(16 + y, 32 + x));
  const Tensor p = patch_embed(s, img), q = patch_embed(s, swapped);
  for (std::size_t r = 0; r < 16; ++r) CHECK(rows_equal(p, q, r) == (r != 0 && r != 6));
}

TEST_CASE("[LOC] embedding is the four-way concatenation") {
  const Vocabulary v;
  const auto s = ModelState::init(ModelConfig{}, 2);
  DecoderInput in;
  in.push({v.loc(), BBox{0, 0, 0, 0}});
  in.push({v.loc(), BBox{3, 4, 5, 6}});
  in.push({v.loc(), BBox{3, 4, 5, 6}});
  in.push({v.loc(), BBox{3, 4, 5, 7}});
  const Tensor h = embed_targets(s, v, in);
  REQUIRE(h.shape() == Shape{4, 64});
  for (std::size_t c = 0; c < 16; ++c) {
    CHECK(h.at(0, c) == s.x_emb.at(0, c));
    CHECK(h.at(0, 16 + c) == s.y_emb.at(0, c));
    CHECK(h.at(0, 32 + c) == s.x_emb.at(0, c));
    CHECK(h.at(0, 48 + c) == s.y_emb.at(0, c));
  }
  CHECK(rows_equal(h, h, 1));
  for (std::size_t c = 0; c < 64; ++c) {
    CHECK(h.at(1, c) == h.at(2, c));
    // Only the y2 slice moves.
    if (c < 48) CHECK(h.at(1, c) == h.at(3, c));
    else CHECK(h.at(1, c) != h.at(3, c));
  }

  DecoderInput words;
  words.push({v.char_id('q'), std::nullopt});
  const Tensor w = embed_targets(s, v, words);
  for (std::size_t c = 0; c < 64; ++c) CHECK(w.at(0, c) == s.word_emb.at(static_cast<std::size_t>(v.char_id('q')), c));

  DecoderInput bad;
  bad.push({v.loc(), std::nullopt});
  CHECK_THROWS_AS(embed_targets(s, v, bad), MalformedInputError);
  CHECK_THROWS_AS(embed_targets(s, v, DecoderInput{}), MalformedInputError);
}

TEST_CASE("decoder is causal over targets and sees every patch") {
  const Vocabulary v;
  const auto s = ModelState::init(small_config(), 5);
  const Image img = noise_image(32, 32, 2);
  const Tensor hv = encode_image(s, img);
  const Tensor htl = embed_targets(s, v, sample_input(v));
  const Tensor base = decode(s, hv, htl);
  REQUIRE(base.shape() == Shape{6, 16});

  for (std::size_t j = 0; j < 6; ++j) {
    Tensor moved = htl.clone();
    for (std::size_t c = 0; c < 16; ++c) moved.mutable_data()[j * 16 + c] += 0.5;
    const Tensor out = decode(s, hv, moved);
    for (std::size_t i = 0; i < 6; ++i) CHECK(rows_equal(base, out, i) == (i < j));
  }

  Tensor hv2 = hv.clone();
  for (std::size_t c = 0; c < 16; ++c) hv2.mutable_data()[3 * 16 + c] += 0.5;
  const Tensor out = decode(s, hv2, htl);
  for (std::size_t i = 0; i < 6; ++i) CHECK_FALSE(rows_equal(base, out, i));

  DecoderInput one;
  one.push({v.bos(), std::nullopt});
  CHECK(decode(s, hv, embed_targets(s, v, one)).shape() == Shape{1, 16});
}

TEST_CASE("lm head") {
  auto s = ModelState::init(ModelConfig{}, 1);
  const Tensor zero = Tensor::zeros({5, 64});
  const Tensor logits = lm_logits(s, zero);
  CHECK(logits.shape() == Shape{5, 55});
  for (double x : logits.data()) CHECK(x == 0.0);

  const double vals[] = {0.1, 0.7, 0.7, 0.2};
  CHECK(argmax(vals) == 1);
  const int allowed[] = {0, 3};
  CHECK(argmax(vals, allowed) == 3);
}

TEST_CASE("layout head order") {
  const auto s = ModelState::init(small_config(), 6);
  const Tensor h0 = testing::random_tensor({1, 16}, 8, false);
  const std::array<int, 4> base{100, 200, 300, 400};
  const auto ref = layout_head(s, h0, base);
  for (const auto& p : ref.probs) {
    REQUIRE(p.size() == 1001);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(ref.coords == base);

  // Perturbing teacher coordinate k leaves distributions 0..k untouched.
  const std::array<int, 4> shifted{150, 250, 350, 450};
  for (std::size_t k = 0; k < 4; ++k) {
    auto t = base;
    t[k] = shifted[k];
    const auto out = layout_head(s, h0, t);
    for (std::size_t j = 0; j < 4; ++j) CHECK((out.probs[j] == ref.probs[j]) == (j <= k));
  }

  // Batched teacher-forced logits agree with the single-state head.
  const auto logits = layout_logits(s, h0, {BBox{100, 200, 300, 400}});
  for (std::size_t j = 0; j < 4; ++j) {
    const Tensor p = ops::softmax(logits[j]);
    for (std::size_t b = 0; b < 1001; b += 97) CHECK(p.at(0, b) == doctest::Approx(ref.probs[j][b]).epsilon(1e-14));
  }

  // Free-running picks feed each argmax forward.
  const auto free = layout_head(s, h0, std::nullopt);
  CHECK(free.coords[0] == argmax(free.probs[0]));
  const auto forced = layout_head(s, h0, free.coords);
  for (std::size_t j = 0; j < 4; ++j) CHECK(forced.probs[j] == free.probs[j]);

  CHECK_THROWS_AS(layout_head(s, h0, std::array<int, 4>{0, 0, 1001, 0}), RangeError);
}

TEST_CASE("text-only model ignores [LOC] coordinates") {
  const Vocabulary v;
  ModelConfig c;
  c.layout_inputs = false;
  const auto s = ModelState::init(c, 2);
  DecoderInput in;
  in.push({v.loc(), BBox{0, 0, 0, 0}});
  in.push({v.loc(), BBox{3, 4, 500, 700}});
  const Tensor h = embed_targets(s, v, in);
  for (std::size_t col = 0; col < 64; ++col) CHECK(h.at(0, col) == h.at(1, col));
  CHECK(ModelConfig::from_map(c.to_map()).layout_inputs == false);
  CHECK(ModelConfig::from_map(ModelConfig{}.to_map()).layout_inputs);
  CHECK_THROWS(ModelConfig::from_map({{"layout_inputs", "maybe"}}));
  CHECK_FALSE(ModelState::from_checkpoint(s.to_checkpoint()).config.layout_inputs);
}
