#include "vitlp/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "vitlp/ops.hpp"

namespace vitlp {

namespace {

constexpr double kMasked = -1e30;

template <typename State, typename F>
void visit(State& s, F&& f) {
  auto lin = [&](const std::string& n, auto& l) {
    f(n + ".weight", l.weight);
    f(n + ".bias", l.bias);
  };
  auto norm = [&](const std::string& n, auto& l) {
    f(n + ".gain", l.gain);
    f(n + ".bias", l.bias);
  };
  auto attn = [&](const std::string& n, auto& a) {
    lin(n + ".q", a.q);
    lin(n + ".k", a.k);
    lin(n + ".v", a.v);
    lin(n + ".o", a.o);
  };
  lin("enc.patch_proj", s.patch_proj);
  f("enc.pos", s.enc_pos);
  for (std::size_t i = 0; i < s.encoder.size(); ++i) {
    const std::string p = "enc.block" + std::to_string(i);
    auto& b = s.encoder[i];
    norm(p + ".ln1", b.ln1);
    attn(p + ".attn", b.attn);
    norm(p + ".ln2", b.ln2);
    lin(p + ".fc1", b.fc1);
    lin(p + ".fc2", b.fc2);
  }
  norm("enc.norm", s.enc_norm);
  f("dec.word_emb", s.word_emb);
  f("dec.x_emb", s.x_emb);
  f("dec.y_emb", s.y_emb);
  f("dec.pos", s.dec_pos);
  for (std::size_t i = 0; i < s.decoder.size(); ++i) {
    const std::string p = "dec.block" + std::to_string(i);
    auto& b = s.decoder[i];
    norm(p + ".ln1", b.ln1);
    attn(p + ".self_attn", b.self_attn);
    norm(p + ".ln2", b.ln2);
    attn(p + ".cross_attn", b.cross_attn);
    norm(p + ".ln3", b.ln3);
    lin(p + ".fc1", b.fc1);
    lin(p + ".fc2", b.fc2);
  }
  norm("dec.norm", s.dec_norm);
  lin("lm_head", s.lm_head);
  f("layout.hidden", s.layout_hidden);
  f("layout.x_emb", s.layout_x_emb);
  f("layout.y_emb", s.layout_y_emb);
  f("layout.proj", s.layout_proj);
  lin("tag_head", s.tag_head);
}

class Init {
 public:
  explicit Init(std::uint64_t seed) : rng_(seed) {}

  Tensor normal(Shape shape) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist_(rng_);
    return Tensor::from(std::move(shape), std::move(v), true);
  }
  static Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }
  static Tensor ones(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

  Linear linear(std::size_t out, std::size_t in) { return {normal({out, in}), zeros({out})}; }
  static LayerNormParams norm(std::size_t d) { return {ones({d}), zeros({d})}; }
  AttentionParams attention(std::size_t d) { return {linear(d, d), linear(d, d), linear(d, d), linear(d, d)}; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> dist_{0.0, 0.02};
};

Tensor linear(const Tensor& x, const Linear& l) { return ops::add_bias(ops::matmul_nt(x, l.weight), l.bias); }

Tensor attention(const AttentionParams& p, const Tensor& xq, const Tensor& xkv, int heads, bool causal) {
  const Tensor q = linear(xq, p.q);
  const Tensor k = linear(xkv, p.k);
  const Tensor v = linear(xkv, p.v);
  const std::size_t d = q.cols(), dh = d / static_cast<std::size_t>(heads);
  const std::size_t nq = q.rows(), nk = k.rows();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> mask;
  if (causal) {
    mask.assign(nq * nk, 0.0);
    for (std::size_t i = 0; i < nq; ++i)
      for (std::size_t j = i + 1; j < nk; ++j) mask[i * nk + j] = kMasked;
  }
  std::vector<Tensor> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (std::size_t h = 0; h < static_cast<std::size_t>(heads); ++h) {
    const Tensor qh = heads == 1 ? q : ops::slice_cols(q, h * dh, (h + 1) * dh);
    const Tensor kh = heads == 1 ? k : ops::slice_cols(k, h * dh, (h + 1) * dh);
    const Tensor vh = heads == 1 ? v : ops::slice_cols(v, h * dh, (h + 1) * dh);
    Tensor scores = ops::scale(ops::matmul_nt(qh, kh), scale);
    if (causal) scores = ops::add_constant(scores, mask);
    outs.push_back(ops::matmul(ops::softmax(scores), vh));
  }
  const Tensor merged = heads == 1 ? outs[0] : ops::concat_cols(outs);
  return linear(merged, p.o);
}

Tensor feed_forward(const Tensor& x, const Linear& fc1, const Linear& fc2) {
  return linear(ops::gelu(linear(x, fc1)), fc2);
}

Tensor layer_norm(const Tensor& x, const LayerNormParams& p) { return ops::layer_norm(x, p.gain, p.bias); }

}  // namespace

void ModelConfig::validate() const {
  if (d <= 0 || d % 4 != 0) throw std::invalid_argument("hidden size d must be a positive multiple of 4");
  if (heads <= 0 || d % heads != 0) throw std::invalid_argument("d must be divisible by the head count");
  if (patch <= 0 || image_h % patch != 0 || image_w % patch != 0) {
    throw std::invalid_argument("image dimensions must be divisible by the patch size");
  }
  if (enc_layers < 0 || dec_layers < 1) throw std::invalid_argument("invalid layer counts");
  if (layout_bins != kLayoutBins) throw std::invalid_argument("layout vocabulary must have 1001 bins");
  if (vocab_size <= 0 || num_tags <= 0 || ffn_mult <= 0 || max_targets < 4) {
    throw std::invalid_argument("invalid model configuration");
  }
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {{"d", std::to_string(d)},
          {"heads", std::to_string(heads)},
          {"enc_layers", std::to_string(enc_layers)},
          {"dec_layers", std::to_string(dec_layers)},
          {"patch", std::to_string(patch)},
          {"image_h", std::to_string(image_h)},
          {"image_w", std::to_string(image_w)},
          {"max_targets", std::to_string(max_targets)},
          {"vocab_size", std::to_string(vocab_size)},
          {"layout_bins", std::to_string(layout_bins)},
          {"ffn_mult", std::to_string(ffn_mult)},
          {"num_tags", std::to_string(num_tags)},
          {"layout_inputs", layout_inputs ? "true" : "false"}};
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  auto get = [&](const char* key, int& field) {
    if (auto it = kv.find(key); it != kv.end()) field = std::stoi(it->second);
  };
  get("d", c.d);
  get("heads", c.heads);
  get("enc_layers", c.enc_layers);
  get("dec_layers", c.dec_layers);
  get("patch", c.patch);
  get("image_h", c.image_h);
  get("image_w", c.image_w);
  get("max_targets", c.max_targets);
  get("vocab_size", c.vocab_size);
  get("layout_bins", c.layout_bins);
  get("ffn_mult", c.ffn_mult);
  get("num_tags", c.num_tags);
  if (auto it = kv.find("layout_inputs"); it != kv.end()) {
    if (it->second != "true" && it->second != "false") throw std::invalid_argument("layout_inputs must be true or false");
    c.layout_inputs = it->second == "true";
  }
  c.validate();
  return c;
}

ModelState ModelState::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Init in(seed);
  const auto d = static_cast<std::size_t>(config.d);
  const auto ff = d * static_cast<std::size_t>(config.ffn_mult);
  const auto bins = static_cast<std::size_t>(config.layout_bins);
  const auto vocab = static_cast<std::size_t>(config.vocab_size);
  const auto patch_dim = static_cast<std::size_t>(config.patch * config.patch);

  ModelState s;
  s.config = config;
  s.patch_proj = in.linear(d, patch_dim);
  s.enc_pos = in.normal({static_cast<std::size_t>(config.num_patches()), d});
  for (int i = 0; i < config.enc_layers; ++i) {
    EncoderBlock b;
    b.ln1 = Init::norm(d);
    b.attn = in.attention(d);
    b.ln2 = Init::norm(d);
    b.fc1 = in.linear(ff, d);
    b.fc2 = in.linear(d, ff);
    s.encoder.push_back(std::move(b));
  }
  s.enc_norm = Init::norm(d);
  s.word_emb = in.normal({vocab, d});
  s.x_emb = in.normal({bins, d / 4});
  s.y_emb = in.normal({bins, d / 4});
  s.dec_pos = in.normal({static_cast<std::size_t>(config.max_positions()), d});
  for (int i = 0; i < config.dec_layers; ++i) {
    DecoderBlock b;
    b.ln1 = Init::norm(d);
    b.self_attn = in.attention(d);
    b.ln2 = Init::norm(d);
    b.cross_attn = in.attention(d);
    b.ln3 = Init::norm(d);
    b.fc1 = in.linear(ff, d);
    b.fc2 = in.linear(d, ff);
    s.decoder.push_back(std::move(b));
  }
  s.dec_norm = Init::norm(d);
  s.lm_head = in.linear(vocab, d);
  s.layout_hidden = in.normal({d, d});
  s.layout_x_emb = in.normal({bins, d});
  s.layout_y_emb = in.normal({bins, d});
  s.layout_proj = in.normal({bins, d});
  s.tag_head = in.linear(static_cast<std::size_t>(config.num_tags), d);
  return s;
}

std::vector<std::pair<std::string, Tensor>> ModelState::parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  visit(*this, [&](const std::string& name, const Tensor& t) { out.emplace_back(name, t); });
  return out;
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t.size();
  return n;
}

ModelState ModelState::clone() const {
  ModelState c = *this;
  visit(c, [](const std::string&, Tensor& t) { t = t.clone(); });
  return c;
}

void ModelState::zero_grad() {
  visit(*this, [](const std::string&, Tensor& t) { t.zero_grad(); });
}

Checkpoint ModelState::to_checkpoint() const {
  Checkpoint ck;
  for (const auto& [k, v] : config.to_map()) ck.meta["model." + k] = v;
  for (const auto& [name, t] : parameters()) ck.tensors.emplace_back(name, t.detach());
  return ck;
}

ModelState ModelState::from_checkpoint(const Checkpoint& ck) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : ck.meta) {
    if (k.rfind("model.", 0) == 0) kv[k.substr(6)] = v;
  }
  ModelState s = init(ModelConfig::from_map(kv), 0);
  visit(s, [&](const std::string& name, Tensor& t) {
    const Tensor* src = ck.find(name);
    if (!src) throw FormatError("checkpoint is missing parameter " + name);
    if (src->shape() != t.shape()) {
      throw FormatError("parameter " + name + " has shape " + shape_str(src->shape()) + ", expected " +
                        shape_str(t.shape()));
    }
    std::copy(src->data().begin(), src->data().end(), t.mutable_data().begin());
  });
  return s;
}

Tensor patch_embed(const ModelState& s, const Image& img) {
  const auto& c = s.config;
  if (img.height != c.image_h || img.width != c.image_w) {
    throw std::invalid_argument("image is " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                                ", model expects " + std::to_string(c.image_h) + "x" + std::to_string(c.image_w));
  }
  const int ph = c.image_h / c.patch, pw = c.image_w / c.patch;
  const auto patch_dim = static_cast<std::size_t>(c.patch * c.patch);
  std::vector<double> flat(static_cast<std::size_t>(ph * pw) * patch_dim);
  std::size_t k = 0;
  for (int py = 0; py < ph; ++py)
    for (int px = 0; px < pw; ++px)
      for (int y = 0; y < c.patch; ++y)
        for (int x = 0; x < c.patch; ++x) flat[k++] = 1.0 - img.at(py * c.patch + y, px * c.patch + x);
  const Tensor patches = Tensor::from({static_cast<std::size_t>(ph * pw), patch_dim}, std::move(flat));
  return ops::add(linear(patches, s.patch_proj), s.enc_pos);
}

Tensor encode_image(const ModelState& s, const Image& img) {
  Tensor x = patch_embed(s, img);
  for (const auto& b : s.encoder) {
    const Tensor h = layer_norm(x, b.ln1);
    x = ops::add(x, attention(b.attn, h, h, s.config.heads, false));
    x = ops::add(x, feed_forward(layer_norm(x, b.ln2), b.fc1, b.fc2));
  }
  return layer_norm(x, s.enc_norm);
}

Tensor embed_targets(const ModelState& s, const Vocabulary& vocab, const DecoderInput& input) {
  const std::size_t n = input.tokens.size();
  if (n == 0) throw MalformedInputError("empty decoder input");
  if (input.boxes.size() != n) throw MalformedInputError("decoder input needs one box slot per token");
  if (n > static_cast<std::size_t>(s.config.max_positions())) {
    throw MalformedInputError("decoder input of " + std::to_string(n) + " positions exceeds " +
                              std::to_string(s.config.max_positions()));
  }
  std::vector<std::size_t> word_rows, loc_rows;
  std::vector<int> word_ids, xs1, ys1, xs2, ys2;
  for (std::size_t i = 0; i < n; ++i) {
    if (input.tokens[i] == vocab.loc()) {
      if (!input.boxes[i]) throw MalformedInputError("[LOC] at position " + std::to_string(i) + " has no coordinates");
      const BBox b = s.config.layout_inputs ? *input.boxes[i] : BBox{0, 0, 0, 0};
      loc_rows.push_back(i);
      xs1.push_back(b.x1);
      ys1.push_back(b.y1);
      xs2.push_back(b.x2);
      ys2.push_back(b.y2);
    } else {
      word_rows.push_back(i);
      word_ids.push_back(input.tokens[i]);
    }
  }
  // Assemble rows in sequence order from the two embedding sources.
  std::vector<Tensor> parts;
  std::vector<std::size_t> order(n);
  std::size_t stacked = 0;
  if (!word_rows.empty()) {
    parts.push_back(ops::embedding(s.word_emb, word_ids));
    for (std::size_t j = 0; j < word_rows.size(); ++j) order[word_rows[j]] = stacked++;
  }
  if (!loc_rows.empty()) {
    parts.push_back(ops::concat_cols({ops::embedding(s.x_emb, xs1), ops::embedding(s.y_emb, ys1),
                                      ops::embedding(s.x_emb, xs2), ops::embedding(s.y_emb, ys2)}));
    for (std::size_t j = 0; j < loc_rows.size(); ++j) order[loc_rows[j]] = stacked++;
  }
  const Tensor stackedt = parts.size() == 1 ? parts[0] : ops::concat_rows(parts);
  return ops::gather_rows(stackedt, order);
}

Tensor decode(const ModelState& s, const Tensor& hv, const Tensor& htl) {
  const std::size_t n = htl.rows();
  std::vector<int> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = static_cast<int>(i);
  Tensor x = ops::add(htl, ops::embedding(s.dec_pos, pos));
  for (const auto& b : s.decoder) {
    const Tensor h1 = layer_norm(x, b.ln1);
    x = ops::add(x, attention(b.self_attn, h1, h1, s.config.heads, true));
    x = ops::add(x, attention(b.cross_attn, layer_norm(x, b.ln2), hv, s.config.heads, false));
    x = ops::add(x, feed_forward(layer_norm(x, b.ln3), b.fc1, b.fc2));
  }
  return layer_norm(x, s.dec_norm);
}

Tensor lm_logits(const ModelState& s, const Tensor& hvtl) { return linear(hvtl, s.lm_head); }

Tensor tag_logits(const ModelState& s, const Tensor& hvtl) { return linear(hvtl, s.tag_head); }

std::array<Tensor, 4> layout_logits(const ModelState& s, const Tensor& h0, const std::vector<BBox>& teacher) {
  if (teacher.size() != h0.rows()) throw DimensionError("layout head: one teacher box per state required");
  std::vector<int> l1, l2, l3;
  for (const auto& b : teacher) {
    if (!b.valid()) throw RangeError("layout head teacher box out of range: " + to_string(b));
    l1.push_back(b.x1);
    l2.push_back(b.y1);
    l3.push_back(b.x2);
  }
  const Tensor& wh = s.layout_hidden;
  const Tensor h1 = ops::gelu(ops::matmul_nt(h0, wh));
  const Tensor h2 = ops::gelu(ops::add(ops::matmul_nt(h1, wh), ops::embedding(s.layout_x_emb, l1)));
  const Tensor h3 = ops::gelu(ops::add(ops::matmul_nt(h2, wh), ops::embedding(s.layout_y_emb, l2)));
  const Tensor h4 = ops::gelu(ops::add(ops::matmul_nt(h3, wh), ops::embedding(s.layout_x_emb, l3)));
  return {ops::matmul_nt(h1, s.layout_proj), ops::matmul_nt(h2, s.layout_proj), ops::matmul_nt(h3, s.layout_proj),
          ops::matmul_nt(h4, s.layout_proj)};
}

LayoutPrediction layout_head(const ModelState& s, const Tensor& h0, const std::optional<std::array<int, 4>>& teacher) {
  if (teacher) {
    for (int v : *teacher)
      if (v < 0 || v > kMaxBin) throw RangeError("layout head teacher coordinate out of range: " + std::to_string(v));
  }
  const Tensor state = h0.rank() == 1 ? ops::reshape(h0, {1, h0.size()}) : h0;
  if (state.rows() != 1) throw DimensionError("layout_head expects a single hidden state");
  const Tensor* tables[3] = {&s.layout_x_emb, &s.layout_y_emb, &s.layout_x_emb};
  LayoutPrediction out;
  Tensor h = ops::gelu(ops::matmul_nt(state, s.layout_hidden));
  for (int j = 0; j < 4; ++j) {
    if (j > 0) {
      const int prev = out.coords[static_cast<std::size_t>(j - 1)];
      const int id[1] = {prev};
      h = ops::gelu(ops::add(ops::matmul_nt(h, s.layout_hidden), ops::embedding(*tables[j - 1], id)));
    }
    const Tensor probs = ops::softmax(ops::matmul_nt(h, s.layout_proj));
    out.probs[static_cast<std::size_t>(j)].assign(probs.data().begin(), probs.data().end());
    out.coords[static_cast<std::size_t>(j)] = teacher ? (*teacher)[static_cast<std::size_t>(j)] : argmax(probs.data());
  }
  return out;
}

int argmax(std::span<const double> values, std::span<const int> allowed) {
  int best = -1;
  double best_v = -std::numeric_limits<double>::infinity();
  auto consider = [&](int i) {
    const double v = values[static_cast<std::size_t>(i)];
    if (best < 0 || v > best_v || (v == best_v && i < best)) {
      best = i;
      best_v = v;
    }
  };
  if (allowed.empty()) {
    for (int i = 0; i < static_cast<int>(values.size()); ++i) consider(i);
  } else {
    for (int i : allowed) consider(i);
  }
  return best;
}

}  // namespace vitlp
