#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vitlp/checkpoint.hpp"
#include "vitlp/codec.hpp"
#include "vitlp/geometry.hpp"
#include "vitlp/image.hpp"
#include "vitlp/tensor.hpp"

namespace vitlp {

class MalformedInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ModelConfig {
  int d = 64;
  int heads = 4;
  int enc_layers = 4;
  int dec_layers = 2;
  int patch = 16;
  int image_h = 64;
  int image_w = 64;
  int max_targets = 64;  // M
  int vocab_size = 55;
  int layout_bins = kLayoutBins;
  int ffn_mult = 4;
  int num_tags = 4;
  // false: [LOC] inputs carry no coordinates (text-only ablation).
  bool layout_inputs = true;

  void validate() const;
  int num_patches() const { return (image_h / patch) * (image_w / patch); }
  // Mode token + M targets + one overflow position for [EOS] lookahead.
  int max_positions() const { return max_targets + 2; }

  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);
};

struct Linear {
  Tensor weight;  // [out × in]
  Tensor bias;    // [out]
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

struct AttentionParams {
  Linear q, k, v, o;
};

struct EncoderBlock {
  LayerNormParams ln1, ln2;
  AttentionParams attn;
  Linear fc1, fc2;
};

struct DecoderBlock {
  LayerNormParams ln1, ln2, ln3;
  AttentionParams self_attn, cross_attn;
  Linear fc1, fc2;
};

// Every learnable parameter. Copying the struct copies tensor handles; use
// clone() for independent storage.
struct ModelState {
  ModelConfig config;

  Linear patch_proj;
  Tensor enc_pos;  // [patches × d]
  std::vector<EncoderBlock> encoder;
  LayerNormParams enc_norm;

  Tensor word_emb;  // E_w [|V̂| × d]
  Tensor x_emb;     // E_x [1001 × d/4]
  Tensor y_emb;     // E_y [1001 × d/4]
  Tensor dec_pos;   // [max_positions × d]
  std::vector<DecoderBlock> decoder;
  LayerNormParams dec_norm;

  Linear lm_head;  // [|V̂| × d]

  // Sequential layout head.
  Tensor layout_hidden;  // W_h [d × d]
  Tensor layout_x_emb;   // E'_x [1001 × d]
  Tensor layout_y_emb;   // E'_y [1001 × d]
  Tensor layout_proj;    // W_L [1001 × d]

  Linear tag_head;  // [tags × d], token-labeling fine-tune head

  static ModelState init(const ModelConfig& config, std::uint64_t seed);

  std::vector<std::pair<std::string, Tensor>> parameters() const;
  std::size_t parameter_count() const;
  ModelState clone() const;
  void zero_grad();

  Checkpoint to_checkpoint() const;
  static ModelState from_checkpoint(const Checkpoint& ck);
};

// Decoder-side input: one token per position, with coordinates at [LOC].
struct DecoderInput {
  std::vector<int> tokens;
  std::vector<std::optional<BBox>> boxes;

  void push(const SeqEntry& e) {
    tokens.push_back(e.token);
    boxes.push_back(e.box);
  }
  std::size_t size() const { return tokens.size(); }
};

// Non-overlapping patches → linear projection + positional embedding, before
// any transformer block. [patches × d]
Tensor patch_embed(const ModelState& s, const Image& img);
// H^V [patches × d]
Tensor encode_image(const ModelState& s, const Image& img);
// H^TL [len × d]: E_w for ordinary tokens, [E_x, E_y, E_x, E_y] for [LOC].
Tensor embed_targets(const ModelState& s, const Vocabulary& vocab, const DecoderInput& input);
// H^VTL [len × d], causal over H^TL, cross-attending to all of H^V.
Tensor decode(const ModelState& s, const Tensor& hv, const Tensor& htl);
// [len × |V̂|]
Tensor lm_logits(const ModelState& s, const Tensor& hvtl);
// [len × tags]
Tensor tag_logits(const ModelState& s, const Tensor& hvtl);

// Teacher-forced layout head over n [LOC] states h0 [n × d]. Returns four
// logit matrices [n × 1001], one per coordinate x1, y1, x2, y2.
std::array<Tensor, 4> layout_logits(const ModelState& s, const Tensor& h0, const std::vector<BBox>& teacher);

struct LayoutPrediction {
  std::array<std::vector<double>, 4> probs;  // each over 1001 bins
  std::array<int, 4> coords{};              // teacher values, or greedy picks
};

// Single-state layout head. With a teacher tuple, steps 2-4 condition on it;
// otherwise each step feeds its own argmax (lowest bin on ties) forward.
LayoutPrediction layout_head(const ModelState& s, const Tensor& h0, const std::optional<std::array<int, 4>>& teacher);

// Index of the largest value among `allowed` (all if empty); ties go to the
// lowest index.
int argmax(std::span<const double> values, std::span<const int> allowed = {});

}  // namespace vitlp
