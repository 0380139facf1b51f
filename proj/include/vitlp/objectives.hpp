#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vitlp/model.hpp"
#include "vitlp/segmenter.hpp"

namespace vitlp {

// One decoder pass worth of supervision. Per input position t:
//   text_targets[t]   next token predicted from position t, or -1
//   layout_targets[t] box of that next token when it is a supervised [LOC]
//   tag_targets[t]    word tag read from position t, or -1
// class_target ≥ 0 asks for a class prediction at position 0.
struct TrainExample {
  const Image* image = nullptr;
  DecoderInput input;
  std::vector<int> text_targets;
  std::vector<std::optional<BBox>> layout_targets;
  std::vector<int> tag_targets;
  int class_target = -1;
};

// Pre-training example: [mode, prefix..., targets[:-1]] predicting each
// masked-in next entry. A non-final segment may pass the first target of its
// successor; the last target is then fed too and must predict it, which is
// the step generation uses to choose between [EOS] and a continuation.
TrainExample make_segment_example(const Vocabulary& vocab, const Image& image, const Segment& seg,
                                  const std::optional<SeqEntry>& lookahead = std::nullopt);
// All examples of a split sequence, lookahead included.
std::vector<TrainExample> make_segment_examples(const Vocabulary& vocab, const Image& image,
                                                const std::vector<Segment>& segments);

// Decoder input for reading a segment in full (token labeling).
DecoderInput label_input(const Vocabulary& vocab, const Segment& seg);
TrainExample make_label_example(const Vocabulary& vocab, const Image& image, const Segment& seg,
                                const std::vector<int>& word_tags, std::size_t first_word);
TrainExample make_class_example(const Vocabulary& vocab, const Image& image, int class_id);

struct QaTarget {
  std::string question;
  enum class Kind { Span, Yes, No } kind = Kind::Span;
  std::vector<WordBox> answer;
};
DecoderInput vqa_prompt(const Vocabulary& vocab, const std::string& question);
TrainExample make_vqa_example(const Vocabulary& vocab, const Image& image, const QaTarget& qa);

// Mean cross-entropy over rows whose target ≥ 0.
Tensor global_text_loss(const Tensor& logits, const std::vector<int>& targets);
// −(1/(4|S_L|)) Σ_i Σ_j log Prob(L_ij); zero when there are no boxes.
Tensor local_layout_loss(const std::array<Tensor, 4>& logits, const std::vector<BBox>& targets);

struct LossBreakdown {
  Tensor global_text;
  Tensor local_layout;
  Tensor total;
  std::size_t text_count = 0;
  std::size_t layout_count = 0;
};

struct LossOptions {
  bool layout_loss = true;  // false: ablation, total = global_text only
};

// Joint objective over a batch, normalized by the masked-in counts of the
// whole batch.
LossBreakdown total_loss(const ModelState& s, const Vocabulary& vocab, const std::vector<TrainExample>& batch,
                         const LossOptions& opts = {});

enum class FinetuneTask { TokenLabel, DocCls, Vqa };
FinetuneTask parse_task(const std::string& name);

Tensor finetune_loss(FinetuneTask task, const ModelState& s, const Vocabulary& vocab,
                     const std::vector<TrainExample>& batch);

struct AdamWConfig {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
  long horizon = 1000;  // steps over which the rate decays to zero
};

struct OptimizerState {
  AdamWConfig config;
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  double lr_at(long step_index) const;
};

OptimizerState make_optimizer(const std::vector<Tensor>& params, const AdamWConfig& config);

// One AdamW update from the gradients stored on `params`. Weight decay is
// applied to matrices only. Throws NonFiniteError (leaving everything
// untouched) when any gradient is not finite.
void optimizer_step(std::vector<Tensor>& params, OptimizerState& opt);

double grad_norm(const std::vector<Tensor>& params);
void clip_grad_norm(std::vector<Tensor>& params, double max_norm);

std::vector<Tensor> parameter_tensors(const ModelState& s);

}  // namespace vitlp
