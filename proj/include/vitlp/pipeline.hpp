#pragma once

#include <functional>
#include <string>
#include <vector>

#include "vitlp/infer.hpp"
#include "vitlp/objectives.hpp"
#include "vitlp/synthdoc.hpp"

namespace vitlp {

struct TrainOptions {
  long steps = 2000;
  std::size_t batch = 8;
  std::uint64_t seed = 1;
  double clip = 1.0;  // global gradient norm bound, ≤ 0 disables
  bool layout_loss = true;
  bool truncate = false;  // keep only the first segment of each page
  SegmentConfig seg;
  AdamWConfig optim;
};

struct StepLog {
  long step = 0;
  double lr = 0.0;
  double global_text = 0.0;
  double local_layout = 0.0;
  double total = 0.0;
};

// `step= lr= global_text= local_layout= total=` at full double precision.
std::string format_step(const StepLog& log);

using StepCallback = std::function<void(const StepLog&)>;

// Pre-training examples of every page. With `truncate`, each page keeps its
// first segment only, closed by [EOS].
std::vector<TrainExample> pretrain_examples(const Vocabulary& vocab, const std::vector<RenderedPage>& pages,
                                            const SegmentConfig& seg, bool truncate = false);
std::vector<TrainExample> finetune_examples(FinetuneTask task, const Vocabulary& vocab,
                                            const std::vector<RenderedPage>& pages, const SegmentConfig& seg);

// Minibatches drawn as seeded shuffled passes over the examples.
std::vector<StepLog> pretrain(ModelState& s, const Vocabulary& vocab, const std::vector<RenderedPage>& pages,
                              const TrainOptions& opts, const StepCallback& on_step = {});
std::vector<StepLog> finetune(ModelState& s, const Vocabulary& vocab, const std::vector<RenderedPage>& pages,
                              FinetuneTask task, const TrainOptions& opts, const StepCallback& on_step = {});

struct OcrEval {
  PRF localization;  // IoU ≥ 0.5, pooled over pages
  PRF recognition;
  PRF grounded;  // word and box both right
  std::size_t pages = 0;
  std::size_t exact_pages = 0;
  std::size_t multi_segment_pages = 0;  // generation used K ≥ 2
  std::size_t diagnostics = 0;
};
OcrEval evaluate_ocr(const ModelState& s, const Vocabulary& vocab, const std::vector<RenderedPage>& pages,
                     const GenerationConfig& cfg);

struct AccuracyEval {
  std::size_t correct = 0;
  std::size_t total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};
AccuracyEval evaluate_cls(const ModelState& s, const Vocabulary& vocab, const std::vector<RenderedPage>& pages);
AccuracyEval evaluate_label(const ModelState& s, const Vocabulary& vocab, const std::vector<RenderedPage>& pages,
                            const SegmentConfig& seg);

struct VqaEval {
  double anls = 0.0;  // mean over questions
  std::size_t questions = 0;
  std::size_t exact = 0;
  std::size_t span_questions = 0;
  std::size_t grounded = 0;  // span answers whose boxes all reach IoU 0.5 with gold
};
VqaEval evaluate_vqa(const ModelState& s, const Vocabulary& vocab, const std::vector<RenderedPage>& pages,
                     const GenerationConfig& cfg);

std::string format_report(const OcrEval& e);
std::string format_report(const AccuracyEval& e, const std::string& name);
std::string format_report(const VqaEval& e);

}  // namespace vitlp
