#pragma once

#include <string>
#include <vector>

#include "vitlp/codec.hpp"
#include "vitlp/model.hpp"
#include "vitlp/objectives.hpp"
#include "vitlp/segmenter.hpp"

namespace vitlp {

struct GenerationConfig {
  int max_segments = 16;
  SegmentConfig seg;
  int max_answer_len = 32;  // answer tokens before giving up

  void validate() const;
};

struct OcrResult {
  std::vector<WordBox> words;
  std::vector<std::string> texts;  // recognized words, boxed or not
  std::size_t segments_used = 0;
  std::vector<std::string> diagnostics;
  GlobalSequence sequence;        // reassembled, without [EOS]
  std::vector<Segment> segments;  // as generated
  bool finished = false;          // [EOS] reached
};

// Greedy multi-segment generation. Each decoding step re-runs the decoder
// over the segment so far; there is no key/value cache.
OcrResult generate_ocr(const ModelState& s, const Vocabulary& vocab, const Image& image, const GenerationConfig& cfg);

// Class index from the class-token logits after [DOC_CLS].
int classify(const ModelState& s, const Vocabulary& vocab, const Image& image);

struct Answer {
  enum class Kind { Span, Yes, No } kind = Kind::Span;
  std::vector<WordBox> words;
  std::vector<std::string> diagnostics;

  std::string text() const;  // words joined by spaces, or "yes"/"no"
};

Answer answer_question(const ModelState& s, const Vocabulary& vocab, const Image& image, const std::string& question,
                       const GenerationConfig& cfg = {});

// Tags for gold words read through the decoder segment by segment; one per word.
std::vector<int> label_tokens(const ModelState& s, const Vocabulary& vocab, const Image& image,
                              const std::vector<WordBox>& words, const SegmentConfig& seg);

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t matches = 0;
  std::size_t pred = 0;
  std::size_t gold = 0;
};

// Greedy one-to-one matching in descending IoU order.
PRF localization_prf(const std::vector<BBox>& pred, const std::vector<BBox>& gold, double iou_thresh = 0.5);
// Multiset intersection of exact strings.
PRF recognition_prf(const std::vector<std::string>& pred, const std::vector<std::string>& gold);

std::size_t levenshtein(std::string_view a, std::string_view b);
double anls(const std::string& pred, const std::vector<std::string>& golds, double tau = 0.5);

}  // namespace vitlp
