#include "vitlp/infer.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "vitlp/ops.hpp"

namespace vitlp {

namespace {

std::vector<int> ocr_tokens(const Vocabulary& vocab) {
  std::vector<int> out;
  for (int id = 0; id < vocab.size(); ++id)
    if (vocab.is_char(id)) out.push_back(id);
  out.push_back(vocab.loc());
  out.push_back(vocab.eos());
  return out;
}

void check_image(const ModelState& s, const Image& image) {
  if (image.height != s.config.image_h || image.width != s.config.image_w) {
    throw MalformedInputError("image is " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                              ", model expects " + std::to_string(s.config.image_h) + "x" +
                              std::to_string(s.config.image_w));
  }
}

struct Step {
  int token;
  Tensor hidden;  // [1 × d] state that produced the token
};

Step next_token(const ModelState& s, const Vocabulary& vocab, const Tensor& hv, const DecoderInput& input,
                std::span<const int> allowed) {
  const Tensor h = decode(s, hv, embed_targets(s, vocab, input));
  const std::size_t last = input.size() - 1;
  const Tensor row = ops::slice_rows(h, last, last + 1);
  const Tensor logits = lm_logits(s, row);
  return {argmax(logits.data(), allowed), row};
}

SeqEntry emit(const ModelState& s, const Step& step, const Vocabulary& vocab) {
  if (step.token != vocab.loc()) return {step.token, std::nullopt};
  // Raw bins: an inverted box is kept and reported by the lenient decode.
  const auto c = layout_head(s, step.hidden, std::nullopt).coords;
  return {step.token, BBox{c[0], c[1], c[2], c[3]}};
}

}  // namespace

void GenerationConfig::validate() const {
  if (max_segments < 1) throw ConfigError("max_segments must be ≥ 1");
  if (max_answer_len < 1) throw ConfigError("max_answer_len must be ≥ 1");
  seg.validate();
}

OcrResult generate_ocr(const ModelState& s, const Vocabulary& vocab, const Image& image, const GenerationConfig& cfg) {
  cfg.validate();
  check_image(s, image);
  if (cfg.seg.max_targets > s.config.max_targets) throw ConfigError("segment length exceeds the model's M");
  NoGradGuard no_grad;
  const auto allowed = ocr_tokens(vocab);
  const Tensor hv = encode_image(s, image);

  OcrResult out;
  for (int k = 0; k < cfg.max_segments && !out.finished; ++k) {
    const SegmentMode mode = k == 0 ? SegmentMode::Beginning : SegmentMode::Continuation;
    std::vector<SeqEntry> prefix = k == 0 ? std::vector<SeqEntry>{} : next_prefix(out.segments.back(), cfg.seg);
    const auto budget = static_cast<std::size_t>(k == 0 ? cfg.seg.max_targets : cfg.seg.continuation_targets());

    DecoderInput input;
    input.push({k == 0 ? vocab.bos() : vocab.cont(), std::nullopt});
    for (const auto& e : prefix) input.push(e);
    std::vector<SeqEntry> targets;
    for (;;) {
      const Step step = next_token(s, vocab, hv, input, allowed);
      if (targets.size() == budget) {
        // One step past the budget decides between [EOS] and a continuation.
        if (step.token == vocab.eos()) {
          targets.push_back({step.token, std::nullopt});
          out.finished = true;
        }
        break;
      }
      const SeqEntry e = emit(s, step, vocab);
      targets.push_back(e);
      if (e.token == vocab.eos()) {
        out.finished = true;
        break;
      }
      input.push(e);
    }
    out.segments.push_back(make_segment(vocab, mode, std::move(prefix), std::move(targets)));
  }
  out.segments_used = out.segments.size();
  if (!out.finished) {
    out.diagnostics.push_back("no [EOS] within " + std::to_string(cfg.max_segments) + " segments");
  }

  try {
    out.sequence = reassemble(vocab, out.segments, cfg.seg);
  } catch (const std::exception& e) {
    out.diagnostics.push_back(std::string("reassembly failed: ") + e.what());
    return out;
  }
  auto decoded = decode_sequence(vocab, out.sequence, DecodeMode::Lenient);
  out.words = std::move(decoded.words);
  out.texts = std::move(decoded.texts);
  for (auto& d : decoded.diagnostics) out.diagnostics.push_back(std::move(d));
  if (decoded.unterminated) out.diagnostics.push_back("unterminated word '" + *decoded.unterminated + "'");
  return out;
}

int classify(const ModelState& s, const Vocabulary& vocab, const Image& image) {
  check_image(s, image);
  NoGradGuard no_grad;
  DecoderInput input;
  input.push({vocab.id(Special::DocCls), std::nullopt});
  std::vector<int> classes;
  for (int k = 0; k < vocab.num_classes(); ++k) classes.push_back(vocab.class_token(k));
  const Step step = next_token(s, vocab, encode_image(s, image), input, classes);
  return vocab.class_index(step.token);
}

std::string Answer::text() const {
  switch (kind) {
    case Kind::Yes: return "yes";
    case Kind::No: return "no";
    case Kind::Span: break;
  }
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w.word;
  }
  return out;
}

Answer answer_question(const ModelState& s, const Vocabulary& vocab, const Image& image, const std::string& question,
                       const GenerationConfig& cfg) {
  cfg.validate();
  check_image(s, image);
  DecoderInput input = vqa_prompt(vocab, question);
  if (input.size() >= static_cast<std::size_t>(s.config.max_positions())) {
    throw MalformedInputError("question does not fit the decoder");
  }
  NoGradGuard no_grad;
  const Tensor hv = encode_image(s, image);
  auto allowed = ocr_tokens(vocab);
  allowed.push_back(vocab.id(Special::AnsYes));
  allowed.push_back(vocab.id(Special::AnsNo));

  Answer out;
  std::vector<SeqEntry> answer;
  bool ended = false;
  for (int i = 0; i < cfg.max_answer_len; ++i) {
    if (input.size() >= static_cast<std::size_t>(s.config.max_positions())) break;
    const Step step = next_token(s, vocab, hv, input, allowed);
    if (step.token == vocab.eos()) {
      ended = true;
      break;
    }
    if (step.token == vocab.id(Special::AnsYes) || step.token == vocab.id(Special::AnsNo)) {
      if (answer.empty()) {
        out.kind = step.token == vocab.id(Special::AnsYes) ? Answer::Kind::Yes : Answer::Kind::No;
        return out;
      }
      out.diagnostics.push_back("yes/no token inside a span answer");
      break;
    }
    const SeqEntry e = emit(s, step, vocab);
    answer.push_back(e);
    input.push(e);
  }
  if (!ended) out.diagnostics.push_back("answer not terminated by [EOS]");
  auto decoded = decode_sequence(vocab, GlobalSequence::from_entries(answer), DecodeMode::Lenient);
  out.words = std::move(decoded.words);
  for (auto& d : decoded.diagnostics) out.diagnostics.push_back(std::move(d));
  if (decoded.unterminated) out.diagnostics.push_back("unterminated answer word '" + *decoded.unterminated + "'");
  return out;
}

std::vector<int> label_tokens(const ModelState& s, const Vocabulary& vocab, const Image& image,
                              const std::vector<WordBox>& words, const SegmentConfig& seg) {
  check_image(s, image);
  if (words.empty()) return {};
  NoGradGuard no_grad;
  const Tensor hv = encode_image(s, image);
  std::vector<int> tags;
  for (const auto& segment : split(vocab, encode_document(vocab, words), seg)) {
    const DecoderInput input = label_input(vocab, segment);
    const Tensor logits = tag_logits(s, decode(s, hv, embed_targets(s, vocab, input)));
    const auto cols = logits.cols();
    for (std::size_t t = 1 + segment.prefix.size(); t < input.size(); ++t) {
      if (input.tokens[t] != vocab.loc()) continue;
      tags.push_back(argmax(logits.data().subspan(t * cols, cols)));
    }
  }
  return tags;
}

namespace {

PRF finish(std::size_t matches, std::size_t pred, std::size_t gold) {
  PRF r;
  r.matches = matches;
  r.pred = pred;
  r.gold = gold;
  r.precision = pred == 0 ? 0.0 : static_cast<double>(matches) / static_cast<double>(pred);
  r.recall = gold == 0 ? 0.0 : static_cast<double>(matches) / static_cast<double>(gold);
  const double sum = r.precision + r.recall;
  r.f1 = sum == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / sum;
  return r;
}

}  // namespace

PRF localization_prf(const std::vector<BBox>& pred, const std::vector<BBox>& gold, double iou_thresh) {
  struct Pair {
    double iou;
    std::size_t p, g;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < pred.size(); ++p)
    for (std::size_t g = 0; g < gold.size(); ++g) {
      const double v = iou(pred[p], gold[g]);
      if (v >= iou_thresh && v > 0.0) pairs.push_back({v, p, g});
    }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.iou > b.iou; });
  std::vector<bool> used_p(pred.size()), used_g(gold.size());
  std::size_t matches = 0;
  for (const auto& pr : pairs) {
    if (used_p[pr.p] || used_g[pr.g]) continue;
    used_p[pr.p] = used_g[pr.g] = true;
    ++matches;
  }
  return finish(matches, pred.size(), gold.size());
}

PRF recognition_prf(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  std::map<std::string, std::size_t> counts;
  for (const auto& g : gold) ++counts[g];
  std::size_t matches = 0;
  for (const auto& p : pred) {
    auto it = counts.find(p);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++matches;
    }
  }
  return finish(matches, pred.size(), gold.size());
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

double anls(const std::string& pred, const std::vector<std::string>& golds, double tau) {
  if (golds.empty()) throw std::invalid_argument("anls needs at least one gold answer");
  double best = 0.0;
  for (const auto& g : golds) {
    const std::size_t len = std::max(pred.size(), g.size());
    const double nl = len == 0 ? 0.0 : static_cast<double>(levenshtein(pred, g)) / static_cast<double>(len);
    best = std::max(best, 1.0 - nl);
  }
  return best >= tau ? best : 0.0;
}

}  // namespace vitlp
