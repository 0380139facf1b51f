#include "vitlp/objectives.hpp"

#include <cmath>
#include <map>
#include <numbers>

#include "vitlp/grad_check.hpp"
#include "vitlp/ops.hpp"

namespace vitlp {

namespace {

std::vector<SeqEntry> full_sequence(const Segment& seg) {
  std::vector<SeqEntry> seq;
  seq.reserve(1 + seg.prefix.size() + seg.targets.size());
  seq.push_back({seg.mode_token, std::nullopt});
  seq.insert(seq.end(), seg.prefix.begin(), seg.prefix.end());
  seq.insert(seq.end(), seg.targets.begin(), seg.targets.end());
  return seq;
}

void resize_targets(TrainExample& ex) {
  const std::size_t n = ex.input.size();
  ex.text_targets.assign(n, -1);
  ex.layout_targets.assign(n, std::nullopt);
  ex.tag_targets.assign(n, -1);
}

Tensor zero_scalar() { return Tensor::scalar(0.0); }

Tensor accumulate(const std::vector<Tensor>& terms) {
  if (terms.empty()) return zero_scalar();
  Tensor acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = ops::add(acc, terms[i]);
  return acc;
}

// Per-example sums before batch normalization.
struct ExampleTerms {
  Tensor text_sum, layout_sum, tag_sum, class_loss;
  std::size_t text_count = 0, layout_count = 0, tag_count = 0;
};

ExampleTerms forward_example(const ModelState& s, const Vocabulary& vocab, const TrainExample& ex, const Tensor& hv,
                             bool need_text, bool need_layout, bool need_tags) {
  ExampleTerms out;
  const Tensor h = decode(s, hv, embed_targets(s, vocab, ex.input));
  if (need_text || ex.class_target >= 0) {
    const Tensor logits = lm_logits(s, h);
    if (need_text) {
      for (int t : ex.text_targets) out.text_count += t >= 0 ? 1 : 0;
      if (out.text_count > 0) out.text_sum = ops::cross_entropy_sum(logits, ex.text_targets);
    }
    if (ex.class_target >= 0) {
      std::vector<std::size_t> cols;
      for (int k = 0; k < vocab.num_classes(); ++k) cols.push_back(static_cast<std::size_t>(vocab.class_token(k)));
      const Tensor row = ops::select_cols(ops::slice_rows(logits, 0, 1), cols);
      out.class_loss = ops::cross_entropy(row, ex.class_target);
    }
  }
  if (need_layout) {
    std::vector<std::size_t> rows;
    std::vector<BBox> boxes;
    for (std::size_t t = 0; t < ex.layout_targets.size(); ++t) {
      if (ex.layout_targets[t]) {
        rows.push_back(t);
        boxes.push_back(*ex.layout_targets[t]);
      }
    }
    out.layout_count = rows.size();
    if (!rows.empty()) {
      const auto logits = layout_logits(s, ops::gather_rows(h, rows), boxes);
      std::array<std::vector<int>, 4> targets;
      for (const auto& b : boxes) {
        const auto c = b.coords();
        for (std::size_t j = 0; j < 4; ++j) targets[j].push_back(c[j]);
      }
      std::vector<Tensor> parts;
      for (std::size_t j = 0; j < 4; ++j) parts.push_back(ops::cross_entropy_sum(logits[j], targets[j]));
      out.layout_sum = accumulate(parts);
    }
  }
  if (need_tags) {
    std::vector<std::size_t> rows;
    std::vector<int> tags;
    for (std::size_t t = 0; t < ex.tag_targets.size(); ++t) {
      if (ex.tag_targets[t] >= 0) {
        rows.push_back(t);
        tags.push_back(ex.tag_targets[t]);
      }
    }
    out.tag_count = rows.size();
    if (!rows.empty()) out.tag_sum = ops::cross_entropy_sum(tag_logits(s, ops::gather_rows(h, rows)), tags);
  }
  return out;
}

std::vector<ExampleTerms> forward_batch(const ModelState& s, const Vocabulary& vocab,
                                        const std::vector<TrainExample>& batch, bool text, bool layout, bool tags) {
  std::map<const Image*, Tensor> encoded;
  std::vector<ExampleTerms> out;
  out.reserve(batch.size());
  for (const auto& ex : batch) {
    if (!ex.image) throw std::invalid_argument("training example has no image");
    auto it = encoded.find(ex.image);
    if (it == encoded.end()) it = encoded.emplace(ex.image, encode_image(s, *ex.image)).first;
    out.push_back(forward_example(s, vocab, ex, it->second, text, layout, tags));
  }
  return out;
}

}  // namespace

TrainExample make_segment_example(const Vocabulary& vocab, const Image& image, const Segment& seg,
                                  const std::optional<SeqEntry>& lookahead) {
  (void)vocab;
  auto seq = full_sequence(seg);
  std::vector<bool> mask = seg.loss_mask;
  if (lookahead) {
    seq.push_back(*lookahead);
    mask.push_back(true);
  }
  if (seq.size() < 2) throw std::invalid_argument("segment has no targets");
  TrainExample ex;
  ex.image = &image;
  for (std::size_t i = 0; i + 1 < seq.size(); ++i) ex.input.push(seq[i]);
  resize_targets(ex);
  for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
    if (!mask[t + 1]) continue;
    ex.text_targets[t] = seq[t + 1].token;
    if (seq[t + 1].box) ex.layout_targets[t] = seq[t + 1].box;
  }
  return ex;
}

std::vector<TrainExample> make_segment_examples(const Vocabulary& vocab, const Image& image,
                                                const std::vector<Segment>& segments) {
  std::vector<TrainExample> out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    std::optional<SeqEntry> next;
    if (i + 1 < segments.size() && !segments[i + 1].targets.empty()) next = segments[i + 1].targets.front();
    out.push_back(make_segment_example(vocab, image, segments[i], next));
  }
  return out;
}

DecoderInput label_input(const Vocabulary& vocab, const Segment& seg) {
  DecoderInput in;
  in.push({seg.mode_token, std::nullopt});
  for (const auto& e : seg.prefix) in.push(e);
  for (const auto& e : seg.targets) {
    if (e.token == vocab.eos()) continue;
    in.push(e);
  }
  return in;
}

TrainExample make_label_example(const Vocabulary& vocab, const Image& image, const Segment& seg,
                                const std::vector<int>& word_tags, std::size_t first_word) {
  TrainExample ex;
  ex.image = &image;
  ex.input = label_input(vocab, seg);
  resize_targets(ex);
  std::size_t word = first_word;
  const std::size_t target_start = 1 + seg.prefix.size();
  for (std::size_t t = target_start; t < ex.input.size(); ++t) {
    if (ex.input.tokens[t] != vocab.loc()) continue;
    if (word >= word_tags.size()) throw std::invalid_argument("segment has more words than tags");
    ex.tag_targets[t] = word_tags[word++];
  }
  return ex;
}

TrainExample make_class_example(const Vocabulary& vocab, const Image& image, int class_id) {
  if (class_id < 0 || class_id >= vocab.num_classes()) throw std::invalid_argument("class id out of range");
  TrainExample ex;
  ex.image = &image;
  ex.input.push({vocab.id(Special::DocCls), std::nullopt});
  resize_targets(ex);
  ex.class_target = class_id;
  return ex;
}

DecoderInput vqa_prompt(const Vocabulary& vocab, const std::string& question) {
  if (question.empty()) throw std::invalid_argument("empty question");
  DecoderInput in;
  in.push({vocab.id(Special::Vqa), std::nullopt});
  for (int id : tokenize_word(vocab, question)) in.push({id, std::nullopt});
  in.push({vocab.id(Special::Sep), std::nullopt});
  return in;
}

TrainExample make_vqa_example(const Vocabulary& vocab, const Image& image, const QaTarget& qa) {
  TrainExample ex;
  ex.image = &image;
  ex.input = vqa_prompt(vocab, qa.question);
  std::vector<SeqEntry> answer;
  switch (qa.kind) {
    case QaTarget::Kind::Yes:
      answer.push_back({vocab.id(Special::AnsYes), std::nullopt});
      break;
    case QaTarget::Kind::No:
      answer.push_back({vocab.id(Special::AnsNo), std::nullopt});
      break;
    case QaTarget::Kind::Span:
      if (qa.answer.empty()) throw std::invalid_argument("span answer without words");
      for (const auto& e : encode_document(vocab, qa.answer).entries()) answer.push_back(e);
      break;
  }
  answer.push_back({vocab.eos(), std::nullopt});
  const std::size_t prompt = ex.input.size();
  for (std::size_t i = 0; i + 1 < answer.size(); ++i) ex.input.push(answer[i]);
  resize_targets(ex);
  for (std::size_t i = 0; i < answer.size(); ++i) {
    const std::size_t t = prompt - 1 + i;
    ex.text_targets[t] = answer[i].token;
    if (answer[i].box) ex.layout_targets[t] = answer[i].box;
  }
  return ex;
}

Tensor global_text_loss(const Tensor& logits, const std::vector<int>& targets) {
  std::size_t count = 0;
  for (int t : targets) count += t >= 0 ? 1 : 0;
  if (count == 0) throw std::invalid_argument("global_text_loss: mask selects no positions");
  return ops::scale(ops::cross_entropy_sum(logits, targets), 1.0 / static_cast<double>(count));
}

Tensor local_layout_loss(const std::array<Tensor, 4>& logits, const std::vector<BBox>& targets) {
  if (targets.empty()) return zero_scalar();
  std::vector<Tensor> parts;
  for (std::size_t j = 0; j < 4; ++j) {
    std::vector<int> tj;
    for (const auto& b : targets) tj.push_back(b.coords()[j]);
    parts.push_back(ops::cross_entropy_sum(logits[j], tj));
  }
  return ops::scale(accumulate(parts), 1.0 / (4.0 * static_cast<double>(targets.size())));
}

LossBreakdown total_loss(const ModelState& s, const Vocabulary& vocab, const std::vector<TrainExample>& batch,
                         const LossOptions& opts) {
  const auto terms = forward_batch(s, vocab, batch, true, true, false);
  LossBreakdown out;
  std::vector<Tensor> text, layout;
  for (const auto& t : terms) {
    out.text_count += t.text_count;
    out.layout_count += t.layout_count;
    if (t.text_sum.defined()) text.push_back(t.text_sum);
    if (t.layout_sum.defined()) layout.push_back(t.layout_sum);
  }
  if (out.text_count == 0) throw std::invalid_argument("total_loss: batch has no supervised text positions");
  out.global_text = ops::scale(accumulate(text), 1.0 / static_cast<double>(out.text_count));
  out.local_layout = out.layout_count == 0
                         ? zero_scalar()
                         : ops::scale(accumulate(layout), 1.0 / (4.0 * static_cast<double>(out.layout_count)));
  if (opts.layout_loss) {
    out.total = ops::add(out.global_text, out.local_layout);
  } else {
    out.total = out.global_text;
    out.local_layout = out.local_layout.detach();
  }
  return out;
}

FinetuneTask parse_task(const std::string& name) {
  if (name == "label" || name == "token_label") return FinetuneTask::TokenLabel;
  if (name == "cls" || name == "doc_cls") return FinetuneTask::DocCls;
  if (name == "vqa") return FinetuneTask::Vqa;
  throw std::invalid_argument("unknown fine-tuning task: " + name);
}

Tensor finetune_loss(FinetuneTask task, const ModelState& s, const Vocabulary& vocab,
                     const std::vector<TrainExample>& batch) {
  switch (task) {
    case FinetuneTask::Vqa:
      return total_loss(s, vocab, batch).total;
    case FinetuneTask::TokenLabel: {
      const auto terms = forward_batch(s, vocab, batch, false, false, true);
      std::vector<Tensor> sums;
      std::size_t count = 0;
      for (const auto& t : terms) {
        count += t.tag_count;
        if (t.tag_sum.defined()) sums.push_back(t.tag_sum);
      }
      if (count == 0) throw std::invalid_argument("token_label batch has no labeled words");
      return ops::scale(accumulate(sums), 1.0 / static_cast<double>(count));
    }
    case FinetuneTask::DocCls: {
      const auto terms = forward_batch(s, vocab, batch, false, false, false);
      std::vector<Tensor> losses;
      for (const auto& t : terms) {
        if (!t.class_loss.defined()) throw std::invalid_argument("doc_cls example without class target");
        losses.push_back(t.class_loss);
      }
      return ops::scale(accumulate(losses), 1.0 / static_cast<double>(losses.size()));
    }
  }
  throw std::invalid_argument("unknown fine-tuning task");
}

double OptimizerState::lr_at(long step_index) const {
  const long h = std::max(1L, config.horizon);
  const double frac = static_cast<double>(std::min(std::max(step_index, 0L), h)) / static_cast<double>(h);
  return 0.5 * config.lr * (1.0 + std::cos(std::numbers::pi * frac));
}

OptimizerState make_optimizer(const std::vector<Tensor>& params, const AdamWConfig& config) {
  OptimizerState opt;
  opt.config = config;
  for (const auto& p : params) {
    opt.m.emplace_back(p.size(), 0.0);
    opt.v.emplace_back(p.size(), 0.0);
  }
  return opt;
}

void optimizer_step(std::vector<Tensor>& params, OptimizerState& opt) {
  if (params.size() != opt.m.size()) throw std::invalid_argument("optimizer state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (opt.m[i].size() != params[i].size()) throw std::invalid_argument("optimizer moment shape mismatch");
    for (double g : params[i].grad()) {
      if (!std::isfinite(g)) {
        throw NonFiniteError("optimizer step rejected: non-finite gradient in parameter " + std::to_string(i));
      }
    }
  }
  const auto& c = opt.config;
  const double lr = opt.lr_at(opt.step);
  ++opt.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    const auto g = params[i].grad();
    const bool decay = params[i].rank() >= 2;
    auto& m = opt.m[i];
    auto& v = opt.v[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g.empty() ? 0.0 : g[k];
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
      const double mhat = m[k] / bc1, vhat = v[k] / bc2;
      if (decay) w[k] -= lr * c.weight_decay * w[k];
      w[k] -= lr * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

double grad_norm(const std::vector<Tensor>& params) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad()) sq += g * g;
  return std::sqrt(sq);
}

void clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (max_norm <= 0.0 || norm <= max_norm || !std::isfinite(norm)) return;
  const double f = max_norm / norm;
  for (auto& p : params)
    if (p.has_grad())
      for (double& g : p.mutable_grad()) g *= f;
}

std::vector<Tensor> parameter_tensors(const ModelState& s) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : s.parameters()) out.push_back(t);
  return out;
}

}  // namespace vitlp
