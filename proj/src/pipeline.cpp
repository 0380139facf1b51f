#include "vitlp/pipeline.hpp"

#include <iomanip>
#include <sstream>

#include "vitlp/rng.hpp"

namespace vitlp {

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::vector<BBox> boxes_of(const std::vector<WordBox>& words) {
  std::vector<BBox> out;
  for (const auto& w : words) out.push_back(w.box);
  return out;
}

std::vector<std::string> strings_of(const std::vector<WordBox>& words) {
  std::vector<std::string> out;
  for (const auto& w : words) out.push_back(w.word);
  return out;
}

// Seeded passes over [0, n), reshuffled each pass.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : rng_(seed), order_(n) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    pos_ = n;
  }

  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    while (out.size() < batch) {
      if (pos_ == order_.size()) {
        rng_.shuffle(order_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_;
};

template <class LossFn>
std::vector<StepLog> run_training(ModelState& s, const std::vector<TrainExample>& pool, const TrainOptions& opts,
                                  const StepCallback& on_step, LossFn&& loss_fn) {
  if (pool.empty()) throw std::invalid_argument("no training examples");
  if (opts.batch == 0 || opts.steps < 0) throw std::invalid_argument("invalid batch size or step count");
  auto params = parameter_tensors(s);
  auto opt = make_optimizer(params, opts.optim);
  BatchSampler sampler(pool.size(), opts.seed);
  std::vector<StepLog> logs;
  for (long step = 0; step < opts.steps; ++step) {
    std::vector<TrainExample> batch;
    for (std::size_t i : sampler.next(std::min(opts.batch, pool.size()))) batch.push_back(pool[i]);
    s.zero_grad();
    StepLog log;
    log.step = step;
    log.lr = opt.lr_at(opt.step);
    const Tensor total = loss_fn(batch, log);
    log.total = total.item();
    total.backward();
    clip_grad_norm(params, opts.clip);
    optimizer_step(params, opt);
    if (on_step) on_step(log);
    logs.push_back(log);
  }
  return logs;
}

Segment truncated(const Vocabulary& vocab, Segment seg) {
  if (seg.targets.empty() || seg.targets.back().token != vocab.eos()) {
    seg.targets.push_back({vocab.eos(), std::nullopt});
    seg.loss_mask.push_back(true);
  }
  return seg;
}

}  // namespace

std::string format_step(const StepLog& log) {
  return "step=" + std::to_string(log.step) + " lr=" + num(log.lr) + " global_text=" + num(log.global_text) +
         " local_layout=" + num(log.local_layout) + " total=" + num(log.total);
}

std::vector<TrainExample> pretrain_examples(const Vocabulary& vocab, const std::vector<RenderedPage>& pages,
                                            const SegmentConfig& seg, bool truncate) {
  std::vector<TrainExample> out;
  for (const auto& p : pages) {
    if (p.words.empty()) continue;
    const auto segments = split(vocab, encode_document(vocab, p.words), seg);
    if (truncate) {
      out.push_back(make_segment_example(vocab, p.image, truncated(vocab, segments.front())));
      continue;
    }
    for (auto& ex : make_segment_examples(vocab, p.image, segments)) out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TrainExample> finetune_examples(FinetuneTask task, const Vocabulary& vocab,
                                            const std::vector<RenderedPage>& pages, const SegmentConfig& seg) {
  std::vector<TrainExample> out;
  for (const auto& p : pages) {
    switch (task) {
      case FinetuneTask::DocCls:
        out.push_back(make_class_example(vocab, p.image, p.class_id));
        break;
      case FinetuneTask::TokenLabel: {
        if (p.words.empty()) break;
        std::size_t first = 0;
        for (const auto& segment : split(vocab, encode_document(vocab, p.words), seg)) {
          out.push_back(make_label_example(vocab, p.image, segment, p.tags, first));
          for (const auto& e : segment.targets) first += e.token == vocab.loc() ? 1 : 0;
        }
        break;
      }
      case FinetuneTask::Vqa:
        for (const auto& q : p.qa) out.push_back(make_vqa_example(vocab, p.image, q));
        break;
    }
  }
  return out;
}

std::vector<StepLog> pretrain(ModelState& s, const Vocabulary& vocab, const std::vector<RenderedPage>& pages,
                              const TrainOptions& opts, const StepCallback& on_step) {
  const auto pool = pretrain_examples(vocab, pages, opts.seg, opts.truncate);
  const LossOptions lo{opts.layout_loss};
  return run_training(s, pool, opts, on_step, [&](const std::vector<TrainExample>& batch, StepLog& log) {
    const auto l = total_loss(s, vocab, batch, lo);
    log.global_text = l.global_text.item();
    log.local_layout = l.local_layout.item();
    return l.total;
  });
}

std::vector<StepLog> finetune(ModelState& s, const Vocabulary& vocab, const std::vector<RenderedPage>& pages,
                              FinetuneTask task, const TrainOptions& opts, const StepCallback& on_step) {
  const auto pool = finetune_examples(task, vocab, pages, opts.seg);
  if (task == FinetuneTask::Vqa) {
    const LossOptions lo{opts.layout_loss};
    return run_training(s, pool, opts, on_step, [&](const std::vector<TrainExample>& batch, StepLog& log) {
      const auto l = total_loss(s, vocab, batch, lo);
      log.global_text = l.global_text.item();
      log.local_layout = l.local_layout.item();
      return l.total;
    });
  }
  return run_training(s, pool, opts, on_step, [&](const std::vector<TrainExample>& batch, StepLog& log) {
    const Tensor l = finetune_loss(task, s, vocab, batch);
    log.global_text = l.item();
    return l;
  });
}

OcrEval evaluate_ocr(const ModelState& s, const Vocabulary& vocab, const std::vector<RenderedPage>& pages,
                     const GenerationConfig& cfg) {
  OcrEval e;
  std::size_t lm = 0, rm = 0, gm = 0, np = 0, nt = 0, ng = 0;
  for (const auto& p : pages) {
    const auto r = generate_ocr(s, vocab, p.image, cfg);
    const auto loc = localization_prf(boxes_of(r.words), boxes_of(p.words));
    // Text is scored on its own, so a rejected box does not hide a correct word.
    const auto rec = recognition_prf(r.texts, strings_of(p.words));
    // Grounded: a localization match whose word is also right.
    std::size_t grounded = 0;
    std::vector<bool> used(p.words.size());
    for (const auto& w : r.words) {
      for (std::size_t g = 0; g < p.words.size(); ++g) {
        if (!used[g] && p.words[g].word == w.word && iou(w.box, p.words[g].box) >= 0.5) {
          used[g] = true;
          ++grounded;
          break;
        }
      }
    }
    lm += loc.matches;
    rm += rec.matches;
    gm += grounded;
    np += r.words.size();
    nt += r.texts.size();
    ng += p.words.size();
    ++e.pages;
    if (r.words == p.words) ++e.exact_pages;
    if (r.segments_used >= 2) ++e.multi_segment_pages;
    e.diagnostics += r.diagnostics.size();
  }
  auto pooled = [&](std::size_t m, std::size_t pred) {
    PRF out;
    out.matches = m;
    out.pred = pred;
    out.gold = ng;
    out.precision = pred == 0 ? 0.0 : static_cast<double>(m) / static_cast<double>(pred);
    out.recall = ng == 0 ? 0.0 : static_cast<double>(m) / static_cast<double>(ng);
    const double sum = out.precision + out.recall;
    out.f1 = sum == 0.0 ? 0.0 : 2.0 * out.precision * out.recall / sum;
    return out;
  };
  e.localization = pooled(lm, np);
  e.recognition = pooled(rm, nt);
  e.grounded = pooled(gm, np);
  return e;
}

AccuracyEval evaluate_cls(const ModelState& s, const Vocabulary& vocab, const std::vector<RenderedPage>& pages) {
  AccuracyEval e;
  for (const auto& p : pages) {
    e.correct += classify(s, vocab, p.image) == p.class_id ? 1 : 0;
    ++e.total;
  }
  return e;
}

AccuracyEval evaluate_label(const ModelState& s, const Vocabulary& vocab, const std::vector<RenderedPage>& pages,
                            const SegmentConfig& seg) {
  AccuracyEval e;
  for (const auto& p : pages) {
    const auto tags = label_tokens(s, vocab, p.image, p.words, seg);
    if (tags.size() != p.tags.size()) throw std::logic_error("label_tokens returned a tag count unlike the word count");
    for (std::size_t i = 0; i < tags.size(); ++i) e.correct += tags[i] == p.tags[i] ? 1 : 0;
    e.total += tags.size();
  }
  return e;
}

VqaEval evaluate_vqa(const ModelState& s, const Vocabulary& vocab, const std::vector<RenderedPage>& pages,
                     const GenerationConfig& cfg) {
  VqaEval e;
  double sum = 0.0;
  for (const auto& p : pages) {
    for (const auto& q : p.qa) {
      const Answer a = answer_question(s, vocab, p.image, q.question, cfg);
      std::string gold;
      switch (q.kind) {
        case QaTarget::Kind::Yes: gold = "yes"; break;
        case QaTarget::Kind::No: gold = "no"; break;
        case QaTarget::Kind::Span:
          for (const auto& w : q.answer) gold += (gold.empty() ? "" : " ") + w.word;
          break;
      }
      const std::string pred = a.text();
      sum += anls(pred, {gold});
      ++e.questions;
      e.exact += pred == gold ? 1 : 0;
      if (q.kind == QaTarget::Kind::Span) {
        ++e.span_questions;
        bool ok = a.kind == Answer::Kind::Span && a.words.size() == q.answer.size();
        for (std::size_t i = 0; ok && i < q.answer.size(); ++i) ok = iou(a.words[i].box, q.answer[i].box) >= 0.5;
        e.grounded += ok ? 1 : 0;
      }
    }
  }
  e.anls = e.questions == 0 ? 0.0 : sum / static_cast<double>(e.questions);
  return e;
}

std::string format_report(const OcrEval& e) {
  std::ostringstream os;
  os << "task = ocr\n";
  os << "pages = " << e.pages << "\n";
  os << "exact_pages = " << e.exact_pages << "\n";
  os << "multi_segment_pages = " << e.multi_segment_pages << "\n";
  os << "diagnostics = " << e.diagnostics << "\n";
  auto prf = [&](const char* name, const PRF& r) {
    os << name << ".precision = " << num(r.precision) << "\n";
    os << name << ".recall = " << num(r.recall) << "\n";
    os << name << ".f1 = " << num(r.f1) << "\n";
  };
  prf("localization", e.localization);
  prf("recognition", e.recognition);
  prf("grounded", e.grounded);
  return os.str();
}

std::string format_report(const AccuracyEval& e, const std::string& name) {
  std::ostringstream os;
  os << "task = " << name << "\n";
  os << "correct = " << e.correct << "\n";
  os << "total = " << e.total << "\n";
  os << "accuracy = " << num(e.accuracy()) << "\n";
  return os.str();
}

std::string format_report(const VqaEval& e) {
  std::ostringstream os;
  os << "task = vqa\n";
  os << "questions = " << e.questions << "\n";
  os << "exact = " << e.exact << "\n";
  os << "anls = " << num(e.anls) << "\n";
  os << "span_questions = " << e.span_questions << "\n";
  os << "grounded = " << e.grounded << "\n";
  return os.str();
}

}  // namespace vitlp
