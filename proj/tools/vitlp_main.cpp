// vitlp: corpus generation, training, inference and evaluation runs.
//
//   vitlp gen-data --n 100 --seed 7 --out data
//   vitlp pretrain --data data --steps 2000 --out run
//   vitlp finetune --task cls --data data --init run/checkpoint.bin --out cls
//   vitlp ocr data/pages/page_0000.pgm --checkpoint run/checkpoint.bin --out ocr
//   vitlp eval --task ocr --data data --checkpoint run/checkpoint.bin --out eval
//   vitlp inspect --data data --page 0

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "vitlp/pipeline.hpp"
#include "vitlp/run_config.hpp"

namespace fs = std::filesystem;
using namespace vitlp;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool needs_out = true) {
  app->add_option("--config", c.config_file, "key = value run configuration")->check(CLI::ExistingFile);
  app->add_option("--set", c.sets, "override one config key (KEY=VALUE), repeatable");
  auto* out = app->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
}

RunConfig base_config(const Common& c) {
  RunConfig rc;
  if (!c.config_file.empty()) rc = RunConfig::load(c.config_file);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw RunConfigError("--set expects KEY=VALUE, got " + kv);
    rc.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return rc;
}

std::string to_text(const std::string& v) { return v; }
std::string to_text(double v) { return format_double(v); }
template <class T>
  requires std::integral<T>
std::string to_text(T v) {
  return std::to_string(v);
}

template <class T>
void put(RunConfig& rc, const CLI::Option* opt, const std::string& key, const T& value) {
  if (opt->count() > 0) rc.set(key, to_text(value));
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

std::array<double, kNumStyles> parse_mix(const std::string& text) {
  std::array<double, kNumStyles> mix{};
  std::istringstream is(text);
  std::string item;
  std::size_t i = 0;
  while (std::getline(is, item, ',')) {
    if (i >= mix.size()) throw RunConfigError("data.mix has more than " + std::to_string(kNumStyles) + " weights");
    mix[i++] = std::stod(item);
  }
  if (i != mix.size()) throw RunConfigError("data.mix needs " + std::to_string(kNumStyles) + " weights");
  return mix;
}

CorpusOptions corpus_options(const RunConfig& rc) {
  CorpusOptions o;
  o.n = static_cast<int>(rc.get_int("data.n", o.n));
  o.seed = rc.get_u64("data.seed", o.seed);
  o.width = static_cast<int>(rc.get_int("data.width", o.width));
  o.height = static_cast<int>(rc.get_int("data.height", o.height));
  o.glyph_scale = static_cast<int>(rc.get_int("data.glyph_scale", o.glyph_scale));
  if (rc.has("data.mix")) o.mix = parse_mix(rc.get("data.mix", ""));
  return o;
}

// Loads the corpus named by data.dir, keeps the first train.pages pages (0 =
// all) and records the corpus hash, refusing a mismatch with a recorded one.
std::vector<RenderedPage> load_pages(RunConfig& rc) {
  if (!rc.has("data.dir")) throw RunConfigError("no corpus given (--data or data.dir)");
  std::string hash;
  auto pages = read_corpus(rc.get("data.dir", ""), &hash);
  if (rc.has("data.hash") && rc.get("data.hash", "") != hash) {
    throw std::runtime_error("corpus hash " + hash + " differs from the recorded " + rc.get("data.hash", ""));
  }
  rc.set("data.hash", hash);
  const long keep = rc.get_int("data.pages", 0);
  if (keep < 0) throw RunConfigError("data.pages must be ≥ 0");
  if (keep > 0 && static_cast<std::size_t>(keep) < pages.size()) pages.resize(static_cast<std::size_t>(keep));
  return pages;
}

struct TrainFlags {
  std::string data;
  long pages = 0, steps = 0, batch = 0;
  double lr = 0, clip = 0;
  std::uint64_t seed = 0;
  bool no_layout = false, truncate = false;
  CLI::Option *o_data, *o_pages, *o_steps, *o_batch, *o_lr, *o_clip, *o_seed, *o_no_layout, *o_truncate;
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  f.o_data = app->add_option("--data", f.data, "corpus directory");
  f.o_pages = app->add_option("--pages", f.pages, "use only the first N pages");
  f.o_steps = app->add_option("--steps", f.steps, "optimizer steps");
  f.o_batch = app->add_option("--batch", f.batch, "examples per step");
  f.o_lr = app->add_option("--lr", f.lr, "peak learning rate");
  f.o_clip = app->add_option("--clip", f.clip, "gradient norm bound (≤ 0 disables)");
  f.o_seed = app->add_option("--seed", f.seed, "seed for initialization and batch order");
  f.o_no_layout = app->add_flag("--no-layout-loss", f.no_layout, "ablation: train text only");
  f.o_truncate = app->add_flag("--truncate", f.truncate, "ablation: first segment only");
}

void apply_train_flags(RunConfig& rc, const TrainFlags& f) {
  put(rc, f.o_data, "data.dir", f.data);
  put(rc, f.o_pages, "data.pages", f.pages);
  put(rc, f.o_steps, "train.steps", f.steps);
  put(rc, f.o_batch, "train.batch", f.batch);
  put(rc, f.o_lr, "optim.lr", f.lr);
  put(rc, f.o_clip, "train.clip", f.clip);
  put(rc, f.o_seed, "train.seed", f.seed);
  if (f.o_no_layout->count()) {
    rc.set("train.layout_loss", "false");
    rc.set("model.layout_inputs", "false");
  }
  if (f.o_truncate->count()) rc.set("train.truncate", "true");
}

// Fills every training key with its default so config.txt is complete.
TrainOptions resolve_training(RunConfig& rc) {
  TrainOptions t;
  t.steps = rc.get_int("train.steps", t.steps);
  t.batch = static_cast<std::size_t>(rc.get_int("train.batch", static_cast<long>(t.batch)));
  t.seed = rc.get_u64("train.seed", t.seed);
  t.clip = rc.get_double("train.clip", t.clip);
  t.layout_loss = rc.get_bool("train.layout_loss", t.layout_loss);
  t.truncate = rc.get_bool("train.truncate", t.truncate);
  t.seg = segment_config(rc);
  rc.set_default("optim.horizon", std::to_string(t.steps));
  t.optim = optimizer_config(rc);
  rc.set("train.steps", std::to_string(t.steps));
  rc.set("train.batch", std::to_string(t.batch));
  rc.set("train.seed", std::to_string(t.seed));
  rc.set("train.clip", format_double(t.clip));
  rc.set("train.layout_loss", t.layout_loss ? "true" : "false");
  rc.set("train.truncate", t.truncate ? "true" : "false");
  store(rc, t.seg);
  store(rc, t.optim);
  return t;
}

void train_and_save(ModelState& s, const Vocabulary& vocab, const std::vector<RenderedPage>& pages,
                    const TrainOptions& opts, const fs::path& out, const RunConfig& rc,
                    const std::optional<FinetuneTask>& task) {
  std::ofstream log(out / "train.log");
  if (!log) throw std::runtime_error("cannot write " + (out / "train.log").string());
  const auto on_step = [&](const StepLog& l) {
    log << format_step(l) << '\n';
    if ((l.step + 1) % 100 == 0 || l.step + 1 == opts.steps) {
      std::cerr << format_step(l) << '\n';
      log.flush();
    }
  };
  std::vector<StepLog> logs = task ? finetune(s, vocab, pages, *task, opts, on_step)
                                   : pretrain(s, vocab, pages, opts, on_step);
  Checkpoint ck = s.to_checkpoint();
  for (const auto& [k, v] : rc.values)
    if (k.rfind("model.", 0) != 0) ck.meta["run." + k] = v;
  ck.save(out / "checkpoint.bin");
  if (!logs.empty()) std::cout << "final " << format_step(logs.back()) << '\n';
}

ModelState load_model(const std::string& path) { return ModelState::from_checkpoint(Checkpoint::load(path)); }

SegmentConfig segment_from_model(const RunConfig& rc, const ModelState& s) {
  RunConfig r = rc;
  r.set_default("seg.max_targets", std::to_string(s.config.max_targets));
  return segment_config(r);
}

GenerationConfig generation_config(const RunConfig& rc, const ModelState& s) {
  GenerationConfig g;
  g.seg = segment_from_model(rc, s);
  g.max_segments = static_cast<int>(rc.get_int("gen.max_segments", g.max_segments));
  g.max_answer_len = static_cast<int>(rc.get_int("gen.max_answer_len", g.max_answer_len));
  g.validate();
  return g;
}

// Model settings for a fresh run: model.* keys, with M following seg.max_targets.
ModelConfig fresh_model(RunConfig& rc, const Vocabulary& vocab, const std::vector<RenderedPage>& pages) {
  if (!rc.has("model.max_targets")) rc.set("model.max_targets", rc.get("seg.max_targets", "64"));
  if (!pages.empty()) {
    rc.set_default("model.image_h", std::to_string(pages.front().image.height));
    rc.set_default("model.image_w", std::to_string(pages.front().image.width));
  }
  rc.set("model.vocab_size", std::to_string(vocab.size()));
  ModelConfig mc = model_config(rc);
  store(rc, mc);
  return mc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"visually guided text-layout model: data, training, inference"};
  app.require_subcommand(1);

  Common gen_c;
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  add_common(gen, gen_c);
  int gen_n = 0, gen_w = 0, gen_h = 0, gen_scale = 0;
  std::uint64_t gen_seed = 0;
  std::string gen_mix;
  auto* o_gn = gen->add_option("--n", gen_n, "page count");
  auto* o_gs = gen->add_option("--seed", gen_seed, "corpus seed");
  auto* o_gw = gen->add_option("--width", gen_w, "page width in pixels");
  auto* o_gh = gen->add_option("--height", gen_h, "page height in pixels");
  auto* o_gc = gen->add_option("--glyph-scale", gen_scale, "glyph scale factor");
  auto* o_gm = gen->add_option("--mix", gen_mix, "style weights paragraph,two-column,table,list");

  Common pre_c;
  TrainFlags pre_f;
  auto* pre = app.add_subcommand("pretrain", "train the joint text-layout objective");
  add_common(pre, pre_c);
  add_train_flags(pre, pre_f);

  Common ft_c;
  TrainFlags ft_f;
  std::string ft_task, ft_init;
  auto* ft = app.add_subcommand("finetune", "fine-tune a checkpoint on a downstream task");
  add_common(ft, ft_c);
  add_train_flags(ft, ft_f);
  auto* o_ft_task = ft->add_option("--task", ft_task, "label | cls | vqa")->check(CLI::IsMember({"label", "cls", "vqa"}));
  auto* o_ft_init = ft->add_option("--init", ft_init, "starting checkpoint")->check(CLI::ExistingFile);

  Common ocr_c;
  std::string ocr_image, ocr_ck;
  int ocr_segments = 0;
  auto* ocr = app.add_subcommand("ocr", "read words and boxes from a page image");
  add_common(ocr, ocr_c);
  ocr->add_option("image", ocr_image, "page image (PGM)")->required()->check(CLI::ExistingFile);
  ocr->add_option("--checkpoint", ocr_ck, "model checkpoint")->required()->check(CLI::ExistingFile);
  auto* o_ocr_seg = ocr->add_option("--max-segments", ocr_segments, "segment limit");

  Common ev_c;
  std::string ev_task, ev_ck, ev_data;
  long ev_pages = 0;
  auto* ev = app.add_subcommand("eval", "score a checkpoint on a corpus");
  add_common(ev, ev_c);
  ev->add_option("--task", ev_task, "ocr | cls | label | vqa")
      ->required()
      ->check(CLI::IsMember({"ocr", "cls", "label", "vqa"}));
  ev->add_option("--checkpoint", ev_ck, "model checkpoint")->required()->check(CLI::ExistingFile);
  auto* o_ev_data = ev->add_option("--data", ev_data, "corpus directory");
  auto* o_ev_pages = ev->add_option("--pages", ev_pages, "use only the first N pages");

  Common in_c;
  std::string in_data;
  std::size_t in_page = 0;
  int in_m = 64;
  double in_alpha = 0.25;
  auto* in = app.add_subcommand("inspect", "print the sequence and segment views of a page");
  add_common(in, in_c, false);
  in->add_option("--data", in_data, "corpus directory")->required();
  in->add_option("--page", in_page, "page index");
  in->add_option("--max-targets", in_m, "segment length M");
  in->add_option("--alpha-p", in_alpha, "prefix ratio");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const Vocabulary vocab;
    if (*gen) {
      RunConfig rc = base_config(gen_c);
      put(rc, o_gn, "data.n", gen_n);
      put(rc, o_gs, "data.seed", gen_seed);
      put(rc, o_gw, "data.width", gen_w);
      put(rc, o_gh, "data.height", gen_h);
      put(rc, o_gc, "data.glyph_scale", gen_scale);
      if (o_gm->count()) rc.set("data.mix", gen_mix);
      const CorpusOptions opts = corpus_options(rc);
      rc.set("data.n", std::to_string(opts.n));
      rc.set("data.seed", std::to_string(opts.seed));
      rc.set("data.width", std::to_string(opts.width));
      rc.set("data.height", std::to_string(opts.height));
      rc.set("data.glyph_scale", std::to_string(opts.glyph_scale));
      rc.set("run.command", "gen-data");
      fs::create_directories(gen_c.out);
      rc.save(fs::path(gen_c.out) / "config.txt");
      const auto files = write_corpus(gen_c.out, make_corpus(opts), opts);
      std::cout << "corpus " << files.hash << '\n';
      return 0;
    }

    if (*pre || *ft) {
      const bool is_ft = static_cast<bool>(*ft);
      const Common& c = is_ft ? ft_c : pre_c;
      RunConfig rc = base_config(c);
      apply_train_flags(rc, is_ft ? ft_f : pre_f);
      if (is_ft) {
        put(rc, o_ft_task, "task", ft_task);
        put(rc, o_ft_init, "init.checkpoint", ft_init);
        if (!rc.has("task")) throw RunConfigError("finetune needs --task");
        if (!rc.has("init.checkpoint")) throw RunConfigError("finetune needs --init");
      }
      rc.set("run.command", is_ft ? "finetune" : "pretrain");
      auto pages = load_pages(rc);
      ModelState s;
      if (is_ft) {
        s = load_model(rc.get("init.checkpoint", ""));
        store(rc, s.config);
        rc.set_default("seg.max_targets", std::to_string(s.config.max_targets));
      }
      TrainOptions opts = resolve_training(rc);
      if (!is_ft) {
        const ModelConfig mc = fresh_model(rc, vocab, pages);
        s = ModelState::init(mc, rc.get_u64("train.seed", opts.seed));
      }
      if (opts.seg.max_targets > s.config.max_targets) throw ConfigError("seg.max_targets exceeds model.max_targets");
      const fs::path out = c.out;
      fs::create_directories(out);
      rc.save(out / "config.txt");
      std::optional<FinetuneTask> task;
      if (is_ft) task = parse_task(rc.get("task", ""));
      train_and_save(s, vocab, pages, opts, out, rc, task);
      return 0;
    }

    if (*ocr) {
      RunConfig rc = base_config(ocr_c);
      put(rc, o_ocr_seg, "gen.max_segments", ocr_segments);
      rc.set("run.command", "ocr");
      rc.set("ocr.image", ocr_image);
      rc.set("ocr.checkpoint", ocr_ck);
      const ModelState s = load_model(ocr_ck);
      const GenerationConfig g = generation_config(rc, s);
      store(rc, g.seg);
      rc.set("gen.max_segments", std::to_string(g.max_segments));
      const fs::path out = ocr_c.out;
      fs::create_directories(out);
      rc.save(out / "config.txt");
      const Image img = read_pgm(ocr_image);
      const OcrResult r = generate_ocr(s, vocab, img, g);
      write_text(out / "ocr.txt", format_sequence(vocab, r.sequence));
      std::vector<BBox> boxes;
      for (const auto& w : r.words) boxes.push_back(w.box);
      write_pgm(out / "overlay.pgm", draw_boxes(img, boxes));
      for (const auto& w : r.words) std::cout << w.word << '\t' << to_string(w.box) << '\n';
      std::cout << "segments " << r.segments_used << (r.finished ? "" : " (unfinished)") << '\n';
      for (const auto& d : r.diagnostics) std::cerr << "diagnostic: " << d << '\n';
      return 0;
    }

    if (*ev) {
      RunConfig rc = base_config(ev_c);
      put(rc, o_ev_data, "data.dir", ev_data);
      put(rc, o_ev_pages, "data.pages", ev_pages);
      rc.set("run.command", "eval");
      rc.set("task", ev_task);
      rc.set("eval.checkpoint", ev_ck);
      const ModelState s = load_model(ev_ck);
      const auto pages = load_pages(rc);
      const GenerationConfig g = generation_config(rc, s);
      store(rc, g.seg);
      const fs::path out = ev_c.out;
      fs::create_directories(out);
      rc.save(out / "config.txt");
      std::string report;
      if (ev_task == "ocr") report = format_report(evaluate_ocr(s, vocab, pages, g));
      if (ev_task == "cls") report = format_report(evaluate_cls(s, vocab, pages), "cls");
      if (ev_task == "label") report = format_report(evaluate_label(s, vocab, pages, g.seg), "label");
      if (ev_task == "vqa") report = format_report(evaluate_vqa(s, vocab, pages, g));
      report += "data.hash = " + rc.get("data.hash", "") + "\n";
      write_text(out / "metrics.txt", report);
      std::cout << report;
      return 0;
    }

    if (*in) {
      std::string hash;
      const auto pages = read_corpus(in_data, &hash);
      if (in_page >= pages.size()) throw std::out_of_range("page index out of range");
      const auto& p = pages[in_page];
      SegmentConfig sc{in_m, in_alpha};
      sc.validate();
      const GlobalSequence seq = encode_document(vocab, p.words);
      const auto segs = split(vocab, seq, sc);
      std::ostringstream os;
      os << "corpus " << hash << "\npage " << in_page << " style " << style_name(p.spec.style) << " class "
         << p.class_id << " words " << p.words.size() << " tokens " << seq.size() << " segments " << segs.size()
         << "\ncompression_ratio " << compression_ratio(p.words) << "\n\n";
      for (std::size_t i = 0; i < p.words.size(); ++i) {
        os << p.words[i].word << '\t' << to_string(p.words[i].box) << "\ttag " << p.tags[i] << '\n';
      }
      os << '\n' << format_sequence(vocab, seq) << '\n';
      for (const auto& sg : segs) os << format_segment(vocab, sg) << '\n';
      std::cout << os.str();
      if (!in_c.out.empty()) {
        fs::create_directories(in_c.out);
        write_text(fs::path(in_c.out) / "inspect.txt", os.str());
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
