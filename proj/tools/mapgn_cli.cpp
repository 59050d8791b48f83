// Command-line front end: data synthesis, vocabulary, pre-training,
// fine-tuning, decoding, evaluation and reporting.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "mapgn/checkpoint.hpp"
#include "mapgn/config.hpp"
#include "mapgn/corpus.hpp"
#include "mapgn/error.hpp"
#include "mapgn/grad_check.hpp"
#include "mapgn/metrics.hpp"
#include "mapgn/pipeline.hpp"

namespace fs = std::filesystem;
using namespace mapgn;

namespace {

struct Common {
  std::string config_path;
  std::string masking;
  std::string arch;
  std::string precision;
  std::int64_t seed = -1;
  std::int64_t log_every = 50;
};

RunConfig load_config(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : RunConfig::load(c.config_path);
  cfg.apply_env();
  if (!c.masking.empty()) cfg.masking = MaskingSpec::preset(c.masking);
  if (!c.arch.empty()) cfg.model.arch = parse_arch(c.arch);
  if (!c.precision.empty()) {
    if (c.precision != "f32" && c.precision != "f64") throw ConfigError("--precision must be f32 or f64");
    cfg.precision = c.precision == "f64" ? Precision::kF64 : Precision::kF32;
  }
  if (c.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(c.seed);
    cfg.train.seed = cfg.seed;
  }
  return cfg;
}

void add_common(CLI::App* app, Common& c, bool training) {
  app->add_option("--config", c.config_path, "JSON run config (see key list below)");
  app->add_option("--seed", c.seed, "override the config seed");
  app->add_option("--precision", c.precision, "override precision (f32|f64)");
  if (training) {
    app->add_option("--masking", c.masking, "masking preset: mass1|mass2|mass3|mapgn");
    app->add_option("--arch", c.arch, "pointer-generator|encoder-decoder");
    app->add_option("--log-every", c.log_every, "progress line interval in steps (0: silent)");
  }
}

std::string or_default(const std::string& v, const std::string& dflt) { return v.empty() ? dflt : v; }

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void ensure_parent(const std::string& path) {
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

bool is_tsv(const std::string& path) { return fs::path(path).extension() == ".tsv"; }

// Sources (or targets) of a .tsv file, or the lines of a plain text file.
std::vector<std::string> read_side(const std::string& path, bool source_side, std::size_t max_chars) {
  if (!is_tsv(path)) return load_unpaired(path, max_chars);
  std::vector<std::string> out;
  for (auto& p : load_paired(path, max_chars)) out.push_back(source_side ? p.source : p.target);
  return out;
}

// Evaluation keeps blank hypothesis lines so rows stay aligned with references.
std::vector<std::string> read_lines_keep_blank(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(line);
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
}

ModelConfig model_for(const RunConfig& cfg, const Vocab& vocab) {
  ModelConfig mc = cfg.model;
  mc.vocab_size = static_cast<int>(vocab.size());
  mc.validate();
  return mc;
}

nlohmann::json base_metadata(const RunConfig& cfg, const ModelConfig& mc, const Vocab& vocab, const std::string& stage) {
  return {{"stage", stage},
          {"model", mc.to_json()},
          {"train", cfg.train.to_json()},
          {"masking", masking_to_json(cfg.masking)},
          {"vocab_sha256", vocab.sha256()}};
}

StepCallback progress(std::int64_t every, const std::string& tag) {
  if (every <= 0) return {};
  return [every, tag](const LossRecord& r) {
    if (r.step % every == 0) {
      std::cerr << tag << " step " << r.step << " loss " << r.loss << " t " << r.seconds << "s\n";
    }
  };
}

void write_loss_log(const std::string& path, const std::vector<LossRecord>& log, bool append) {
  if (path.empty()) return;
  ensure_parent(path);
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out.precision(17);
  if (!append) out << "step,loss,lr,seconds\n";
  for (const auto& r : log) out << r.step << ',' << r.loss << ',' << r.lr << ',' << r.seconds << '\n';
}

template <typename F>
void with_precision(Precision p, F&& f) {
  if (p == Precision::kF64) {
    f.template operator()<double>();
  } else {
    f.template operator()<float>();
  }
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  Common common;
  std::string out, rules;
  SynthSizes sizes;
};

int run_synth(const SynthArgs& a) {
  RunConfig cfg = load_config(a.common);
  SynthRuleSet rules = a.rules.empty() ? SynthRuleSet::defaults() : [&] {
    std::ifstream in(a.rules);
    if (!in) throw ConfigError("cannot open rules '" + a.rules + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("rules are not valid JSON: ") + e.what());
    }
    return SynthRuleSet::from_json(j);
  }();
  if (a.common.seed >= 0) rules.seed = cfg.seed;
  Rng rng = Rng::keyed(rules.seed, {0x53594e});
  auto corpus = synth_corpus(rules, a.sizes, rng);
  const std::string dir = or_default(a.out, cfg.paths.data_dir);
  fs::create_directories(dir);
  write_unpaired(path_in(dir, "unpaired.txt"), corpus.unpaired);
  write_paired(path_in(dir, "train.tsv"), corpus.train);
  write_paired(path_in(dir, "valid.tsv"), corpus.valid);
  write_paired(path_in(dir, "test.tsv"), corpus.test);
  write_text(path_in(dir, "rules.json"), rules.to_json().dump(2) + "\n");
  std::cerr << "wrote " << corpus.unpaired.size() << " unpaired, " << corpus.train.size() << "/" << corpus.valid.size()
            << "/" << corpus.test.size() << " train/valid/test pairs to " << dir << "\n";
  return 0;
}

struct VocabArgs {
  Common common;
  std::vector<std::string> inputs;
  std::string out;
  std::size_t max_size = 0;
};

int run_build_vocab(const VocabArgs& a) {
  RunConfig cfg = load_config(a.common);
  std::vector<std::string> inputs = a.inputs;
  if (inputs.empty()) {
    inputs = {path_in(cfg.paths.data_dir, "unpaired.txt"), path_in(cfg.paths.data_dir, "train.tsv")};
  }
  std::vector<std::string> corpus;
  for (const auto& p : inputs) {
    if (is_tsv(p)) {
      for (auto& pr : load_paired(p, cfg.data.max_line_chars)) {
        corpus.push_back(pr.source);
        corpus.push_back(pr.target);
      }
    } else {
      auto lines = load_unpaired(p, cfg.data.max_line_chars);
      corpus.insert(corpus.end(), lines.begin(), lines.end());
    }
  }
  Vocab v = Vocab::build(corpus, cfg.data.min_count, a.max_size ? std::optional<std::size_t>(a.max_size) : std::nullopt);
  const std::string out = or_default(a.out, path_in(cfg.paths.data_dir, "vocab.txt"));
  ensure_parent(out);
  v.save(out);
  std::cerr << "vocabulary of " << v.size() << " entries written to " << out << " (sha256 " << v.sha256() << ")\n";
  return 0;
}

struct PretrainArgs {
  Common common;
  std::string vocab, unpaired, out, log, resume;
};

int run_pretrain(const PretrainArgs& a) {
  RunConfig cfg = load_config(a.common);
  Vocab vocab = Vocab::load(or_default(a.vocab, path_in(cfg.paths.data_dir, "vocab.txt")));
  const ModelConfig mc = model_for(cfg, vocab);
  std::size_t skipped = 0;
  auto sentences = encode_unpaired(
      vocab, load_unpaired(or_default(a.unpaired, path_in(cfg.paths.data_dir, "unpaired.txt")), cfg.data.max_line_chars),
      &skipped);
  if (skipped) std::cerr << "skipped " << skipped << " sentences with out-of-vocabulary characters\n";
  const std::string out =
      or_default(a.out, path_in(cfg.paths.work_dir, "pretrain-" + cfg.masking.name + ".ckpt"));
  with_precision(cfg.precision, [&]<typename S>() {
    ParameterSet<S> init;
    std::optional<AdamState<S>> resume;
    if (!a.resume.empty()) {
      auto ck = load_checkpoint<S>(a.resume);
      check_vocab_hash(ck.metadata, vocab.sha256());
      if (!ck.optimizer) throw DataError("checkpoint '" + a.resume + "' has no optimizer state to resume from");
      init = std::move(ck.params);
      resume = std::move(ck.optimizer);
    } else {
      init = make_parameters<S>(mc, cfg.seed);
    }
    auto res = pretrain<S>(mc, cfg.train, cfg.masking, std::move(sentences), std::move(init), std::move(resume),
                           progress(a.common.log_every, "pretrain"));
    ensure_parent(out);
    save_checkpoint<S>(out, res.params, &res.optimizer, base_metadata(cfg, mc, vocab, "pretrain"));
    write_loss_log(a.log, res.log, !a.resume.empty());
    std::cerr << "pretrained " << res.optimizer.step << " steps";
    if (!res.log.empty()) std::cerr << ", final loss " << res.log.back().loss;
    std::cerr << "; checkpoint " << out << "\n";
  });
  return 0;
}

struct FinetuneArgs {
  Common common;
  std::string vocab, train, valid, out, init_from, log;
  std::size_t limit = 0;
};

int run_finetune(const FinetuneArgs& a) {
  RunConfig cfg = load_config(a.common);
  Vocab vocab = Vocab::load(or_default(a.vocab, path_in(cfg.paths.data_dir, "vocab.txt")));
  const ModelConfig mc = model_for(cfg, vocab);
  auto train_pairs = load_paired(or_default(a.train, path_in(cfg.paths.data_dir, "train.tsv")), cfg.data.max_line_chars);
  if (a.limit > 0 && a.limit < train_pairs.size()) train_pairs.resize(a.limit);
  const std::string valid_path = or_default(a.valid, path_in(cfg.paths.data_dir, "valid.tsv"));
  std::vector<TextPair> valid_pairs;
  if (fs::exists(valid_path)) valid_pairs = load_paired(valid_path, cfg.data.max_line_chars);
  const std::string out = or_default(a.out, path_in(cfg.paths.work_dir, "finetune.ckpt"));
  with_precision(cfg.precision, [&]<typename S>() {
    ParameterSet<S> init;
    nlohmann::json meta = base_metadata(cfg, mc, vocab, "finetune");
    if (!a.init_from.empty()) {
      auto ck = load_checkpoint<S>(a.init_from);
      check_vocab_hash(ck.metadata, vocab.sha256());
      auto t = transfer_params(ck.params, mc, cfg.seed);
      std::cerr << "initialized from " << a.init_from << ": " << t.copied.size() << " tensors copied, "
                << t.initialized.size() << " fresh\n";
      init = std::move(t.params);
      meta["init_from"] = a.init_from;
    } else {
      init = make_parameters<S>(mc, cfg.seed);
    }
    auto res = finetune<S>(mc, cfg.train, cfg.finetune, encode_pairs(vocab, train_pairs, mc.max_len),
                           encode_pairs(vocab, valid_pairs, mc.max_len), std::move(init),
                           progress(a.common.log_every, "finetune"));
    meta["train_pairs"] = train_pairs.size();
    meta["best_step"] = res.best_step;
    if (!std::isnan(res.best_valid_loss)) meta["best_valid_loss"] = res.best_valid_loss;
    ensure_parent(out);
    save_checkpoint<S>(out, res.params, &res.optimizer, meta);
    write_loss_log(a.log, res.log, false);
    std::cerr << "fine-tuned " << res.optimizer.step << " steps on " << train_pairs.size() << " pairs";
    if (!std::isnan(res.best_valid_loss)) {
      std::cerr << ", best validation loss " << res.best_valid_loss << " at step " << res.best_step;
    }
    std::cerr << "; checkpoint " << out << "\n";
  });
  return 0;
}

struct DecodeArgs {
  Common common;
  std::string vocab, checkpoint, input, out;
  std::size_t beam = 0;
};

int run_decode(const DecodeArgs& a) {
  RunConfig cfg = load_config(a.common);
  if (a.beam > 0) cfg.decode.beam = a.beam;
  Vocab vocab = Vocab::load(or_default(a.vocab, path_in(cfg.paths.data_dir, "vocab.txt")));
  const auto sources =
      read_side(or_default(a.input, path_in(cfg.paths.data_dir, "test.tsv")), true, cfg.data.max_line_chars);
  std::vector<std::string> lines;
  with_precision(cfg.precision, [&]<typename S>() {
    auto ck = load_checkpoint<S>(a.checkpoint);
    check_vocab_hash(ck.metadata, vocab.sha256());
    if (!ck.metadata.contains("model")) throw CheckpointFormatError("checkpoint metadata has no model config");
    const ModelConfig mc = ModelConfig::from_json(ck.metadata["model"]);
    lines = decode_lines(mc, ck.params, vocab, sources, cfg.decode);
  });
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_text(a.out, text);
  return 0;
}

struct EvaluateArgs {
  Common common;
  std::string hyp, ref, out, csv;
  bool per_sentence = false;
};

int run_evaluate(const EvaluateArgs& a) {
  RunConfig cfg = load_config(a.common);
  const auto hyps = is_tsv(a.hyp) ? read_side(a.hyp, false, cfg.data.max_line_chars) : read_lines_keep_blank(a.hyp);
  const auto refs = is_tsv(a.ref) ? read_side(a.ref, false, cfg.data.max_line_chars) : read_lines_keep_blank(a.ref);
  const auto report = evaluate_corpus(hyps, refs);
  write_text(a.out, report.to_json(a.per_sentence).dump(2) + "\n");
  if (!a.csv.empty()) write_text(a.csv, report.per_sentence_csv());
  return 0;
}

struct PreviewArgs {
  Common common;
  std::string vocab, input, out;
  std::size_t count = 10;
};

int run_mask_preview(const PreviewArgs& a) {
  RunConfig cfg = load_config(a.common);
  Vocab vocab = Vocab::load(or_default(a.vocab, path_in(cfg.paths.data_dir, "vocab.txt")));
  const auto sentences = encode_unpaired(
      vocab, load_unpaired(or_default(a.input, path_in(cfg.paths.data_dir, "unpaired.txt")), cfg.data.max_line_chars));
  if (sentences.empty()) throw DataError("mask-preview: no usable sentences");
  std::ostringstream os;
  os << "original\tenc\tdec\ttgt\ta\tb\n";
  const std::size_t n = std::min(a.count, sentences.size());
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::keyed(cfg.seed, {kMaskingStream, 0, i});
    const auto ex = build_pretrain_example(sentences[i], cfg.masking, vocab.size(), rng);
    // The decoder input starts with BOS when the span opens the sentence; show it explicitly.
    std::string dec = ex.decoder_input.front() == kBos ? "<s>" : "";
    dec += vocab.decode(ex.decoder_input);
    os << vocab.decode(sentences[i]) << '\t' << vocab.decode(ex.encoder_input) << '\t' << dec << '\t'
       << vocab.decode(ex.targets) << '\t' << ex.span.a << '\t' << ex.span.b << '\n';
  }
  write_text(a.out, os.str());
  return 0;
}

struct GradCheckArgs {
  Common common;
  double eps = 1e-6;
  double tol = 1e-6;
};

int run_grad_check(const GradCheckArgs& a) {
  RunConfig cfg = load_config(a.common);
  ModelConfig mc;
  mc.arch = cfg.model.arch;
  mc.vocab_size = 7;
  mc.emb_dim = 4;
  mc.enc_layers = 2;
  mc.enc_hidden = 4;
  mc.dec_layers = 2;
  mc.dec_hidden = 4;
  mc.dropout = 0.0;
  mc.max_len = 16;
  auto params = make_parameters<double>(mc, cfg.seed);
  Rng rng = Rng::keyed(cfg.seed, {0x4743});
  std::vector<SeqPair> data;
  for (int b = 0; b < 2; ++b) {
    std::vector<TokenId> src(3), tgt(2);
    for (auto& t : src) t = static_cast<TokenId>(kNumSpecials + uniform_below(rng, 2));
    for (auto& t : tgt) t = static_cast<TokenId>(kNumSpecials + uniform_below(rng, 2));
    data.push_back(make_finetune_pair(src, tgt, mc.max_len));
  }
  std::vector<const SeqPair*> batch;
  for (const auto& d : data) batch.push_back(&d);
  Seq2Seq<double> model(mc, params);
  auto report = grad_check_params(
      params,
      [&](Tape<double>& tape) {
        Bound<double> P(tape, params);
        return sequence_loss(model, P, batch, {cfg.train.label_smoothing, false}, nullptr);
      },
      a.eps);
  nlohmann::json j = {{"arch", to_string(mc.arch)},
                      {"max_error", report.max_error},
                      {"worst_param", report.worst_param},
                      {"tolerance", a.tol},
                      {"per_param", report.per_param}};
  std::cout << j.dump(2) << "\n";
  if (!(report.max_error < a.tol)) {
    throw NumericError("gradient check failed: max relative error " + std::to_string(report.max_error) + " in " +
                       report.worst_param);
  }
  return 0;
}

struct ReportArgs {
  Common common;
  std::string runs, out, metric = "bleu3";
};

// runs file: method TAB pairs TAB path-to-evaluate-json, one run per line.
int run_report(const ReportArgs& a) {
  load_config(a.common);
  std::ifstream in(a.runs);
  if (!in) throw DataError("cannot open '" + a.runs + "'");
  const auto base = fs::path(a.runs).parent_path();
  std::map<long, std::map<std::string, double>> table;
  std::vector<std::string> methods;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, '\t');) f.push_back(x);
    const std::string where = a.runs + ":" + std::to_string(line_no) + ": ";
    if (f.size() != 3) throw DataError(where + "expected method, pairs, eval-json");
    long pairs = 0;
    try {
      pairs = std::stol(f[1]);
    } catch (const std::exception&) {
      throw DataError(where + "pairs must be an integer");
    }
    fs::path p = f[2];
    if (p.is_relative()) p = base / p;
    std::ifstream ej(p);
    if (!ej) throw DataError(where + "cannot open '" + p.string() + "'");
    nlohmann::json j;
    try {
      ej >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + "bad JSON: " + e.what());
    }
    if (!j.contains(a.metric)) throw DataError(where + "no metric '" + a.metric + "'");
    if (std::find(methods.begin(), methods.end(), f[0]) == methods.end()) methods.push_back(f[0]);
    table[pairs][f[0]] = j[a.metric].get<double>();
  }
  std::ostringstream os;
  os.precision(6);
  os << "pairs";
  for (const auto& m : methods) os << ',' << m;
  os << '\n';
  for (const auto& [pairs, row] : table) {
    os << pairs;
    for (const auto& m : methods) {
      os << ',';
      if (auto it = row.find(m); it != row.end()) os << it->second;
    }
    os << '\n';
  }
  write_text(a.out, os.str());
  return 0;
}

std::string one_line(std::string s) {
  for (std::size_t pos; (pos = s.find("\n  ")) != std::string::npos;) s.replace(pos, 3, " | ");
  for (auto& c : s) {
    if (c == '\n') c = ' ';
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mapgn: masked pre-training for pointer-generator text normalization"};
  app.require_subcommand(1);
  app.footer(config_help_text());

  SynthArgs synth;
  auto* s = app.add_subcommand("synth-data", "generate a synthetic spoken-to-normalized corpus");
  add_common(s, synth.common, false);
  s->add_option("--out", synth.out, "output directory (default paths.data_dir)");
  s->add_option("--rules", synth.rules, "rule set JSON (default built-in rules)");
  s->add_option("--unpaired", synth.sizes.unpaired, "unpaired sentences");
  s->add_option("--train", synth.sizes.train, "training pairs");
  s->add_option("--valid", synth.sizes.valid, "validation pairs");
  s->add_option("--test", synth.sizes.test, "test pairs");

  VocabArgs voc;
  auto* v = app.add_subcommand("build-vocab", "build a character vocabulary");
  add_common(v, voc.common, false);
  v->add_option("--input", voc.inputs, "text (.txt) or pair (.tsv) files")->check(CLI::ExistingFile);
  v->add_option("--out", voc.out, "vocabulary file (default <data_dir>/vocab.txt)");
  v->add_option("--max-size", voc.max_size, "keep at most this many entries including specials");

  PretrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "masked span pre-training on unpaired sentences");
  add_common(p, pre.common, true);
  p->add_option("--vocab", pre.vocab, "vocabulary file");
  p->add_option("--unpaired", pre.unpaired, "unpaired sentences");
  p->add_option("--out", pre.out, "checkpoint to write");
  p->add_option("--log", pre.log, "loss log CSV (step,loss,lr,seconds)");
  p->add_option("--resume", pre.resume, "continue from a pre-training checkpoint")->check(CLI::ExistingFile);

  FinetuneArgs fin;
  auto* f = app.add_subcommand("finetune", "supervised training on paired data");
  add_common(f, fin.common, true);
  f->add_option("--vocab", fin.vocab, "vocabulary file");
  f->add_option("--train", fin.train, "training pairs (.tsv)");
  f->add_option("--valid", fin.valid, "validation pairs (.tsv)");
  f->add_option("--out", fin.out, "checkpoint to write");
  f->add_option("--init-from", fin.init_from, "initialize shared parameters from this checkpoint")
      ->check(CLI::ExistingFile);
  f->add_option("--limit", fin.limit, "use only the first N training pairs");
  f->add_option("--log", fin.log, "loss log CSV (step,loss,lr,seconds)");

  DecodeArgs dec;
  auto* d = app.add_subcommand("decode", "decode sources with a trained model");
  add_common(d, dec.common, false);
  d->add_option("--vocab", dec.vocab, "vocabulary file");
  d->add_option("--checkpoint", dec.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  d->add_option("--input", dec.input, "sources: .tsv (first column) or one sentence per line");
  d->add_option("--out", dec.out, "output file (default stdout)");
  d->add_option("--beam", dec.beam, "beam width (overrides decode.beam)");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "score hypotheses against references");
  add_common(e, ev.common, false);
  e->add_option("--hyp", ev.hyp, "hypotheses, one per line")->required()->check(CLI::ExistingFile);
  e->add_option("--ref", ev.ref, "references: text lines or .tsv (second column)")->required()->check(CLI::ExistingFile);
  e->add_option("--out", ev.out, "JSON report (default stdout)");
  e->add_option("--csv", ev.csv, "per-sentence CSV");
  e->add_flag("--per-sentence", ev.per_sentence, "include per-sentence rows in the JSON");

  PreviewArgs pv;
  auto* m = app.add_subcommand("mask-preview", "show corrupted pre-training examples as TSV");
  add_common(m, pv.common, true);
  m->add_option("--vocab", pv.vocab, "vocabulary file");
  m->add_option("--input", pv.input, "unpaired sentences");
  m->add_option("--count", pv.count, "number of examples");
  m->add_option("--out", pv.out, "output TSV (default stdout)");

  GradCheckArgs gc;
  auto* g = app.add_subcommand("grad-check", "finite-difference check of the full loss on a toy model (64-bit)");
  add_common(g, gc.common, true);
  g->add_option("--eps", gc.eps, "central-difference step");
  g->add_option("--tol", gc.tol, "maximum accepted relative error");

  ReportArgs rp;
  auto* r = app.add_subcommand("report", "tabulate evaluation results as CSV (pairs x method)");
  add_common(r, rp.common, false);
  r->add_option("--runs", rp.runs, "TSV: method, pairs, evaluate JSON path")->required()->check(CLI::ExistingFile);
  r->add_option("--out", rp.out, "CSV output (default stdout)");
  r->add_option("--metric", rp.metric, "bleu3 | rouge_l | meteor");

  for (auto* sub : app.get_subcommands({})) sub->footer(config_help_text());

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::cerr << "mapgn: error: usage: " << one_line(ex.what()) << "\n";
    return static_cast<int>(ExitCode::kConfig);
  }

  try {
    if (*s) return run_synth(synth);
    if (*v) return run_build_vocab(voc);
    if (*p) return run_pretrain(pre);
    if (*f) return run_finetune(fin);
    if (*d) return run_decode(dec);
    if (*e) return run_evaluate(ev);
    if (*m) return run_mask_preview(pv);
    if (*g) return run_grad_check(gc);
    if (*r) return run_report(rp);
  } catch (const Error& ex) {
    std::cerr << "mapgn: error: " << ex.kind() << ": " << one_line(ex.what()) << "\n";
    return static_cast<int>(ex.code());
  } catch (const std::exception& ex) {
    std::cerr << "mapgn: error: internal: " << one_line(ex.what()) << "\n";
    return static_cast<int>(ExitCode::kInternal);
  }
  return static_cast<int>(ExitCode::kInternal);
}
