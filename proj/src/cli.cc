#include "clinprompt/cli.h"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <stdexcept>

#include "CLI11.hpp"
#include "clinprompt/checkpoint.h"
#include "clinprompt/corpus.h"
#include "clinprompt/error.h"
#include "clinprompt/eval.h"
#include "clinprompt/gpt.h"
#include "clinprompt/pipeline.h"
#include "clinprompt/prompt.h"
#include "clinprompt/synth.h"
#include "clinprompt/text.h"
#include "clinprompt/tokenizer.h"

namespace clinprompt::cli {
namespace {

namespace fs = std::filesystem;

constexpr uint64_t kDefaultSeed = 1234;
constexpr const char* kCopyTask = "copy";

struct Options {
  std::string task, model, prompt, tokenizer, data, generations, out, lexicon;
  uint64_t seed = kDefaultSeed;

  // tokenizer
  size_t vocab_size = 512;
  std::string tokenizer_mode = "bpe";

  // pretrain
  size_t d_model = 64, layers = 2, heads = 2, d_ff = 256, max_seq_len = 64, block_len = 0;
  double dropout = 0.0;

  // pretrain and tune
  size_t steps = 0, batch = 0;
  double lr = 3e-3;

  // synth
  size_t count = 100;
  std::string format = "jsonl";

  // tune
  size_t prompt_len = 20;
  std::string init_mode = "direct";

  // generate
  size_t max_new_tokens = 64;

  // eval
  std::string mode = "strict";
};

void note(const std::string& msg) { std::cerr << msg << "\n"; }

// Fails before any work when the output cannot be written.
void check_output(const std::string& path) {
  if (path.empty()) throw ContractError("--out is required");
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw ContractError("output directory '" + parent.string() + "' does not exist");
  }
}

Lexicon load_lexicon(const std::string& path) {
  return path.empty() ? Lexicon::builtin() : Lexicon::load(path);
}

std::string loss_log_text(const std::vector<std::pair<size_t, double>>& log) {
  std::string out = "step\tloss\n";
  char buf[64];
  for (const auto& [step, loss] : log) {
    std::snprintf(buf, sizeof buf, "%zu\t%.9g\n", step, loss);
    out += buf;
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<TaskInstance> load_instances(const Options& o, const Lexicon& lex) {
  std::vector<TaskInstance> insts = read_instances(o.data, lex);
  if (insts.empty()) throw ContractError(o.data + " holds no instances");
  if (!o.task.empty()) {
    const TaskKind want = parse_task_kind(o.task);
    for (const auto& i : insts) {
      if (i.kind != want) {
        throw ContractError("instance '" + i.id + "' is a " + std::string(task_name(i.kind)) +
                            " instance but --task is " + std::string(task_name(want)));
      }
    }
  }
  return insts;
}

// ---- subcommands ----------------------------------------------------------

void cmd_tokenizer(const Options& o) {
  check_output(o.out);
  const TokenizerMode mode = parse_tokenizer_mode(o.tokenizer_mode);
  const std::string corpus = read_file(o.data);
  if (trim(corpus).empty()) throw ContractError(o.data + " is empty");
  const Tokenizer tok = Tokenizer::train(corpus, o.vocab_size, mode);
  tok.save(o.out);
  note("tokenizer: " + std::to_string(tok.vocab_size()) + " tokens (" +
       std::string(mode_name(mode)) + ") -> " + o.out);
}

void cmd_pretrain(const Options& o) {
  check_output(o.out);
  const Tokenizer tok = Tokenizer::load(o.tokenizer);
  const auto seqs = encode_lines(tok, read_file(o.data));
  if (seqs.empty()) throw ContractError(o.data + " has no text");
  ModelConfig cfg;
  cfg.vocab_size = tok.vocab_size();
  cfg.d_model = o.d_model;
  cfg.n_layers = o.layers;
  cfg.n_heads = o.heads;
  cfg.d_ff = o.d_ff;
  cfg.max_seq_len = o.max_seq_len;
  cfg.dropout = o.dropout;
  cfg.validate();
  PretrainOptions po;
  po.steps = o.steps;
  po.lr = o.lr;
  po.seed = o.seed;
  po.batch_size = o.batch;
  po.block_len = o.block_len;
  const PretrainResult r = pretrain_lm(seqs, cfg, po);
  save_checkpoint(o.out, model_to_checkpoint(r.weights));
  write_file(o.out + ".loss.tsv", loss_log_text(r.loss_log));
  note("pretrain: held-out loss " + fmt(r.initial_heldout_loss) + " -> " +
       fmt(r.final_heldout_loss) + ", model " + weights_digest(r.weights).substr(0, 16) +
       " -> " + o.out);
}

void cmd_synth(const Options& o) {
  check_output(o.out);
  const Lexicon lex = load_lexicon(o.lexicon);
  const bool copy = o.task == kCopyTask;
  const TaskKind kind = copy ? TaskKind::kConceptExtraction : parse_task_kind(o.task);
  if (o.format != "jsonl" && o.format != "text") {
    throw ContractError("unknown --format '" + o.format + "' (expected jsonl or text)");
  }
  if (o.format == "text") {
    std::string text;
    if (copy) {
      text = label_copy_corpus(o.count, o.seed);
    } else {
      for (const auto& i : generate_synthetic({kind, o.count, o.seed}, lex)) {
        text += i.source_text + "\n";
        if (!i.second_text.empty()) text += i.second_text + "\n";
      }
    }
    write_file(o.out, text);
  } else {
    write_instances(o.out, copy ? generate_label_copy(o.count, o.seed, lex)
                                : generate_synthetic({kind, o.count, o.seed}, lex));
  }
  note("synth: " + std::to_string(o.count) + " " + o.task + " " + o.format + " records -> " + o.out);
}

void cmd_convert(const Options& o) {
  check_output(o.out);
  const Lexicon lex = load_lexicon(o.lexicon);
  const TaskKind kind = parse_task_kind(o.task);
  if (!fs::is_directory(o.data)) throw ContractError("'" + o.data + "' is not a directory");
  std::vector<fs::path> texts;
  for (const auto& entry : fs::directory_iterator(o.data)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") texts.push_back(entry.path());
  }
  std::sort(texts.begin(), texts.end());
  std::vector<TaskInstance> out;
  size_t dropped = 0;
  for (const auto& txt : texts) {
    fs::path ann = txt;
    ann.replace_extension(".ann");
    if (!fs::exists(ann)) throw ContractError("no annotation file for " + txt.string());
    const StandoffDocument doc = load_standoff(txt.string(), ann.string());
    for (auto& inst : standoff_to_instances(doc, kind, lex, &dropped)) out.push_back(std::move(inst));
  }
  write_instances(o.out, out);
  note("convert: " + std::to_string(texts.size()) + " documents, " + std::to_string(out.size()) +
       " instances" + (dropped ? ", " + std::to_string(dropped) + " cross-line relations skipped" : "") +
       " -> " + o.out);
}

void cmd_tune(const Options& o) {
  check_output(o.out);
  const Lexicon lex = load_lexicon(o.lexicon);
  const std::string model_bytes = read_file(o.model);
  const std::string model_sha = sha256_hex(model_bytes);
  const ModelWeights model = model_from_checkpoint(Checkpoint::parse(model_bytes));
  const Tokenizer tok = Tokenizer::load(o.tokenizer);
  if (tok.vocab_size() != model.config.vocab_size) {
    throw ContractError("tokenizer has " + std::to_string(tok.vocab_size()) +
                        " tokens but the model expects " + std::to_string(model.config.vocab_size));
  }
  const auto insts = load_instances(o, lex);
  const auto samples = make_samples(insts, tok);

  TuningConfig tc;
  tc.prompt_len = o.prompt_len;
  tc.lr = o.lr;
  tc.steps = o.steps;
  tc.batch_size = o.batch;
  tc.seed = o.seed;
  tc.init_mode = parse_init_mode(o.init_mode);
  check_samples_fit(samples, tc.prompt_len, model.config);

  const SoftPrompt init = SoftPrompt::init(tc.init_mode, tc.prompt_len, model.config.d_model, tc.seed);
  const TuningResult r = tune(model, init, samples, tc);
  if (sha256_hex(read_file(o.model)) != model_sha) {
    throw std::logic_error("model file changed during tuning");
  }
  Checkpoint ckpt = prompt_to_checkpoint(r.prompt);
  ckpt.add_meta("base_model_sha256", model_sha);
  save_checkpoint(o.out, ckpt);
  write_file(o.out + ".loss.tsv", loss_log_text(r.loss_log));
  note("tune: " + std::to_string(samples.size()) + " samples, loss " + fmt(r.initial_loss) +
       " -> " + fmt(r.final_loss) + ", base model sha256 " + model_sha + " unchanged -> " + o.out);
}

void cmd_generate(const Options& o) {
  check_output(o.out);
  const Lexicon lex = load_lexicon(o.lexicon);
  const std::string model_bytes = read_file(o.model);
  const ModelWeights model = model_from_checkpoint(Checkpoint::parse(model_bytes));
  const Checkpoint pc = load_checkpoint(o.prompt);
  for (const auto& [k, v] : pc.meta) {
    if (k == "base_model_sha256" && v != sha256_hex(model_bytes)) {
      throw ContractError("prompt " + o.prompt + " was tuned on a different base model");
    }
  }
  const SoftPrompt prompt = prompt_from_checkpoint(pc);
  if (prompt.width != model.config.d_model) {
    throw ContractError("prompt width " + std::to_string(prompt.width) + " does not match d_model " +
                        std::to_string(model.config.d_model));
  }
  const Tokenizer tok = Tokenizer::load(o.tokenizer);
  const auto insts = load_instances(o, lex);
  const auto gens = generate_targets(model, prompt, tok, insts, o.max_new_tokens);
  write_file(o.out, serialize_generations(gens));
  note("generate: " + std::to_string(gens.size()) + " generations -> " + o.out);
}

void cmd_eval(const Options& o) {
  check_output(o.out);
  const Lexicon lex = load_lexicon(o.lexicon);
  const TaskKind kind = parse_task_kind(o.task);
  const MatchMode mode = parse_match_mode(o.mode);
  const auto insts = load_instances(o, lex);
  std::map<std::string, std::string> by_id;
  size_t line = 0;
  for (auto& [id, text] : parse_generations(read_file(o.generations))) {
    ++line;
    if (!by_id.emplace(id, std::move(text)).second) {
      throw ContractError(o.generations + ": duplicate generation for '" + id + "'");
    }
  }
  std::vector<std::string> generated;
  for (const auto& inst : insts) {
    auto it = by_id.find(inst.id);
    if (it == by_id.end()) throw ContractError(o.generations + ": no generation for '" + inst.id + "'");
    generated.push_back(std::move(it->second));
    by_id.erase(it);
  }
  if (!by_id.empty()) {
    throw ContractError(o.generations + ": generation for unknown instance '" + by_id.begin()->first + "'");
  }
  const EvalReport report = evaluate(kind, insts, generated, mode, lex);
  write_file(o.out, report.to_text());
  write_file(o.out + ".tsv", report.to_tsv());
  note("eval: " + std::to_string(insts.size()) + " instances, micro P/R/F1 " + fmt(report.micro_prf.precision) +
       " / " + fmt(report.micro_prf.recall) + " / " + fmt(report.micro_prf.f1) + " -> " + o.out);
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Soft prompt tuning of a frozen GPT for clinical text-to-text tasks", "clinprompt"};
  app.set_config("--config", "", "key=value file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1, 1);
  app.fallthrough();
  Options o;

  auto path = [](CLI::App* sub, const char* flag, std::string& target, const char* help) {
    return sub->add_option(flag, target, help)->required()->check(CLI::ExistingPath);
  };

  CLI::App* tokenizer = app.add_subcommand("tokenizer", "train a tokenizer on a text corpus");
  path(tokenizer, "--data", o.data, "corpus text file");
  tokenizer->add_option("--vocab-size", o.vocab_size, "target vocabulary size")->capture_default_str();
  tokenizer->add_option("--tokenizer-mode", o.tokenizer_mode, "bpe or word")->capture_default_str();
  tokenizer->add_option("--out", o.out, "tokenizer file")->required();

  CLI::App* pretrain = app.add_subcommand("pretrain", "pretrain the base language model");
  path(pretrain, "--data", o.data, "corpus text file, one sequence per line");
  path(pretrain, "--tokenizer", o.tokenizer, "tokenizer file");
  pretrain->add_option("--out", o.out, "model checkpoint")->required();
  pretrain->add_option("--steps", o.steps, "optimizer steps")->default_val(1000);
  pretrain->add_option("--lr", o.lr, "learning rate")->capture_default_str();
  pretrain->add_option("--batch", o.batch, "windows per step")->default_val(8);
  pretrain->add_option("--seed", o.seed, "random seed")->capture_default_str();
  pretrain->add_option("--d-model", o.d_model)->capture_default_str();
  pretrain->add_option("--layers", o.layers)->capture_default_str();
  pretrain->add_option("--heads", o.heads)->capture_default_str();
  pretrain->add_option("--d-ff", o.d_ff)->capture_default_str();
  pretrain->add_option("--max-seq-len", o.max_seq_len)->capture_default_str();
  pretrain->add_option("--block-len", o.block_len, "training window, 0 for max-seq-len")->capture_default_str();
  pretrain->add_option("--dropout", o.dropout)->capture_default_str();

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  synth->add_option("--task", o.task, "task name, or copy for the label-copy task")->required();
  synth->add_option("--count", o.count, "instances or lines")->capture_default_str();
  synth->add_option("--seed", o.seed, "random seed")->capture_default_str();
  synth->add_option("--format", o.format, "jsonl instances or plain text")->capture_default_str();
  synth->add_option("--lexicon", o.lexicon, "CUI lexicon file")->check(CLI::ExistingFile);
  synth->add_option("--out", o.out, "output file")->required();

  CLI::App* convert = app.add_subcommand("convert", "convert standoff annotations to instances");
  path(convert, "--data", o.data, "directory of .txt/.ann pairs");
  convert->add_option("--task", o.task, "concept or relation")->required();
  convert->add_option("--lexicon", o.lexicon, "CUI lexicon file")->check(CLI::ExistingFile);
  convert->add_option("--out", o.out, "instance file")->required();

  CLI::App* tune = app.add_subcommand("tune", "tune a soft prompt on a frozen model");
  path(tune, "--model", o.model, "model checkpoint");
  path(tune, "--tokenizer", o.tokenizer, "tokenizer file");
  path(tune, "--data", o.data, "instance file");
  tune->add_option("--task", o.task, "expected task of every instance");
  tune->add_option("--lexicon", o.lexicon, "CUI lexicon file")->check(CLI::ExistingFile);
  tune->add_option("--out", o.out, "prompt checkpoint")->required();
  tune->add_option("--steps", o.steps, "optimizer steps")->default_val(300);
  tune->add_option("--lr", o.lr, "learning rate")->capture_default_str();
  tune->add_option("--batch", o.batch, "samples per step")->default_val(4);
  tune->add_option("--prompt-len", o.prompt_len, "soft prompt rows")->capture_default_str();
  tune->add_option("--init-mode", o.init_mode, "direct or lstm")->capture_default_str();
  tune->add_option("--seed", o.seed, "random seed")->capture_default_str();

  CLI::App* generate = app.add_subcommand("generate", "decode targets with a tuned prompt");
  path(generate, "--model", o.model, "model checkpoint");
  path(generate, "--prompt", o.prompt, "prompt checkpoint");
  path(generate, "--tokenizer", o.tokenizer, "tokenizer file");
  path(generate, "--data", o.data, "instance file");
  generate->add_option("--task", o.task, "expected task of every instance");
  generate->add_option("--lexicon", o.lexicon, "CUI lexicon file")->check(CLI::ExistingFile);
  generate->add_option("--max-new-tokens", o.max_new_tokens)->capture_default_str();
  generate->add_option("--out", o.out, "generation file")->required();

  CLI::App* eval = app.add_subcommand("eval", "score generations against gold");
  eval->add_option("--task", o.task, "task name")->required();
  path(eval, "--data", o.data, "instance file");
  path(eval, "--generations", o.generations, "generation file");
  eval->add_option("--mode", o.mode, "strict or relaxed")->capture_default_str();
  eval->add_option("--lexicon", o.lexicon, "CUI lexicon file")->check(CLI::ExistingFile);
  eval->add_option("--out", o.out, "report file; the table goes to <out>.tsv")->required();

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*tokenizer) cmd_tokenizer(o);
    if (*pretrain) cmd_pretrain(o);
    if (*synth) cmd_synth(o);
    if (*convert) cmd_convert(o);
    if (*tune) cmd_tune(o);
    if (*generate) cmd_generate(o);
    if (*eval) cmd_eval(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace clinprompt::cli
