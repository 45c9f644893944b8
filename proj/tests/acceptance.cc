// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// fails. Usage: acceptance [work-dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "clinprompt/checkpoint.h"
#include "clinprompt/cli.h"
#include "clinprompt/codec.h"
#include "clinprompt/corpus.h"
#include "clinprompt/eval.h"
#include "clinprompt/gpt.h"
#include "clinprompt/pipeline.h"
#include "clinprompt/prompt.h"
#include "clinprompt/rng.h"
#include "clinprompt/synth.h"
#include "clinprompt/text.h"
#include "clinprompt/tokenizer.h"
#include "fixtures.h"
#include "gradcheck.h"

namespace clinprompt {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string printf_str(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void report(int id, const char* name, const std::function<Outcome()>& check) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  failures += !o.pass;
  std::printf("%s %2d %-28s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

ModelConfig small_config() {
  ModelConfig c;
  c.vocab_size = 32;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 64;
  c.max_seq_len = 16;
  return c;
}

ModelWeights perturbed_model(uint64_t seed) {
  ModelWeights w = init_weights(small_config(), seed);
  Rng rng(seed + 1000);
  for (auto& t : w.parameters())
    for (auto& v : t.data()) v += 0.3 * rng.normal();
  return w;
}

// ---- 2 ---------------------------------------------------------------------

double worst_op_error(Rng& rng) {
  using testing::max_gradcheck_error;
  using testing::weighted_sum;
  double worst = 0.0;
  auto note = [&](double e) { worst = std::max(worst, e); };
  for (int trial = 0; trial < 6; ++trial) {
    const size_t m = 1 + rng.below(4), k = 2 + rng.below(3), n = 1 + rng.below(4);
    const Tensor a = Tensor::randn(m, k, 1.0, rng), c = Tensor::randn(m, k, 1.0, rng);
    const Tensor b = Tensor::randn(k, n, 1.0, rng), bt = Tensor::randn(n, k, 1.0, rng);
    const Tensor row = Tensor::randn(1, k, 1.0, rng), gain = Tensor::randn(1, k, 1.0, rng);
    const Tensor wmn = Tensor::randn(m, n, 1.0, rng), wmk = Tensor::randn(m, k, 1.0, rng);
    const Tensor wkm = Tensor::randn(k, m, 1.0, rng);
    const Tensor sq = Tensor::randn(m, m, 1.0, rng), wmm = Tensor::randn(m, m, 1.0, rng);
    using In = std::vector<Tensor>;
    note(max_gradcheck_error({a, b}, [&](const In& x) { return weighted_sum(matmul(x[0], x[1]), wmn); }));
    note(max_gradcheck_error({a, bt}, [&](const In& x) { return weighted_sum(matmul_nt(x[0], x[1]), wmn); }));
    note(max_gradcheck_error({a}, [&](const In& x) { return weighted_sum(transpose(x[0]), wkm); }));
    note(max_gradcheck_error({a, c}, [&](const In& x) { return weighted_sum(add(x[0], x[1]), wmk); }));
    note(max_gradcheck_error({a, c}, [&](const In& x) { return weighted_sum(mul(x[0], x[1]), wmk); }));
    note(max_gradcheck_error({a, row}, [&](const In& x) { return weighted_sum(add_bias(x[0], x[1]), wmk); }));
    note(max_gradcheck_error({a}, [&](const In& x) { return weighted_sum(scale(x[0], 0.7), wmk); }));
    note(max_gradcheck_error({a}, [&](const In& x) { return weighted_sum(gelu(x[0]), wmk); }));
    note(max_gradcheck_error({a}, [&](const In& x) { return weighted_sum(tanh(x[0]), wmk); }));
    note(max_gradcheck_error({a}, [&](const In& x) { return weighted_sum(sigmoid(x[0]), wmk); }));
    note(max_gradcheck_error({a}, [&](const In& x) { return weighted_sum(softmax_rows(x[0]), wmk); }));
    note(max_gradcheck_error({sq}, [&](const In& x) { return weighted_sum(causal_softmax(x[0]), wmm); }));
    note(max_gradcheck_error({a, gain, row}, [&](const In& x) {
      return weighted_sum(layer_norm(x[0], x[1], x[2], 1e-5), wmk);
    }));
    std::vector<int> targets(m);
    std::vector<bool> mask(m, true);
    for (auto& t : targets) t = static_cast<int>(rng.below(k));
    note(max_gradcheck_error({a}, [&](const In& x) { return cross_entropy(x[0], targets, mask); }));
    note(max_gradcheck_error({a, c}, [&](const In& x) {
      return weighted_sum(slice_rows(concat_rows(x[0], x[1]), 1, m + 1), wmk);
    }));
    note(max_gradcheck_error({a, c}, [&](const In& x) {
      const Tensor parts[] = {x[0], x[1]};
      return weighted_sum(slice_cols(concat_cols(parts), 1, k + 1), wmk);
    }));
    const std::vector<int> ids = {0, static_cast<int>(m - 1), 0};
    note(max_gradcheck_error({a}, [&](const In& x) {
      const Tensor r = embedding_lookup(x[0], ids);
      return sum(mul(r, r));
    }));
  }
  return worst;
}

Outcome gradient_fidelity() {
  const ModelWeights w = perturbed_model(4);
  Rng rng(77);
  TuningSample s{"g", {}, {}};
  for (int i = 0; i < 4; ++i) s.input.push_back(4 + static_cast<int>(rng.below(28)));
  for (int i = 0; i < 3; ++i) s.target.push_back(4 + static_cast<int>(rng.below(28)));
  s.target.push_back(kEosId);

  SoftPrompt prompt = SoftPrompt::init(InitMode::kDirect, 4, 16, 6);
  for (auto& v : prompt.direct.data()) v *= 25.0;
  backward(sample_loss(prompt.materialize(), s, w));
  Tensor pe = prompt.direct;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const size_t i = rng.below(pe.size());
    const double saved = pe.data()[i], h = 1e-5;
    pe.data()[i] = saved + h;
    const double up = sample_loss(prompt.materialize(), s, w).item();
    pe.data()[i] = saved - h;
    const double down = sample_loss(prompt.materialize(), s, w).item();
    pe.data()[i] = saved;
    worst = std::max(worst, testing::relative_error(pe.grad()[i], (up - down) / (2 * h)));
  }
  const double ops = worst_op_error(rng);
  return {worst < 1e-3 && ops < 1e-4,
          printf_str("dP_e max rel err %.2e (< 1e-3), per-op max %.2e (< 1e-4)", worst, ops)};
}

// ---- 3 ---------------------------------------------------------------------

Outcome concatenation() {
  Rng rng(3);
  size_t draws = 0, ok = 0;
  for (size_t p : {1, 5, 20}) {
    for (size_t n : {1, 7}) {
      const Tensor pe = Tensor::randn(p, 16, 1.0, rng);
      const Tensor x = Tensor::randn(n, 16, 1.0, rng);
      const Tensor out = compose(pe, x);
      bool same = out.rows() == p + n && out.cols() == 16;
      for (size_t r = 0; same && r < p + n; ++r)
        for (size_t c = 0; c < 16; ++c)
          same = same && out.at(r, c) == (r < p ? pe.at(r, c) : x.at(r - p, c));
      ++draws;
      ok += same;
    }
  }
  return {ok == draws, printf_str("%zu/%zu shape (p+n)xe and rows bit-exact", ok, draws)};
}

// ---- 4 ---------------------------------------------------------------------

Outcome causality() {
  Rng rng(99);
  size_t ok = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const ModelWeights w = perturbed_model(500 + trial);
    const size_t len = 2 + rng.below(15);
    const size_t j = 1 + rng.below(len - 1);
    const Tensor x = Tensor::randn(len, 16, 1.0, rng);
    Tensor y = x.clone();
    for (size_t c = 0; c < 16; ++c) y.at(j, c) += rng.normal();
    const Tensor a = forward(x, w), b = forward(y, w);
    bool same = true;
    for (size_t i = 0; i < j; ++i)
      for (size_t c = 0; c < a.cols(); ++c) same = same && a.at(i, c) == b.at(i, c);
    ok += same;
  }
  return {ok == 50, printf_str("%zu/50 draws with earlier logits bit-identical", ok)};
}

// ---- 5 ---------------------------------------------------------------------

Outcome codec_round_trip() {
  const Lexicon lex = Lexicon::builtin();
  size_t ok = 0, total = 0;
  for (TaskKind k : kAllTasks) {
    for (const auto& inst : generate_synthetic({k, 1000, 2024}, lex)) {
      ok += round_trip(inst, lex);
      ++total;
    }
  }
  return {ok == total && total == 7000, printf_str("%zu/%zu instances", ok, total)};
}

// ---- 6 ---------------------------------------------------------------------

std::vector<std::string> clauses(const std::string& text) {
  std::string t = to_lower(normalize_whitespace(text));
  if (!t.empty() && t.back() == '.') t.pop_back();
  std::vector<std::string> out;
  size_t start = 0;
  for (size_t i = 0; i <= t.size(); ++i) {
    if (i == t.size() || t[i] == ';') {
      out.emplace_back(trim(std::string_view(t).substr(start, i - start)));
      start = i + 1;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome table1() {
  const Lexicon lex = Lexicon::builtin();
  size_t ok = 0, rows = 0;
  std::string bad;
  for (const auto& row : testing::worked_example_rows(lex)) {
    ++rows;
    const bool serialized = clauses(row.instance.target_text) == clauses(row.repaired_answer());
    const ParsedOutput parsed = parse_output(parse_context(row.instance), row.repaired_answer(), lex);
    const bool parsed_back = canonical_order(row.instance.kind, parsed.predictions) == row.instance.gold;
    if (serialized && parsed_back) {
      ++ok;
    } else {
      bad += " " + row.name;
    }
  }
  return {ok == 7 && rows == 7, printf_str("%zu/%zu rows serialize and parse back%s", ok, rows, bad.c_str())};
}

// ---- 7 ---------------------------------------------------------------------

Outcome table3() {
  const Lexicon lex = Lexicon::builtin();
  size_t ok = 0, rows = 0, labels = 0;
  for (const auto& row : testing::hallucination_rows()) {
    ++rows;
    const auto u = testing::unmark(row.marked_input);
    ParseContext ctx;
    ctx.kind = TaskKind::kRelationExtraction;
    ctx.source_text = u.text;
    ctx.expected_pairs = {{u.arg1, u.arg2}};
    const ParsedOutput parsed = parse_output(ctx, row.generated, lex);
    bool good = parsed.status == row.expected;
    if (row.expected == OutputStatus::kInterpretable) {
      const auto& rel = parsed.predictions.relations;
      const bool label_ok = rel.size() == 1 && rel[0].label == row.recovered_label &&
                            rel[0].arg1 == u.arg1 && rel[0].arg2 == u.arg2;
      labels += label_ok;
      good = good && label_ok;
    }
    ok += good;
  }
  return {ok == 6 && rows == 6 && labels == 2,
          printf_str("%zu/%zu rows classified, %zu/2 interpretable labels recovered", ok, rows, labels)};
}

// ---- 8 ---------------------------------------------------------------------

size_t max_matching(const std::vector<ConceptAnnotation>& gold, const std::vector<ConceptAnnotation>& pred) {
  std::vector<bool> used(pred.size(), false);
  std::function<size_t(size_t)> go = [&](size_t g) -> size_t {
    if (g == gold.size()) return 0;
    size_t best = go(g + 1);
    for (size_t p = 0; p < pred.size(); ++p) {
      if (used[p] || gold[g].label != pred[p].label || gold[g].span.start != pred[p].span.start ||
          gold[g].span.end != pred[p].span.end)
        continue;
      used[p] = true;
      best = std::max(best, 1 + go(g + 1));
      used[p] = false;
    }
    return best;
  };
  return go(0);
}

Outcome metric_oracle() {
  Rng rng(8);
  auto draw = [&](size_t n) {
    std::vector<ConceptAnnotation> out;
    for (size_t i = 0; i < n; ++i) {
      const size_t s = rng.below(8);
      out.push_back({{s, s + 1 + rng.below(3), "x"}, rng.below(2) ? "Drug" : "Dosage"});
    }
    return out;
  };
  size_t ok = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto gold = draw(rng.below(7));
    auto pred = draw(rng.below(7));
    for (const auto& g : gold)
      if (pred.size() < 6 && rng.below(2)) pred.push_back(g);
    const Counts got = sum(match_concepts(gold, pred, MatchMode::kStrict));
    const size_t tp = max_matching(gold, pred);
    const Counts want{tp, pred.size() - tp, gold.size() - tp};
    const Prf a = prf(got), b = prf(want);
    ok += got == want && a.precision == b.precision && a.recall == b.recall && a.f1 == b.f1;
  }
  const Prf w = prf(Counts{1, 1, 2});
  const bool worked = w.precision == 0.5 && w.recall == 1.0 / 3.0 && w.f1 == 0.4;
  return {ok == 500 && worked,
          printf_str("%zu/500 equal to exhaustive matching; (1,1,2) -> (%.4f, %.4f, %.4f)", ok, w.precision,
                     w.recall, w.f1)};
}

// ---- 10 --------------------------------------------------------------------

Outcome hallucination_policy() {
  const Lexicon lex = Lexicon::builtin();
  std::string nonlogical;
  for (const auto& row : testing::hallucination_rows())
    if (row.expected == OutputStatus::kNonlogical && nonlogical.empty()) nonlogical = row.generated;
  size_t ok = 0;
  std::string bad;
  for (TaskKind k : kAllTasks) {
    const auto insts = generate_synthetic({k, 20, 10}, lex);
    std::vector<std::string> gens;
    for (const auto& i : insts) gens.push_back(i.target_text);
    size_t victim = 0;
    while (victim < insts.size() && insts[victim].gold.empty()) ++victim;
    const EvalReport clean = evaluate(k, insts, gens, MatchMode::kStrict, lex);
    const EvalReport own = evaluate(k, {insts[victim]}, {gens[victim]}, MatchMode::kStrict, lex);
    gens[victim] = nonlogical;
    const EvalReport hit = evaluate(k, insts, gens, MatchMode::kStrict, lex);
    const bool good = victim < insts.size() && own.micro.tp > 0 &&
                      hit.micro_prf.recall < clean.micro_prf.recall &&
                      hit.micro.fn == clean.micro.fn + own.micro.tp && hit.micro.fp == clean.micro.fp &&
                      hit.status_counts[static_cast<size_t>(OutputStatus::kNonlogical)] == 1;
    ok += good;
    if (!good) bad += " " + std::string(task_name(k));
  }
  return {ok == kAllTasks.size(),
          printf_str("%zu/7 tasks: recall drops, all gold of the instance become FN%s", ok, bad.c_str())};
}

// ---- 1, 9, 11: the label-copy pipeline through the command line ---------------

struct PipelineRun {
  fs::path dir;
  bool ok = false;
  std::string failed_step;
  std::string model_sha_before, model_sha_after;
};

bool step(PipelineRun& r, const std::vector<std::string>& args) {
  if (!r.ok) return false;
  if (cli::run(args) != 0) {
    r.ok = false;
    r.failed_step = args[0];
  }
  return r.ok;
}

PipelineRun run_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  PipelineRun r{dir, true, "", "", ""};
  auto p = [&](const char* f) { return (dir / f).string(); };
  step(r, {"synth", "--task", "copy", "--format", "text", "--count", "3000", "--seed", "11", "--out", p("corpus.txt")});
  step(r, {"tokenizer", "--data", p("corpus.txt"), "--vocab-size", "384", "--out", p("tokenizer.txt")});
  step(r, {"pretrain", "--data", p("corpus.txt"), "--tokenizer", p("tokenizer.txt"), "--steps", "1000", "--lr",
           "3e-3", "--batch", "8", "--seed", "1", "--d-model", "64", "--layers", "2", "--heads", "2", "--d-ff",
           "256", "--max-seq-len", "64", "--out", p("model.ckpt")});
  step(r, {"synth", "--task", "copy", "--count", "16", "--seed", "3", "--out", p("train.jsonl")});
  if (r.ok) r.model_sha_before = sha256_hex(read_file(p("model.ckpt")));
  step(r, {"tune", "--model", p("model.ckpt"), "--tokenizer", p("tokenizer.txt"), "--data", p("train.jsonl"),
           "--task", "concept", "--prompt-len", "20", "--steps", "300", "--lr", "3e-3", "--batch", "4", "--seed",
           "1234", "--init-mode", "direct", "--out", p("prompt.ckpt")});
  if (r.ok) r.model_sha_after = sha256_hex(read_file(p("model.ckpt")));
  step(r, {"generate", "--model", p("model.ckpt"), "--prompt", p("prompt.ckpt"), "--tokenizer", p("tokenizer.txt"),
           "--data", p("train.jsonl"), "--max-new-tokens", "24", "--out", p("generations.jsonl")});
  step(r, {"eval", "--task", "concept", "--mode", "strict", "--data", p("train.jsonl"), "--generations",
           p("generations.jsonl"), "--out", p("report.txt")});
  return r;
}

Outcome frozen_base(const PipelineRun& r) {
  if (!r.ok) return {false, "pipeline failed at " + r.failed_step};
  const auto log = read_file((r.dir / "prompt.ckpt.loss.tsv").string());
  size_t steps = 0;
  for (char c : log) steps += c == '\n';
  --steps;
  return {r.model_sha_before == r.model_sha_after && steps == 300,
          printf_str("sha256 %.16s... before == after across %zu tuning steps", r.model_sha_before.c_str(), steps)};
}

double report_value(const std::string& report, const std::string& key) {
  const size_t at = report.find("\n" + key + "=");
  if (at == std::string::npos) return NAN;
  return std::stod(report.substr(at + key.size() + 2));
}

Outcome learnability(const PipelineRun& r) {
  if (!r.ok) return {false, "pipeline failed at " + r.failed_step};
  auto p = [&](const char* f) { return (r.dir / f).string(); };
  const Lexicon lex = Lexicon::builtin();
  const ModelWeights model = model_from_checkpoint(load_checkpoint(p("model.ckpt")));
  const Tokenizer tok = Tokenizer::load(p("tokenizer.txt"));
  const auto insts = read_instances(p("train.jsonl"), lex);
  const auto samples = make_samples(insts, tok);
  const SoftPrompt init = SoftPrompt::init(InitMode::kDirect, 20, model.config.d_model, 1234);
  const SoftPrompt tuned = prompt_from_checkpoint(load_checkpoint(p("prompt.ckpt")));
  const double before = dataset_loss(init, samples, model);
  const double after = dataset_loss(tuned, samples, model);

  const auto gens = parse_generations(read_file(p("generations.jsonl")));
  size_t exact = 0;
  for (size_t i = 0; i < insts.size() && i < gens.size(); ++i)
    exact += gens[i].first == insts[i].id && gens[i].second == insts[i].target_text;
  const double f1 = report_value(read_file(p("report.txt")), "f1");
  const bool vocab_ok = model.config.vocab_size <= 512 && model.config.n_layers == 2 && model.config.d_model == 64;
  return {vocab_ok && insts.size() == 16 && after < 0.5 * before && exact >= 14 && f1 >= 0.9,
          printf_str("loss %.4f -> %.4f (ratio %.3f < 0.5), exact %zu/16 (>= 14), micro F1 %.4f (>= 0.9)", before,
                     after, after / before, exact, f1)};
}

Outcome determinism(const PipelineRun& a, const PipelineRun& b) {
  if (!a.ok || !b.ok) return {false, "pipeline failed at " + (a.ok ? b.failed_step : a.failed_step)};
  size_t same = 0;
  std::string differ;
  for (const char* f : {"model.ckpt", "prompt.ckpt", "generations.jsonl", "report.txt", "report.txt.tsv"}) {
    const bool eq = read_file((a.dir / f).string()) == read_file((b.dir / f).string());
    same += eq;
    if (!eq) differ += std::string(" ") + f;
  }
  return {same == 5, printf_str("%zu/5 artifacts byte-identical on rerun%s", same, differ.c_str())};
}

}  // namespace
}  // namespace clinprompt

int main(int argc, char** argv) {
  using namespace clinprompt;
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "clinprompt_acceptance";

  auto timed = [](const fs::path& dir) {
    const auto t0 = std::chrono::steady_clock::now();
    PipelineRun r = run_pipeline(dir);
    std::printf("pipeline %s: %.1fs\n", dir.filename().c_str(),
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    return r;
  };
  const PipelineRun first = timed(work / "run1");
  report(1, "frozen base", [&] { return frozen_base(first); });
  report(2, "gradient fidelity", gradient_fidelity);
  report(3, "concatenation semantics", concatenation);
  report(4, "causality", causality);
  report(5, "codec round trip", codec_round_trip);
  report(6, "worked example fixtures", table1);
  report(7, "hallucination fixtures", table3);
  report(8, "metric oracle", metric_oracle);
  report(9, "end-to-end learnability", [&] { return learnability(first); });
  report(10, "hallucination scoring", hallucination_policy);
  const PipelineRun second = timed(work / "run2");
  report(11, "determinism", [&] { return determinism(first, second); });

  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
