#include <cmath>
#include <vector>

#include "clinprompt/error.h"
#include "clinprompt/gpt.h"
#include "clinprompt/optim.h"
#include "clinprompt/prompt.h"
#include "clinprompt/rng.h"
#include "clinprompt/tokenizer.h"
#include "doctest.h"
#include "gradcheck.h"

namespace clinprompt {
namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.vocab_size = 32;
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 64;
  c.max_seq_len = 32;
  return c;
}

ModelWeights tiny_model(uint64_t seed) {
  ModelWeights w = init_weights(tiny_config(), seed);
  Rng rng(seed + 100);
  for (auto& t : w.parameters())
    for (auto& v : t.data()) v += 0.3 * rng.normal();
  return w;
}

std::vector<TuningSample> tiny_samples() {
  std::vector<TuningSample> s;
  for (int i = 0; i < 4; ++i) {
    s.push_back({"s" + std::to_string(i), {5 + i, 20, 21}, {10 + i, 12, kEosId}});
  }
  return s;
}

std::string prompt_bytes(const SoftPrompt& p) { return prompt_to_checkpoint(p).serialize(); }

TEST_CASE("compose concatenates prompt rows above the input") {
  Rng rng(1);
  const Tensor prompt = Tensor::randn(2, 4, 1.0, rng);
  const Tensor x = Tensor::randn(3, 4, 1.0, rng);
  const Tensor out = compose(prompt, x);
  CHECK(out.rows() == 5);
  CHECK(out.cols() == 4);
  for (size_t j = 0; j < 4; ++j) {
    CHECK(out.at(2, j) == x.at(0, j));
    CHECK(out.at(0, j) == prompt.at(0, j));
  }
  CHECK_THROWS_AS(compose(prompt, Tensor::zeros(3, 5)), DimensionError);
  CHECK_THROWS_AS(SoftPrompt::init(InitMode::kDirect, 0, 4, 1), ContractError);
}

TEST_CASE("direct init statistics and determinism") {
  const SoftPrompt a = SoftPrompt::init(InitMode::kDirect, 20, 64, 9);
  const SoftPrompt b = SoftPrompt::init(InitMode::kDirect, 20, 64, 9);
  CHECK(prompt_bytes(a) == prompt_bytes(b));
  CHECK(prompt_bytes(a) != prompt_bytes(SoftPrompt::init(InitMode::kDirect, 20, 64, 10)));
  const Tensor p = a.materialize();
  REQUIRE(p.rows() == 20);
  REQUIRE(p.cols() == 64);
  const double n = 20 * 64;
  double mean = 0.0, sq = 0.0;
  for (double v : p.data()) mean += v;
  mean /= n;
  for (double v : p.data()) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / (n - 1));
  CHECK(std::abs(mean) < 3 * 0.02 / std::sqrt(n));
  // The sample standard deviation has spread about sigma / sqrt(2n).
  CHECK(std::abs(sd - 0.02) < 4 * 0.02 / std::sqrt(2 * n));
}

TEST_CASE("lstm reparametrization") {
  SoftPrompt a = SoftPrompt::init(InitMode::kLstmReparam, 5, 8, 3);
  CHECK(prompt_bytes(a) == prompt_bytes(SoftPrompt::init(InitMode::kLstmReparam, 5, 8, 3)));
  const Tensor p = a.materialize();
  CHECK(p.rows() == 5);
  CHECK(p.cols() == 8);
  CHECK(a.parameters().size() == 9);

  const SoftPrompt direct = a.collapse();
  CHECK(direct.mode == InitMode::kDirect);
  for (size_t i = 0; i < p.size(); ++i) CHECK(direct.direct.data()[i] == p.data()[i]);

  for (auto& t : a.parameters())
    for (auto& v : t.data()) v = 0.0;
  const Tensor zero = a.materialize();
  for (double v : zero.data()) CHECK(v == 0.0);
}

TEST_CASE("prompt checkpoint round trip") {
  for (auto mode : {InitMode::kDirect, InitMode::kLstmReparam}) {
    const SoftPrompt a = SoftPrompt::init(mode, 3, 6, 11);
    const std::string bytes = prompt_bytes(a);
    const SoftPrompt b = prompt_from_checkpoint(Checkpoint::parse(bytes));
    CHECK(b.mode == mode);
    CHECK(b.length == 3);
    CHECK(b.width == 6);
    CHECK(prompt_bytes(b) == bytes);
  }
  Checkpoint model_ckpt = model_to_checkpoint(tiny_model(1));
  CHECK_THROWS_AS(prompt_from_checkpoint(model_ckpt), ParseError);
}

TEST_CASE("loss covers target positions only") {
  const ModelWeights w = tiny_model(2);
  const SoftPrompt prompt = SoftPrompt::init(InitMode::kDirect, 3, 16, 4);
  const TuningSample s = tiny_samples()[1];
  PromptedSequence seq = build_sequence(prompt.materialize(), s, w);
  REQUIRE(seq.input.rows() == 3 + 3 + 2);
  std::vector<bool> expected_mask(8, false);
  expected_mask[5] = expected_mask[6] = expected_mask[7] = true;
  CHECK(seq.mask == expected_mask);
  CHECK(seq.targets[5] == 11);
  CHECK(seq.targets[7] == kEosId);

  const Tensor logits = forward(seq.input, w);
  const double base = cross_entropy(logits, seq.targets, seq.mask).item();
  CHECK(base == sample_loss(prompt.materialize(), s, w).item());
  for (size_t i = 0; i < 5; ++i) {
    std::vector<int> changed = seq.targets;
    changed[i] = 17;
    CHECK(cross_entropy(logits, changed, seq.mask).item() == base);
  }
  std::vector<int> changed = seq.targets;
  changed[6] = 17;
  CHECK(cross_entropy(logits, changed, seq.mask).item() != base);
}

TEST_CASE("gradient reaches every prompt parameter") {
  const ModelWeights w = tiny_model(3);
  for (auto mode : {InitMode::kDirect, InitMode::kLstmReparam}) {
    SoftPrompt prompt = SoftPrompt::init(mode, 4, 16, 5);
    backward(sample_loss(prompt.materialize(), tiny_samples()[0], w));
    for (const auto& [name, t] : prompt.named_parameters()) {
      REQUIRE(t.has_grad());
      double biggest = 0.0;
      for (double g : t.grad()) biggest = std::max(biggest, std::abs(g));
      CHECK_MESSAGE(biggest > 0.0, name);
    }
    for (const auto& t : w.parameters()) CHECK(!t.has_grad());
  }
}

TEST_CASE("prompt gradient matches finite differences through the whole model") {
  const ModelWeights w = tiny_model(4);
  const TuningSample s = tiny_samples()[2];
  Rng pick(77);
  for (auto mode : {InitMode::kDirect, InitMode::kLstmReparam}) {
    SoftPrompt prompt = SoftPrompt::init(mode, 4, 16, 6);
    if (mode == InitMode::kDirect) {
      // Larger prompt rows than the init scale so the loss is not flat.
      for (auto& v : prompt.direct.data()) v *= 25.0;
    }
    backward(sample_loss(prompt.materialize(), s, w));
    const auto params = prompt.parameters();
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      Tensor t = params[pick.below(params.size())];
      const size_t i = pick.below(t.size());
      const double saved = t.data()[i], h = 1e-5;
      t.data()[i] = saved + h;
      const double up = sample_loss(prompt.materialize(), s, w).item();
      t.data()[i] = saved - h;
      const double down = sample_loss(prompt.materialize(), s, w).item();
      t.data()[i] = saved;
      worst = std::max(worst, testing::relative_error(t.grad()[i], (up - down) / (2 * h)));
    }
    CHECK_MESSAGE(worst < 1e-3, init_mode_name(mode));
  }
}

TEST_CASE("tune leaves the base model bit-identical and touches only the prompt") {
  ModelWeights w = tiny_model(5);
  w.set_requires_grad(true);
  const std::string before = weights_digest(w);
  const auto samples = tiny_samples();
  const SoftPrompt prompt = SoftPrompt::init(InitMode::kDirect, 4, 16, 7);
  TuningConfig cfg;
  cfg.steps = 20;
  cfg.lr = 0.01;
  cfg.batch_size = 3;
  const TuningResult r = tune(w, prompt, samples, cfg);
  CHECK(weights_digest(w) == before);
  for (const auto& t : w.parameters()) {
    CHECK(t.requires_grad());
    CHECK(!t.has_grad());
  }
  CHECK(r.loss_log.size() == 20);
  CHECK(r.loss_log.front().first == 1);
  CHECK(prompt_bytes(r.prompt) != prompt_bytes(prompt));
  CHECK(prompt.direct.data()[0] == SoftPrompt::init(InitMode::kDirect, 4, 16, 7).direct.data()[0]);

  const TuningResult again = tune(w, prompt, samples, cfg);
  CHECK(prompt_bytes(again.prompt) == prompt_bytes(r.prompt));
  CHECK(again.loss_log == r.loss_log);
}

TEST_CASE("adam on prompt parameters leaves other tensors alone") {
  const ModelWeights w = tiny_model(6);
  const std::string before = weights_digest(w);
  SoftPrompt prompt = SoftPrompt::init(InitMode::kLstmReparam, 3, 16, 8);
  Rng rng(1);
  Tensor bystander = Tensor::randn(4, 4, 1.0, rng, true);
  const std::vector<double> saved(bystander.data().begin(), bystander.data().end());
  auto params = prompt.parameters();
  AdamState state;
  backward(add(sample_loss(prompt.materialize(), tiny_samples()[0], w), sum(bystander)));
  adam_step(params, state, AdamOptions{.lr = 0.1});
  CHECK(weights_digest(w) == before);
  CHECK(std::equal(saved.begin(), saved.end(), bystander.data().begin()));
}

TEST_CASE("tune with zero steps returns the prompt unchanged") {
  const ModelWeights w = tiny_model(7);
  for (auto mode : {InitMode::kDirect, InitMode::kLstmReparam}) {
    const SoftPrompt prompt = SoftPrompt::init(mode, 4, 16, 9);
    TuningConfig cfg;
    cfg.steps = 0;
    const TuningResult r = tune(w, prompt, tiny_samples(), cfg);
    CHECK(prompt_bytes(r.prompt) == prompt_bytes(prompt));
    CHECK(r.loss_log.empty());
    CHECK(r.initial_loss == r.final_loss);
  }
}

TEST_CASE("tune validates its inputs") {
  const ModelWeights w = tiny_model(8);
  const SoftPrompt prompt = SoftPrompt::init(InitMode::kDirect, 4, 16, 9);
  TuningConfig cfg;
  cfg.steps = 1;
  CHECK_THROWS_AS(tune(w, prompt, {}, cfg), ContractError);
  std::vector<TuningSample> big = tiny_samples();
  big[2].input.assign(30, 7);
  try {
    tune(w, prompt, big, cfg);
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("'s2'") != std::string::npos);
  }
  const SoftPrompt narrow = SoftPrompt::init(InitMode::kDirect, 4, 8, 9);
  CHECK_THROWS_AS(tune(w, narrow, tiny_samples(), cfg), DimensionError);
  std::vector<TuningSample> bad = tiny_samples();
  bad[0].target.clear();
  CHECK_THROWS_AS(tune(w, prompt, bad, cfg), ContractError);
  cfg.max_target_len = 2;
  CHECK_THROWS_AS(tune(w, prompt, tiny_samples(), cfg), ContractError);
}

TEST_CASE("infer edge cases") {
  const ModelWeights w = tiny_model(9);
  const SoftPrompt prompt = SoftPrompt::init(InitMode::kDirect, 4, 16, 10);
  const std::vector<int> input{5, 6, 7};
  const InferResult none = infer(w, prompt, input, 0);
  CHECK(none.tokens.empty());
  CHECK(none.truncated);
  const InferResult a = infer(w, prompt, input, 8);
  const InferResult b = infer(w, prompt, input, 8);
  CHECK(a.tokens == b.tokens);
  CHECK(a.truncated == b.truncated);
  CHECK(a.tokens.size() <= 8);
  if (a.truncated) CHECK(a.tokens.size() == 8);
  // The budget shrinks to the room left in the context window.
  const InferResult clamped = infer(w, prompt, input, 1000);
  CHECK(clamped.tokens.size() <= 32 - 7);
  const std::vector<int> empty;
  CHECK_NOTHROW(infer(w, prompt, empty, 3));
  CHECK_THROWS_AS(infer(w, prompt, std::vector<int>(29, 5), 1), ContractError);
}

TEST_CASE("a short tuning run fits a tiny mapping") {
  const ModelWeights w = tiny_model(10);
  const auto samples = tiny_samples();
  TuningConfig cfg;
  cfg.steps = 150;
  cfg.lr = 0.05;
  cfg.batch_size = 4;
  const SoftPrompt prompt = SoftPrompt::init(InitMode::kDirect, 4, 16, 11);
  const TuningResult r = tune(w, prompt, samples, cfg);
  MESSAGE("initial " << r.initial_loss << " final " << r.final_loss);
  CHECK(r.final_loss < 0.5 * r.initial_loss);
}

}  // namespace
}  // namespace clinprompt
