#include "clinprompt/prompt.h"

#include <stdexcept>

#include "clinprompt/error.h"
#include "clinprompt/optim.h"
#include "clinprompt/rng.h"
#include "clinprompt/tokenizer.h"

namespace clinprompt {
namespace {

constexpr double kInitStd = 0.02;

// Turns gradient tracking off on the base model for the guard's lifetime.
class FreezeGuard {
 public:
  explicit FreezeGuard(const ModelWeights& model) : params_(model.parameters()) {
    for (auto& t : params_) {
      previous_.push_back(t.requires_grad());
      t.set_requires_grad(false);
    }
  }
  ~FreezeGuard() {
    for (size_t i = 0; i < params_.size(); ++i) params_[i].set_requires_grad(previous_[i]);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<Tensor> params_;
  std::vector<bool> previous_;
};

// [P_e; embed(tokens)], allowing an empty token list.
Tensor prefix_rows(const Tensor& prompt_rows, std::span<const int> tokens,
                   const ModelWeights& weights) {
  if (tokens.empty()) return prompt_rows;
  return compose(prompt_rows, embed(tokens, weights));
}

size_t sequence_length(const TuningSample& s, size_t prompt_len) {
  return prompt_len + s.input.size() + s.target.size();
}

}  // namespace

std::string_view init_mode_name(InitMode mode) {
  return mode == InitMode::kDirect ? "direct" : "lstm";
}

InitMode parse_init_mode(std::string_view name) {
  if (name == "direct" || name == "random") return InitMode::kDirect;
  if (name == "lstm" || name == "lstm-reparam") return InitMode::kLstmReparam;
  throw ContractError("unknown prompt init mode '" + std::string(name) +
                      "' (expected direct or lstm)");
}

SoftPrompt SoftPrompt::init(InitMode mode, size_t length, size_t width, uint64_t seed) {
  if (length == 0 || width == 0) {
    throw ContractError("soft prompt needs positive length and width");
  }
  Rng rng(seed);
  SoftPrompt p;
  p.mode = mode;
  p.length = length;
  p.width = width;
  if (mode == InitMode::kDirect) {
    p.direct = Tensor::randn(length, width, kInitStd, rng, true);
    return p;
  }
  p.seed = Tensor::randn(length, width, 1.0, rng, true);
  p.lstm.forward = LstmWeights::random(width, width, 0.1, rng, true);
  p.lstm.backward = LstmWeights::random(width, width, 0.1, rng, true);
  p.proj_w = Tensor::randn(2 * width, width, kInitStd, rng, true);
  p.proj_b = Tensor::zeros(1, width, true);
  return p;
}

Tensor SoftPrompt::materialize() const {
  if (mode == InitMode::kDirect) return direct;
  return add_bias(matmul(lstm_bidirectional(seed, lstm), proj_w), proj_b);
}

std::vector<std::pair<std::string, Tensor>> SoftPrompt::named_parameters() const {
  if (mode == InitMode::kDirect) return {{"prompt", direct}};
  return {{"seed", seed},
          {"lstm.fwd.w_input", lstm.forward.w_input},
          {"lstm.fwd.w_hidden", lstm.forward.w_hidden},
          {"lstm.fwd.bias", lstm.forward.bias},
          {"lstm.bwd.w_input", lstm.backward.w_input},
          {"lstm.bwd.w_hidden", lstm.backward.w_hidden},
          {"lstm.bwd.bias", lstm.backward.bias},
          {"proj.w", proj_w},
          {"proj.b", proj_b}};
}

std::vector<Tensor> SoftPrompt::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

SoftPrompt SoftPrompt::clone() const { return prompt_from_checkpoint(prompt_to_checkpoint(*this)); }

SoftPrompt SoftPrompt::collapse() const {
  SoftPrompt p;
  p.length = length;
  p.width = width;
  NoGradGuard no_grad;
  p.direct = materialize().clone();
  p.direct.set_requires_grad(true);
  return p;
}

Tensor compose(const Tensor& prompt_rows, const Tensor& input_embeddings) {
  if (prompt_rows.cols() != input_embeddings.cols()) {
    throw DimensionError("prompt width " + std::to_string(prompt_rows.cols()) +
                         " differs from embedding width " +
                         std::to_string(input_embeddings.cols()));
  }
  return concat_rows(prompt_rows, input_embeddings);
}

Tensor compose(const SoftPrompt& prompt, const Tensor& input_embeddings) {
  return compose(prompt.materialize(), input_embeddings);
}

void check_samples_fit(std::span<const TuningSample> samples, size_t prompt_len,
                       const ModelConfig& config, size_t max_target_len) {
  for (const auto& s : samples) {
    if (s.target.empty()) throw ContractError("sample '" + s.id + "' has an empty target");
    if (max_target_len && s.target.size() > max_target_len) {
      throw ContractError("sample '" + s.id + "' target has " + std::to_string(s.target.size()) +
                          " tokens, limit is " + std::to_string(max_target_len));
    }
    const size_t len = sequence_length(s, prompt_len);
    if (len > config.max_seq_len) {
      throw ContractError("sample '" + s.id + "' needs " + std::to_string(len) +
                          " positions (prompt + input + target), max_seq_len is " +
                          std::to_string(config.max_seq_len));
    }
    for (const auto* part : {&s.input, &s.target}) {
      for (int id : *part) {
        if (id < 0 || static_cast<size_t>(id) >= config.vocab_size) {
          throw ContractError("sample '" + s.id + "' has token id " + std::to_string(id) +
                              " outside the model vocabulary");
        }
      }
    }
  }
}

PromptedSequence build_sequence(const Tensor& prompt_rows, const TuningSample& sample,
                                const ModelWeights& weights) {
  if (sample.target.empty()) throw ContractError("sample '" + sample.id + "' has an empty target");
  std::vector<int> fed = sample.input;
  fed.insert(fed.end(), sample.target.begin(), sample.target.end() - 1);
  const size_t p = prompt_rows.rows();
  const size_t len = p + fed.size();
  PromptedSequence seq;
  seq.input = add_positions(prefix_rows(prompt_rows, fed, weights), weights);
  seq.targets.assign(len, kPadId);
  seq.mask.assign(len, false);
  const size_t first = p + sample.input.size() - 1;  // row predicting target[0]
  for (size_t k = 0; k < sample.target.size(); ++k) {
    seq.targets[first + k] = sample.target[k];
    seq.mask[first + k] = true;
  }
  return seq;
}

Tensor sample_loss(const Tensor& prompt_rows, const TuningSample& sample,
                   const ModelWeights& weights) {
  const PromptedSequence seq = build_sequence(prompt_rows, sample, weights);
  return cross_entropy(forward(seq.input, weights), seq.targets, seq.mask);
}

double dataset_loss(const SoftPrompt& prompt, std::span<const TuningSample> samples,
                    const ModelWeights& weights) {
  NoGradGuard no_grad;
  const Tensor rows = prompt.materialize();
  double total = 0.0;
  size_t tokens = 0;
  for (const auto& s : samples) {
    total += sample_loss(rows, s, weights).item() * static_cast<double>(s.target.size());
    tokens += s.target.size();
  }
  return tokens ? total / static_cast<double>(tokens) : 0.0;
}

TuningResult tune(const ModelWeights& model, const SoftPrompt& prompt,
                  std::span<const TuningSample> samples, const TuningConfig& config) {
  if (samples.empty()) throw ContractError("tuning dataset is empty");
  if (config.batch_size == 0) throw ContractError("batch size must be positive");
  if (prompt.width != model.config.d_model) {
    throw DimensionError("prompt width " + std::to_string(prompt.width) +
                         " differs from model width " + std::to_string(model.config.d_model));
  }
  check_samples_fit(samples, prompt.length, model.config, config.max_target_len);

  FreezeGuard frozen(model);
  const std::string digest_before = weights_digest(model);

  TuningResult result;
  result.prompt = prompt.clone();
  result.initial_loss = dataset_loss(result.prompt, samples, model);

  Adam adam(result.prompt.parameters(), AdamOptions{.lr = config.lr});
  Rng rng(config.seed);
  std::vector<size_t> order(samples.size());
  size_t cursor = order.size();
  for (size_t step = 0; step < config.steps; ++step) {
    std::vector<size_t> batch;
    while (batch.size() < config.batch_size) {
      if (cursor == order.size()) {
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    size_t batch_tokens = 0;
    for (size_t i : batch) batch_tokens += samples[i].target.size();

    adam.zero_grad();
    double batch_loss = 0.0;
    for (size_t i : batch) {
      // Same gradient as one right-padded batch with a token-weighted mean:
      // causal attention keeps padding from reaching earlier rows.
      const double w = static_cast<double>(samples[i].target.size()) / batch_tokens;
      const Tensor loss = scale(sample_loss(result.prompt.materialize(), samples[i], model), w);
      backward(loss);
      batch_loss += loss.item();
    }
    adam.step();
    result.loss_log.emplace_back(step + 1, batch_loss);
  }
  result.final_loss = dataset_loss(result.prompt, samples, model);

  if (weights_digest(model) != digest_before) {
    throw std::logic_error("base model weights changed during prompt tuning");
  }
  return result;
}

InferResult infer(const ModelWeights& model, const SoftPrompt& prompt,
                  std::span<const int> input, size_t max_new_tokens) {
  NoGradGuard no_grad;
  const size_t prefix = prompt.length + input.size();
  if (prefix > model.config.max_seq_len) {
    throw ContractError("prompt + input is " + std::to_string(prefix) +
                        " positions, max_seq_len is " + std::to_string(model.config.max_seq_len));
  }
  for (int id : input) {
    if (id < 0 || static_cast<size_t>(id) >= model.config.vocab_size) {
      throw ContractError("input token id " + std::to_string(id) + " outside the model vocabulary");
    }
  }
  const size_t budget = std::min(max_new_tokens, model.config.max_seq_len - prefix);
  InferResult out;
  out.tokens = generate_greedy(prefix_rows(prompt.materialize(), input, model), model, budget, kEosId);
  if (!out.tokens.empty() && out.tokens.back() == kEosId) {
    out.tokens.pop_back();
  } else {
    out.truncated = true;
  }
  return out;
}

Checkpoint prompt_to_checkpoint(const SoftPrompt& prompt) {
  Checkpoint ckpt;
  ckpt.kind = "prompt";
  ckpt.add_meta("p", std::to_string(prompt.length));
  ckpt.add_meta("e", std::to_string(prompt.width));
  ckpt.add_meta("mode", std::string(init_mode_name(prompt.mode)));
  for (const auto& [name, t] : prompt.named_parameters()) ckpt.add_array(name, t);
  return ckpt;
}

SoftPrompt prompt_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "prompt") {
    throw ParseError("checkpoint kind is '" + ckpt.kind + "', expected 'prompt'");
  }
  size_t p = 0, e = 0;
  try {
    p = std::stoull(ckpt.meta_value("p"));
    e = std::stoull(ckpt.meta_value("e"));
  } catch (const std::invalid_argument&) {
    throw ParseError("prompt checkpoint has a non-numeric p or e");
  }
  InitMode mode;
  try {
    mode = parse_init_mode(ckpt.meta_value("mode"));
  } catch (const ContractError& err) {
    throw ParseError(err.what());
  }
  SoftPrompt prompt = SoftPrompt::init(mode, p, e, 0);
  for (auto& [name, t] : prompt.named_parameters()) {
    const NamedArray& a = ckpt.array(name);
    if (a.rows != t.rows() || a.cols != t.cols()) {
      throw ParseError("prompt array " + name + " has shape " + std::to_string(a.rows) + "x" +
                       std::to_string(a.cols) + ", expected " + std::to_string(t.rows()) + "x" +
                       std::to_string(t.cols()));
    }
    std::copy(a.values.begin(), a.values.end(), t.data().begin());
  }
  return prompt;
}

}  // namespace clinprompt
