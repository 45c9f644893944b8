#include "clinprompt/gpt.h"

#include <algorithm>
#include <cmath>

#include "clinprompt/error.h"
#include "clinprompt/optim.h"
#include "clinprompt/rng.h"

namespace clinprompt {
namespace {

Tensor causal_self_attention(const Tensor& x, const BlockWeights& b,
                             size_t n_heads) {
  const size_t e = x.cols();
  const size_t dh = e / n_heads;
  const Tensor qkv = add_bias(matmul(x, b.attn_w), b.attn_b);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> heads;
  heads.reserve(n_heads);
  for (size_t h = 0; h < n_heads; ++h) {
    const Tensor q = slice_cols(qkv, h * dh, (h + 1) * dh);
    const Tensor k = slice_cols(qkv, e + h * dh, e + (h + 1) * dh);
    const Tensor v = slice_cols(qkv, 2 * e + h * dh, 2 * e + (h + 1) * dh);
    const Tensor att = causal_softmax(scale(matmul_nt(q, k), inv_sqrt));
    heads.push_back(matmul(att, v));
  }
  const Tensor merged = n_heads == 1 ? heads[0] : concat_cols(heads);
  return add_bias(matmul(merged, b.proj_w), b.proj_b);
}

// Concatenated token stream, one document after another.
std::vector<int> flatten(const std::vector<std::vector<int>>& corpus) {
  std::vector<int> stream;
  for (const auto& doc : corpus) stream.insert(stream.end(), doc.begin(), doc.end());
  return stream;
}

// Mean next-token loss of one window stream[begin, begin+len].
Tensor window_loss(std::span<const int> stream, size_t begin, size_t len,
                   const ModelWeights& w, Rng* dropout_rng) {
  const std::span<const int> inputs = stream.subspan(begin, len);
  const std::span<const int> targets = stream.subspan(begin + 1, len);
  const Tensor x = add_positions(embed(inputs, w), w);
  const Tensor logits = forward(x, w, dropout_rng);
  return cross_entropy(logits, targets, std::vector<bool>(len, true));
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size == 0 || d_model == 0 || n_layers == 0 || n_heads == 0 ||
      d_ff == 0 || max_seq_len == 0) {
    throw ContractError("model config sizes must all be positive");
  }
  if (d_model % n_heads != 0) {
    throw ContractError("d_model " + std::to_string(d_model) +
                        " is not divisible by n_heads " +
                        std::to_string(n_heads));
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ContractError("dropout must be in [0, 1)");
  }
}

std::vector<std::pair<std::string, Tensor>> ModelWeights::named_parameters()
    const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("wte", token_embedding);
  out.emplace_back("wpe", position_embedding);
  for (size_t i = 0; i < blocks.size(); ++i) {
    const BlockWeights& b = blocks[i];
    const std::string p = "h" + std::to_string(i) + ".";
    out.emplace_back(p + "ln1.g", b.ln1_gain);
    out.emplace_back(p + "ln1.b", b.ln1_bias);
    out.emplace_back(p + "attn.w", b.attn_w);
    out.emplace_back(p + "attn.b", b.attn_b);
    out.emplace_back(p + "proj.w", b.proj_w);
    out.emplace_back(p + "proj.b", b.proj_b);
    out.emplace_back(p + "ln2.g", b.ln2_gain);
    out.emplace_back(p + "ln2.b", b.ln2_bias);
    out.emplace_back(p + "fc.w", b.fc_w);
    out.emplace_back(p + "fc.b", b.fc_b);
    out.emplace_back(p + "out.w", b.out_w);
    out.emplace_back(p + "out.b", b.out_b);
  }
  out.emplace_back("lnf.g", lnf_gain);
  out.emplace_back("lnf.b", lnf_bias);
  if (!config.tied_head) out.emplace_back("lm_head", lm_head);
  return out;
}

std::vector<Tensor> ModelWeights::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

void ModelWeights::set_requires_grad(bool v) const {
  for (auto t : parameters()) t.set_requires_grad(v);
}

ModelWeights ModelWeights::clone() const {
  Checkpoint ckpt = model_to_checkpoint(*this);
  return model_from_checkpoint(ckpt);
}

ModelWeights init_weights(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(seed);
  const size_t e = config.d_model;
  const double std = 0.02;
  const double resid_std =
      std / std::sqrt(2.0 * static_cast<double>(config.n_layers));
  ModelWeights w;
  w.config = config;
  w.token_embedding = Tensor::randn(config.vocab_size, e, std, rng);
  w.position_embedding = Tensor::randn(config.max_seq_len, e, std, rng);
  for (size_t l = 0; l < config.n_layers; ++l) {
    BlockWeights b;
    b.ln1_gain = Tensor::ones(1, e);
    b.ln1_bias = Tensor::zeros(1, e);
    b.attn_w = Tensor::randn(e, 3 * e, std, rng);
    b.attn_b = Tensor::zeros(1, 3 * e);
    b.proj_w = Tensor::randn(e, e, resid_std, rng);
    b.proj_b = Tensor::zeros(1, e);
    b.ln2_gain = Tensor::ones(1, e);
    b.ln2_bias = Tensor::zeros(1, e);
    b.fc_w = Tensor::randn(e, config.d_ff, std, rng);
    b.fc_b = Tensor::zeros(1, config.d_ff);
    b.out_w = Tensor::randn(config.d_ff, e, resid_std, rng);
    b.out_b = Tensor::zeros(1, e);
    w.blocks.push_back(std::move(b));
  }
  w.lnf_gain = Tensor::ones(1, e);
  w.lnf_bias = Tensor::zeros(1, e);
  if (!config.tied_head) w.lm_head = Tensor::randn(config.vocab_size, e, std, rng);
  return w;
}

Tensor embed(std::span<const int> tokens, const ModelWeights& weights) {
  if (tokens.size() > weights.config.max_seq_len) {
    throw ContractError("sequence of " + std::to_string(tokens.size()) +
                        " tokens exceeds max_seq_len " +
                        std::to_string(weights.config.max_seq_len));
  }
  return embedding_lookup(weights.token_embedding, tokens);
}

Tensor add_positions(const Tensor& x, const ModelWeights& weights,
                     size_t offset) {
  const size_t len = x.rows();
  if (offset + len > weights.config.max_seq_len) {
    throw ContractError("positions " + std::to_string(offset) + ".." +
                        std::to_string(offset + len - 1) +
                        " exceed max_seq_len " +
                        std::to_string(weights.config.max_seq_len));
  }
  return add(x, slice_rows(weights.position_embedding, offset, offset + len));
}

Tensor forward(const Tensor& input_embeddings, const ModelWeights& weights,
               Rng* dropout_rng) {
  const ModelConfig& cfg = weights.config;
  if (!input_embeddings.defined() || input_embeddings.rows() == 0) {
    throw ContractError("forward: empty input");
  }
  if (input_embeddings.rows() > cfg.max_seq_len) {
    throw ContractError("forward: length " +
                        std::to_string(input_embeddings.rows()) +
                        " exceeds max_seq_len " +
                        std::to_string(cfg.max_seq_len));
  }
  if (input_embeddings.cols() != cfg.d_model) {
    throw DimensionError("forward: input width " +
                         std::to_string(input_embeddings.cols()) +
                         " != d_model " + std::to_string(cfg.d_model));
  }
  const double p = dropout_rng ? cfg.dropout : 0.0;
  Tensor x = input_embeddings;
  for (const BlockWeights& b : weights.blocks) {
    Tensor h = layer_norm(x, b.ln1_gain, b.ln1_bias, cfg.ln_eps);
    h = causal_self_attention(h, b, cfg.n_heads);
    if (p > 0) h = dropout(h, p, *dropout_rng);
    x = add(x, h);
    h = layer_norm(x, b.ln2_gain, b.ln2_bias, cfg.ln_eps);
    h = gelu(add_bias(matmul(h, b.fc_w), b.fc_b));
    h = add_bias(matmul(h, b.out_w), b.out_b);
    if (p > 0) h = dropout(h, p, *dropout_rng);
    x = add(x, h);
  }
  x = layer_norm(x, weights.lnf_gain, weights.lnf_bias, cfg.ln_eps);
  const Tensor& head = cfg.tied_head ? weights.token_embedding : weights.lm_head;
  return matmul_nt(x, head);
}

double heldout_loss(std::span<const int> stream, const ModelWeights& weights,
                    size_t block_len) {
  if (stream.size() < 2) throw ContractError("held-out stream too short");
  NoGradGuard no_grad;
  double total = 0.0;
  size_t count = 0;
  for (size_t begin = 0; begin + 1 < stream.size(); begin += block_len) {
    const size_t len = std::min(block_len, stream.size() - 1 - begin);
    total += window_loss(stream, begin, len, weights, nullptr).item() *
             static_cast<double>(len);
    count += len;
  }
  return total / static_cast<double>(count);
}

PretrainResult pretrain_lm(const std::vector<std::vector<int>>& corpus,
                           const ModelConfig& config,
                           const PretrainOptions& options) {
  const std::vector<int> stream = flatten(corpus);
  if (stream.size() < 4) throw ContractError("pretraining corpus is empty");
  for (int id : stream) {
    if (id < 0 || static_cast<size_t>(id) >= config.vocab_size) {
      throw ContractError("corpus token id " + std::to_string(id) +
                          " outside vocabulary " +
                          std::to_string(config.vocab_size));
    }
  }
  size_t held = static_cast<size_t>(static_cast<double>(stream.size()) *
                                    options.holdout_fraction);
  held = std::clamp<size_t>(held, 2, stream.size() / 2);
  const std::span<const int> train(stream.data(), stream.size() - held);
  const std::span<const int> heldout(stream.data() + train.size(), held);

  size_t block = options.block_len ? options.block_len : config.max_seq_len;
  block = std::min({block, config.max_seq_len, train.size() - 1});

  PretrainResult result{init_weights(config, options.seed), {}, 0.0, 0.0};
  ModelWeights& w = result.weights;
  result.initial_heldout_loss = heldout_loss(heldout, w, block);
  if (options.steps == 0) {
    result.final_heldout_loss = result.initial_heldout_loss;
    return result;
  }

  w.set_requires_grad(true);
  Adam adam(w.parameters(), AdamOptions{.lr = options.lr});
  Rng rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  const size_t max_begin = train.size() - block - 1;
  for (size_t step = 1; step <= options.steps; ++step) {
    adam.zero_grad();
    double batch_loss = 0.0;
    for (size_t b = 0; b < options.batch_size; ++b) {
      const size_t begin = max_begin ? rng.below(max_begin + 1) : 0;
      Tensor loss = window_loss(train, begin, block, w, &rng);
      batch_loss += loss.item();
      backward(scale(loss, 1.0 / static_cast<double>(options.batch_size)));
    }
    adam.step();
    result.loss_log.emplace_back(
        step, batch_loss / static_cast<double>(options.batch_size));
  }
  adam.zero_grad();
  w.set_requires_grad(false);
  result.final_heldout_loss = heldout_loss(heldout, w, block);
  return result;
}

std::vector<int> generate_greedy(const Tensor& prefix_embeddings,
                                 const ModelWeights& weights,
                                 size_t max_new_tokens, int stop_token) {
  std::vector<int> out;
  if (max_new_tokens == 0) return out;
  const size_t len = prefix_embeddings.rows();
  if (len + max_new_tokens > weights.config.max_seq_len) {
    throw ContractError("prefix length " + std::to_string(len) + " + budget " +
                        std::to_string(max_new_tokens) + " exceeds max_seq_len " +
                        std::to_string(weights.config.max_seq_len));
  }
  NoGradGuard no_grad;
  Tensor seq = prefix_embeddings;
  for (size_t step = 0; step < max_new_tokens; ++step) {
    const Tensor logits = forward(add_positions(seq, weights), weights);
    const size_t v = logits.cols();
    const auto row = logits.data().subspan((logits.rows() - 1) * v, v);
    int best = 0;
    for (size_t j = 1; j < v; ++j) {
      if (row[j] > row[best]) best = static_cast<int>(j);
    }
    out.push_back(best);
    if (best == stop_token || step + 1 == max_new_tokens) break;
    const int next[] = {best};
    seq = concat_rows(seq, embed(next, weights));
  }
  return out;
}

std::string weights_digest(const ModelWeights& weights) {
  return sha256_hex(model_to_checkpoint(weights).payload());
}

Checkpoint model_to_checkpoint(const ModelWeights& weights) {
  const ModelConfig& c = weights.config;
  Checkpoint ckpt;
  ckpt.kind = "model";
  ckpt.add_meta("vocab_size", std::to_string(c.vocab_size));
  ckpt.add_meta("d_model", std::to_string(c.d_model));
  ckpt.add_meta("n_layers", std::to_string(c.n_layers));
  ckpt.add_meta("n_heads", std::to_string(c.n_heads));
  ckpt.add_meta("d_ff", std::to_string(c.d_ff));
  ckpt.add_meta("max_seq_len", std::to_string(c.max_seq_len));
  ckpt.add_meta("tied_head", c.tied_head ? "1" : "0");
  for (const auto& [name, t] : weights.named_parameters()) ckpt.add_array(name, t);
  return ckpt;
}

ModelWeights model_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "model") {
    throw ParseError("checkpoint kind is '" + ckpt.kind + "', expected 'model'");
  }
  auto num = [&](const char* key) -> size_t {
    const std::string& v = ckpt.meta_value(key);
    try {
      return std::stoull(v);
    } catch (const std::exception&) {
      throw ParseError(std::string("checkpoint meta ") + key +
                       " is not a number: '" + v + "'");
    }
  };
  ModelConfig c;
  c.vocab_size = num("vocab_size");
  c.d_model = num("d_model");
  c.n_layers = num("n_layers");
  c.n_heads = num("n_heads");
  c.d_ff = num("d_ff");
  c.max_seq_len = num("max_seq_len");
  c.tied_head = ckpt.meta_value("tied_head") == "1";
  c.validate();

  ModelWeights w = init_weights(c, 0);
  for (auto& [name, t] : w.named_parameters()) {
    const NamedArray& a = ckpt.array(name);
    if (a.rows != t.rows() || a.cols != t.cols()) {
      throw CorruptionError("array " + name + " has shape [" +
                            std::to_string(a.rows) + "x" +
                            std::to_string(a.cols) + "], config implies " +
                            t.shape().str());
    }
    std::copy(a.values.begin(), a.values.end(), t.data().begin());
  }
  return w;
}

}  // namespace clinprompt
