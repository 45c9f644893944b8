#ifndef CLINPROMPT_GPT_H_
#define CLINPROMPT_GPT_H_

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "clinprompt/checkpoint.h"
#include "clinprompt/tensor.h"

namespace clinprompt {

class Rng;

struct ModelConfig {
  size_t vocab_size = 512;
  size_t d_model = 64;
  size_t n_layers = 2;
  size_t n_heads = 2;
  size_t d_ff = 256;
  size_t max_seq_len = 128;
  bool tied_head = true;
  double dropout = 0.0;  // only applied during pretraining
  double ln_eps = 1e-5;

  // Throws ContractError for non-positive sizes or d_model % n_heads != 0.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct BlockWeights {
  Tensor ln1_gain, ln1_bias;
  Tensor attn_w, attn_b;  // [e x 3e], fused q/k/v
  Tensor proj_w, proj_b;  // [e x e]
  Tensor ln2_gain, ln2_bias;
  Tensor fc_w, fc_b;      // [e x d_ff]
  Tensor out_w, out_b;    // [d_ff x e]
};

struct ModelWeights {
  ModelConfig config;
  Tensor token_embedding;     // [V x e]
  Tensor position_embedding;  // [max_seq_len x e]
  std::vector<BlockWeights> blocks;
  Tensor lnf_gain, lnf_bias;
  Tensor lm_head;  // [V x e], undefined when tied to token_embedding

  // Every parameter with a stable name, in serialization order.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  void set_requires_grad(bool v) const;
  // Independent copy sharing no storage.
  ModelWeights clone() const;
};

// GPT-2 style initialization: N(0, 0.02^2) weights, residual projections
// scaled by 1/sqrt(2 * n_layers), zero biases, unit layer-norm gains.
ModelWeights init_weights(const ModelConfig& config, uint64_t seed);

// Token embedding rows for `tokens`; positions are not added.
Tensor embed(std::span<const int> tokens, const ModelWeights& weights);
// Adds position rows offset..offset+L-1 to `x`.
Tensor add_positions(const Tensor& x, const ModelWeights& weights,
                     size_t offset = 0);

// Causal transformer stack; input rows must already carry positions.
// Returns logits [L x V]. `dropout_rng` enables dropout when the config asks
// for it.
Tensor forward(const Tensor& input_embeddings, const ModelWeights& weights,
               Rng* dropout_rng = nullptr);

struct PretrainOptions {
  size_t steps = 500;
  double lr = 3e-3;
  uint64_t seed = 1234;
  size_t batch_size = 4;
  size_t block_len = 0;  // 0 means max_seq_len
  double holdout_fraction = 0.1;
};

struct PretrainResult {
  ModelWeights weights;
  std::vector<std::pair<size_t, double>> loss_log;  // step, mean batch loss
  double initial_heldout_loss = 0.0;
  double final_heldout_loss = 0.0;
};

// Next-token training on random windows of the concatenated corpus. The last
// holdout_fraction of the token stream is never trained on and is used to
// report held-out loss before and after.
PretrainResult pretrain_lm(const std::vector<std::vector<int>>& corpus,
                           const ModelConfig& config,
                           const PretrainOptions& options);

// Mean per-token next-token loss over non-overlapping windows of `stream`.
double heldout_loss(std::span<const int> stream, const ModelWeights& weights,
                    size_t block_len);

// Greedy continuation of an un-positioned prefix. Positions 0..L-1 are added
// here. Stops after emitting `stop_token` (included in the result) or after
// `max_new_tokens`. Ties go to the lowest token id.
std::vector<int> generate_greedy(const Tensor& prefix_embeddings,
                                 const ModelWeights& weights,
                                 size_t max_new_tokens, int stop_token);

// SHA-256 over the serialized weight arrays.
std::string weights_digest(const ModelWeights& weights);

Checkpoint model_to_checkpoint(const ModelWeights& weights);
ModelWeights model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace clinprompt

#endif  // CLINPROMPT_GPT_H_
