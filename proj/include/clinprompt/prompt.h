#ifndef CLINPROMPT_PROMPT_H_
#define CLINPROMPT_PROMPT_H_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clinprompt/checkpoint.h"
#include "clinprompt/gpt.h"
#include "clinprompt/lstm.h"
#include "clinprompt/tensor.h"

namespace clinprompt {

enum class InitMode { kDirect, kLstmReparam };

std::string_view init_mode_name(InitMode mode);
InitMode parse_init_mode(std::string_view name);

// Trainable prefix of `length` embedding rows. In Direct mode `direct` is the
// parameter. In LstmReparam mode the rows are computed from a seed matrix by
// a bidirectional LSTM followed by a linear projection back to `width`.
struct SoftPrompt {
  InitMode mode = InitMode::kDirect;
  size_t length = 0;
  size_t width = 0;

  Tensor direct;      // [p x e]
  Tensor seed;        // [p x e]
  BiLstmWeights lstm;  // hidden size e in each direction
  Tensor proj_w;      // [2e x e]
  Tensor proj_b;      // [1 x e]

  // Direct: P_e ~ N(0, 0.02^2). LstmReparam: every component random.
  static SoftPrompt init(InitMode mode, size_t length, size_t width, uint64_t seed);

  // P_e [p x e]. Differentiable with respect to parameters().
  Tensor materialize() const;
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  SoftPrompt clone() const;
  // Direct-mode prompt holding the current P_e.
  SoftPrompt collapse() const;
};

// [P_e; X_e]. Positions are not added.
Tensor compose(const Tensor& prompt_rows, const Tensor& input_embeddings);
Tensor compose(const SoftPrompt& prompt, const Tensor& input_embeddings);

// One training pair. `target` ends with the end-of-sequence token.
struct TuningSample {
  std::string id;
  std::vector<int> input;
  std::vector<int> target;
};

struct TuningConfig {
  size_t prompt_len = 20;
  double lr = 3e-3;
  size_t steps = 300;
  size_t batch_size = 4;
  uint64_t seed = 1234;
  InitMode init_mode = InitMode::kDirect;
  size_t max_target_len = 0;  // 0: bounded only by max_seq_len
};

// Model input for one sample, positions included, with next-token targets.
// Only rows predicting target tokens are set in `mask`; other targets are
// kPadId placeholders.
struct PromptedSequence {
  Tensor input;
  std::vector<int> targets;
  std::vector<bool> mask;
};

PromptedSequence build_sequence(const Tensor& prompt_rows,
                                const TuningSample& sample,
                                const ModelWeights& weights);

// Mean cross-entropy over the sample's target tokens.
Tensor sample_loss(const Tensor& prompt_rows, const TuningSample& sample,
                   const ModelWeights& weights);

// Token-weighted mean target loss over `samples`, without recording a tape.
double dataset_loss(const SoftPrompt& prompt, std::span<const TuningSample> samples,
                    const ModelWeights& weights);

// Throws ContractError naming the first sample that does not fit.
void check_samples_fit(std::span<const TuningSample> samples, size_t prompt_len,
                       const ModelConfig& config, size_t max_target_len = 0);

struct TuningResult {
  SoftPrompt prompt;
  std::vector<std::pair<size_t, double>> loss_log;  // step, batch loss
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Adam on the prompt parameters only, over fixed-seed shuffled minibatches.
// The model's weights are left untouched and this is checked by digest.
TuningResult tune(const ModelWeights& model, const SoftPrompt& prompt,
                  std::span<const TuningSample> samples, const TuningConfig& config);

struct InferResult {
  std::vector<int> tokens;  // without the end-of-sequence token
  bool truncated = false;   // budget ran out before end-of-sequence
};

// Greedy decoding after [P_e; embed(input)]. The budget is clamped to the
// room left in max_seq_len.
InferResult infer(const ModelWeights& model, const SoftPrompt& prompt,
                  std::span<const int> input, size_t max_new_tokens);

Checkpoint prompt_to_checkpoint(const SoftPrompt& prompt);
SoftPrompt prompt_from_checkpoint(const Checkpoint& ckpt);

}  // namespace clinprompt

#endif  // CLINPROMPT_PROMPT_H_
