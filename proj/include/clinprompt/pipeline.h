#ifndef CLINPROMPT_PIPELINE_H_
#define CLINPROMPT_PIPELINE_H_

#include <string>
#include <string_view>
#include <vector>

#include "clinprompt/corpus.h"
#include "clinprompt/gpt.h"
#include "clinprompt/prompt.h"
#include "clinprompt/task.h"
#include "clinprompt/tokenizer.h"

namespace clinprompt {

// The target is encoded with a leading space so that input followed by
// target tokenizes like the same text written on one line.
std::vector<int> encode_target(const Tokenizer& tok, std::string_view target_text);
std::string decode_target(const Tokenizer& tok, const std::vector<int>& ids);

// Pretraining sequences: one per non-blank line, terminated by EOS.
std::vector<std::vector<int>> encode_lines(const Tokenizer& tok, std::string_view text);

std::vector<TuningSample> make_samples(const std::vector<TaskInstance>& instances,
                                       const Tokenizer& tok);

// Greedy generation for every instance, in order.
std::vector<Generation> generate_targets(const ModelWeights& model, const SoftPrompt& prompt,
                                         const Tokenizer& tok,
                                         const std::vector<TaskInstance>& instances,
                                         size_t max_new_tokens);

}  // namespace clinprompt

#endif  // CLINPROMPT_PIPELINE_H_
