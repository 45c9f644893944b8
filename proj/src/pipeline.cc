#include "clinprompt/pipeline.h"

#include "clinprompt/text.h"

namespace clinprompt {

std::vector<int> encode_target(const Tokenizer& tok, std::string_view target_text) {
  std::vector<int> ids = tok.encode(" " + std::string(target_text));
  ids.push_back(kEosId);
  return ids;
}

std::string decode_target(const Tokenizer& tok, const std::vector<int>& ids) {
  std::string text = tok.decode(ids);
  if (!text.empty() && text.front() == ' ') text.erase(0, 1);
  return text;
}

std::vector<std::vector<int>> encode_lines(const Tokenizer& tok, std::string_view text) {
  std::vector<std::vector<int>> out;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (trim(line).empty()) continue;
    out.push_back(tok.encode(line));
    out.back().push_back(kEosId);
  }
  return out;
}

std::vector<TuningSample> make_samples(const std::vector<TaskInstance>& instances,
                                       const Tokenizer& tok) {
  std::vector<TuningSample> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    out.push_back({inst.id, tok.encode(inst.input_text), encode_target(tok, inst.target_text)});
  }
  return out;
}

std::vector<Generation> generate_targets(const ModelWeights& model, const SoftPrompt& prompt,
                                         const Tokenizer& tok,
                                         const std::vector<TaskInstance>& instances,
                                         size_t max_new_tokens) {
  std::vector<Generation> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    const InferResult r = infer(model, prompt, tok.encode(inst.input_text), max_new_tokens);
    out.emplace_back(inst.id, decode_target(tok, r.tokens));
  }
  return out;
}

}  // namespace clinprompt
