#ifndef CLINPROMPT_SYNTH_H_
#define CLINPROMPT_SYNTH_H_

#include <cstdint>
#include <string>
#include <vector>

#include "clinprompt/task.h"

namespace clinprompt {

struct SyntheticSpec {
  TaskKind task = TaskKind::kConceptExtraction;
  size_t count = 0;
  uint64_t seed = 7;
};

// Template-filled snippets shaped like real notes for the task, with gold
// offsets exact by construction. Entity surfaces are drawn so that each
// occurs once per snippet. Deterministic in the seed.
std::vector<TaskInstance> generate_synthetic(const SyntheticSpec& spec, const Lexicon& lexicon);

// Label-copy task: input "<Label>: <word>", target the one-clause concept
// answer "The extracted <label> entity is <word> .".
std::vector<TaskInstance> generate_label_copy(size_t count, uint64_t seed, const Lexicon& lexicon);

// Pretraining text for the label-copy task: one line per example, mixing
// "<Label>: <word>" followed by the concept answer with two other
// continuations, so the answer format has to be selected by a prompt.
std::string label_copy_corpus(size_t lines, uint64_t seed);

}  // namespace clinprompt

#endif  // CLINPROMPT_SYNTH_H_
