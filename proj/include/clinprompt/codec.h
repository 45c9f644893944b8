#ifndef CLINPROMPT_CODEC_H_
#define CLINPROMPT_CODEC_H_

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clinprompt/task.h"

namespace clinprompt {

// Target templates. Arguments are delimited by curly quotes; straight quotes
// are accepted when parsing.
//
//   concept        The extracted {label} entity is {text} ; the extracted ... .
//   relation       The relation between “{arg1}” and “{arg2}” is “{label}”; the
//                  relation between ... .
//   normalization  The normalized string of the disorder concept “{mention}” is
//                  “{preferred name}”; the normalized string ... .
//   wsd            The sense of the abbreviation “{abbreviation}” is “{sense}”.
//   nli            The hypothesis that “{h}” is {label} to the premise that “{p}”.
//   medication     Event Classification: The category of medication event “{m}”
//                  is “{event}”. [Context Classification: The category of
//                  disposition event “{m}” from the dimension of {Dim} is
//                  “{value}”. (once per dimension, Disposition only)]
//   progress       The relation between the given assessment and plan
//                  subsection is {label}.
//
// Concept labels are written in lowercase. Clauses follow offset order. An
// empty concept, relation or normalization set serializes to "".

// Sorts gold into serialization order.
Annotations canonical_order(TaskKind kind, Annotations gold);

// Throws ContractError when spans disagree with the source text, a label is
// outside its inventory, or the annotation shape does not fit the task.
void validate_gold(TaskKind kind, const Annotations& gold, std::string_view source_text,
                   std::string_view second_text, const Lexicon& lexicon);

std::string serialize_target(TaskKind kind, const Annotations& gold,
                             std::string_view source_text, std::string_view second_text);

// Single-pair relation inputs get [s1] .. [e1] around arg1 and [s2] .. [e2]
// around arg2; other relation inputs are the raw text. Throws ContractError
// on an empty source or overlapping marked arguments.
std::string build_input(TaskKind kind, const Annotations& gold, std::string_view source_text,
                        std::string_view second_text);

// Validates, orders the gold and fills input_text and target_text.
TaskInstance make_instance(std::string id, TaskKind kind, std::string source_text,
                           std::string second_text, Annotations gold, const Lexicon& lexicon);

enum class OutputStatus { kWellFormed, kInterpretable, kIrrelevant, kNonlogical };
std::string_view status_name(OutputStatus s);

struct ParsedOutput {
  OutputStatus status = OutputStatus::kWellFormed;
  Annotations predictions;  // empty unless WellFormed or Interpretable
  size_t ambiguous_cuis = 0;
};

// Everything parse_output may know about an instance besides its labels:
// the texts, the argument pairs a relation input marks, and the focus span
// of a WSD or medication input.
struct ParseContext {
  TaskKind kind = TaskKind::kConceptExtraction;
  std::string source_text;
  std::string second_text;
  std::vector<std::pair<Span, Span>> expected_pairs;
  std::vector<Span> focus;
};

ParseContext parse_context(const TaskInstance& instance);

// Total over arbitrary text; throws ContractError only for an empty source.
// Template text parses to WellFormed. Off-template text with a recoverable
// label is Interpretable. Noise (no letters, heavy repetition) is
// Nonlogical. Anything else is Irrelevant.
ParsedOutput parse_output(const ParseContext& context, std::string_view generated,
                          const Lexicon& lexicon);

// parse_output(serialize_target(gold)) reproduces gold exactly.
bool round_trip(const TaskInstance& instance, const Lexicon& lexicon);

// Hallucination heuristics, exposed for tests.
size_t template_keyword_count(std::string_view text);
bool looks_nonlogical(std::string_view text);

// Comparison form of template text: whitespace runs collapsed, no space just
// inside curly quotes, none before '.' or ';'.
std::string normalize_whitespace(std::string_view text);

}  // namespace clinprompt

#endif  // CLINPROMPT_CODEC_H_
