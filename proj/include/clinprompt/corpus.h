#ifndef CLINPROMPT_CORPUS_H_
#define CLINPROMPT_CORPUS_H_

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clinprompt/task.h"

namespace clinprompt {

// ---- standoff ---------------------------------------------------------------
//
// Text-bound and relation records only:
//   T{n}<TAB>{Label} {start} {end}<TAB>{surface}
//   R{n}<TAB>{Label} Arg1:T{i} Arg2:T{j}

struct StandoffEntity {
  std::string id;
  std::string label;
  size_t start = 0, end = 0;
  std::string surface;
  bool operator==(const StandoffEntity&) const = default;
};

struct StandoffRelation {
  std::string id;
  std::string label;
  std::string arg1, arg2;  // entity ids
  bool operator==(const StandoffRelation&) const = default;
};

struct StandoffDocument {
  std::string doc_id;
  std::string text;
  std::vector<StandoffEntity> entities;
  std::vector<StandoffRelation> relations;

  const StandoffEntity* entity(std::string_view id) const;
  bool operator==(const StandoffDocument&) const = default;
};

// ParseError with the annotation line number on malformed lines, offsets
// outside the text, surface mismatches, duplicate ids and dangling
// references.
StandoffDocument parse_standoff(std::string doc_id, std::string text, std::string_view annotations);
std::string serialize_standoff(const StandoffDocument& doc);

// Document id is the text file's stem.
StandoffDocument load_standoff(const std::string& text_path, const std::string& ann_path);
void save_standoff(const StandoffDocument& doc, const std::string& text_path,
                   const std::string& ann_path);

// One instance per non-blank line of the document, with annotations rebased
// to the line. Entities crossing a line break are an error; relations whose
// arguments sit on different lines are skipped and counted in `dropped`.
// Concept and relation tasks only.
std::vector<TaskInstance> standoff_to_instances(const StandoffDocument& doc, TaskKind kind,
                                                const Lexicon& lexicon, size_t* dropped = nullptr);

// ---- instance files -------------------------------------------------------
//
// One JSON object per line: id, task, source_text, second_text (optional),
// input_text, gold, target_text. Gold shape by task:
//   concept        [{start, end, text, label}]
//   relation       [{label, arg1: {start, end, text}, arg2: {...}}]
//   normalization  [{start, end, text, cui, preferred_name}]
//   wsd            {start, end, text, sense}
//   nli, progress  {label}
//   medication     {start, end, text, event, context: {Action: ..., ...}}

std::string instance_to_json(const TaskInstance& inst);
// Validates the gold and checks input_text and target_text against it.
// Errors name the offending field.
TaskInstance instance_from_json(std::string_view line, const Lexicon& lexicon);

std::string serialize_instances(const std::vector<TaskInstance>& insts);
std::vector<TaskInstance> parse_instances(std::string_view text, const Lexicon& lexicon);
std::vector<TaskInstance> read_instances(const std::string& path, const Lexicon& lexicon);
void write_instances(const std::string& path, const std::vector<TaskInstance>& insts);

// Generation files: one {"id", "generated"} object per line.
using Generation = std::pair<std::string, std::string>;
std::string serialize_generations(const std::vector<Generation>& gens);
std::vector<Generation> parse_generations(std::string_view text);

}  // namespace clinprompt

#endif  // CLINPROMPT_CORPUS_H_
