#ifndef CLINPROMPT_TASK_H_
#define CLINPROMPT_TASK_H_

#include <array>
#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace clinprompt {

enum class TaskKind {
  kConceptExtraction,
  kRelationExtraction,
  kConceptNormalization,
  kAbbreviationWsd,
  kNli,
  kMedicationAttributes,
  kProgressNote,
};

inline constexpr std::array<TaskKind, 7> kAllTasks = {
    TaskKind::kConceptExtraction,    TaskKind::kRelationExtraction,
    TaskKind::kConceptNormalization, TaskKind::kAbbreviationWsd,
    TaskKind::kNli,                  TaskKind::kMedicationAttributes,
    TaskKind::kProgressNote};

// Short names used on the command line and in instance files: concept,
// relation, normalization, wsd, nli, medication, progress.
std::string_view task_name(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

inline constexpr size_t kUnanchored = std::numeric_limits<size_t>::max();

// Character span [start, end) of the source text. A prediction whose surface
// could not be found in the source is unanchored and never matches gold.
struct Span {
  size_t start = kUnanchored;
  size_t end = kUnanchored;
  std::string text;

  bool anchored() const { return start != kUnanchored; }
  bool overlaps(const Span& o) const {
    return anchored() && o.anchored() && start < o.end && o.start < end;
  }
  bool operator==(const Span&) const = default;
};

struct ConceptAnnotation {
  Span span;
  std::string label;
  bool operator==(const ConceptAnnotation&) const = default;
};

struct RelationAnnotation {
  Span arg1;
  Span arg2;
  std::string label;
  bool operator==(const RelationAnnotation&) const = default;
};

struct NormalizationAnnotation {
  Span mention;
  std::string cui;
  std::string preferred_name;
  bool operator==(const NormalizationAnnotation&) const = default;
};

struct SenseAnnotation {
  Span abbreviation;
  std::string sense;
  bool operator==(const SenseAnnotation&) const = default;
};

// Event label plus, for Disposition events, one value per context dimension
// in medication_dimensions() order.
struct MedicationAnnotation {
  Span mention;
  std::string event;
  std::vector<std::pair<std::string, std::string>> context;
  bool operator==(const MedicationAnnotation&) const = default;
};

// Gold or predicted structure. Only the member matching the task is used;
// NLI and progress-note tasks use `labels` (one entry per instance).
struct Annotations {
  std::vector<ConceptAnnotation> concepts;
  std::vector<RelationAnnotation> relations;
  std::vector<NormalizationAnnotation> normalizations;
  std::vector<SenseAnnotation> senses;
  std::vector<MedicationAnnotation> medications;
  std::vector<std::string> labels;

  bool empty() const;
  bool operator==(const Annotations&) const = default;
};

// One example. `source_text` is the snippet, premise, medication context or
// assessment; `second_text` is the hypothesis or plan (empty otherwise).
// `input_text` and `target_text` are derived from the rest by the codec.
struct TaskInstance {
  std::string id;
  TaskKind kind = TaskKind::kConceptExtraction;
  std::string source_text;
  std::string second_text;
  Annotations gold;
  std::string input_text;
  std::string target_text;
  bool operator==(const TaskInstance&) const = default;
};

// ---- label inventories ----------------------------------------------------

inline constexpr std::string_view kNoRelation = "No-relation";
inline constexpr std::string_view kDisposition = "Disposition";

const std::vector<std::string>& concept_labels();
// Medication attribute relations ("<Attribute>-Drug"), social-history
// relations, and No-relation.
const std::vector<std::string>& relation_labels();
const std::vector<std::string>& nli_labels();
const std::vector<std::string>& progress_labels();
const std::vector<std::string>& medication_event_labels();

struct ContextDimension {
  std::string name;
  std::vector<std::string> values;
};
// Action, Negation, Temporality, Certainty, Actor.
const std::vector<ContextDimension>& medication_dimensions();

// Known abbreviations and their admissible senses. Abbreviations missing
// from this table accept any non-empty sense.
const std::map<std::string, std::vector<std::string>>& abbreviation_senses();

// Case-insensitive lookup of `label` in `inventory`; returns the canonical
// spelling or nullptr.
const std::string* find_label(const std::vector<std::string>& inventory,
                              std::string_view label);

// ---- normalization lexicon ------------------------------------------------

inline constexpr std::string_view kNoCui = "NoCUI";

struct CuiLookup {
  std::string cui = std::string(kNoCui);
  bool ambiguous = false;
  bool found() const { return cui != kNoCui; }
};

// CUI <-> preferred-name table. File format: "CUI<TAB>preferred name" per
// line; blank lines and lines starting with '#' are skipped.
class Lexicon {
 public:
  static Lexicon builtin();
  static Lexicon parse(std::string_view text);
  static Lexicon load(const std::string& path);

  // Throws ContractError for a malformed CUI or a CUI already bound to a
  // different name.
  void add(const std::string& cui, const std::string& name);
  // Case-insensitive exact match. Several CUIs for one name resolve to the
  // lowest and are flagged ambiguous.
  CuiLookup lookup(std::string_view name) const;
  // nullptr when the CUI is unknown.
  const std::string* preferred_name(std::string_view cui) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
  std::string serialize() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::vector<std::string>, std::less<>> by_name_;
  std::map<std::string, std::string, std::less<>> by_cui_;
};

bool is_cui(std::string_view s);

}  // namespace clinprompt

#endif  // CLINPROMPT_TASK_H_
