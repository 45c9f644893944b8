#ifndef CLINPROMPT_EVAL_H_
#define CLINPROMPT_EVAL_H_

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clinprompt/codec.h"
#include "clinprompt/task.h"

namespace clinprompt {

struct Counts {
  size_t tp = 0, fp = 0, fn = 0;

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const Counts&) const = default;
};

struct Prf {
  double precision = 0, recall = 0, f1 = 0;
};

// Zero denominators give 0.
Prf prf(const Counts& c);

enum class MatchMode { kStrict, kRelaxed };
std::string_view match_mode_name(MatchMode m);
MatchMode parse_match_mode(std::string_view name);

using CategoryCounts = std::map<std::string, Counts>;

Counts sum(const CategoryCounts& by_category);
void accumulate(CategoryCounts& into, const CategoryCounts& add);

// Greedy one-to-one matching: gold in order of start offset, each taking the
// leftmost unmatched prediction that matches. Strict needs identical spans,
// relaxed any overlap; labels must agree in both. True positives and misses
// count under the gold label, false alarms under the predicted label.
CategoryCounts match_concepts(const std::vector<ConceptAnnotation>& gold,
                              const std::vector<ConceptAnnotation>& pred, MatchMode mode);

// Both arguments strict, label equal. No-relation pairs are not scored.
CategoryCounts match_relations(const std::vector<RelationAnnotation>& gold,
                               const std::vector<RelationAnnotation>& pred);

// CUI equal and mention matching under `mode`. One category, "CUI".
CategoryCounts score_normalization(const std::vector<NormalizationAnnotation>& gold,
                                   const std::vector<NormalizationAnnotation>& pred,
                                   MatchMode mode);

// Fraction of equal positions; ContractError on unequal lengths, 0 when empty.
double accuracy(const std::vector<std::string>& gold, const std::vector<std::string>& pred);

// Per-instance counts for any task. Classification-style tasks count a right
// label as TP and a wrong one as FP (predicted label) plus FN (gold label).
CategoryCounts score_instance(TaskKind kind, const Annotations& gold, const Annotations& pred,
                              MatchMode mode);

struct EvalReport {
  TaskKind task = TaskKind::kConceptExtraction;
  MatchMode mode = MatchMode::kStrict;
  size_t instances = 0;
  CategoryCounts categories;
  Counts micro;
  Prf micro_prf;
  std::optional<double> accuracy;
  std::array<size_t, 4> status_counts{};  // indexed by OutputStatus
  size_t ambiguous_cuis = 0;

  std::string to_text() const;  // key=value lines
  std::string to_tsv() const;   // category, TP, FP, FN, P, R, F1; last row MICRO
};

// Sums the category counts and fills micro and micro_prf.
EvalReport micro_prf(const CategoryCounts& by_category);

// Scores generated texts against gold. `generated[i]` belongs to
// `instances[i]`. Irrelevant and Nonlogical outputs contribute no
// predictions.
EvalReport evaluate(TaskKind task, const std::vector<TaskInstance>& instances,
                    const std::vector<std::string>& generated, MatchMode mode,
                    const Lexicon& lexicon);

}  // namespace clinprompt

#endif  // CLINPROMPT_EVAL_H_
