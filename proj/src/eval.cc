#include "clinprompt/eval.h"

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "clinprompt/error.h"
#include "clinprompt/text.h"

namespace clinprompt {
namespace {

bool strict_span(const Span& g, const Span& p) {
  return g.anchored() && p.anchored() && g.start == p.start && g.end == p.end;
}

bool span_matches(const Span& g, const Span& p, MatchMode mode) {
  return mode == MatchMode::kStrict ? strict_span(g, p) : g.overlaps(p);
}

// Greedy matcher shared by the span-based scorers. `key` orders items by
// position, `label` gives the scoring category, `match` decides a pair.
template <typename T, typename Key, typename Label, typename Match>
CategoryCounts greedy(const std::vector<T>& gold, const std::vector<T>& pred, Key key,
                      Label label, Match match) {
  auto order = [&](const std::vector<T>& v) {
    std::vector<size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](size_t a, size_t b) { return key(v[a]) < key(v[b]); });
    return idx;
  };
  const auto gold_order = order(gold);
  const auto pred_order = order(pred);
  std::vector<bool> used(pred.size(), false);
  CategoryCounts out;
  for (size_t gi : gold_order) {
    bool hit = false;
    for (size_t pi : pred_order) {
      if (!used[pi] && match(gold[gi], pred[pi])) {
        used[pi] = true;
        hit = true;
        break;
      }
    }
    ++(hit ? out[label(gold[gi])].tp : out[label(gold[gi])].fn);
  }
  for (size_t pi = 0; pi < pred.size(); ++pi) {
    if (!used[pi]) ++out[label(pred[pi])].fp;
  }
  return out;
}

void score_label(CategoryCounts& out, const std::string& category, const std::string* gold,
                 const std::string* pred) {
  if (gold && pred && *gold == *pred) {
    ++out[category].tp;
    return;
  }
  if (gold) ++out[category].fn;
  if (pred) ++out[category].fp;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

Prf prf(const Counts& c) {
  Prf r;
  if (c.tp + c.fp) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (r.precision + r.recall > 0) r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

std::string_view match_mode_name(MatchMode m) {
  return m == MatchMode::kStrict ? "strict" : "relaxed";
}

MatchMode parse_match_mode(std::string_view name) {
  if (iequals(name, "strict")) return MatchMode::kStrict;
  if (iequals(name, "relaxed") || iequals(name, "relax")) return MatchMode::kRelaxed;
  throw ContractError("unknown match mode '" + std::string(name) + "' (expected strict or relaxed)");
}

Counts sum(const CategoryCounts& by_category) {
  Counts total;
  for (const auto& [_, c] : by_category) total += c;
  return total;
}

void accumulate(CategoryCounts& into, const CategoryCounts& add) {
  for (const auto& [k, c] : add) into[k] += c;
}

CategoryCounts match_concepts(const std::vector<ConceptAnnotation>& gold,
                              const std::vector<ConceptAnnotation>& pred, MatchMode mode) {
  return greedy(
      gold, pred, [](const ConceptAnnotation& c) { return std::pair(c.span.start, c.span.end); },
      [](const ConceptAnnotation& c) { return c.label; },
      [&](const ConceptAnnotation& g, const ConceptAnnotation& p) {
        return g.label == p.label && span_matches(g.span, p.span, mode);
      });
}

CategoryCounts match_relations(const std::vector<RelationAnnotation>& gold,
                               const std::vector<RelationAnnotation>& pred) {
  auto scored = [](const std::vector<RelationAnnotation>& v) {
    std::vector<RelationAnnotation> out;
    for (const auto& r : v) {
      if (r.label != kNoRelation) out.push_back(r);
    }
    return out;
  };
  return greedy(
      scored(gold), scored(pred),
      [](const RelationAnnotation& r) { return std::pair(r.arg1.start, r.arg2.start); },
      [](const RelationAnnotation& r) { return r.label; },
      [](const RelationAnnotation& g, const RelationAnnotation& p) {
        return g.label == p.label && strict_span(g.arg1, p.arg1) && strict_span(g.arg2, p.arg2);
      });
}

CategoryCounts score_normalization(const std::vector<NormalizationAnnotation>& gold,
                                   const std::vector<NormalizationAnnotation>& pred,
                                   MatchMode mode) {
  return greedy(
      gold, pred,
      [](const NormalizationAnnotation& n) { return std::pair(n.mention.start, n.mention.end); },
      [](const NormalizationAnnotation&) { return std::string("CUI"); },
      [&](const NormalizationAnnotation& g, const NormalizationAnnotation& p) {
        return g.cui == p.cui && span_matches(g.mention, p.mention, mode);
      });
}

double accuracy(const std::vector<std::string>& gold, const std::vector<std::string>& pred) {
  if (gold.size() != pred.size()) {
    throw ContractError("accuracy needs equal lengths, got " + std::to_string(gold.size()) +
                        " gold and " + std::to_string(pred.size()) + " predicted labels");
  }
  if (gold.empty()) return 0.0;
  size_t same = 0;
  for (size_t i = 0; i < gold.size(); ++i) same += gold[i] == pred[i];
  return static_cast<double>(same) / static_cast<double>(gold.size());
}

CategoryCounts score_instance(TaskKind kind, const Annotations& gold, const Annotations& pred,
                              MatchMode mode) {
  switch (kind) {
    case TaskKind::kConceptExtraction: return match_concepts(gold.concepts, pred.concepts, mode);
    case TaskKind::kRelationExtraction: return match_relations(gold.relations, pred.relations);
    case TaskKind::kConceptNormalization:
      return score_normalization(gold.normalizations, pred.normalizations, mode);
    case TaskKind::kAbbreviationWsd:
      return greedy(
          gold.senses, pred.senses,
          [](const SenseAnnotation& s) { return std::pair(s.abbreviation.start, s.abbreviation.end); },
          [](const SenseAnnotation&) { return std::string("sense"); },
          [](const SenseAnnotation& g, const SenseAnnotation& p) {
            return g.sense == p.sense && strict_span(g.abbreviation, p.abbreviation);
          });
    case TaskKind::kNli:
    case TaskKind::kProgressNote: {
      CategoryCounts out;
      const std::string* g = gold.labels.empty() ? nullptr : &gold.labels.front();
      const std::string* p = pred.labels.empty() ? nullptr : &pred.labels.front();
      if (g && p && *g == *p) {
        ++out[*g].tp;
      } else {
        if (g) ++out[*g].fn;
        if (p) ++out[*p].fp;
      }
      return out;
    }
    case TaskKind::kMedicationAttributes: {
      CategoryCounts out;
      const MedicationAnnotation* g = gold.medications.empty() ? nullptr : &gold.medications.front();
      const MedicationAnnotation* p = pred.medications.empty() ? nullptr : &pred.medications.front();
      score_label(out, "Event", g ? &g->event : nullptr, p ? &p->event : nullptr);
      for (const auto& dim : medication_dimensions()) {
        auto value = [&](const MedicationAnnotation* m) -> const std::string* {
          if (!m) return nullptr;
          for (const auto& [d, v] : m->context) {
            if (d == dim.name) return &v;
          }
          return nullptr;
        };
        if (value(g) || value(p)) score_label(out, dim.name, value(g), value(p));
      }
      return out;
    }
  }
  return {};
}

EvalReport micro_prf(const CategoryCounts& by_category) {
  EvalReport r;
  r.categories = by_category;
  r.micro = sum(by_category);
  r.micro_prf = prf(r.micro);
  return r;
}

EvalReport evaluate(TaskKind task, const std::vector<TaskInstance>& instances,
                    const std::vector<std::string>& generated, MatchMode mode,
                    const Lexicon& lexicon) {
  if (instances.size() != generated.size()) {
    throw ContractError("have " + std::to_string(instances.size()) + " instances but " +
                        std::to_string(generated.size()) + " generations");
  }
  CategoryCounts counts;
  std::array<size_t, 4> statuses{};
  size_t ambiguous = 0;
  std::vector<std::string> gold_labels, pred_labels;
  for (size_t i = 0; i < instances.size(); ++i) {
    const TaskInstance& inst = instances[i];
    if (inst.kind != task) {
      throw ContractError("instance '" + inst.id + "' is a " + std::string(task_name(inst.kind)) +
                          " instance, expected " + std::string(task_name(task)));
    }
    const ParsedOutput parsed = parse_output(parse_context(inst), generated[i], lexicon);
    ++statuses[static_cast<size_t>(parsed.status)];
    ambiguous += parsed.ambiguous_cuis;
    accumulate(counts, score_instance(task, inst.gold, parsed.predictions, mode));
    if (task == TaskKind::kNli) {
      gold_labels.push_back(inst.gold.labels.empty() ? "" : inst.gold.labels.front());
      pred_labels.push_back(parsed.predictions.labels.empty() ? ""
                                                              : parsed.predictions.labels.front());
    }
  }
  EvalReport r = micro_prf(counts);
  r.task = task;
  r.mode = mode;
  r.instances = instances.size();
  r.status_counts = statuses;
  r.ambiguous_cuis = ambiguous;
  if (task == TaskKind::kNli) r.accuracy = accuracy(gold_labels, pred_labels);
  return r;
}

std::string EvalReport::to_text() const {
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) { out += k + "=" + v + "\n"; };
  kv("task", std::string(task_name(task)));
  kv("mode", std::string(match_mode_name(mode)));
  kv("instances", std::to_string(instances));
  kv("tp", std::to_string(micro.tp));
  kv("fp", std::to_string(micro.fp));
  kv("fn", std::to_string(micro.fn));
  kv("precision", fmt(micro_prf.precision));
  kv("recall", fmt(micro_prf.recall));
  kv("f1", fmt(micro_prf.f1));
  if (accuracy) kv("accuracy", fmt(*accuracy));
  for (OutputStatus s : {OutputStatus::kWellFormed, OutputStatus::kInterpretable,
                         OutputStatus::kIrrelevant, OutputStatus::kNonlogical}) {
    kv("status." + std::string(status_name(s)), std::to_string(status_counts[static_cast<size_t>(s)]));
  }
  kv("ambiguous_cuis", std::to_string(ambiguous_cuis));
  return out;
}

std::string EvalReport::to_tsv() const {
  std::string out = "category\tTP\tFP\tFN\tP\tR\tF1\n";
  auto row = [&](const std::string& name, const Counts& c) {
    const Prf p = prf(c);
    out += name + "\t" + std::to_string(c.tp) + "\t" + std::to_string(c.fp) + "\t" +
           std::to_string(c.fn) + "\t" + fmt(p.precision) + "\t" + fmt(p.recall) + "\t" +
           fmt(p.f1) + "\n";
  };
  for (const auto& [name, c] : categories) row(name, c);
  row("MICRO", micro);
  return out;
}

}  // namespace clinprompt
