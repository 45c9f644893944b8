#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "clinprompt/error.h"
#include "clinprompt/eval.h"
#include "clinprompt/rng.h"
#include "doctest.h"
#include "fixtures.h"

namespace clinprompt {
namespace {

ConceptAnnotation c(size_t s, size_t e, std::string label) {
  return {{s, e, "x"}, std::move(label)};
}

// Maximum bipartite matching by exhaustive search.
size_t max_matching(size_t n_gold, size_t n_pred, const std::function<bool(size_t, size_t)>& ok) {
  std::vector<bool> used(n_pred, false);
  std::function<size_t(size_t)> go = [&](size_t g) -> size_t {
    if (g == n_gold) return 0;
    size_t best = go(g + 1);
    for (size_t p = 0; p < n_pred; ++p) {
      if (used[p] || !ok(g, p)) continue;
      used[p] = true;
      best = std::max(best, 1 + go(g + 1));
      used[p] = false;
    }
    return best;
  };
  return go(0);
}

std::vector<ConceptAnnotation> random_concepts(Rng& rng, size_t n) {
  std::vector<ConceptAnnotation> out;
  for (size_t i = 0; i < n; ++i) {
    const size_t s = rng.below(10);
    out.push_back(c(s, s + 1 + rng.below(4), rng.below(2) ? "Drug" : "Dosage"));
  }
  return out;
}

TEST_CASE("prf formulas and zero convention") {
  const Prf p = prf({1, 1, 2});
  CHECK(p.precision == 0.5);
  CHECK(p.recall == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(p.f1 == doctest::Approx(0.4).epsilon(1e-15));
  const Prf z = prf({0, 0, 0});
  CHECK(z.precision == 0);
  CHECK(z.recall == 0);
  CHECK(z.f1 == 0);

  const EvalReport two = micro_prf({{"a", {1, 0, 0}}, {"b", {0, 1, 1}}});
  CHECK(two.micro == Counts{1, 1, 1});
  CHECK(two.micro_prf.precision == 0.5);
  CHECK(two.micro_prf.recall == 0.5);
  CHECK(two.micro_prf.f1 == 0.5);
}

TEST_CASE("concept matching worked examples") {
  const std::vector<ConceptAnnotation> three = {c(0, 3, "Drug"), c(5, 8, "Dosage"), c(10, 12, "Form")};
  CHECK(sum(match_concepts(three, three, MatchMode::kStrict)) == Counts{3, 0, 0});

  const std::vector<ConceptAnnotation> g = {c(10, 20, "Drug")};
  const std::vector<ConceptAnnotation> p = {c(12, 20, "Drug")};
  CHECK(sum(match_concepts(g, p, MatchMode::kStrict)) == Counts{0, 1, 1});
  CHECK(sum(match_concepts(g, p, MatchMode::kRelaxed)) == Counts{1, 0, 0});

  const std::vector<ConceptAnnotation> abc = {c(0, 1, "A"), c(2, 3, "B"), c(4, 5, "C")};
  const std::vector<ConceptAnnotation> ad = {c(0, 1, "A"), c(6, 7, "D")};
  const CategoryCounts by = match_concepts(abc, ad, MatchMode::kStrict);
  CHECK(sum(by) == Counts{1, 1, 2});
  CHECK(by.at("D").fp == 1);
  CHECK(by.at("B").fn == 1);
  const Prf r = prf(sum(by));
  CHECK(r.f1 == doctest::Approx(0.4).epsilon(1e-15));

  // Relaxed needs equal labels too, and unanchored predictions never match.
  CHECK(sum(match_concepts(g, {c(12, 20, "Form")}, MatchMode::kRelaxed)) == Counts{0, 1, 1});
  CHECK(sum(match_concepts(g, {ConceptAnnotation{{}, "Drug"}}, MatchMode::kRelaxed)) ==
        Counts{0, 1, 1});
}

TEST_CASE("relation matching") {
  auto rel = [](size_t a, size_t b, std::string label) {
    return RelationAnnotation{{a, a + 1, "a"}, {b, b + 1, "b"}, std::move(label)};
  };
  const std::vector<RelationAnnotation> gold = {rel(0, 2, "Dosage-Drug"), rel(4, 2, "Form-Drug"),
                                                rel(6, 2, "Route-Drug"), rel(8, 10, "Dosage-Drug"),
                                                rel(12, 10, "Form-Drug")};
  CHECK(sum(match_relations(gold, gold)) == Counts{5, 0, 0});
  const std::vector<RelationAnnotation> pred = {rel(0, 2, "Dosage-Drug"), rel(4, 2, "Form-Drug"),
                                                rel(6, 2, "Strength-Drug")};
  const Counts cnt = sum(match_relations(gold, pred));
  CHECK(cnt == Counts{2, 1, 3});
  const Prf p = prf(cnt);
  CHECK(p.precision == doctest::Approx(2.0 / 3).epsilon(1e-15));
  CHECK(p.recall == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(p.f1 == doctest::Approx(0.5).epsilon(1e-15));

  CHECK(sum(match_relations({rel(0, 2, "Dosage-Drug")}, {rel(0, 2, "Form-Drug")})) ==
        Counts{0, 1, 1});
  CHECK(sum(match_relations({rel(0, 2, "No-relation")}, {rel(0, 2, "No-relation")})) ==
        Counts{0, 0, 0});
}

TEST_CASE("normalization scoring") {
  auto n = [](size_t s, size_t e, std::string cui) {
    return NormalizationAnnotation{{s, e, "m"}, std::move(cui), ""};
  };
  CHECK(sum(score_normalization({n(0, 5, "C0000001")}, {n(0, 5, "C0000001")},
                                MatchMode::kStrict)) == Counts{1, 0, 0});
  CHECK(sum(score_normalization({n(0, 5, "C0000001")}, {n(0, 5, "C0000002")},
                                MatchMode::kStrict)) == Counts{0, 1, 1});
  CHECK(sum(score_normalization({n(0, 5, "C0000001")}, {n(2, 7, "C0000001")},
                                MatchMode::kRelaxed)) == Counts{1, 0, 0});
  CHECK(sum(score_normalization({n(0, 5, "C0000001")}, {n(2, 7, "C0000001")},
                                MatchMode::kStrict)) == Counts{0, 1, 1});
}

TEST_CASE("accuracy") {
  CHECK(accuracy({"a", "b"}, {"a", "b"}) == 1.0);
  CHECK(accuracy({"a", "b"}, {"b", "a"}) == 0.0);
  CHECK(accuracy({"a", "b", "c", "d"}, {"a", "b", "c", "x"}) == 0.75);
  CHECK_THROWS_AS(accuracy({"a"}, {}), ContractError);
}

TEST_CASE("greedy strict matching equals exhaustive maximum matching") {
  Rng rng(2024);
  size_t relaxed_gaps = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const auto gold = random_concepts(rng, rng.below(7));
    auto pred = random_concepts(rng, rng.below(7));
    for (const auto& g : gold) {
      if (pred.size() < 6 && rng.below(2)) pred.push_back(g);
    }
    for (MatchMode mode : {MatchMode::kStrict, MatchMode::kRelaxed}) {
      const Counts got = sum(match_concepts(gold, pred, mode));
      const size_t best = max_matching(gold.size(), pred.size(), [&](size_t g, size_t p) {
        const Span& a = gold[g].span;
        const Span& b = pred[p].span;
        const bool span_ok = mode == MatchMode::kStrict ? (a.start == b.start && a.end == b.end)
                                                        : (a.start < b.end && b.start < a.end);
        return gold[g].label == pred[p].label && span_ok;
      });
      CHECK(got.tp + got.fn == gold.size());
      CHECK(got.tp + got.fp == pred.size());
      if (mode == MatchMode::kStrict) {
        CAPTURE(trial);
        CHECK(got.tp == best);
      } else {
        CHECK(got.tp <= best);
        relaxed_gaps += got.tp != best;
      }
    }
  }
  MESSAGE("relaxed greedy below maximum matching in " << relaxed_gaps << " of 500 draws");
}

TEST_CASE("metric properties") {
  Rng rng(99);
  for (int trial = 0; trial < 300; ++trial) {
    const auto gold = random_concepts(rng, rng.below(7));
    const auto pred = random_concepts(rng, rng.below(7));
    const Counts strict = sum(match_concepts(gold, pred, MatchMode::kStrict));
    const Counts relaxed = sum(match_concepts(gold, pred, MatchMode::kRelaxed));
    CHECK(relaxed.tp >= strict.tp);
    const Prf p = prf(strict);
    const Prf swapped = prf(sum(match_concepts(pred, gold, MatchMode::kStrict)));
    CHECK(p.precision == swapped.recall);
    CHECK(p.recall == swapped.precision);
    for (double v : {p.precision, p.recall, p.f1}) {
      CHECK(v >= 0);
      CHECK(v <= 1);
    }
    if (p.precision > 0 && p.recall > 0) {
      CHECK(p.f1 <= std::max(p.precision, p.recall) + 1e-15);
      CHECK(p.f1 >= std::min(p.precision, p.recall) - 1e-15);
    }
  }
}

TEST_CASE("classification and medication instance scoring") {
  Annotations g, p;
  g.labels = {"Direct"};
  p.labels = {"Indirect"};
  const CategoryCounts wrong = score_instance(TaskKind::kProgressNote, g, p, MatchMode::kStrict);
  CHECK(wrong.at("Direct").fn == 1);
  CHECK(wrong.at("Indirect").fp == 1);
  CHECK(sum(score_instance(TaskKind::kProgressNote, g, g, MatchMode::kStrict)) == Counts{1, 0, 0});

  Annotations gm, pm;
  gm.medications = {{{0, 3, "abc"}, "Disposition",
                     {{"Action", "Start"}, {"Negation", "NotNegated"}, {"Temporality", "Present"},
                      {"Certainty", "Certain"}, {"Actor", "Physician"}}}};
  pm = gm;
  pm.medications.front().context[0].second = "Stop";
  const CategoryCounts med = score_instance(TaskKind::kMedicationAttributes, gm, pm, MatchMode::kStrict);
  CHECK(sum(med) == Counts{5, 1, 1});
  CHECK(med.at("Action") == Counts{0, 1, 1});
  pm.medications.front().event = "NoDisposition";
  pm.medications.front().context.clear();
  CHECK(sum(score_instance(TaskKind::kMedicationAttributes, gm, pm, MatchMode::kStrict)) ==
        Counts{0, 1, 6});
}

TEST_CASE("evaluate scores gold targets perfectly and penalizes hallucinations") {
  const Lexicon lex = Lexicon::builtin();
  for (const auto& row : testing::worked_example_rows(lex)) {
    CAPTURE(row.name);
    const std::vector<TaskInstance> insts = {row.instance};
    const EvalReport r = evaluate(row.instance.kind, insts, {row.instance.target_text},
                                  MatchMode::kStrict, lex);
    CHECK(r.micro_prf.f1 == 1.0);
    CHECK(r.micro.fp == 0);
    CHECK(r.status_counts[0] == 1);
    if (row.instance.kind == TaskKind::kNli) CHECK(*r.accuracy == 1.0);

    const EvalReport bad = evaluate(row.instance.kind, insts, {"1: 2: 3: 4: 5:"},
                                    MatchMode::kStrict, lex);
    CHECK(bad.micro.tp == 0);
    CHECK(bad.micro.fp == 0);
    CHECK(bad.micro.fn == r.micro.tp);
    CHECK(bad.status_counts[static_cast<size_t>(OutputStatus::kNonlogical)] == 1);
  }
  CHECK_THROWS_AS(evaluate(TaskKind::kNli, {}, {"x"}, MatchMode::kStrict, lex), ContractError);
}

TEST_CASE("report formats") {
  EvalReport r = micro_prf({{"Drug", {2, 1, 0}}, {"Form", {0, 0, 1}}});
  r.task = TaskKind::kConceptExtraction;
  r.instances = 3;
  r.status_counts = {2, 0, 1, 0};
  CHECK(r.to_tsv() ==
        "category\tTP\tFP\tFN\tP\tR\tF1\n"
        "Drug\t2\t1\t0\t0.666667\t1.000000\t0.800000\n"
        "Form\t0\t0\t1\t0.000000\t0.000000\t0.000000\n"
        "MICRO\t2\t1\t1\t0.666667\t0.666667\t0.666667\n");
  const std::string text = r.to_text();
  CHECK(text.find("task=concept\n") != std::string::npos);
  CHECK(text.find("f1=0.666667\n") != std::string::npos);
  CHECK(text.find("status.Irrelevant=1\n") != std::string::npos);
  CHECK(text.find("accuracy") == std::string::npos);
  CHECK(parse_match_mode("RELAXED") == MatchMode::kRelaxed);
  CHECK_THROWS_AS(parse_match_mode("fuzzy"), ContractError);
}

}  // namespace
}  // namespace clinprompt
