#include "clinprompt/synth.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdio>

#include "clinprompt/codec.h"
#include "clinprompt/error.h"
#include "clinprompt/rng.h"
#include "clinprompt/text.h"

namespace clinprompt {
namespace {

using Pool = std::vector<std::string>;

// Appends text and hands back spans of the pieces that matter.
class Builder {
 public:
  void lit(std::string_view s) { text_ += s; }
  Span add(std::string_view s) {
    const size_t start = text_.size();
    text_ += s;
    return {start, text_.size(), std::string(s)};
  }
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

bool coin(Rng& rng, double p) { return rng.uniform() < p; }

// ---- medication lines ------------------------------------------------------

const Pool kDrugs = {"aspirin",      "metoprolol",    "lisinopril",   "colchicine",
                     "warfarin",     "furosemide",    "atorvastatin", "senna",
                     "docusate sodium", "acetaminophen", "pantoprazole", "clopidogrel",
                     "gabapentin",   "oxycodone",     "amlodipine",   "prednisone"};
const Pool kStrengths = {"81 mg", "25 mg", "0.6 mg", "40 mg", "100 mg",
                         "500 mg", "5 mg", "8.6 mg", "10 mg", "2.5 mg"};
const Pool kForms = {"Tablet", "Capsule", "Tablet, Delayed Release (E.C.)", "Solution", "Patch"};
const Pool kDosages = {"One (1)", "Two (2)", "1-2", "Half (0.5)"};
const Pool kRoutes = {"PO", "IV", "SC", "Inhalation", "topical"};
const Pool kFrequencies = {"DAILY (Daily)", "BID (2 times a day)", "TID (3 times a day)",
                           "Q6H (every 6 hours) as needed", "QHS (once a day (at bedtime))",
                           "once a day"};
const Pool kReasons = {"pain", "constipation", "Gout flare/pain", "anxiety", "nausea", "fever"};
const Pool kDurations = {"for 7 days", "for 2 weeks", "x 10 days"};

// "{n}. {Drug} {Strength} {Form} Sig: {Dosage} {Route} {Frequency} [for
// {Reason}] [{Duration}]." with each attribute optional.
std::vector<ConceptAnnotation> medication_line(Rng& rng, Builder& b) {
  std::vector<ConceptAnnotation> out;
  b.lit(std::to_string(1 + rng.below(20)) + ". ");
  out.push_back({b.add(rng.pick(kDrugs)), "Drug"});
  auto maybe = [&](const Pool& pool, const char* label, const char* before = " ") {
    if (!coin(rng, 0.7)) return;
    b.lit(before);
    out.push_back({b.add(rng.pick(pool)), label});
  };
  maybe(kStrengths, "Strength");
  maybe(kForms, "Form");
  b.lit(" Sig:");
  maybe(kDosages, "Dosage");
  maybe(kRoutes, "Route");
  maybe(kFrequencies, "Frequency");
  maybe(kReasons, "Reason", " for ");
  maybe(kDurations, "Duration");
  b.lit(".");
  return out;
}

Annotations concept_gold(Rng& rng, Builder& b) {
  Annotations g;
  g.concepts = medication_line(rng, b);
  return g;
}

// ---- relations ----------------------------------------------------------------

struct SdohPiece {
  Pool heads;
  std::vector<std::pair<std::string, Pool>> tails;  // label, values
  bool tail_first = false;
};

const std::vector<SdohPiece>& sdoh_pieces() {
  static const std::vector<SdohPiece> v = {
      {{"Lives"}, {{"Living status-Type", {"alone", "with her husband", "with family", "at home"}}}},
      {{"smoking", "tobacco", "cigarettes"},
       {{"Tobacco-Amount", {"1 ppd", "28 year pack hx", "half a pack daily"}},
        {"Tobacco-Status", {"quit 10 years ago", "current", "never"}}}},
      {{"etoh", "alcohol"},
       {{"Alcohol-Status", {"remote", "denies", "social"}},
        {"Alcohol-Amount", {"2 beers a day", "1 glass of wine nightly"}}}},
      {{"IVDU", "cocaine", "marijuana"},
       {{"Drug-Status", {"former", "current user of"}}}, true},
      {{"heroin", "opioids"},
       {{"Drug-Frequency", {"used once", "daily use"}}, {"Drug-Method", {"injected", "snorted"}}}},
      {{"bus driver", "teacher", "nurse", "carpenter"},
       {{"Employment-Duration", {"for 18 yrs", "for 5 years"}},
        {"Employment-Status", {"retired", "laid off"}}}},
  };
  return v;
}

Annotations relation_gold(Rng& rng, Builder& b) {
  Annotations g;
  if (coin(rng, 0.5)) {
    const auto concepts = medication_line(rng, b);
    std::vector<const ConceptAnnotation*> attrs;
    for (const auto& c : concepts) {
      if (c.label != "Drug") attrs.push_back(&c);
    }
    rng.shuffle(attrs);
    const size_t n = attrs.empty() ? 0 : 1 + rng.below(std::min<size_t>(3, attrs.size()));
    for (size_t i = 0; i < n; ++i) {
      g.relations.push_back({attrs[i]->span, concepts.front().span, attrs[i]->label + "-Drug"});
    }
    return g;
  }
  b.lit("Social History: ");
  std::vector<size_t> order(sdoh_pieces().size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const size_t n = 1 + rng.below(3);
  for (size_t k = 0; k < n; ++k) {
    const SdohPiece& piece = sdoh_pieces()[order[k]];
    if (k) b.lit(", ");
    const auto& [label, values] = rng.pick(piece.tails);
    const std::string head = rng.pick(piece.heads);
    const std::string tail = rng.pick(values);
    Span h, t;
    if (piece.tail_first) {
      t = b.add(tail);
      b.lit(" ");
      h = b.add(head);
    } else {
      h = b.add(head);
      b.lit(" ");
      t = b.add(tail);
    }
    g.relations.push_back({h, t, label});
  }
  b.lit(".");
  return g;
}

// ---- normalization ------------------------------------------------------------

const std::vector<std::pair<std::string, std::string>>& disorder_mentions() {
  static const std::vector<std::pair<std::string, std::string>> v = {
      {"arthritis", "C0003864"},      {"carpal tunnel", "C0007286"}, {"shingles", "C0019360"},
      {"LGIB", "C0024050"},           {"htn", "C0020538"},           {"hypertension", "C0020538"},
      {"DM", "C0011849"},             {"diabetes", "C0011849"},      {"asthma", "C0004096"},
      {"CHF", "C0018802"},            {"heart attack", "C0027051"},  {"COPD", "C0024117"},
      {"pneumonia", "C0032285"},      {"gout", "C0018099"},          {"afib", "C0004238"},
      {"depression", "C0011570"},     {"high cholesterol", "C0020443"}, {"stroke", "C0038454"},
      {"osteoarthritis", "C0029408"}, {"RA", "C0003873"},            {"UTI", "C0042029"},
      {"hypothyroidism", "C0020676"}};
  return v;
}

const Pool kHistoryFiller = {"h/o", "s/p", "chronic", "recent", "history of", "treated", "and"};
const Pool kYears = {"2001", "2005", "1998", "2010", "[**2012**]"};

Annotations normalization_gold(Rng& rng, Builder& b, const Lexicon& lex) {
  Annotations g;
  b.lit("Past Medical History:");
  std::vector<size_t> chosen;
  const size_t n = 1 + rng.below(4);
  for (size_t attempt = 0; chosen.size() < n && attempt < 20; ++attempt) {
    const size_t i = rng.below(disorder_mentions().size());
    const auto& [mention, cui] = disorder_mentions()[i];
    const bool clash = std::any_of(chosen.begin(), chosen.end(), [&](size_t j) {
      const auto& [other, other_cui] = disorder_mentions()[j];
      return other_cui == cui || ifind(other, mention) != std::string::npos ||
             ifind(mention, other) != std::string::npos;
    });
    if (!clash) chosen.push_back(i);
  }
  for (size_t i : chosen) {
    const auto& [mention, cui] = disorder_mentions()[i];
    b.lit(" ");
    if (coin(rng, 0.5)) b.lit(rng.pick(kHistoryFiller) + " ");
    const Span s = b.add(mention);
    if (coin(rng, 0.4)) b.lit(" " + rng.pick(kYears));
    const std::string* name = lex.preferred_name(cui);
    if (!name) throw ContractError("lexicon lacks " + cui + " needed by the generator");
    g.normalizations.push_back({s, cui, *name});
  }
  return g;
}

// ---- abbreviations -----------------------------------------------------------

struct SenseContext {
  const char* abbreviation;
  const char* sense;
  const char* before;
  const char* after;
};

const SenseContext kSenseContexts[] = {
    {"CEA", "carcinoembryonic antigen", "Labs notable for an elevated ", " at 6.1 ng/mL."},
    {"CEA", "carotid endarterectomy", "Status post left ", " in 2010 without complications."},
    {"PT", "physical therapy", "Will continue ", " twice weekly for gait training."},
    {"PT", "prothrombin time", "", " was 14.2 seconds with INR 1.1."},
    {"PT", "posterior tibial", "Pulses: dorsalis pedis and ", " 2+ bilaterally."},
    {"RA", "rheumatoid arthritis", "History of ", " on methotrexate."},
    {"RA", "right atrium", "Echo shows a dilated ", " and left atrium."},
    {"RA", "room air", "Oxygen saturation 97% on ", "."},
    {"MS", "multiple sclerosis", "She was diagnosed with ", " in 2005 and uses interferon."},
    {"MS", "mitral stenosis", "Echo with moderate ", " and valve area 1.2 cm2."},
    {"MS", "morphine sulfate", "Given ", " 2 mg IV for pain."},
    {"CVA", "cerebrovascular accident", "History of ", " with residual left weakness."},
    {"CVA", "costovertebral angle", "No ", " tenderness on exam."},
    {"DC", "discontinue", "Will ", " the heparin drip today."},
    {"DC", "discharge", "Plan for ", " home tomorrow."},
    {"DC", "direct current", "Underwent ", " cardioversion for atrial flutter."},
    {"PA", "posteroanterior", "", " and lateral chest x-ray was clear."},
    {"PA", "pulmonary artery", "Estimated ", " pressure of 45 mmHg."},
    {"PA", "physician assistant", "Seen by the ", " in clinic today."},
    {"AB", "abortion", "G2P1, ", " x1 in 2015."},
    {"AB", "antibody", "Hepatitis B surface ", " positive."},
    {"AB", "blood group in ABO system", "Blood type ", " positive."},
};

const Pool kNeutralSentences = {"Patient seen and examined.", "Vital signs stable.",
                                "No acute distress.", "Family at bedside.",
                                "Labs were reviewed."};

Annotations wsd_gold(Rng& rng, Builder& b) {
  const SenseContext& c = kSenseContexts[rng.below(std::size(kSenseContexts))];
  if (coin(rng, 0.5)) b.lit(rng.pick(kNeutralSentences) + " ");
  b.lit(c.before);
  Annotations g;
  g.senses.push_back({b.add(c.abbreviation), c.sense});
  b.lit(c.after);
  if (coin(rng, 0.5)) b.lit(" " + rng.pick(kNeutralSentences));
  return g;
}

// ---- nli ----------------------------------------------------------------------

struct NliRow {
  const char* premise;
  std::array<const char*, 3> hypotheses;  // entailment, contradiction, neutral
};

const NliRow kNliRows[] = {
    {"The patient was seen by his primary care physician after he had complained of a one-week "
     "history of dyspnea on exertion and jaw tightness.",
     {"The patient has symptoms of a CHF exacerbation.", "The patient has no cardiac symptoms.",
      "The patient has a history of smoking."}},
    {"She was admitted with a temperature of 39.2 and a productive cough.",
     {"The patient is febrile.", "The patient is afebrile.", "The patient has pneumonia."}},
    {"Blood glucose on arrival was 540 with an anion gap of 24.",
     {"The patient has hyperglycemia.", "The patient has a normal glucose level.",
      "The patient has type 1 diabetes."}},
    {"He has been taking warfarin for atrial fibrillation for five years.",
     {"The patient is on anticoagulation.", "The patient takes no blood thinners.",
      "The patient has had a stroke."}},
    {"Chest x-ray showed a right lower lobe consolidation.",
     {"The chest x-ray is abnormal.", "The chest x-ray is clear.",
      "The patient needs intravenous antibiotics."}},
    {"Her hemoglobin dropped from 11 to 7 after the procedure.",
     {"The patient has anemia.", "The hemoglobin is stable.", "The patient needs a transfusion."}},
};

Annotations nli_gold(Rng& rng, std::string& premise, std::string& hypothesis) {
  const NliRow& row = kNliRows[rng.below(std::size(kNliRows))];
  const size_t k = rng.below(3);
  premise = row.premise;
  hypothesis = row.hypotheses[k];
  Annotations g;
  g.labels.push_back(nli_labels()[k]);
  return g;
}

// ---- medication events --------------------------------------------------------

struct MedicationPattern {
  const char* before;
  const char* after;
  const char* event;
  std::array<const char*, 5> context;  // empty strings unless Disposition
};

const MedicationPattern kMedicationPatterns[] = {
    {"We will start ", " today.", "Disposition", {"Start", "NotNegated", "Present", "Certain", "Physician"}},
    {"", " was stopped last week because of a rash.", "Disposition",
     {"Stop", "NotNegated", "Past", "Certain", "Physician"}},
    {"She refuses to take ", " due to previous concerns with myalgias.", "Disposition",
     {"Start", "Negated", "Present", "Certain", "Patient"}},
    {"Consider increasing ", " if her pressure stays high.", "Disposition",
     {"Increase", "NotNegated", "Future", "Hypothetical", "Physician"}},
    {"Will decrease ", " to half the dose.", "Disposition",
     {"Decrease", "NotNegated", "Present", "Certain", "Physician"}},
    {"She received one dose of ", " in the emergency room.", "Disposition",
     {"UniqueDose", "NotNegated", "Past", "Certain", "Physician"}},
    {"Hold ", " if systolic pressure is below 100.", "Disposition",
     {"Stop", "NotNegated", "Future", "Conditional", "Physician"}},
    {"Continue ", " at the current dose.", "NoDisposition", {}},
    {"She takes ", " every morning.", "NoDisposition", {}},
    {"Unclear whether she has been taking ", " at home.", "Undetermined", {}},
};

const Pool kMedications = {"aspirin", "metoprolol", "lisinopril", "a beta-blocker",
                           "cholesterol-lowering agent", "insulin", "heparin", "warfarin",
                           "furosemide"};
const Pool kMedicationFiller = {"Blood pressure is well controlled.", "She will follow up in two weeks.",
                                "Labs were reviewed.", "Exercise tolerance is limited."};

Annotations medication_gold(Rng& rng, Builder& b) {
  const MedicationPattern& p = kMedicationPatterns[rng.below(std::size(kMedicationPatterns))];
  if (coin(rng, 0.5)) b.lit(rng.pick(kMedicationFiller) + " ");
  b.lit(p.before);
  MedicationAnnotation m;
  std::string med = rng.pick(kMedications);
  if (*p.before == '\0') med[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(med[0])));
  m.mention = b.add(med);
  b.lit(p.after);
  if (coin(rng, 0.5)) b.lit(" " + rng.pick(kMedicationFiller));
  m.event = p.event;
  if (m.event == kDisposition) {
    const auto& dims = medication_dimensions();
    for (size_t k = 0; k < dims.size(); ++k) m.context.emplace_back(dims[k].name, p.context[k]);
  }
  Annotations g;
  g.medications.push_back(std::move(m));
  return g;
}

// ---- progress notes -----------------------------------------------------------

struct Problem {
  const char* assessment;
  const char* direct;
  const char* indirect;
};

const Problem kProblems[] = {
    {"67 year old woman with COPD exacerbation, now on 2L nasal cannula.",
     "COPD: Continue nebulizers and prednisone taper.",
     "Hyperglycemia: Likely steroid induced, start sliding scale insulin."},
    {"45 year old male with chest pain concerning for unstable angina, now chest pain free.",
     "Chest pain: Continue heparin drip, aspirin and serial troponins.",
     "Hyperlipidemia: Start atorvastatin 80 mg."},
    {"72 year old man with community acquired pneumonia and sepsis.",
     "Pneumonia: Continue ceftriaxone and azithromycin.",
     "Acute kidney injury: Likely prerenal from sepsis, give fluids."},
    {"58 year old woman with upper GI bleed from a gastric ulcer.",
     "GI bleed: Continue pantoprazole drip, transfuse for hemoglobin below 7.",
     "Anemia: Check iron studies."},
    {"80 year old man with CHF exacerbation and volume overload.",
     "CHF: Diurese with IV furosemide, daily weights.",
     "Hypokalemia: Replete potassium with diuresis."},
};

const Pool kUnrelatedPlans = {"Hypothyroidism: Continue levothyroxine.",
                              "Gout: Continue allopurinol.",
                              "Depression: Continue sertraline.",
                              "Glaucoma: Continue home eye drops."};
const Pool kNotRelevantPlans = {"FEN: Regular diet.", "Code: Full code.",
                                "Dispo: Pending PT evaluation.", "PPx: Heparin SC, bowel regimen."};

Annotations progress_gold(Rng& rng, std::string& assessment, std::string& plan) {
  const Problem& p = kProblems[rng.below(std::size(kProblems))];
  const size_t k = rng.below(progress_labels().size());
  assessment = p.assessment;
  switch (k) {
    case 0: plan = p.direct; break;
    case 1: plan = p.indirect; break;
    case 2: plan = rng.pick(kUnrelatedPlans); break;
    default: plan = rng.pick(kNotRelevantPlans); break;
  }
  Annotations g;
  g.labels.push_back(progress_labels()[k]);
  return g;
}

const Pool kCopyWords = {"aspirin", "tablet", "daily", "oral", "pain", "rash",
                         "heparin", "capsule", "weekly", "nasal", "fever", "cough"};
const Pool kCopyFiller = {"insulin", "syrup", "hourly", "topical", "nausea", "edema", "statin",
                          "patch", "nightly", "rectal", "chills", "wheeze", "lotion", "ointment",
                          "monthly", "dizziness", "warfarin", "spray", "biweekly", "ocular"};

}  // namespace

std::vector<TaskInstance> generate_synthetic(const SyntheticSpec& spec, const Lexicon& lexicon) {
  Rng rng(spec.seed);
  std::vector<TaskInstance> out;
  out.reserve(spec.count);
  for (size_t i = 0; i < spec.count; ++i) {
    Builder b;
    std::string second;
    Annotations gold;
    switch (spec.task) {
      case TaskKind::kConceptExtraction: gold = concept_gold(rng, b); break;
      case TaskKind::kRelationExtraction: gold = relation_gold(rng, b); break;
      case TaskKind::kConceptNormalization: gold = normalization_gold(rng, b, lexicon); break;
      case TaskKind::kAbbreviationWsd: gold = wsd_gold(rng, b); break;
      case TaskKind::kMedicationAttributes: gold = medication_gold(rng, b); break;
      case TaskKind::kNli: {
        std::string premise;
        gold = nli_gold(rng, premise, second);
        b.lit(premise);
        break;
      }
      case TaskKind::kProgressNote: {
        std::string assessment;
        gold = progress_gold(rng, assessment, second);
        b.lit(assessment);
        break;
      }
    }
    char id[32];
    std::snprintf(id, sizeof id, "-%05zu", i);
    out.push_back(make_instance(std::string(task_name(spec.task)) + id, spec.task, b.text(),
                                std::move(second), std::move(gold), lexicon));
  }
  return out;
}

std::vector<TaskInstance> generate_label_copy(size_t count, uint64_t seed, const Lexicon& lexicon) {
  Rng rng(seed);
  std::vector<TaskInstance> out;
  for (size_t i = 0; i < count; ++i) {
    const std::string& label = rng.pick(concept_labels());
    Builder b;
    b.lit(label + ": ");
    Annotations g;
    g.concepts.push_back({b.add(rng.pick(kCopyWords)), label});
    char id[32];
    std::snprintf(id, sizeof id, "copy-%05zu", i);
    out.push_back(make_instance(id, TaskKind::kConceptExtraction, b.text(), "", std::move(g), lexicon));
  }
  return out;
}

std::string label_copy_corpus(size_t lines, uint64_t seed) {
  Pool words = kCopyWords;
  words.insert(words.end(), kCopyFiller.begin(), kCopyFiller.end());
  Rng rng(seed);
  std::string out;
  for (size_t i = 0; i < lines; ++i) {
    const std::string& label = rng.pick(concept_labels());
    const std::string lower = to_lower(label);
    const std::string& w = rng.pick(words);
    out += label + ": " + w + " ";
    switch (rng.below(3)) {
      case 0: out += "The extracted " + lower + " entity is " + w + " ."; break;
      case 1: out += w + " is listed as a " + lower + " ."; break;
      default: out += "see also " + rng.pick(words) + " and " + rng.pick(words) + " ."; break;
    }
    out += "\n";
  }
  return out;
}

}  // namespace clinprompt
