#ifndef CLINPROMPT_TESTS_FIXTURES_H_
#define CLINPROMPT_TESTS_FIXTURES_H_

// Worked examples printed with the method description: one row per task
// family showing input, gold annotation and converted answer, and six
// generated outputs on marked relation inputs labelled by hallucination
// type. Strings are copied verbatim; every deviation applied before
// comparison is listed in `repairs`.

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "clinprompt/codec.h"
#include "clinprompt/task.h"

namespace clinprompt::testing {

inline Span nth_span(const std::string& source, const std::string& text, int nth = 0) {
  size_t pos = source.find(text);
  for (int i = 0; i < nth && pos != std::string::npos; ++i) pos = source.find(text, pos + 1);
  if (pos == std::string::npos) throw std::logic_error("fixture text not found: " + text);
  return {pos, pos + text.size(), text};
}

struct PublishedRow {
  std::string name;
  TaskInstance instance;
  std::string published_answer;                          // verbatim
  std::vector<std::pair<std::string, std::string>> repairs;  // from -> to
  bool mentions_differ_in_case = false;

  std::string repaired_answer() const {
    std::string s = published_answer;
    for (const auto& [from, to] : repairs) {
      const size_t p = s.find(from);
      if (p == std::string::npos) throw std::logic_error("repair not applicable: " + from);
      s.replace(p, from.size(), to);
    }
    return s;
  }
};

inline std::vector<PublishedRow> worked_example_rows(const Lexicon& lex) {
  std::vector<PublishedRow> rows;
  {
    const std::string src =
        "6. Colchicine 0.6 mg Tablet Sig: One (1) Tablet PO DAILY (Daily) as needed for Gout "
        "flare/pain.";
    Annotations g;
    g.concepts = {{nth_span(src, "Colchicine"), "Drug"},
                  {nth_span(src, "0.6 mg"), "Strength"},
                  {nth_span(src, "Tablet"), "Form"},
                  {nth_span(src, "One (1)"), "Dosage"},
                  {nth_span(src, "DAILY (Daily) as needed"), "Frequency"},
                  {nth_span(src, "PO"), "Route"},
                  {nth_span(src, "Gout flare/pain"), "Reason"}};
    rows.push_back(
        {"concept extraction",
         make_instance("t1-concept", TaskKind::kConceptExtraction, src, "", g, lex),
         "The extracted drug entity is Colchicin e ; the extracted strength entity is 0.6 mg ; "
         "the extracted form entity is Tablet ; the extracted dosage entity is One (1) ; the "
         "extracted frequency is DAILY (Daily) as needed ; the extracted route entity is PO ; the "
         "extracted reason entity is Gout flare/pain .",
         // Text-extraction split inside the drug name, and the one clause that
         // drops the word "entity" from the template.
         {{"Colchicin e", "Colchicine"}, {"extracted frequency is", "extracted frequency entity is"}}});
  }
  {
    const std::string src =
        "Social History: Lives at [** Hospital6 3355 **], smoking 28 year pack hx, etoh remote, "
        "former IVDU (used once), [** Company 2318 **] bus driver for 18 yrs";
    Annotations g;
    g.relations = {
        {nth_span(src, "Lives"), nth_span(src, "at [** Hospital6 3355 **]"), "Living status-Type"},
        {nth_span(src, "smoking"), nth_span(src, "28 year pack hx"), "Tobacco-Amount"},
        {nth_span(src, "etoh"), nth_span(src, "remote"), "Alcohol-Status"},
        {nth_span(src, "former IVDU"), nth_span(src, "IVDU"), "Drug-Method"},
        {nth_span(src, "former IVDU"), nth_span(src, "used once"), "Drug-Frequency"},
        {nth_span(src, "bus driver"), nth_span(src, "for 18 yrs"), "Employment-Duration"}};
    rows.push_back(
        {"relation extraction",
         make_instance("t1-relation", TaskKind::kRelationExtraction, src, "", g, lex),
         "The relation between “Lives” and “at [** Hospital6 3355 **]” is "
         "“ Living status-Type ”; the relation between “smoking” and “28 "
         "year pack hx” is “ Tobacco-Amount ”; the relation between “etoh” "
         "and “remote” is “ Alcohol-Status ”; the relation between “former "
         "IVDU” and “IVDU” is “ Drug-Method ”; the relation between "
         "“former IVDU” and “used once” is “ Drug-Frequency ”; the "
         "relation between “bus driver” and “for 18 yrs” is “ "
         "Employment-Duration ”.",
         {}});
  }
  {
    const std::string src =
        "Past Medical History: Arthritis carpal tunnel shingles right arm 2000 needs right knee "
        "replacement left knee replacement in [**2010**] thyroidectomy 1978 cholecystectomy "
        "[**1981**] hysterectomy 2001 h/o LGIB 2000-2001 after taking baby ASA 81 QOD Social "
        "History: Her husband died recently.";
    Annotations g;
    g.normalizations = {
        {nth_span(src, "Arthritis"), "C0003864", "Arthritis"},
        {nth_span(src, "carpal tunnel"), "C0007286", "Carpal Tunnel Syndrome"},
        {nth_span(src, "shingles"), "C0019360", "Herpes zoster disease"},
        {nth_span(src, "LGIB"), "C0024050", "Lower gastrointestinal hemorrhage"}};
    PublishedRow row{
        "concept normalization",
        make_instance("t1-normalization", TaskKind::kConceptNormalization, src, "", g, lex),
        "The normalized string of the disorder concept “ arthritis ” is “ Arthritis "
        "”; the normalized string of the disorder concept “ carpal tunnel ” is "
        "“ Carpal Tunnel Syndrome ”; the normalized string of the disorder concept "
        "“ shingles ” is “ Herpes zoster disease ”; the normalized string of "
        "the disorder concept “ LGIB ” is “ Lower gastrointestinal hemorrhage "
        "”.",
        {}};
    // The annotation lowercases "arthritis"; the note itself capitalizes it.
    row.mentions_differ_in_case = true;
    rows.push_back(std::move(row));
  }
  {
    // The leading "[CEA 173 175" is the record header (abbreviation and
    // offsets), not note text.
    const std::string src =
        "LABORATORY DATA PAIN: Negative. ADL STATUS: Energy: Low. Eating: She is eating well. "
        "Sleeping: She is sleeping well. Maintaining weight: Yes. LABORATORY DATA: Normal except "
        "for an elevated CEA at 6.1 but as the patient has been cutting back her smoking it has "
        "gone from 6.9 to 6.1. CHEMOTHERAPY/RADIATION THERAPY HISTORY: The patient has had no "
        "chemotherapy or hormone therapy.";
    Annotations g;
    g.senses = {{nth_span(src, "CEA"), "carcinoembryonic antigen"}};
    rows.push_back({"abbreviation disambiguation",
                    make_instance("t1-wsd", TaskKind::kAbbreviationWsd, src, "", g, lex),
                    "The sense of the abbreviation “CEA” is “ carcinoembryonic "
                    "antigen ”.",
                    {}});
  }
  {
    const std::string premise =
        "The patient was seen by his primary care physician after he had complained of a "
        "one-week history of dyspnea on exertion and jaw tightness.";
    const std::string hypothesis = "The patient has symptoms of a CHF exacerbation.";
    Annotations g;
    g.labels = {"entailment"};
    rows.push_back(
        {"natural language inference",
         make_instance("t1-nli", TaskKind::kNli, premise, hypothesis, g, lex),
         "The hypothesis that “The patient has symptoms of a CHF exacerbation” is "
         "entailment to the premise that “The patient was seen by his primary care physician "
         "after he had complained of a one-week history of dyspnea on exertion and jaw "
         "tightness”.",
         {}});
  }
  {
    const std::string ctx =
        "least moderate risk, positive stress test. After discussion with Dr. Camacho, our plan "
        "will be continue her on aspirin, beta-blocker, and a low-dose ACE inhibitor through her "
        "regimen. She refuses to take a cholesterol-lowering agent due to previous concerns with "
        "myalgias. She will be referred for cardiac catheterization within the next several days "
        "with a goal to better define her coronary anatomy for the possibility of percutaneous "
        "coronary intervention versus cardiac bypass surgery.";
    Annotations g;
    g.medications = {{nth_span(ctx, "cholesterol-lowering agent"),
                      "Disposition",
                      {{"Action", "Start"},
                       {"Negation", "Negated"},
                       {"Temporality", "Present"},
                       {"Certainty", "Certain"},
                       {"Actor", "Patient"}}}};
    rows.push_back(
        {"medication attribute filling",
         make_instance("t1-medication", TaskKind::kMedicationAttributes, ctx, "", g, lex),
         "Event Classification: The category of medication event “cholesterol-lowering "
         "agent” is “ Disposition ”. Context Classification: The category of "
         "disposition event “cholesterol-lowering agent” from the dimension of Action is "
         "“ Start ”. The category of disposition event “cholesterol-lowering "
         "agent” from the dimension of Negation is “ Negated ”. The category of "
         "disposition event “cholesterol-lowering agent” from the dimension of "
         "Temporality is “ Present ”. The category of disposition event "
         "“cholesterol-lowering agent” from the dimension of Certainty is “ Certain "
         "”. The category of disposition event “cholesterol-lowering agent” from the "
         "dimension of Actor is “ Patient ”.",
         {}});
  }
  {
    const std::string assessment =
        "45 year old male with no known CAD and aspirin allergy who presented with chest pain and "
        "symptoms concerning for unstable angina, now with STE changes on ECG in the setting of "
        "chest pain. Now chest pain free.";
    const std::string plan =
        "PUMP: Patient with some ECG changes mildly concerning for possible LVH, although does "
        "not meet diagnostic criteria on current ECG ' s. - Baseline TTE today to assess.";
    Annotations g;
    g.labels = {"Direct"};
    rows.push_back({"progress note understanding",
                    make_instance("t1-progress", TaskKind::kProgressNote, assessment, plan, g, lex),
                    "The relation between the given assessment and plan subsection is Direct .",
                    {}});
  }
  return rows;
}

struct HallucinationRow {
  std::string name;
  std::string marked_input;
  std::string ground_truth;
  std::string generated;
  OutputStatus expected;
  // For interpretable rows: the relation the output still conveys.
  std::string recovered_label;
};

inline std::vector<HallucinationRow> hallucination_rows() {
  return {
      {"nonlogical 1",
       "Disp: * 60 80 mg syringe * Refills: * 1 * 8. [s2] Acetaminophen [e2] 500 mg Tablet Sig: "
       "1 - 2 Tablets PO [s1] Q6H (every 6 hours) as needed [e1] for pain.",
       "The relation between “Q6H (every 6 hours) as needed” and “Acetaminophen” "
       "is “ Frequency-Drug ”.",
       "- Non-responder - Non- responder - Non-responder", OutputStatus::kNonlogical, ""},
      {"nonlogical 2",
       // The row wraps inside "(2 times a day)" in print.
       "8. docusate sodium 100 mg [s1] Capsule [e1] Sig: One (1) Capsule PO BID (2 times a day). "
       "7. [s2] senna [e2] 8.6 mg Tablet Sig: One (1) Tablet PO BID (2 times a day) as needed for "
       "constipation.",
       "The relation between “Capsule” and “senna” is “ No-relation ”.",
       "1: 2: 3: 4: 5: 6: 7: 8: 9: 10: 11: 12: 13: 14:", OutputStatus::kNonlogical, ""},
      {"irrelevant 1",
       "Disp: * 30 Tablet (s) * Refills: * 0 * 24. [s2] clopidogrel [e2] 75 mg Tablet Sig: [s1] "
       "One (1) [e1] Tablet PO DAILY (Daily)",
       "The relation between “One (1)” and “clopidogrel” is “ Dosage-Drug "
       "”.",
       "1. The drug clopidogrel is a non-steroidal anti-platelet drug that is used to prevent "
       "platelet aggregation and reduce the risk of thrombosis in patients with acute coronary "
       "syndromes. It is also used to prevent thrombosis in patients with non-cardiac surgery. 2. "
       "Clopidogrel is a prodrug that is converted to its active form by the enzyme CYP2C19.",
       OutputStatus::kIrrelevant, ""},
      {"irrelevant 2",
       "Medications on Admission: atenolol 25 mg daily aspirin 81 mg daily lipitor 10 mg QOD "
       "(every other am) prednisone 10 mg daily tamsulosin SR 0.4 mg evening multivitamin 1 tab "
       "daily fish oil capsule 1000 mg twice a day [s2] systane lubricant eye [e2] drops 1 gtt "
       "[s1] TID [e1].",
       "The relation between “TID” and “systane lubricant eye” is “ "
       "Frequency-Drug ”.",
       "I have been using nonpreserved systane eye drops for a few years.",
       OutputStatus::kIrrelevant, ""},
      {"interpretable 1",
       "OXYCODONE - 20 mg Tablet Sustained Release 12 hr - 3 (Three) Tablet (s) by mouth every "
       "morning (60 mg), 1 tablet every 2 pm (20 mg) and 3 tablets every evening (60 mg) [s2] "
       "PANTOPRAZOLE [e2] [PROTONIX] - 40 mg Tablet , Delayed Release (E.C.) - [s1] 1 [e1] Tablet "
       "(s) by mouth once day",
       "The relation between “1” and “PANTOPRAZOLE” is “ Dosage-Drug ”.",
       "The relation type between the Drug entity “PANTOPRAZOLE” and Dosage entity "
       "“1” is “has_dosage”.",
       OutputStatus::kInterpretable, "Dosage-Drug"},
      {"interpretable 2",
       "Disp: * 30 Tablet (s) * Refills: * 2 * 3. [s2] Fluticasone - Salmeterol [e2] 250 - 50 "
       "mcg / Dose Disk with Device Sig: One (1) [s1] Disk with Device [e1] Inhalation Hospital 1 "
       "(2 times a day).",
       // Printed without the closing period.
       "The relation between “Disk with Device” and “Fluticasone - Salmeterol” "
       "is “ Form-Drug ”",
       "The relation type between the Drug entity “Fluticasone - Salmeterol” and Form "
       "entity “Disk with Device” is “is_a”.",
       OutputStatus::kInterpretable, "Form-Drug"},
  };
}

// Removes "[s1] ", " [e1]", "[s2] ", " [e2]" and returns the raw text with
// the two marked spans.
struct Unmarked {
  std::string text;
  Span arg1, arg2;
};

inline Unmarked unmark(const std::string& marked) {
  Unmarked out;
  size_t s1 = 0, e1 = 0, s2 = 0, e2 = 0;
  for (size_t i = 0; i < marked.size();) {
    auto at = [&](const char* m) { return marked.compare(i, std::char_traits<char>::length(m), m) == 0; };
    if (at("[s1] ")) { s1 = out.text.size(); i += 5; }
    else if (at(" [e1]")) { e1 = out.text.size(); i += 5; }
    else if (at("[s2] ")) { s2 = out.text.size(); i += 5; }
    else if (at(" [e2]")) { e2 = out.text.size(); i += 5; }
    else out.text.push_back(marked[i++]);
  }
  out.arg1 = {s1, e1, out.text.substr(s1, e1 - s1)};
  out.arg2 = {s2, e2, out.text.substr(s2, e2 - s2)};
  return out;
}

}  // namespace clinprompt::testing

#endif  // CLINPROMPT_TESTS_FIXTURES_H_
