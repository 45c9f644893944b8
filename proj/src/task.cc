#include "clinprompt/task.h"

#include <algorithm>

#include "clinprompt/checkpoint.h"
#include "clinprompt/error.h"
#include "clinprompt/text.h"

namespace clinprompt {

std::string_view task_name(TaskKind kind) {
  switch (kind) {
    case TaskKind::kConceptExtraction: return "concept";
    case TaskKind::kRelationExtraction: return "relation";
    case TaskKind::kConceptNormalization: return "normalization";
    case TaskKind::kAbbreviationWsd: return "wsd";
    case TaskKind::kNli: return "nli";
    case TaskKind::kMedicationAttributes: return "medication";
    case TaskKind::kProgressNote: return "progress";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view name) {
  for (TaskKind k : kAllTasks) {
    if (iequals(name, task_name(k))) return k;
  }
  std::string known;
  for (TaskKind k : kAllTasks) known += (known.empty() ? "" : ", ") + std::string(task_name(k));
  throw ContractError("unknown task '" + std::string(name) + "' (expected one of " + known + ")");
}

bool Annotations::empty() const {
  return concepts.empty() && relations.empty() && normalizations.empty() && senses.empty() &&
         medications.empty() && labels.empty();
}

const std::vector<std::string>& concept_labels() {
  static const std::vector<std::string> v = {"Drug",      "Strength", "Form",
                                             "Dosage",    "Frequency", "Route",
                                             "Reason",    "Duration",  "ADE"};
  return v;
}

const std::vector<std::string>& relation_labels() {
  static const std::vector<std::string> v = {
      "Strength-Drug",      "Form-Drug",       "Dosage-Drug",     "Frequency-Drug",
      "Route-Drug",         "Reason-Drug",     "Duration-Drug",   "ADE-Drug",
      "Living status-Type", "Tobacco-Amount",  "Tobacco-Status",  "Alcohol-Status",
      "Alcohol-Amount",     "Drug-Method",     "Drug-Frequency",  "Drug-Status",
      "Employment-Duration", "Employment-Status", std::string(kNoRelation)};
  return v;
}

const std::vector<std::string>& nli_labels() {
  static const std::vector<std::string> v = {"entailment", "contradiction", "neutral"};
  return v;
}

const std::vector<std::string>& progress_labels() {
  static const std::vector<std::string> v = {"Direct", "Indirect", "Neither", "Not Relevant"};
  return v;
}

const std::vector<std::string>& medication_event_labels() {
  static const std::vector<std::string> v = {std::string(kDisposition), "NoDisposition",
                                             "Undetermined"};
  return v;
}

const std::vector<ContextDimension>& medication_dimensions() {
  static const std::vector<ContextDimension> v = {
      {"Action", {"Start", "Stop", "Increase", "Decrease", "UniqueDose", "OtherChange", "Unknown"}},
      {"Negation", {"Negated", "NotNegated"}},
      {"Temporality", {"Past", "Present", "Future", "Unknown"}},
      {"Certainty", {"Certain", "Hypothetical", "Conditional", "Unknown"}},
      {"Actor", {"Physician", "Patient", "Unknown"}},
  };
  return v;
}

const std::map<std::string, std::vector<std::string>>& abbreviation_senses() {
  static const std::map<std::string, std::vector<std::string>> m = {
      {"CEA", {"carcinoembryonic antigen", "carotid endarterectomy"}},
      {"PT", {"physical therapy", "prothrombin time", "posterior tibial"}},
      {"RA", {"rheumatoid arthritis", "right atrium", "room air"}},
      {"MS", {"multiple sclerosis", "mitral stenosis", "morphine sulfate"}},
      {"CVA", {"cerebrovascular accident", "costovertebral angle"}},
      {"DC", {"discontinue", "discharge", "direct current"}},
      {"PA", {"posteroanterior", "pulmonary artery", "physician assistant"}},
      {"AB", {"abortion", "antibody", "blood group in ABO system"}},
  };
  return m;
}

const std::string* find_label(const std::vector<std::string>& inventory, std::string_view label) {
  for (const auto& l : inventory) {
    if (iequals(l, label)) return &l;
  }
  return nullptr;
}

// ---- lexicon ----------------------------------------------------------------

bool is_cui(std::string_view s) {
  if (s.size() != 8 || s[0] != 'C') return false;
  return std::all_of(s.begin() + 1, s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

void Lexicon::add(const std::string& cui, const std::string& name) {
  if (!is_cui(cui)) throw ContractError("malformed CUI '" + cui + "' (expected C + 7 digits)");
  const std::string clean(trim(name));
  if (clean.empty()) throw ContractError("CUI " + cui + " has an empty preferred name");
  if (auto it = by_cui_.find(cui); it != by_cui_.end()) {
    if (it->second == clean) return;
    throw ContractError("CUI " + cui + " bound to both '" + it->second + "' and '" + clean + "'");
  }
  entries_.emplace_back(cui, clean);
  by_cui_.emplace(cui, clean);
  auto& cuis = by_name_[to_lower(clean)];
  cuis.insert(std::upper_bound(cuis.begin(), cuis.end(), cui), cui);
}

CuiLookup Lexicon::lookup(std::string_view name) const {
  CuiLookup out;
  auto it = by_name_.find(to_lower(trim(name)));
  if (it == by_name_.end()) return out;
  out.cui = it->second.front();
  out.ambiguous = it->second.size() > 1;
  return out;
}

const std::string* Lexicon::preferred_name(std::string_view cui) const {
  auto it = by_cui_.find(cui);
  return it == by_cui_.end() ? nullptr : &it->second;
}

std::string Lexicon::serialize() const {
  std::string out;
  for (const auto& [cui, name] : entries_) out += cui + "\t" + name + "\n";
  return out;
}

Lexicon Lexicon::parse(std::string_view text) {
  Lexicon lex;
  size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty() || line.front() == '#') continue;
    const size_t tab = line.find('\t');
    if (tab == std::string_view::npos) throw ParseError("expected 'CUI<TAB>name'", line_no);
    try {
      lex.add(std::string(trim(line.substr(0, tab))), std::string(line.substr(tab + 1)));
    } catch (const ContractError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  return lex;
}

Lexicon Lexicon::load(const std::string& path) { return parse(read_file(path)); }

Lexicon Lexicon::builtin() {
  static const std::pair<const char*, const char*> kEntries[] = {
      {"C0003864", "Arthritis"},
      {"C0007286", "Carpal Tunnel Syndrome"},
      {"C0019360", "Herpes zoster disease"},
      {"C0024050", "Lower gastrointestinal hemorrhage"},
      {"C0020538", "Hypertensive disease"},
      {"C0011849", "Diabetes Mellitus"},
      {"C0004096", "Asthma"},
      {"C0018802", "Congestive heart failure"},
      {"C0027051", "Myocardial Infarction"},
      {"C0024117", "Chronic Obstructive Airway Disease"},
      {"C0032285", "Pneumonia"},
      {"C0018099", "Gout"},
      {"C0004238", "Atrial Fibrillation"},
      {"C0011570", "Mental Depression"},
      {"C0020443", "Hypercholesterolemia"},
      {"C0038454", "Cerebrovascular accident"},
      {"C0029408", "Degenerative polyarthritis"},
      {"C0003873", "Rheumatoid Arthritis"},
      {"C0042029", "Urinary tract infection"},
      {"C0020676", "Hypothyroidism"},
  };
  Lexicon lex;
  for (const auto& [cui, name] : kEntries) lex.add(cui, name);
  return lex;
}

}  // namespace clinprompt
