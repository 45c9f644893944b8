#include "clinprompt/codec.h"

#include <algorithm>
#include <optional>
#include <set>
#include <tuple>

#include "clinprompt/error.h"
#include "clinprompt/text.h"

namespace clinprompt {
namespace {

const std::string kOQ(kOpenQuote);
const std::string kCQ(kCloseQuote);

std::string q(std::string_view s) { return kOQ + std::string(s) + kCQ; }

bool has_quote_char(std::string_view s) {
  return s.find(kOpenQuote) != std::string_view::npos ||
         s.find(kCloseQuote) != std::string_view::npos || s.find('"') != std::string_view::npos;
}

bool word_at(std::string_view s, size_t pos, size_t len) {
  const bool left = pos == 0 || !is_alpha(s[pos - 1]);
  const bool right = pos + len >= s.size() || !is_alpha(s[pos + len]);
  return left && right;
}

// Case-insensitive whole-word occurrences of `word`.
std::vector<size_t> word_positions(std::string_view s, std::string_view word) {
  std::vector<size_t> out;
  for (size_t p = ifind(s, word); p != std::string_view::npos; p = ifind(s, word, p + 1)) {
    if (word_at(s, p, word.size())) out.push_back(p);
  }
  return out;
}

std::string strip_one_period(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.back() == '.') s.remove_suffix(1);
  return std::string(trim(s));
}

// Cursor over generated text with case-insensitive phrase matching. A space
// in a phrase matches any run of whitespace, including none.
class Scanner {
 public:
  explicit Scanner(std::string_view s, size_t pos = 0) : s_(s), pos_(pos) {}

  size_t pos() const { return pos_; }
  void skip_space() {
    while (pos_ < s_.size() && is_space(s_[pos_])) ++pos_;
  }
  bool at_end() {
    skip_space();
    return pos_ >= s_.size();
  }

  bool accept(std::string_view phrase) {
    const size_t saved = pos_;
    skip_space();
    for (char c : phrase) {
      if (c == ' ') {
        skip_space();
        continue;
      }
      if (pos_ >= s_.size() || to_lower(s_[pos_]) != to_lower(c)) {
        pos_ = saved;
        return false;
      }
      ++pos_;
    }
    if (!phrase.empty() && is_alpha(phrase.back()) && pos_ < s_.size() && is_alpha(s_[pos_])) {
      pos_ = saved;
      return false;
    }
    return true;
  }

  std::optional<std::string> quoted() {
    const size_t saved = pos_;
    skip_space();
    size_t open = 0;
    if (s_.substr(pos_, kOQ.size()) == kOQ) {
      open = kOQ.size();
    } else if (pos_ < s_.size() && s_[pos_] == '"') {
      open = 1;
    } else {
      pos_ = saved;
      return std::nullopt;
    }
    const size_t body = pos_ + open;
    size_t close = std::min(s_.find(kCQ, body), s_.find('"', body));
    if (close == std::string_view::npos) {
      pos_ = saved;
      return std::nullopt;
    }
    const size_t close_len = s_.substr(close, kCQ.size()) == kCQ ? kCQ.size() : 1;
    pos_ = close + close_len;
    return std::string(trim(s_.substr(body, close - body)));
  }

  // Letters, spaces and hyphens up to the next quote or `stop`.
  std::string words_until(std::string_view stop) {
    skip_space();
    const size_t end = std::min({ifind(s_, stop, pos_), s_.find(kOQ, pos_), s_.find('"', pos_)});
    const size_t e = end == std::string_view::npos ? s_.size() : end;
    std::string out(trim(s_.substr(pos_, e - pos_)));
    pos_ = e;
    return out;
  }

 private:
  std::string_view s_;
  size_t pos_;
};

// ---- anchoring ------------------------------------------------------------

bool boundary_ok(std::string_view src, size_t pos, std::string_view text) {
  const size_t end = pos + text.size();
  const bool left = pos == 0 || !is_alnum(src[pos - 1]) || !is_alnum(text.front());
  const bool right = end >= src.size() || !is_alnum(src[end]) || !is_alnum(text.back());
  return left && right;
}

class Anchorer {
 public:
  explicit Anchorer(std::string_view source) : src_(source) {}

  // Leftmost occurrence that does not overlap an earlier take(); exact case
  // before case-insensitive, whole-token before inside-a-word.
  Span take(std::string_view text) {
    Span s = locate(text, true);
    if (s.anchored()) consumed_.push_back(s);
    return s;
  }

  // Leftmost occurrence, ignoring earlier takes.
  Span find(std::string_view text) { return locate(text, false); }

 private:
  Span locate(std::string_view text, bool avoid_consumed) {
    Span none{kUnanchored, kUnanchored, std::string(text)};
    if (text.empty()) return none;
    for (int pass = 0; pass < 4; ++pass) {
      const bool ci = pass >= 2;
      const bool need_boundary = pass == 0 || pass == 2;
      for (size_t p = 0; p + text.size() <= src_.size(); ++p) {
        const std::string_view cand = src_.substr(p, text.size());
        if (ci ? !iequals(cand, text) : cand != text) continue;
        if (need_boundary && !boundary_ok(src_, p, text)) continue;
        Span s{p, p + text.size(), std::string(cand)};
        if (avoid_consumed &&
            std::any_of(consumed_.begin(), consumed_.end(),
                        [&](const Span& c) { return c.overlaps(s); })) {
          continue;
        }
        return s;
      }
      if (pass == 3 && avoid_consumed) {
        // Every occurrence is taken; fall back to the leftmost one.
        return locate(text, false);
      }
    }
    return none;
  }

  std::string_view src_;
  std::vector<Span> consumed_;
};

// The focus span when `text` names it, else the leftmost occurrence.
Span anchor_focus(const ParseContext& ctx, std::string_view text) {
  for (const Span& f : ctx.focus) {
    if (iequals(f.text, text)) return f;
  }
  return Anchorer(ctx.source_text).find(text);
}

// ---- raw clauses recovered from generated text ----------------------------

struct RawConcept {
  std::string label, value;
};
struct RawRelation {
  std::string a, b, label, type_a, type_b;
};
struct RawNormalization {
  std::string mention, name;
};
struct RawSense {
  std::string abbreviation, sense;
  bool templated = false;
};
struct RawDimension {
  std::string mention, dimension, value;
};

// Result of one task parser: predictions, whether the text re-renders to
// the template exactly, and whether anything was dropped or missing.
struct Recovery {
  Annotations preds;
  bool template_exact = false;
  bool complete = true;
};

std::string canonical_text(std::string_view s) { return to_lower(normalize_whitespace(s)); }

bool renders_as(std::string_view generated, const std::string& rendered) {
  return canonical_text(generated) == canonical_text(rendered);
}

// ---- concept extraction ---------------------------------------------------

std::string render_concepts(const std::vector<RawConcept>& cs) {
  if (cs.empty()) return "";
  std::vector<std::string> parts;
  for (const auto& c : cs) parts.push_back("the extracted " + to_lower(c.label) + " entity is " + c.value);
  std::string out = join(parts, " ; ") + " .";
  out[0] = 'T';
  return out;
}

std::vector<RawConcept> scan_concepts(std::string_view t) {
  std::vector<RawConcept> out;
  const auto starts = word_positions(t, "extracted");
  for (size_t i = 0; i < starts.size(); ++i) {
    const size_t begin = starts[i] + 9;
    const size_t end = i + 1 < starts.size() ? starts[i + 1] : t.size();
    std::string_view seg = t.substr(begin, end - begin);
    const auto is_pos = word_positions(seg, "is");
    if (is_pos.empty()) continue;
    std::string_view label = trim(seg.substr(0, is_pos[0]));
    if (label.size() >= 6 && iequals(label.substr(label.size() - 6), "entity")) {
      label = trim(label.substr(0, label.size() - 6));
    }
    std::string_view value = trim(seg.substr(is_pos[0] + 2));
    if (i + 1 < starts.size()) {
      if (value.size() >= 3 && iequals(value.substr(value.size() - 3), "the") &&
          word_at(value, value.size() - 3, 3)) {
        value = trim(value.substr(0, value.size() - 3));
      }
      if (!value.empty() && value.back() == ';') value = trim(value.substr(0, value.size() - 1));
    } else if (!value.empty() && value.back() == '.') {
      value = trim(value.substr(0, value.size() - 1));
    }
    if (label.empty() || value.empty()) continue;
    out.push_back({std::string(label), std::string(value)});
  }
  return out;
}

Recovery recover_concepts(const ParseContext& ctx, std::string_view t) {
  Recovery r;
  const auto raw = scan_concepts(t);
  r.template_exact = !raw.empty() && renders_as(t, render_concepts(raw));
  Anchorer anchor(ctx.source_text);
  for (const auto& c : raw) {
    const std::string* label = find_label(concept_labels(), c.label);
    if (!label) {
      r.complete = false;
      continue;
    }
    r.preds.concepts.push_back({anchor.take(c.value), *label});
  }
  return r;
}

// ---- relation extraction --------------------------------------------------

std::string render_relations(const std::vector<RawRelation>& rs) {
  if (rs.empty()) return "";
  std::vector<std::string> parts;
  for (const auto& r : rs) {
    parts.push_back("the relation between " + q(r.a) + " and " + q(r.b) + " is " + q(r.label));
  }
  std::string out = join(parts, "; ") + ".";
  out[0] = 'T';
  return out;
}

std::vector<RawRelation> scan_relations(std::string_view t) {
  std::vector<RawRelation> out;
  for (size_t p : word_positions(t, "between")) {
    Scanner s(t, p + 7);
    RawRelation r;
    s.accept("the");
    if (Scanner probe = s; !probe.quoted()) {
      r.type_a = s.words_until(" entity");
      s.accept("entity");
    }
    auto a = s.quoted();
    if (!a || !s.accept("and")) continue;
    s.accept("the");
    if (Scanner probe = s; !probe.quoted()) {
      r.type_b = s.words_until(" entity");
      s.accept("entity");
    }
    auto b = s.quoted();
    if (!b || !s.accept("is")) continue;
    auto label = s.quoted();
    if (!label) continue;
    r.a = *a;
    r.b = *b;
    r.label = *label;
    out.push_back(std::move(r));
  }
  return out;
}

// Canonical label and argument order for one raw clause, or nullopt.
std::optional<RawRelation> resolve_relation(RawRelation r) {
  if (const std::string* l = find_label(relation_labels(), r.label)) {
    r.label = *l;
    if (r.type_a.empty() && r.type_b.empty()) return r;
  }
  // Typed variant: "between the Drug entity “X” and Dosage entity “Y”".
  if (!r.type_a.empty() && !r.type_b.empty()) {
    const bool a_drug = iequals(r.type_a, "drug"), b_drug = iequals(r.type_b, "drug");
    if (a_drug != b_drug) {
      const std::string& other = a_drug ? r.type_b : r.type_a;
      if (const std::string* l = find_label(relation_labels(), other + "-Drug")) {
        RawRelation out = r;
        out.label = *l;
        out.a = a_drug ? r.b : r.a;
        out.b = a_drug ? r.a : r.b;
        return out;
      }
    }
  }
  // Alias "has_<attribute>".
  if (r.label.size() > 4 && iequals(r.label.substr(0, 4), "has_")) {
    if (const std::string* l = find_label(relation_labels(), r.label.substr(4) + "-Drug")) {
      r.label = *l;
      return r;
    }
  }
  return std::nullopt;
}

Recovery recover_relations(const ParseContext& ctx, std::string_view t) {
  Recovery r;
  const auto raw = scan_relations(t);
  r.template_exact = !raw.empty() && renders_as(t, render_relations(raw));
  std::vector<bool> used(ctx.expected_pairs.size(), false);
  Anchorer anchor(ctx.source_text);
  for (const auto& clause : raw) {
    auto resolved = resolve_relation(clause);
    if (!resolved) {
      r.complete = false;
      continue;
    }
    if (!clause.type_a.empty() || !iequals(resolved->label, clause.label)) r.complete = false;
    RelationAnnotation rel{{}, {}, resolved->label};
    bool placed = false;
    for (bool ci : {false, true}) {
      for (size_t i = 0; i < ctx.expected_pairs.size() && !placed; ++i) {
        const auto& [e1, e2] = ctx.expected_pairs[i];
        const bool match = ci ? iequals(e1.text, resolved->a) && iequals(e2.text, resolved->b)
                              : e1.text == resolved->a && e2.text == resolved->b;
        if (!used[i] && match) {
          used[i] = true;
          rel.arg1 = e1;
          rel.arg2 = e2;
          placed = true;
        }
      }
    }
    if (!placed) {
      rel.arg1 = anchor.find(resolved->a);
      rel.arg2 = anchor.find(resolved->b);
    }
    r.preds.relations.push_back(std::move(rel));
  }
  return r;
}

// ---- concept normalization ------------------------------------------------

std::string render_normalizations(const std::vector<RawNormalization>& ns) {
  if (ns.empty()) return "";
  std::vector<std::string> parts;
  for (const auto& n : ns) {
    parts.push_back("the normalized string of the disorder concept " + q(n.mention) + " is " +
                    q(n.name));
  }
  std::string out = join(parts, "; ") + ".";
  out[0] = 'T';
  return out;
}

std::vector<RawNormalization> scan_normalizations(std::string_view t) {
  std::vector<RawNormalization> out;
  for (size_t p : word_positions(t, "concept")) {
    Scanner s(t, p + 7);
    auto m = s.quoted();
    if (!m || !s.accept("is")) continue;
    auto n = s.quoted();
    if (!n) continue;
    out.push_back({*m, *n});
  }
  return out;
}

Recovery recover_normalizations(const ParseContext& ctx, std::string_view t,
                                const Lexicon& lexicon, size_t& ambiguous) {
  Recovery r;
  const auto raw = scan_normalizations(t);
  r.template_exact = !raw.empty() && renders_as(t, render_normalizations(raw));
  Anchorer anchor(ctx.source_text);
  for (const auto& n : raw) {
    if (n.name.empty()) {
      r.complete = false;
      continue;
    }
    const CuiLookup hit = lexicon.lookup(n.name);
    if (hit.ambiguous) ++ambiguous;
    r.preds.normalizations.push_back({anchor.take(n.mention), hit.cui, n.name});
  }
  return r;
}

// ---- abbreviation sense ---------------------------------------------------

std::optional<std::string> resolve_sense(std::string_view abbreviation, std::string_view sense) {
  sense = trim(sense);
  if (sense.empty()) return std::nullopt;
  const auto& table = abbreviation_senses();
  for (const auto& [abbr, senses] : table) {
    if (!iequals(abbr, abbreviation)) continue;
    if (const std::string* s = find_label(senses, sense)) return *s;
    return std::nullopt;
  }
  return std::string(sense);
}

Recovery recover_sense(const ParseContext& ctx, std::string_view t) {
  Recovery r;
  std::optional<RawSense> raw;
  for (size_t p : word_positions(t, "abbreviation")) {
    Scanner s(t, p + 12);
    auto a = s.quoted();
    if (!a || !s.accept("is")) continue;
    auto sense = s.quoted();
    if (!sense) continue;
    raw = RawSense{*a, *sense, true};
    break;
  }
  if (!raw && !word_positions(t, "sense").empty()) {
    // Last quoted string after the keyword, focus taken from the input.
    Scanner s(t, word_positions(t, "sense").front());
    std::optional<std::string> last;
    for (size_t p = s.pos(); p < t.size(); ++p) {
      Scanner probe(t, p);
      if (auto got = probe.quoted()) {
        last = got;
        p = probe.pos() - 1;
      }
    }
    if (last && !ctx.focus.empty()) raw = RawSense{ctx.focus.front().text, *last, false};
  }
  if (!raw) return r;
  r.template_exact = raw->templated &&
                     renders_as(t, "The sense of the abbreviation " + q(raw->abbreviation) +
                                       " is " + q(raw->sense) + ".");
  const auto sense = resolve_sense(raw->abbreviation, raw->sense);
  if (!sense) {
    r.complete = false;
    return r;
  }
  r.preds.senses.push_back({anchor_focus(ctx, raw->abbreviation), *sense});
  return r;
}

// ---- closed-label classification ------------------------------------------

// Inventory labels that occur as whole word sequences in `t`.
std::vector<std::string> labels_mentioned(std::string_view t,
                                          const std::vector<std::string>& inventory) {
  const auto words = letter_words(t);
  std::vector<std::string> found;
  for (const auto& label : inventory) {
    const auto lw = letter_words(label);
    if (lw.empty()) continue;
    for (size_t i = 0; i + lw.size() <= words.size(); ++i) {
      if (std::equal(lw.begin(), lw.end(), words.begin() + i)) {
        found.push_back(label);
        break;
      }
    }
  }
  // "Not Relevant" contains no other label, but "Indirect" must not also
  // count as "Direct"; whole-word matching already guarantees that.
  return found;
}

Recovery recover_nli(const ParseContext&, std::string_view t) {
  Recovery r;
  Scanner s(t);
  if (s.accept("the hypothesis that")) {
    auto h = s.quoted();
    if (h && s.accept("is")) {
      std::string label = s.words_until(" to the premise");
      if (s.accept("to the premise that")) {
        auto p = s.quoted();
        if (p) {
          const std::string rendered =
              "The hypothesis that " + q(*h) + " is " + label + " to the premise that " + q(*p) + ".";
          if (const std::string* l = find_label(nli_labels(), label)) {
            r.template_exact = renders_as(t, rendered);
            r.preds.labels.push_back(*l);
            return r;
          }
        }
      }
    }
  }
  const auto found = labels_mentioned(t, nli_labels());
  if (found.size() == 1) r.preds.labels.push_back(found.front());
  r.complete = false;
  return r;
}

Recovery recover_progress(const ParseContext&, std::string_view t) {
  Recovery r;
  static const std::string kPrefix = "The relation between the given assessment and plan subsection is ";
  Scanner s(t);
  if (s.accept(kPrefix)) {
    std::string label = strip_one_period(t.substr(s.pos()));
    if (const std::string* l = find_label(progress_labels(), label)) {
      r.template_exact = renders_as(t, kPrefix + label + ".");
      r.preds.labels.push_back(*l);
      return r;
    }
  }
  auto found = labels_mentioned(t, progress_labels());
  if (found.size() == 1) r.preds.labels.push_back(found.front());
  r.complete = false;
  return r;
}

// ---- medication attributes ------------------------------------------------

Recovery recover_medication(const ParseContext& ctx, std::string_view t) {
  Recovery r;
  std::optional<std::pair<std::string, std::string>> event;
  for (size_t p : word_positions(t, "medication")) {
    Scanner s(t, p + 10);
    if (!s.accept("event")) continue;
    auto m = s.quoted();
    if (!m || !s.accept("is")) continue;
    auto label = s.quoted();
    if (!label) continue;
    event.emplace(*m, *label);
    break;
  }
  std::vector<RawDimension> dims;
  for (size_t p : word_positions(t, "disposition")) {
    Scanner s(t, p + 11);
    if (!s.accept("event")) continue;
    auto m = s.quoted();
    if (!m || !s.accept("from the dimension of")) continue;
    std::string dim = s.words_until(" is");
    if (!s.accept("is")) continue;
    auto v = s.quoted();
    if (!v) continue;
    dims.push_back({*m, dim, *v});
  }
  if (!event) {
    r.complete = false;
    return r;
  }
  std::string rendered = "Event Classification: The category of medication event " +
                         q(event->first) + " is " + q(event->second) + ".";
  if (!dims.empty()) rendered += " Context Classification:";
  for (const auto& d : dims) {
    rendered += " The category of disposition event " + q(d.mention) + " from the dimension of " +
                d.dimension + " is " + q(d.value) + ".";
  }
  r.template_exact = renders_as(t, rendered);

  const std::string* label = find_label(medication_event_labels(), event->second);
  if (!label) {
    r.complete = false;
    return r;
  }
  MedicationAnnotation med{anchor_focus(ctx, event->first), *label, {}};
  std::vector<bool> seen(medication_dimensions().size(), false);
  for (const auto& d : dims) {
    size_t k = 0;
    while (k < medication_dimensions().size() && !iequals(medication_dimensions()[k].name, d.dimension)) ++k;
    const std::string* v = k < seen.size() ? find_label(medication_dimensions()[k].values, d.value) : nullptr;
    if (!v || seen[k] || *label != kDisposition) {
      r.complete = false;
      continue;
    }
    seen[k] = true;
  }
  if (*label == kDisposition) {
    for (size_t k = 0; k < seen.size(); ++k) {
      if (!seen[k]) {
        r.complete = false;
        continue;
      }
      for (const auto& d : dims) {
        if (iequals(d.dimension, medication_dimensions()[k].name)) {
          med.context.emplace_back(medication_dimensions()[k].name,
                                   *find_label(medication_dimensions()[k].values, d.value));
          break;
        }
      }
    }
  }
  r.preds.medications.push_back(std::move(med));
  return r;
}

bool is_span_task(TaskKind k) {
  return k == TaskKind::kConceptExtraction || k == TaskKind::kRelationExtraction ||
         k == TaskKind::kConceptNormalization;
}

// ---- validation helpers ---------------------------------------------------

void check_span(const Span& s, std::string_view source, std::string_view what,
                bool quoted = true) {
  if (!s.anchored() || s.start >= s.end || s.end > source.size()) {
    throw ContractError(std::string(what) + " span [" + std::to_string(s.start) + ", " +
                        std::to_string(s.end) + ") is outside the source text");
  }
  if (source.substr(s.start, s.end - s.start) != s.text) {
    throw ContractError(std::string(what) + " text '" + s.text + "' does not match source[" +
                        std::to_string(s.start) + ":" + std::to_string(s.end) + "] = '" +
                        std::string(source.substr(s.start, s.end - s.start)) + "'");
  }
  if (trim(s.text).size() != s.text.size()) {
    throw ContractError(std::string(what) + " '" + s.text + "' has surrounding whitespace");
  }
  if (quoted && has_quote_char(s.text)) {
    throw ContractError(std::string(what) + " '" + s.text + "' contains a quote character");
  }
}

void check_label(const std::vector<std::string>& inventory, const std::string& label,
                 std::string_view what) {
  if (std::find(inventory.begin(), inventory.end(), label) == inventory.end()) {
    throw ContractError(std::string(what) + " label '" + label + "' is not in the inventory");
  }
}

void expect_only(const Annotations& g, TaskKind kind) {
  const bool ok = (kind == TaskKind::kConceptExtraction || g.concepts.empty()) &&
                  (kind == TaskKind::kRelationExtraction || g.relations.empty()) &&
                  (kind == TaskKind::kConceptNormalization || g.normalizations.empty()) &&
                  (kind == TaskKind::kAbbreviationWsd || g.senses.empty()) &&
                  (kind == TaskKind::kMedicationAttributes || g.medications.empty()) &&
                  (kind == TaskKind::kNli || kind == TaskKind::kProgressNote || g.labels.empty());
  if (!ok) {
    throw ContractError("gold for task '" + std::string(task_name(kind)) +
                        "' carries annotations of another task");
  }
}

void check_no_overlap(std::vector<Span> spans, std::string_view what) {
  std::sort(spans.begin(), spans.end(),
            [](const Span& a, const Span& b) { return std::tie(a.start, a.end) < std::tie(b.start, b.end); });
  for (size_t i = 1; i < spans.size(); ++i) {
    if (spans[i - 1].overlaps(spans[i])) {
      throw ContractError(std::string(what) + " spans '" + spans[i - 1].text + "' and '" +
                          spans[i].text + "' overlap");
    }
  }
}

}  // namespace

std::string_view status_name(OutputStatus s) {
  switch (s) {
    case OutputStatus::kWellFormed: return "WellFormed";
    case OutputStatus::kInterpretable: return "Interpretable";
    case OutputStatus::kIrrelevant: return "Irrelevant";
    case OutputStatus::kNonlogical: return "Nonlogical";
  }
  return "?";
}

std::string normalize_whitespace(std::string_view text) {
  std::string collapsed;
  for (char c : trim(text)) {
    if (is_space(c)) {
      if (collapsed.empty() || collapsed.back() != ' ') collapsed.push_back(' ');
    } else {
      collapsed.push_back(c);
    }
  }
  std::string out;
  for (size_t i = 0; i < collapsed.size(); ++i) {
    if (collapsed[i] == ' ') {
      const bool after_open = out.size() >= kOQ.size() && out.ends_with(kOQ);
      const std::string_view rest = std::string_view(collapsed).substr(i + 1);
      const bool before_close = rest.starts_with(kCQ);
      const bool before_punct = !rest.empty() && (rest[0] == '.' || rest[0] == ';');
      if (after_open || before_close || before_punct) continue;
    }
    out.push_back(collapsed[i]);
  }
  return out;
}

size_t template_keyword_count(std::string_view text) {
  static const std::set<std::string> kKeywords = {"extracted",  "relation", "sense",
                                                  "category",   "normalized", "hypothesis"};
  size_t n = 0;
  for (const auto& w : letter_words(text)) n += kKeywords.count(w);
  return n;
}

bool looks_nonlogical(std::string_view text) {
  const auto words = letter_words(text);
  if (words.empty()) return true;
  if (words.size() >= 3) {
    std::set<std::tuple<std::string, std::string, std::string>> distinct;
    const size_t total = words.size() - 2;
    for (size_t i = 0; i < total; ++i) distinct.emplace(words[i], words[i + 1], words[i + 2]);
    if (1.0 - static_cast<double>(distinct.size()) / total > 0.5) return true;
  }
  if (words.size() >= 4) {
    const std::set<std::string> uni(words.begin(), words.end());
    if (static_cast<double>(uni.size()) / words.size() < 0.4) return true;
  }
  return false;
}

Annotations canonical_order(TaskKind, Annotations g) {
  auto key = [](const Span& s) { return std::tie(s.start, s.end); };
  std::sort(g.concepts.begin(), g.concepts.end(), [&](const auto& a, const auto& b) {
    return std::tie(a.span.start, a.span.end, a.label) < std::tie(b.span.start, b.span.end, b.label);
  });
  std::sort(g.relations.begin(), g.relations.end(), [&](const auto& a, const auto& b) {
    return std::tie(a.arg1.start, a.arg2.start, a.arg1.end, a.arg2.end, a.label) <
           std::tie(b.arg1.start, b.arg2.start, b.arg1.end, b.arg2.end, b.label);
  });
  std::sort(g.normalizations.begin(), g.normalizations.end(),
            [&](const auto& a, const auto& b) { return key(a.mention) < key(b.mention); });
  for (auto& m : g.medications) {
    std::vector<std::pair<std::string, std::string>> ordered;
    for (const auto& dim : medication_dimensions()) {
      for (const auto& kv : m.context) {
        if (kv.first == dim.name) ordered.push_back(kv);
      }
    }
    if (ordered.size() == m.context.size()) m.context = std::move(ordered);
  }
  return g;
}

void validate_gold(TaskKind kind, const Annotations& g, std::string_view source,
                   std::string_view second, const Lexicon& lexicon) {
  if (trim(source).empty()) throw ContractError("source text is empty");
  expect_only(g, kind);
  auto need_second = [&](const char* what) {
    if (trim(second).empty()) throw ContractError(std::string(what) + " is empty");
    if (has_quote_char(second) || has_quote_char(source)) {
      throw ContractError("texts quoted in the target may not contain quote characters");
    }
  };
  switch (kind) {
    case TaskKind::kConceptExtraction: {
      std::vector<Span> spans;
      for (const auto& c : g.concepts) {
        check_span(c.span, source, "concept", false);
        check_label(concept_labels(), c.label, "concept");
        if (!word_positions(c.span.text, "extracted").empty()) {
          throw ContractError("concept text '" + c.span.text + "' contains the word 'extracted'");
        }
        spans.push_back(c.span);
      }
      check_no_overlap(spans, "concept");
      break;
    }
    case TaskKind::kRelationExtraction: {
      std::set<std::tuple<size_t, size_t, size_t, size_t>> pairs;
      for (const auto& r : g.relations) {
        check_span(r.arg1, source, "relation argument");
        check_span(r.arg2, source, "relation argument");
        check_label(relation_labels(), r.label, "relation");
        if (!pairs.emplace(r.arg1.start, r.arg1.end, r.arg2.start, r.arg2.end).second) {
          throw ContractError("relation pair ('" + r.arg1.text + "', '" + r.arg2.text +
                              "') is annotated twice");
        }
      }
      break;
    }
    case TaskKind::kConceptNormalization: {
      std::vector<Span> spans;
      for (const auto& n : g.normalizations) {
        check_span(n.mention, source, "normalization mention");
        if (!is_cui(n.cui)) throw ContractError("malformed CUI '" + n.cui + "'");
        const std::string* name = lexicon.preferred_name(n.cui);
        if (!name) throw ContractError("CUI " + n.cui + " is not in the lexicon");
        if (*name != n.preferred_name) {
          throw ContractError("CUI " + n.cui + " has preferred name '" + *name + "', not '" +
                              n.preferred_name + "'");
        }
        if (lexicon.lookup(n.preferred_name).cui != n.cui) {
          throw ContractError("preferred name '" + n.preferred_name +
                              "' resolves to a different CUI in the lexicon");
        }
        spans.push_back(n.mention);
      }
      check_no_overlap(spans, "normalization mention");
      break;
    }
    case TaskKind::kAbbreviationWsd: {
      if (g.senses.size() != 1) throw ContractError("wsd gold needs exactly one sense annotation");
      const auto& s = g.senses.front();
      check_span(s.abbreviation, source, "abbreviation");
      const auto resolved = resolve_sense(s.abbreviation.text, s.sense);
      if (!resolved || *resolved != s.sense || has_quote_char(s.sense)) {
        throw ContractError("sense '" + s.sense + "' is not admissible for '" +
                            s.abbreviation.text + "'");
      }
      break;
    }
    case TaskKind::kNli:
      need_second("hypothesis");
      if (g.labels.size() != 1) throw ContractError("nli gold needs exactly one label");
      check_label(nli_labels(), g.labels.front(), "nli");
      if (strip_one_period(source).empty() || strip_one_period(second).empty()) {
        throw ContractError("premise and hypothesis need content besides a period");
      }
      break;
    case TaskKind::kProgressNote:
      need_second("plan");
      if (g.labels.size() != 1) throw ContractError("progress-note gold needs exactly one label");
      check_label(progress_labels(), g.labels.front(), "progress-note");
      break;
    case TaskKind::kMedicationAttributes: {
      if (g.medications.size() != 1) {
        throw ContractError("medication gold needs exactly one medication event");
      }
      const auto& m = g.medications.front();
      check_span(m.mention, source, "medication");
      check_label(medication_event_labels(), m.event, "medication event");
      const auto& dims = medication_dimensions();
      if (m.event == kDisposition) {
        if (m.context.size() != dims.size()) {
          throw ContractError("a Disposition event needs a value for each of the " +
                              std::to_string(dims.size()) + " context dimensions");
        }
        for (size_t k = 0; k < dims.size(); ++k) {
          if (m.context[k].first != dims[k].name) {
            throw ContractError("context dimension " + std::to_string(k) + " should be " +
                                dims[k].name + ", got '" + m.context[k].first + "'");
          }
          check_label(dims[k].values, m.context[k].second, dims[k].name);
        }
      } else if (!m.context.empty()) {
        throw ContractError("only Disposition events carry context dimensions");
      }
      break;
    }
  }
}

std::string serialize_target(TaskKind kind, const Annotations& gold, std::string_view source,
                             std::string_view second) {
  const Annotations g = canonical_order(kind, gold);
  switch (kind) {
    case TaskKind::kConceptExtraction: {
      std::vector<RawConcept> raw;
      for (const auto& c : g.concepts) raw.push_back({c.label, c.span.text});
      return render_concepts(raw);
    }
    case TaskKind::kRelationExtraction: {
      std::vector<RawRelation> raw;
      for (const auto& r : g.relations) raw.push_back({r.arg1.text, r.arg2.text, r.label, "", ""});
      return render_relations(raw);
    }
    case TaskKind::kConceptNormalization: {
      std::vector<RawNormalization> raw;
      for (const auto& n : g.normalizations) raw.push_back({n.mention.text, n.preferred_name});
      return render_normalizations(raw);
    }
    case TaskKind::kAbbreviationWsd: {
      if (g.senses.empty()) throw ContractError("wsd gold has no sense annotation");
      const auto& s = g.senses.front();
      return "The sense of the abbreviation " + q(s.abbreviation.text) + " is " + q(s.sense) + ".";
    }
    case TaskKind::kNli:
      if (g.labels.empty()) throw ContractError("nli gold has no label");
      return "The hypothesis that " + q(strip_one_period(second)) + " is " + g.labels.front() +
             " to the premise that " + q(strip_one_period(source)) + ".";
    case TaskKind::kMedicationAttributes: {
      if (g.medications.empty()) throw ContractError("medication gold has no event");
      const auto& m = g.medications.front();
      std::string out = "Event Classification: The category of medication event " +
                        q(m.mention.text) + " is " + q(m.event) + ".";
      if (!m.context.empty()) out += " Context Classification:";
      for (const auto& [dim, value] : m.context) {
        out += " The category of disposition event " + q(m.mention.text) +
               " from the dimension of " + dim + " is " + q(value) + ".";
      }
      return out;
    }
    case TaskKind::kProgressNote:
      if (g.labels.empty()) throw ContractError("progress-note gold has no label");
      return "The relation between the given assessment and plan subsection is " + g.labels.front() + ".";
  }
  return "";
}

std::string build_input(TaskKind kind, const Annotations& gold, std::string_view source,
                        std::string_view second) {
  if (trim(source).empty()) throw ContractError("source text is empty");
  switch (kind) {
    case TaskKind::kConceptExtraction:
    case TaskKind::kConceptNormalization:
    case TaskKind::kAbbreviationWsd:
      return std::string(source);
    case TaskKind::kRelationExtraction: {
      if (gold.relations.size() != 1) return std::string(source);
      const Span& a1 = gold.relations.front().arg1;
      const Span& a2 = gold.relations.front().arg2;
      if (!a1.anchored() || !a2.anchored() || a1.end > source.size() || a2.end > source.size()) {
        throw ContractError("relation arguments are not anchored in the source");
      }
      if (a1.overlaps(a2)) {
        throw ContractError("relation arguments '" + a1.text + "' and '" + a2.text +
                            "' overlap, so markers would nest");
      }
      struct Mark {
        size_t pos;
        int order;
        const char* text;
      };
      std::vector<Mark> marks = {{a1.start, 1, "[s1] "}, {a1.end, 0, " [e1]"},
                                 {a2.start, 1, "[s2] "}, {a2.end, 0, " [e2]"}};
      std::sort(marks.begin(), marks.end(), [](const Mark& x, const Mark& y) {
        return std::tie(x.pos, x.order) < std::tie(y.pos, y.order);
      });
      std::string out;
      size_t at = 0;
      for (const auto& m : marks) {
        out.append(source.substr(at, m.pos - at));
        out += m.text;
        at = m.pos;
      }
      out.append(source.substr(at));
      return out;
    }
    case TaskKind::kNli:
      if (trim(second).empty()) throw ContractError("hypothesis is empty");
      return "Premise: " + std::string(source) + " Hypothesis: " + std::string(second);
    case TaskKind::kMedicationAttributes:
      if (gold.medications.empty()) throw ContractError("medication input needs the focus mention");
      return "Context: " + q(source) + " Medication: " + q(gold.medications.front().mention.text);
    case TaskKind::kProgressNote:
      if (trim(second).empty()) throw ContractError("plan is empty");
      return "Assessment: " + q(source) + " Plan: " + q(second);
  }
  return "";
}

TaskInstance make_instance(std::string id, TaskKind kind, std::string source_text,
                           std::string second_text, Annotations gold, const Lexicon& lexicon) {
  TaskInstance inst;
  inst.id = std::move(id);
  inst.kind = kind;
  inst.source_text = std::move(source_text);
  inst.second_text = std::move(second_text);
  inst.gold = canonical_order(kind, std::move(gold));
  validate_gold(kind, inst.gold, inst.source_text, inst.second_text, lexicon);
  inst.input_text = build_input(kind, inst.gold, inst.source_text, inst.second_text);
  inst.target_text = serialize_target(kind, inst.gold, inst.source_text, inst.second_text);
  return inst;
}

ParseContext parse_context(const TaskInstance& inst) {
  ParseContext ctx;
  ctx.kind = inst.kind;
  ctx.source_text = inst.source_text;
  ctx.second_text = inst.second_text;
  for (const auto& r : inst.gold.relations) ctx.expected_pairs.emplace_back(r.arg1, r.arg2);
  for (const auto& s : inst.gold.senses) ctx.focus.push_back(s.abbreviation);
  for (const auto& m : inst.gold.medications) ctx.focus.push_back(m.mention);
  return ctx;
}

ParsedOutput parse_output(const ParseContext& ctx, std::string_view generated,
                          const Lexicon& lexicon) {
  if (ctx.source_text.empty()) throw ContractError("parse_output needs the source text");
  ParsedOutput out;
  const std::string_view t = trim(generated);
  if (t.empty()) {
    out.status = is_span_task(ctx.kind) ? OutputStatus::kWellFormed : OutputStatus::kNonlogical;
    return out;
  }
  Recovery r;
  switch (ctx.kind) {
    case TaskKind::kConceptExtraction: r = recover_concepts(ctx, t); break;
    case TaskKind::kRelationExtraction: r = recover_relations(ctx, t); break;
    case TaskKind::kConceptNormalization:
      r = recover_normalizations(ctx, t, lexicon, out.ambiguous_cuis);
      break;
    case TaskKind::kAbbreviationWsd: r = recover_sense(ctx, t); break;
    case TaskKind::kNli: r = recover_nli(ctx, t); break;
    case TaskKind::kMedicationAttributes: r = recover_medication(ctx, t); break;
    case TaskKind::kProgressNote: r = recover_progress(ctx, t); break;
  }
  if (r.template_exact && r.complete) {
    out.status = OutputStatus::kWellFormed;
    out.predictions = std::move(r.preds);
    return out;
  }
  if (!r.preds.empty() && template_keyword_count(t) > 0) {
    out.status = OutputStatus::kInterpretable;
    out.predictions = std::move(r.preds);
    return out;
  }
  out.ambiguous_cuis = 0;
  out.status = looks_nonlogical(t) ? OutputStatus::kNonlogical : OutputStatus::kIrrelevant;
  return out;
}

bool round_trip(const TaskInstance& inst, const Lexicon& lexicon) {
  const ParsedOutput parsed = parse_output(parse_context(inst), inst.target_text, lexicon);
  return parsed.status == OutputStatus::kWellFormed &&
         canonical_order(inst.kind, parsed.predictions) == canonical_order(inst.kind, inst.gold);
}

}  // namespace clinprompt
