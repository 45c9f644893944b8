#include <charconv>
#include <filesystem>
#include <map>
#include <set>

#include "clinprompt/checkpoint.h"
#include "clinprompt/codec.h"
#include "clinprompt/corpus.h"
#include "clinprompt/error.h"
#include "clinprompt/text.h"

namespace clinprompt {
namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  size_t pos = 0;
  while (true) {
    const size_t next = s.find(sep, pos);
    out.push_back(s.substr(pos, next == std::string_view::npos ? next : next - pos));
    if (next == std::string_view::npos) return out;
    pos = next + 1;
  }
}

bool parse_size(std::string_view s, size_t& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

StandoffEntity parse_entity(std::string_view id, const std::vector<std::string_view>& fields,
                            std::string_view text, size_t line) {
  if (fields.size() != 3) throw ParseError("text-bound record needs 3 tab-separated fields", line);
  const std::string_view spec = fields[1];
  if (spec.find(';') != std::string_view::npos) {
    throw ParseError("discontinuous spans are not supported", line);
  }
  const size_t last = spec.rfind(' ');
  const size_t mid = last == std::string_view::npos ? last : spec.rfind(' ', last - 1);
  StandoffEntity e;
  e.id = std::string(id);
  if (mid == std::string_view::npos || mid == 0 || !parse_size(spec.substr(mid + 1, last - mid - 1), e.start) ||
      !parse_size(spec.substr(last + 1), e.end)) {
    throw ParseError("expected '<Label> <start> <end>', got '" + std::string(spec) + "'", line);
  }
  e.label = std::string(spec.substr(0, mid));
  e.surface = std::string(fields[2]);
  if (e.start >= e.end || e.end > text.size()) {
    throw ParseError("offsets " + std::to_string(e.start) + "-" + std::to_string(e.end) +
                         " are outside the " + std::to_string(text.size()) + "-byte text",
                     line);
  }
  if (text.substr(e.start, e.end - e.start) != e.surface) {
    throw ParseError("surface '" + e.surface + "' does not match text '" +
                         std::string(text.substr(e.start, e.end - e.start)) + "'",
                     line);
  }
  return e;
}

StandoffRelation parse_relation(std::string_view id, const std::vector<std::string_view>& fields,
                                size_t line) {
  if (fields.size() < 2 || fields.size() > 3 || (fields.size() == 3 && !fields[2].empty())) {
    throw ParseError("relation record needs 2 tab-separated fields", line);
  }
  const std::string_view spec = fields[1];
  const size_t a1 = spec.find(" Arg1:");
  const size_t a2 = spec.find(" Arg2:");
  if (a1 == std::string_view::npos || a2 == std::string_view::npos || a2 < a1 || a1 == 0) {
    throw ParseError("expected '<Label> Arg1:T<i> Arg2:T<j>', got '" + std::string(spec) + "'",
                     line);
  }
  StandoffRelation r;
  r.id = std::string(id);
  r.label = std::string(spec.substr(0, a1));
  r.arg1 = std::string(spec.substr(a1 + 6, a2 - a1 - 6));
  r.arg2 = std::string(spec.substr(a2 + 6));
  if (r.arg1.empty() || r.arg2.empty() || r.arg1.find(' ') != std::string::npos ||
      r.arg2.find(' ') != std::string::npos) {
    throw ParseError("malformed relation arguments in '" + std::string(spec) + "'", line);
  }
  return r;
}

}  // namespace

const StandoffEntity* StandoffDocument::entity(std::string_view id) const {
  for (const auto& e : entities) {
    if (e.id == id) return &e;
  }
  return nullptr;
}

StandoffDocument parse_standoff(std::string doc_id, std::string text,
                                std::string_view annotations) {
  StandoffDocument doc;
  doc.doc_id = std::move(doc_id);
  doc.text = std::move(text);
  std::set<std::string> ids;
  std::vector<size_t> relation_lines;
  const auto lines = split(annotations, '\n');
  for (size_t i = 0; i < lines.size(); ++i) {
    const size_t line_no = i + 1;
    std::string_view line = lines[i];
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty()) continue;
    const auto fields = split(line, '\t');
    const std::string_view id = fields[0];
    if (id.size() < 2 || (id[0] != 'T' && id[0] != 'R')) {
      throw ParseError("unsupported record '" + std::string(id) + "' (only T and R records)",
                       line_no);
    }
    size_t n = 0;
    if (!parse_size(id.substr(1), n)) throw ParseError("malformed id '" + std::string(id) + "'", line_no);
    if (!ids.insert(std::string(id)).second) {
      throw ParseError("duplicate id '" + std::string(id) + "'", line_no);
    }
    if (id[0] == 'T') {
      doc.entities.push_back(parse_entity(id, fields, doc.text, line_no));
    } else {
      doc.relations.push_back(parse_relation(id, fields, line_no));
      relation_lines.push_back(line_no);
    }
  }
  for (size_t i = 0; i < doc.relations.size(); ++i) {
    for (const std::string* arg : {&doc.relations[i].arg1, &doc.relations[i].arg2}) {
      if (!doc.entity(*arg)) {
        throw ParseError("relation " + doc.relations[i].id + " refers to missing entity " + *arg,
                         relation_lines[i]);
      }
    }
  }
  return doc;
}

std::string serialize_standoff(const StandoffDocument& doc) {
  std::string out;
  for (const auto& e : doc.entities) {
    out += e.id + "\t" + e.label + " " + std::to_string(e.start) + " " + std::to_string(e.end) +
           "\t" + e.surface + "\n";
  }
  for (const auto& r : doc.relations) {
    out += r.id + "\t" + r.label + " Arg1:" + r.arg1 + " Arg2:" + r.arg2 + "\n";
  }
  return out;
}

StandoffDocument load_standoff(const std::string& text_path, const std::string& ann_path) {
  std::string text = read_file(text_path);
  const std::string ann = read_file(ann_path);
  try {
    return parse_standoff(std::filesystem::path(text_path).stem().string(), std::move(text), ann);
  } catch (const ParseError& e) {
    throw ParseError(ann_path + ": " + e.what());
  }
}

void save_standoff(const StandoffDocument& doc, const std::string& text_path,
                   const std::string& ann_path) {
  write_file(text_path, doc.text);
  write_file(ann_path, serialize_standoff(doc));
}

std::vector<TaskInstance> standoff_to_instances(const StandoffDocument& doc, TaskKind kind,
                                                const Lexicon& lexicon, size_t* dropped) {
  if (kind != TaskKind::kConceptExtraction && kind != TaskKind::kRelationExtraction) {
    throw ContractError("standoff conversion supports the concept and relation tasks, not " +
                        std::string(task_name(kind)));
  }
  struct Line {
    size_t start, end, number;
  };
  std::vector<Line> lines;
  size_t number = 0;
  for (size_t pos = 0; pos <= doc.text.size();) {
    size_t nl = doc.text.find('\n', pos);
    if (nl == std::string::npos) nl = doc.text.size();
    ++number;
    size_t end = nl;
    if (end > pos && doc.text[end - 1] == '\r') --end;
    lines.push_back({pos, end, number});
    pos = nl + 1;
  }
  auto line_of = [&](const StandoffEntity& e) -> const Line& {
    for (const auto& l : lines) {
      if (e.start >= l.start && e.end <= l.end) return l;
    }
    throw ContractError(doc.doc_id + ": entity " + e.id + " crosses a line break");
  };
  auto rebase = [](const StandoffEntity& e, const Line& l) {
    return Span{e.start - l.start, e.end - l.start, e.surface};
  };

  std::map<size_t, Annotations> by_line;
  if (kind == TaskKind::kConceptExtraction) {
    for (const auto& e : doc.entities) {
      const Line& l = line_of(e);
      by_line[l.number].concepts.push_back({rebase(e, l), e.label});
    }
  } else {
    size_t skipped = 0;
    for (const auto& r : doc.relations) {
      const StandoffEntity& a1 = *doc.entity(r.arg1);
      const StandoffEntity& a2 = *doc.entity(r.arg2);
      const Line& l1 = line_of(a1);
      const Line& l2 = line_of(a2);
      if (l1.number != l2.number) {
        ++skipped;
        continue;
      }
      by_line[l1.number].relations.push_back({rebase(a1, l1), rebase(a2, l1), r.label});
    }
    if (dropped) *dropped += skipped;
  }

  std::vector<TaskInstance> out;
  for (const auto& l : lines) {
    std::string source = doc.text.substr(l.start, l.end - l.start);
    if (trim(source).empty()) continue;
    const std::string id = doc.doc_id + ":" + std::to_string(l.number);
    try {
      out.push_back(make_instance(id, kind, std::move(source), "", by_line[l.number], lexicon));
    } catch (const ContractError& e) {
      throw ContractError(id + ": " + e.what());
    }
  }
  return out;
}

}  // namespace clinprompt
