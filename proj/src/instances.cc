#include "clinprompt/checkpoint.h"
#include "clinprompt/codec.h"
#include "clinprompt/corpus.h"
#include "clinprompt/error.h"
#include "json.hpp"

namespace clinprompt {
namespace {

using json = nlohmann::ordered_json;

// Schema errors carry the dotted path of the field.
class SchemaError : public ParseError {
 public:
  using ParseError::ParseError;
};

const json& field(const json& obj, const std::string& path, const std::string& key) {
  if (!obj.is_object()) throw SchemaError("'" + path + "' must be an object");
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw SchemaError("missing required field '" + (path.empty() ? key : path + "." + key) + "'");
  }
  return *it;
}

std::string str(const json& obj, const std::string& path, const std::string& key) {
  const json& v = field(obj, path, key);
  if (!v.is_string()) throw SchemaError("field '" + (path.empty() ? key : path + "." + key) + "' must be a string");
  return v.get<std::string>();
}

size_t num(const json& obj, const std::string& path, const std::string& key) {
  const json& v = field(obj, path, key);
  if (!v.is_number_unsigned()) {
    throw SchemaError("field '" + path + "." + key + "' must be a non-negative integer");
  }
  return v.get<size_t>();
}

std::string dump(const json& j) {
  try {
    return j.dump();
  } catch (const json::type_error&) {
    throw ContractError("text is not valid UTF-8 and cannot be written as JSON");
  }
}

json span_json(const Span& s) { return {{"start", s.start}, {"end", s.end}, {"text", s.text}}; }

Span span_from(const json& obj, const std::string& path) {
  return {num(obj, path, "start"), num(obj, path, "end"), str(obj, path, "text")};
}

const json& array(const json& obj, const std::string& key) {
  const json& v = field(obj, "", key);
  if (!v.is_array()) throw SchemaError("field '" + key + "' must be an array");
  return v;
}

json gold_json(TaskKind kind, const Annotations& g) {
  switch (kind) {
    case TaskKind::kConceptExtraction: {
      json a = json::array();
      for (const auto& c : g.concepts) {
        json o = span_json(c.span);
        o["label"] = c.label;
        a.push_back(std::move(o));
      }
      return a;
    }
    case TaskKind::kRelationExtraction: {
      json a = json::array();
      for (const auto& r : g.relations) {
        a.push_back({{"label", r.label}, {"arg1", span_json(r.arg1)}, {"arg2", span_json(r.arg2)}});
      }
      return a;
    }
    case TaskKind::kConceptNormalization: {
      json a = json::array();
      for (const auto& n : g.normalizations) {
        json o = span_json(n.mention);
        o["cui"] = n.cui;
        o["preferred_name"] = n.preferred_name;
        a.push_back(std::move(o));
      }
      return a;
    }
    case TaskKind::kAbbreviationWsd: {
      if (g.senses.empty()) return json::object();
      json o = span_json(g.senses.front().abbreviation);
      o["sense"] = g.senses.front().sense;
      return o;
    }
    case TaskKind::kNli:
    case TaskKind::kProgressNote:
      return g.labels.empty() ? json::object() : json{{"label", g.labels.front()}};
    case TaskKind::kMedicationAttributes: {
      if (g.medications.empty()) return json::object();
      const auto& m = g.medications.front();
      json o = span_json(m.mention);
      o["event"] = m.event;
      if (!m.context.empty()) {
        json ctx = json::object();
        for (const auto& [dim, value] : m.context) ctx[dim] = value;
        o["context"] = std::move(ctx);
      }
      return o;
    }
  }
  return nullptr;
}

Annotations gold_from(TaskKind kind, const json& rec) {
  Annotations g;
  switch (kind) {
    case TaskKind::kConceptExtraction: {
      const json& a = array(rec, "gold");
      for (size_t i = 0; i < a.size(); ++i) {
        const std::string path = "gold[" + std::to_string(i) + "]";
        g.concepts.push_back({span_from(a[i], path), str(a[i], path, "label")});
      }
      break;
    }
    case TaskKind::kRelationExtraction: {
      const json& a = array(rec, "gold");
      for (size_t i = 0; i < a.size(); ++i) {
        const std::string path = "gold[" + std::to_string(i) + "]";
        g.relations.push_back({span_from(field(a[i], path, "arg1"), path + ".arg1"),
                               span_from(field(a[i], path, "arg2"), path + ".arg2"),
                               str(a[i], path, "label")});
      }
      break;
    }
    case TaskKind::kConceptNormalization: {
      const json& a = array(rec, "gold");
      for (size_t i = 0; i < a.size(); ++i) {
        const std::string path = "gold[" + std::to_string(i) + "]";
        g.normalizations.push_back(
            {span_from(a[i], path), str(a[i], path, "cui"), str(a[i], path, "preferred_name")});
      }
      break;
    }
    case TaskKind::kAbbreviationWsd: {
      const json& o = field(rec, "", "gold");
      g.senses.push_back({span_from(o, "gold"), str(o, "gold", "sense")});
      break;
    }
    case TaskKind::kNli:
    case TaskKind::kProgressNote:
      g.labels.push_back(str(field(rec, "", "gold"), "gold", "label"));
      break;
    case TaskKind::kMedicationAttributes: {
      const json& o = field(rec, "", "gold");
      MedicationAnnotation m{span_from(o, "gold"), str(o, "gold", "event"), {}};
      if (auto it = o.find("context"); it != o.end()) {
        if (!it->is_object()) throw SchemaError("field 'gold.context' must be an object");
        for (const auto& [dim, value] : it->items()) {
          if (!value.is_string()) throw SchemaError("field 'gold.context." + dim + "' must be a string");
          m.context.emplace_back(dim, value.get<std::string>());
        }
      }
      g.medications.push_back(std::move(m));
      break;
    }
  }
  return g;
}

template <typename F>
auto per_line(std::string_view text, F f) {
  size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      f(line);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no);
    } catch (const ContractError& e) {
      throw ParseError(e.what(), line_no);
    }
  }
}

}  // namespace

std::string instance_to_json(const TaskInstance& inst) {
  json rec = {{"id", inst.id}, {"task", std::string(task_name(inst.kind))},
              {"source_text", inst.source_text}};
  if (!inst.second_text.empty()) rec["second_text"] = inst.second_text;
  rec["input_text"] = inst.input_text;
  rec["gold"] = gold_json(inst.kind, inst.gold);
  rec["target_text"] = inst.target_text;
  return dump(rec);
}

TaskInstance instance_from_json(std::string_view line, const Lexicon& lexicon) {
  json rec;
  try {
    rec = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  if (!rec.is_object()) throw SchemaError("record must be a JSON object");
  const std::string id = str(rec, "", "id");
  const TaskKind kind = parse_task_kind(str(rec, "", "task"));
  std::string source = str(rec, "", "source_text");
  std::string second = rec.contains("second_text") ? str(rec, "", "second_text") : "";
  const std::string input = str(rec, "", "input_text");
  const std::string target = str(rec, "", "target_text");
  TaskInstance inst;
  try {
    inst = make_instance(id, kind, std::move(source), std::move(second), gold_from(kind, rec), lexicon);
  } catch (const ContractError& e) {
    throw ContractError("instance '" + id + "': " + e.what());
  }
  if (inst.input_text != input) {
    throw SchemaError("field 'input_text' of '" + id + "' does not match its source and gold");
  }
  if (inst.target_text != target) {
    throw SchemaError("field 'target_text' of '" + id + "' does not match its gold");
  }
  return inst;
}

std::string serialize_instances(const std::vector<TaskInstance>& insts) {
  std::string out;
  for (const auto& i : insts) out += instance_to_json(i) + "\n";
  return out;
}

std::vector<TaskInstance> parse_instances(std::string_view text, const Lexicon& lexicon) {
  std::vector<TaskInstance> out;
  per_line(text, [&](std::string_view line) { out.push_back(instance_from_json(line, lexicon)); });
  return out;
}

std::vector<TaskInstance> read_instances(const std::string& path, const Lexicon& lexicon) {
  try {
    return parse_instances(read_file(path), lexicon);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_instances(const std::string& path, const std::vector<TaskInstance>& insts) {
  write_file(path, serialize_instances(insts));
}

std::string serialize_generations(const std::vector<Generation>& gens) {
  std::string out;
  for (const auto& [id, text] : gens) out += dump(json{{"id", id}, {"generated", text}}) + "\n";
  return out;
}

std::vector<Generation> parse_generations(std::string_view text) {
  std::vector<Generation> out;
  per_line(text, [&](std::string_view line) {
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what());
    }
    out.emplace_back(str(rec, "", "id"), str(rec, "", "generated"));
  });
  return out;
}

}  // namespace clinprompt
