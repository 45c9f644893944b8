#include "clinprompt/tokenizer.h"

#include <algorithm>
#include <cctype>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "clinprompt/checkpoint.h"
#include "clinprompt/error.h"

namespace clinprompt {
namespace {

constexpr int kByteBase = kNumSpecial;
constexpr int kBpeBaseSize = kNumSpecial + 256;
const char* const kSpecialNames[kNumSpecial] = {"<bos>", "<eos>", "<pad>",
                                                "<unk>"};

enum class ByteClass { kSpace, kWord, kPunct };

ByteClass classify(unsigned char c) {
  if (std::isspace(c)) return ByteClass::kSpace;
  if (std::isalnum(c) || c >= 0x80) return ByteClass::kWord;
  return ByteClass::kPunct;
}

std::vector<std::string_view> split_words(std::string_view text) {
  std::vector<std::string_view> words;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) words.push_back(text.substr(start, i - start));
  }
  return words;
}

std::string escape(std::string_view s) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default:
        if (c < 0x20 || c >= 0x7f) {
          out += "\\x";
          out.push_back(kHex[c >> 4]);
          out.push_back(kHex[c & 0xf]);
        } else {
          out.push_back(static_cast<char>(c));
        }
    }
  }
  return out;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string unescape(std::string_view s, size_t line) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out.push_back(s[i]);
      continue;
    }
    if (++i >= s.size()) throw ParseError("dangling escape", line);
    switch (s[i]) {
      case '\\': out.push_back('\\'); break;
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      case 'x': {
        if (i + 2 >= s.size()) throw ParseError("truncated \\x escape", line);
        const int hi = hex_value(s[i + 1]), lo = hex_value(s[i + 2]);
        if (hi < 0 || lo < 0) throw ParseError("bad \\x escape", line);
        out.push_back(static_cast<char>(hi * 16 + lo));
        i += 2;
        break;
      }
      default:
        throw ParseError(std::string("unknown escape \\") + s[i], line);
    }
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  size_t start = 0;
  while (start < text.size()) {
    size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

// Replaces every left-to-right non-overlapping occurrence of (a, b) by `to`.
void apply_merge(std::vector<int>& ids, int a, int b, int to) {
  size_t w = 0;
  for (size_t r = 0; r < ids.size();) {
    if (r + 1 < ids.size() && ids[r] == a && ids[r + 1] == b) {
      ids[w++] = to;
      r += 2;
    } else {
      ids[w++] = ids[r++];
    }
  }
  ids.resize(w);
}

}  // namespace

std::string_view mode_name(TokenizerMode mode) {
  return mode == TokenizerMode::kByteLevelBpe ? "ByteLevelBPE" : "WordLevel";
}

TokenizerMode parse_tokenizer_mode(std::string_view name) {
  if (name == "ByteLevelBPE" || name == "bpe") return TokenizerMode::kByteLevelBpe;
  if (name == "WordLevel" || name == "word") return TokenizerMode::kWordLevel;
  throw ContractError("unknown tokenizer mode '" + std::string(name) + "'");
}

std::vector<std::string_view> split_chunks(std::string_view text) {
  std::vector<std::string_view> chunks;
  size_t i = 0;
  while (i < text.size()) {
    const size_t start = i;
    auto cls = [&](size_t k) { return classify(static_cast<unsigned char>(text[k])); };
    if (text[i] == ' ' && i + 1 < text.size() && cls(i + 1) != ByteClass::kSpace) {
      ++i;  // a single space attaches to the following run
    }
    const ByteClass c = cls(i);
    while (i < text.size() && cls(i) == c) ++i;
    // Leave a final space for the run that follows it.
    if (c == ByteClass::kSpace && i < text.size() && i - start > 1 && text[i - 1] == ' ') --i;
    chunks.push_back(text.substr(start, i - start));
  }
  return chunks;
}

Tokenizer Tokenizer::train(std::string_view corpus, size_t vocab_size,
                           TokenizerMode mode) {
  if (corpus.empty()) throw ContractError("tokenizer corpus is empty");
  Tokenizer tok;
  tok.mode_ = mode;
  for (const char* name : kSpecialNames) tok.vocab_.emplace_back(name);

  if (mode == TokenizerMode::kWordLevel) {
    if (vocab_size <= static_cast<size_t>(kNumSpecial)) {
      throw ContractError("word-level vocab size must exceed " +
                          std::to_string(kNumSpecial) + " special tokens");
    }
    std::map<std::string_view, size_t> freq;
    for (auto w : split_words(corpus)) ++freq[w];
    std::vector<std::pair<std::string_view, size_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      return a.second > b.second;
    });
    for (const auto& [word, count] : ranked) {
      if (tok.vocab_.size() >= vocab_size) break;
      tok.vocab_.emplace_back(word);
    }
    tok.rebuild_index();
    return tok;
  }

  if (vocab_size <= static_cast<size_t>(kBpeBaseSize)) {
    throw ContractError("byte-level BPE vocab size must exceed " +
                        std::to_string(kBpeBaseSize) +
                        " (special tokens plus 256 bytes)");
  }
  for (int b = 0; b < 256; ++b) tok.vocab_.emplace_back(1, static_cast<char>(b));

  std::map<std::string_view, size_t> chunk_freq;
  for (auto c : split_chunks(corpus)) ++chunk_freq[c];
  std::vector<std::pair<std::vector<int>, size_t>> words;
  for (const auto& [chunk, count] : chunk_freq) {
    std::vector<int> ids;
    for (unsigned char c : chunk) ids.push_back(kByteBase + c);
    words.emplace_back(std::move(ids), count);
  }
  std::unordered_map<std::string, int> by_string;
  for (size_t i = 0; i < tok.vocab_.size(); ++i) by_string.emplace(tok.vocab_[i], static_cast<int>(i));

  while (tok.vocab_.size() < vocab_size) {
    std::map<std::pair<int, int>, size_t> pair_count;
    for (const auto& [ids, count] : words)
      for (size_t i = 0; i + 1 < ids.size(); ++i) pair_count[{ids[i], ids[i + 1]}] += count;

    const std::pair<int, int>* best = nullptr;
    size_t best_count = 0;
    for (const auto& [pair, count] : pair_count) {
      if (count < 2) continue;
      bool better = count > best_count;
      if (!better && count == best_count && best) {
        const auto& l = tok.vocab_;
        better = std::tie(l[pair.first], l[pair.second]) <
                 std::tie(l[best->first], l[best->second]);
      }
      if (better) {
        best = &pair;
        best_count = count;
      }
    }
    if (!best) break;  // no pair repeats
    const auto [a, b] = *best;
    const std::string merged = tok.vocab_[a] + tok.vocab_[b];
    auto [it, inserted] = by_string.emplace(merged, static_cast<int>(tok.vocab_.size()));
    if (inserted) tok.vocab_.push_back(merged);
    tok.merges_.emplace_back(a, b);
    for (auto& [ids, count] : words) apply_merge(ids, a, b, it->second);
  }
  tok.rebuild_index();
  return tok;
}

void Tokenizer::rebuild_index() {
  merge_rank_.clear();
  word_ids_.clear();
  for (size_t i = 0; i < vocab_.size(); ++i) word_ids_.emplace(vocab_[i], static_cast<int>(i));
  for (size_t r = 0; r < merges_.size(); ++r) merge_rank_.emplace(merges_[r], static_cast<int>(r));
}

const std::string& Tokenizer::token(int id) const {
  if (id < 0 || static_cast<size_t>(id) >= vocab_.size()) {
    throw ContractError("token id " + std::to_string(id) + " outside vocabulary of size " +
                        std::to_string(vocab_.size()));
  }
  return vocab_[id];
}

std::vector<int> Tokenizer::encode_chunk_bpe(std::string_view chunk) const {
  std::vector<int> ids;
  ids.reserve(chunk.size());
  for (unsigned char c : chunk) ids.push_back(kByteBase + c);
  while (ids.size() > 1) {
    int best_rank = std::numeric_limits<int>::max();
    for (size_t i = 0; i + 1 < ids.size(); ++i) {
      auto it = merge_rank_.find({ids[i], ids[i + 1]});
      if (it != merge_rank_.end()) best_rank = std::min(best_rank, it->second);
    }
    if (best_rank == std::numeric_limits<int>::max()) break;
    const auto [a, b] = merges_[best_rank];
    const int to = word_ids_.find(vocab_[a] + vocab_[b])->second;
    apply_merge(ids, a, b, to);
  }
  return ids;
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
  std::vector<int> out;
  if (mode_ == TokenizerMode::kWordLevel) {
    for (auto w : split_words(text)) {
      auto it = word_ids_.find(w);
      out.push_back(it == word_ids_.end() || it->second < kNumSpecial ? kUnkId : it->second);
    }
    return out;
  }
  for (auto chunk : split_chunks(text)) {
    const auto ids = encode_chunk_bpe(chunk);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
  std::string out;
  bool first = true;
  for (int id : ids) {
    const std::string& t = token(id);
    if (id == kBosId || id == kEosId || id == kPadId) continue;
    if (mode_ == TokenizerMode::kWordLevel) {
      if (!first) out.push_back(' ');
      first = false;
    }
    out += t;
  }
  return out;
}

std::string Tokenizer::serialize() const {
  std::ostringstream out;
  out << mode_name(mode_) << '\t' << vocab_.size() << '\n';
  for (size_t i = 0; i < vocab_.size(); ++i) out << i << '\t' << escape(vocab_[i]) << '\n';
  for (const auto& [a, b] : merges_) out << escape(vocab_[a]) << '\t' << escape(vocab_[b]) << '\n';
  return out.str();
}

Tokenizer Tokenizer::parse(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw ParseError("empty tokenizer file", 1);
  Tokenizer tok;
  const size_t tab = lines[0].find('\t');
  if (tab == std::string_view::npos) throw ParseError("malformed tokenizer header", 1);
  try {
    tok.mode_ = parse_tokenizer_mode(lines[0].substr(0, tab));
  } catch (const ContractError& e) {
    throw ParseError(e.what(), 1);
  }
  size_t size = 0;
  try {
    size = std::stoull(std::string(lines[0].substr(tab + 1)));
  } catch (const std::exception&) {
    throw ParseError("malformed vocabulary size", 1);
  }
  if (lines.size() < 1 + size) throw ParseError("tokenizer file is truncated", lines.size());
  for (size_t i = 0; i < size; ++i) {
    const auto line = lines[1 + i];
    const size_t t = line.find('\t');
    if (t == std::string_view::npos || line.substr(0, t) != std::to_string(i)) {
      throw ParseError("expected vocabulary entry for id " + std::to_string(i), 2 + i);
    }
    tok.vocab_.push_back(unescape(line.substr(t + 1), 2 + i));
  }
  tok.rebuild_index();
  for (size_t l = 1 + size; l < lines.size(); ++l) {
    const auto line = lines[l];
    const size_t t = line.find('\t');
    if (t == std::string_view::npos) throw ParseError("malformed merge line", l + 1);
    const std::string left = unescape(line.substr(0, t), l + 1);
    const std::string right = unescape(line.substr(t + 1), l + 1);
    auto a = tok.word_ids_.find(left), b = tok.word_ids_.find(right);
    if (a == tok.word_ids_.end() || b == tok.word_ids_.end() ||
        !tok.word_ids_.contains(left + right)) {
      throw ParseError("merge refers to unknown tokens", l + 1);
    }
    tok.merges_.emplace_back(a->second, b->second);
  }
  tok.rebuild_index();
  return tok;
}

void Tokenizer::save(const std::string& path) const { write_file(path, serialize()); }

Tokenizer Tokenizer::load(const std::string& path) { return parse(read_file(path)); }

}  // namespace clinprompt
