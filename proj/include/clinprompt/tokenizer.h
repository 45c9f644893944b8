#ifndef CLINPROMPT_TOKENIZER_H_
#define CLINPROMPT_TOKENIZER_H_

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace clinprompt {

inline constexpr int kBosId = 0;
inline constexpr int kEosId = 1;
inline constexpr int kPadId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kNumSpecial = 4;

enum class TokenizerMode { kByteLevelBpe, kWordLevel };

std::string_view mode_name(TokenizerMode mode);
TokenizerMode parse_tokenizer_mode(std::string_view name);

// Splits text into pre-tokenization chunks. A chunk is an optional single
// leading space followed by a run of word bytes (alphanumeric or >= 0x80) or
// a run of punctuation bytes; leftover whitespace forms its own chunks.
// Concatenating the chunks reproduces the input.
std::vector<std::string_view> split_chunks(std::string_view text);

// Text <-> id mapping. Ids 0-3 are BOS, EOS, PAD, UNK. In byte-level BPE
// mode ids 4..259 are the 256 single bytes and later ids are merges in
// training order. In word-level mode tokens are whitespace-separated words
// and decode joins them with single spaces.
class Tokenizer {
 public:
  static Tokenizer train(std::string_view corpus, size_t vocab_size,
                         TokenizerMode mode);

  std::vector<int> encode(std::string_view text) const;
  // Throws ContractError on ids outside the vocabulary. Special tokens
  // decode to nothing.
  std::string decode(std::span<const int> ids) const;

  TokenizerMode mode() const { return mode_; }
  size_t vocab_size() const { return vocab_.size(); }
  const std::string& token(int id) const;
  const std::vector<std::pair<int, int>>& merges() const { return merges_; }

  // Text file: header "<mode>\t<vocab size>", then "id\ttoken" per id, then
  // "left\tright" per merge in order. Tokens are escaped (\\, \t, \n, \r,
  // \xHH for other control bytes and bytes >= 0x80).
  std::string serialize() const;
  static Tokenizer parse(std::string_view text);
  void save(const std::string& path) const;
  static Tokenizer load(const std::string& path);

 private:
  void rebuild_index();
  std::vector<int> encode_chunk_bpe(std::string_view chunk) const;

  TokenizerMode mode_ = TokenizerMode::kByteLevelBpe;
  std::vector<std::string> vocab_;
  std::vector<std::pair<int, int>> merges_;  // ids of left and right parts
  std::map<std::pair<int, int>, int> merge_rank_;
  std::map<std::string, int, std::less<>> word_ids_;
};

}  // namespace clinprompt

#endif  // CLINPROMPT_TOKENIZER_H_
