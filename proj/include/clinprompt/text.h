#ifndef CLINPROMPT_TEXT_H_
#define CLINPROMPT_TEXT_H_

#include <string>
#include <string_view>
#include <vector>

namespace clinprompt {

// ASCII-only helpers; bytes >= 0x80 pass through unchanged.

inline constexpr std::string_view kOpenQuote = "\xE2\x80\x9C";   // “
inline constexpr std::string_view kCloseQuote = "\xE2\x80\x9D";  // ”

bool is_space(char c);
bool is_alpha(char c);
bool is_alnum(char c);
char to_lower(char c);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
// Position of the first case-insensitive occurrence of `needle` at or after
// `from`, or npos.
size_t ifind(std::string_view hay, std::string_view needle, size_t from = 0);
std::string_view trim(std::string_view s);
// Lowercased maximal runs of ASCII letters.
std::vector<std::string> letter_words(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace clinprompt

#endif  // CLINPROMPT_TEXT_H_
