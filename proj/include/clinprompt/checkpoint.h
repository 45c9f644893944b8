#ifndef CLINPROMPT_CHECKPOINT_H_
#define CLINPROMPT_CHECKPOINT_H_

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clinprompt/tensor.h"

namespace clinprompt {

inline constexpr int kCheckpointVersion = 1;

// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

struct NamedArray {
  std::string name;
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> values;
};

// Container shared by model and prompt checkpoints:
//
//   CLINPROMPT-CHECKPOINT
//   version 1
//   kind <kind>
//   meta <key> <value>          (repeated, value runs to end of line)
//   array <name> <rows> <cols>  (repeated, in payload order)
//   payload <byte count>
//   sha256 <hex digest of payload>
//   end
//   <payload: each array's values as little-endian IEEE-754 doubles>
struct Checkpoint {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<NamedArray> arrays;

  void add_meta(std::string key, std::string value);
  void add_array(std::string name, const Tensor& t);
  // Throws ParseError when the key or array is missing.
  const std::string& meta_value(std::string_view key) const;
  const NamedArray& array(std::string_view name) const;
  Tensor tensor(std::string_view name, bool requires_grad = false) const;

  // Raw concatenated array bytes; the digest is taken over this.
  std::string payload() const;
  std::string serialize() const;
  // Verifies version, payload length and digest.
  static Checkpoint parse(std::string_view bytes);
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// File helpers shared by the I/O modules.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace clinprompt

#endif  // CLINPROMPT_CHECKPOINT_H_
