#include "clinprompt/checkpoint.h"

#include <openssl/evp.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "clinprompt/error.h"

namespace clinprompt {
namespace {

constexpr std::string_view kMagic = "CLINPROMPT-CHECKPOINT";

void append_le_double(std::string& out, double v) {
  uint64_t bits = std::bit_cast<uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>(bits & 0xff));
    bits >>= 8;
  }
}

double read_le_double(const unsigned char* p) {
  uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | p[i];
  return std::bit_cast<double>(bits);
}

bool valid_token(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c == ' ' || c == '\n' || c == '\t' || c == '\r') return false;
  }
  return true;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(),
                 nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

void Checkpoint::add_meta(std::string key, std::string value) {
  if (!valid_token(key) || value.find('\n') != std::string::npos) {
    throw ContractError("checkpoint meta entry '" + key + "' is not encodable");
  }
  meta.emplace_back(std::move(key), std::move(value));
}

void Checkpoint::add_array(std::string name, const Tensor& t) {
  if (!valid_token(name)) {
    throw ContractError("checkpoint array name '" + name + "' is not encodable");
  }
  arrays.push_back({std::move(name), t.rows(), t.cols(),
                    std::vector<double>(t.data().begin(), t.data().end())});
}

const std::string& Checkpoint::meta_value(std::string_view key) const {
  for (const auto& [k, v] : meta) {
    if (k == key) return v;
  }
  throw ParseError("checkpoint is missing meta key '" + std::string(key) + "'");
}

const NamedArray& Checkpoint::array(std::string_view name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw ParseError("checkpoint is missing array '" + std::string(name) + "'");
}

Tensor Checkpoint::tensor(std::string_view name, bool requires_grad) const {
  const NamedArray& a = array(name);
  return Tensor({a.rows, a.cols}, a.values, requires_grad);
}

std::string Checkpoint::payload() const {
  std::string out;
  size_t total = 0;
  for (const auto& a : arrays) total += a.values.size();
  out.reserve(total * 8);
  for (const auto& a : arrays) {
    for (double v : a.values) append_le_double(out, v);
  }
  return out;
}

std::string Checkpoint::serialize() const {
  const std::string body = payload();
  std::ostringstream header;
  header << kMagic << "\n";
  header << "version " << kCheckpointVersion << "\n";
  header << "kind " << kind << "\n";
  for (const auto& [k, v] : meta) header << "meta " << k << " " << v << "\n";
  for (const auto& a : arrays) {
    header << "array " << a.name << " " << a.rows << " " << a.cols << "\n";
  }
  header << "payload " << body.size() << "\n";
  header << "sha256 " << sha256_hex(body) << "\n";
  header << "end\n";
  return header.str() + body;
}

Checkpoint Checkpoint::parse(std::string_view bytes) {
  Checkpoint ckpt;
  size_t pos = 0;
  size_t line_no = 0;
  auto next_line = [&]() -> std::string_view {
    const size_t nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) {
      throw CorruptionError("checkpoint header is truncated");
    }
    std::string_view line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    return line;
  };
  auto split_first = [](std::string_view line) {
    const size_t sp = line.find(' ');
    if (sp == std::string_view::npos) {
      return std::pair{line, std::string_view{}};
    }
    return std::pair{line.substr(0, sp), line.substr(sp + 1)};
  };

  if (next_line() != kMagic) throw CorruptionError("not a checkpoint file");
  {
    auto [key, value] = split_first(next_line());
    if (key != "version") throw CorruptionError("checkpoint lacks a version");
    if (value != std::to_string(kCheckpointVersion)) {
      throw VersionError("checkpoint format version " + std::string(value) +
                         " is not supported (expected " +
                         std::to_string(kCheckpointVersion) + ")");
    }
  }
  size_t payload_size = 0;
  bool have_payload = false;
  std::string digest;
  while (true) {
    const std::string_view line = next_line();
    if (line == "end") break;
    auto [key, rest] = split_first(line);
    if (key == "kind") {
      ckpt.kind = std::string(rest);
    } else if (key == "meta") {
      auto [k, v] = split_first(rest);
      ckpt.meta.emplace_back(std::string(k), std::string(v));
    } else if (key == "array") {
      std::istringstream in{std::string(rest)};
      NamedArray a;
      if (!(in >> a.name >> a.rows >> a.cols) || a.rows == 0 || a.cols == 0) {
        throw ParseError("malformed array entry in checkpoint header", line_no);
      }
      ckpt.arrays.push_back(std::move(a));
    } else if (key == "payload") {
      payload_size = std::stoull(std::string(rest));
      have_payload = true;
    } else if (key == "sha256") {
      digest = std::string(rest);
    } else {
      throw ParseError("unknown checkpoint header key '" + std::string(key) +
                           "'",
                       line_no);
    }
  }
  if (!have_payload || digest.empty()) {
    throw CorruptionError("checkpoint header lacks payload size or digest");
  }
  const std::string_view body = bytes.substr(pos);
  if (body.size() != payload_size) {
    throw CorruptionError("checkpoint payload has " +
                          std::to_string(body.size()) + " bytes, header says " +
                          std::to_string(payload_size));
  }
  if (sha256_hex(body) != digest) {
    throw CorruptionError("checkpoint payload digest mismatch");
  }
  size_t expected = 0;
  for (const auto& a : ckpt.arrays) expected += a.rows * a.cols * 8;
  if (expected != payload_size) {
    throw CorruptionError("checkpoint arrays do not account for the payload");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(body.data());
  for (auto& a : ckpt.arrays) {
    a.values.resize(a.rows * a.cols);
    for (auto& v : a.values) {
      v = read_le_double(p);
      p += 8;
    }
  }
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file(path, ckpt.serialize());
}

Checkpoint load_checkpoint(const std::string& path) {
  return Checkpoint::parse(read_file(path));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

}  // namespace clinprompt
