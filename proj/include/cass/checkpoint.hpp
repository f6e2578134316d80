#pragma once

// Versioned checkpoint container: a small key=value header describing the
// architecture, then named parameter tensors as raw little-endian doubles,
// then a checksum. Round-trips are exact.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cass/core.hpp"
#include "cass/tensor.hpp"

namespace cass {

struct Checkpoint {
  std::map<std::string, std::string> header;
  std::vector<std::pair<std::string, Tensor>> params;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : params)
      if (n == name) return &t;
    return nullptr;
  }
};

namespace detail {

inline constexpr char kCkptMagic[8] = {'C', 'A', 'S', 'S', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCkptVersion = 1;

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ostringstream body;
  body.write(detail::kCkptMagic, 8);
  write_u32(body, detail::kCkptVersion);
  std::ostringstream hdr;
  for (const auto& [k, v] : ckpt.header) hdr << k << "=" << v << "\n";
  write_str(body, hdr.str());
  write_u64(body, ckpt.params.size());
  for (const auto& [name, t] : ckpt.params) {
    write_str(body, name);
    write_u32(body, static_cast<std::uint32_t>(t.rows()));
    write_u32(body, static_cast<std::uint32_t>(t.cols()));
    for (double v : t.data()) write_f64(body, v);
  }
  const std::string payload = body.str();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw io_error("cannot open checkpoint for writing: " + path);
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  write_u64(os, fnv1a(payload.data(), payload.size()));
  if (!os) throw io_error("write failure on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open checkpoint: " + path);
  std::string bytes((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  if (bytes.size() < 8 + 4 + 8) throw io_error("checkpoint truncated: " + path);
  const std::size_t payload_len = bytes.size() - 8;
  std::istringstream tail(bytes.substr(payload_len));
  if (read_u64(tail) != fnv1a(bytes.data(), payload_len))
    throw io_error("checkpoint checksum mismatch: " + path);

  std::istringstream body(bytes.substr(0, payload_len));
  char magic[8];
  body.read(magic, 8);
  if (!body || std::string(magic, 8) != std::string(detail::kCkptMagic, 8))
    throw io_error("not a checkpoint file: " + path);
  const std::uint32_t version = read_u32(body);
  if (version != detail::kCkptVersion)
    throw io_error("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  std::istringstream hdr(read_str(body));
  std::string line;
  while (std::getline(hdr, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos)
      ckpt.header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const std::uint64_t count = read_u64(body);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = read_str(body);
    const int rows = static_cast<int>(read_u32(body));
    const int cols = static_cast<int>(read_u32(body));
    check(rows > 0 && cols > 0, "checkpoint: bad tensor shape");
    std::vector<double> data(std::size_t(rows) * cols);
    for (auto& v : data) v = read_f64(body);
    ckpt.params.emplace_back(name, Tensor::from_data(rows, cols, std::move(data)));
  }
  return ckpt;
}

}  // namespace cass
