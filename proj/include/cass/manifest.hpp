#pragma once

// Flat key=value run manifests: every output names the exact inputs that
// produced it, by path and checksum.

#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "cass/core.hpp"
#include "cass/dataset.hpp"

namespace cass {

struct RunManifest {
  std::vector<std::pair<std::string, std::string>> entries;

  void add(const std::string& key, const std::string& value) {
    check_arg(key.find('=') == std::string::npos &&
                  key.find('\n') == std::string::npos,
              "manifest key must not contain '=' or newline");
    check_arg(value.find('\n') == std::string::npos,
              "manifest value must not contain newline");
    entries.emplace_back(key, value);
  }

  void add(const std::string& key, double value) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    add(key, std::string(buf));
  }

  void add(const std::string& key, std::uint64_t value) {
    add(key, std::to_string(value));
  }

  void add(const std::string& key, int value) {
    add(key, std::to_string(value));
  }

  // Records both the path and the checksum of an existing file.
  void add_file(const std::string& key, const std::string& path) {
    add(key + ".path", path);
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(file_checksum(path)));
    add(key + ".checksum", std::string(buf));
  }

  void write(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open manifest for writing: " + path);
    for (const auto& [k, v] : entries) os << k << "=" << v << "\n";
    if (!os) throw io_error("write failure on manifest: " + path);
  }
};

}  // namespace cass
