#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "debias/error.hpp"

#ifndef DEBIAS_DEFAULT_DATA_DIR
#define DEBIAS_DEFAULT_DATA_DIR "data"
#endif

namespace debias {

// Directory holding the shipped lexicons and gazetteer. DEBIAS_DATA_DIR in
// the environment overrides the build-time location.
inline std::filesystem::path data_dir() {
  if (const char* env = std::getenv("DEBIAS_DATA_DIR"); env && *env) return env;
  return DEBIAS_DEFAULT_DATA_DIR;
}

inline std::filesystem::path data_path(const std::string& name) { return data_dir() / name; }

namespace detail {

inline std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

// Non-empty, non-comment lines of a text file. A comment line starts with
// "# " or is exactly "#", so entries like "#)" stay usable.
inline std::vector<std::string> read_list_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IO_ERROR, "cannot open " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t == "#" || t.rfind("# ", 0) == 0) continue;
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace detail
}  // namespace debias
