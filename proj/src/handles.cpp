// SPDX-License-Identifier: Apache-2.0
#include "crs/handles.hpp"

#include <cctype>

namespace crs {

WorkdirFactory::WorkdirFactory(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
}

fs::path WorkdirFactory::create(std::string_view label) {
  std::string clean;
  for (char c : label) {
    clean += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' ? c : '_';
  }
  if (clean.empty()) clean = "work";
  fs::path dir = root_ / ids_.next(clean);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace crs
