// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include "ksim/audit.hpp"

#include <sstream>

namespace ksim {

void AuditLog::record(uint64_t step, unsigned hart, std::string_view event,
                      std::string_view args) {
  std::ostringstream os;
  os << "step=" << step << " hart=" << hart << " event=" << event;
  if (!args.empty()) os << " args=" << args;
  lines_.push_back(os.str());
}

std::string AuditLog::text() const {
  std::string out;
  for (const auto& l : lines_) {
    out += l;
    out += '\n';
  }
  return out;
}

bool AuditLog::contains(std::string_view needle) const {
  for (const auto& l : lines_) {
    if (l.find(needle) != std::string::npos) return true;
  }
  return false;
}

size_t AuditLog::count(std::string_view needle) const {
  size_t n = 0;
  for (const auto& l : lines_) {
    if (l.find(needle) != std::string::npos) n++;
  }
  return n;
}

}  // namespace ksim
