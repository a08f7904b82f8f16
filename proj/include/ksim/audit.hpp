// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#ifndef KSIM_AUDIT_HPP
#define KSIM_AUDIT_HPP

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ksim {

/// Append-only event log shared by every component of a simulation.
/// One line per event:
///   step=<n> hart=<h> event=<name> args=<k=v,k=v,...>
/// Lines are stable across runs with the same seed, which is what the
/// determinism checks key on.
class AuditLog {
 public:
  void record(uint64_t step, unsigned hart, std::string_view event,
              std::string_view args);

  const std::vector<std::string>& lines() const { return lines_; }
  std::string text() const;
  bool contains(std::string_view needle) const;
  size_t count(std::string_view needle) const;
  void clear() { lines_.clear(); }

 private:
  std::vector<std::string> lines_;
};

}  // namespace ksim

#endif
