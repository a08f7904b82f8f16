// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#ifndef KSIM_SCENARIO_HPP
#define KSIM_SCENARIO_HPP

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ksim/host.hpp"

namespace ksim::scn {

/// Command line flags that override values given on a scenario's boot line.
struct Overrides {
  std::optional<uint64_t> seed;
  std::optional<uint64_t> paging_limit;
  std::optional<uint64_t> scratchpad_pages;
  std::optional<unsigned> cache_partition_ways;
  std::optional<uint64_t> watchdog;
  std::optional<bool> encrypt;
  std::optional<bool> dyn_resize;
};

struct Result {
  int exit_code = 2;  // 0 all checks passed, 1 check failures, 2 bad input
  unsigned passed = 0;
  unsigned failed = 0;
  std::vector<std::string> log;  // command echo and outcomes
  std::string error;             // parse/setup diagnostics when exit_code==2
  std::string audit_text;        // full audit trail of the run
};

/// Parses and executes a scenario script; docs/SCENARIO.md has the grammar.
Result run_text(const std::string& text, const Overrides& ov);
Result run_file(const std::string& path, const Overrides& ov);

}  // namespace ksim::scn

#endif
