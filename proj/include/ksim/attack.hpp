// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#ifndef KSIM_ATTACK_HPP
#define KSIM_ATTACK_HPP

#include <functional>
#include <string>
#include <vector>

#include "ksim/host.hpp"

namespace ksim::attacks {

/// One adversarial campaign against a fresh world. `successes` counts actual
/// security failures: enclave-private bytes recovered by the attacker, or an
/// integrity alteration that went undetected. Denials, detected tampering
/// and pure denial-of-service count as attempts only.
struct Report {
  std::string name;
  unsigned attempts = 0;
  unsigned successes = 0;
  unsigned detected = 0;       // tamper attempts the runtime caught
  unsigned audit_denials = 0;  // access_denied lines the campaign produced
  std::vector<std::string> notes;
};

using AttackFn = std::function<Report(const WorldOptions&, uint64_t seed)>;

struct Attack {
  std::string name;
  const char* what;
  AttackFn fn;
};

/// The full corpus. Every entry builds its own world from `opts` (some force
/// specific plugin settings, e.g. sealing for store attacks).
const std::vector<Attack>& corpus();

/// Runs one named attack; unknown names yield a report with a note and one
/// failure-free attempt so callers can treat it as a scripting error.
Report run_one(const std::string& name, const WorldOptions& opts,
               uint64_t seed);

}  // namespace ksim::attacks

#endif
