// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#ifndef KSIM_MACHINE_HPP
#define KSIM_MACHINE_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ksim/audit.hpp"
#include "ksim/bytes.hpp"

namespace ksim {

class CacheModel;

enum class AccessKind : uint8_t { Read, Write, Execute };
enum class PrivMode : uint8_t { U, S, M };

char access_kind_char(AccessKind k);
char priv_char(PrivMode p);

/// Cache/trace ownership tag. Host software (OS + untrusted apps) is one
/// domain; each enclave is its own.
struct Domain {
  int32_t id = -1;
  static constexpr Domain host() { return Domain{-1}; }
  static constexpr Domain enclave(int32_t e) { return Domain{e}; }
  bool is_host() const { return id < 0; }
  bool operator==(const Domain&) const = default;
};

struct Region {
  uint64_t base = 0;
  uint64_t size = 0;
  uint64_t end() const { return base + size; }
  bool contains(uint64_t addr, uint64_t len = 1) const {
    return addr >= base && len <= size && addr - base <= size - len;
  }
  bool overlaps(const Region& o) const {
    return size != 0 && o.size != 0 && base < o.end() && o.base < end();
  }
  bool operator==(const Region&) const = default;
};

// ---------------------------------------------------------------------------
// Physical memory protection
// ---------------------------------------------------------------------------

enum class PmpMode : uint8_t { Off, Tor, Na4, Napot };

struct PmpPerms {
  bool r = false, w = false, x = false;
  bool grants(AccessKind k) const {
    switch (k) {
      case AccessKind::Read: return r;
      case AccessKind::Write: return w;
      case AccessKind::Execute: return x;
    }
    return false;
  }
  bool operator==(const PmpPerms&) const = default;
};

inline constexpr PmpPerms kPermsNone{false, false, false};
inline constexpr PmpPerms kPermsRw{true, true, false};
inline constexpr PmpPerms kPermsRwx{true, true, true};

/// One PMP entry. `addr` holds the architectural pmpaddr register value,
/// i.e. a physical address shifted right by 2 (with NAPOT size bits folded
/// into the low bits).
struct PmpEntry {
  PmpMode mode = PmpMode::Off;
  PmpPerms perms{};
  uint64_t addr = 0;
  bool operator==(const PmpEntry&) const = default;
};

constexpr unsigned kPmpEntryCount = 16;

/// Per-hart bank of 16 prioritized entries. Entry 0 has highest priority.
class PmpFile {
 public:
  const PmpEntry& entry(unsigned i) const { return entries_.at(i); }
  void set_entry(unsigned i, const PmpEntry& e) { entries_.at(i) = e; }

  /// Address range an entry matches, honoring the TOR rule that entry i's
  /// lower bound is the *address register* of entry i-1 regardless of entry
  /// i-1's mode (index 0 bottoms out at address zero). Off entries and empty
  /// TOR ranges decode to nullopt.
  std::optional<Region> region_of(unsigned i) const;

  /// Index of the highest-priority (lowest-numbered) active entry matching
  /// byte `addr`, or nullopt when no entry matches.
  std::optional<unsigned> match_byte(uint64_t addr) const;

  bool operator==(const PmpFile&) const = default;

 private:
  std::array<PmpEntry, kPmpEntryCount> entries_{};
};

/// Result of turning a [base, size) region into PMP entries. Naturally
/// aligned power-of-two regions fit one NAPOT/NA4 entry; anything else takes
/// a TOR pair where `guard` occupies the preceding index to supply the lower
/// bound (guard mode is Off, so it matches nothing by itself).
struct EncodedRegion {
  bool uses_guard = false;
  PmpEntry entry;
  PmpEntry guard;
};

enum class EncodeError : uint8_t { Ok, Unaligned, ZeroSize };

EncodeError encode_region(uint64_t base, uint64_t size, PmpPerms perms,
                          EncodedRegion& out);

enum class PmpDecision : uint8_t { Allow, Deny };

/// Reference-monitor check for an access of `len` bytes at `addr`.
/// M-mode bypasses PMP entirely (no locked entries in this model). For U/S:
/// every byte must match, the same entry must match all bytes of the access
/// (partial matches fail whole), and that entry's permissions must grant the
/// access kind. No match means deny.
PmpDecision pmp_check(const PmpFile& pmp, uint64_t addr, uint64_t len,
                      AccessKind kind, PrivMode priv);

// ---------------------------------------------------------------------------
// Machine
// ---------------------------------------------------------------------------

struct Hart {
  unsigned id = 0;
  PrivMode priv = PrivMode::S;
  Domain domain = Domain::host();
  uint64_t cycles = 0;
  PmpFile pmp;
};

/// Denied or out-of-range access. `oob` marks physical addresses beyond the
/// end of memory (always denied, any privilege).
struct AccessFault {
  uint64_t addr = 0;
  uint64_t len = 0;
  AccessKind kind = AccessKind::Read;
  PrivMode priv = PrivMode::U;
  unsigned hart = 0;
  bool oob = false;
};

struct TraceEntry {
  uint64_t step;
  unsigned hart;
  Domain domain;
  uint64_t addr;
  uint64_t len;
  AccessKind kind;
  PrivMode priv;
  bool allowed;
};

constexpr uint64_t kPageSize = 4096;

/// Flat physical memory plus a small number of harts. All software-visible
/// accesses funnel through read/write/fetch so the PMP and the cache model
/// see them; raw_* is the simulator backdoor used by the loader, by M-mode
/// firmware internals, and by the physical attacker on untrusted memory.
class Machine {
 public:
  Machine(uint64_t mem_size, unsigned hart_count);

  uint64_t mem_size() const { return mem_.size(); }
  unsigned hart_count() const { return (unsigned)harts_.size(); }
  Hart& hart(unsigned i) { return harts_.at(i); }
  const Hart& hart(unsigned i) const { return harts_.at(i); }

  uint64_t step() const { return step_; }
  /// Advances global time by one step and charges one cycle to `hart`.
  void tick(unsigned hart);

  void set_audit(AuditLog* log) { audit_ = log; }
  AuditLog* audit() const { return audit_; }
  void attach_cache(CacheModel* cache) { cache_ = cache; }
  CacheModel* cache() const { return cache_; }

  void set_trace_enabled(bool on) { trace_enabled_ = on; }
  const std::vector<TraceEntry>& trace() const { return trace_; }
  void clear_trace() { trace_.clear(); }

  // Checked accesses: nullopt on success, fault on denial. Denials touch
  // neither memory nor cache.
  std::optional<AccessFault> read(unsigned hart, uint64_t addr,
                                  std::span<uint8_t> out,
                                  PrivMode priv);
  std::optional<AccessFault> write(unsigned hart, uint64_t addr,
                                   std::span<const uint8_t> data,
                                   PrivMode priv);
  std::optional<AccessFault> fetch(unsigned hart, uint64_t addr, uint64_t len,
                                   PrivMode priv);

  // Raw backdoor, no PMP, no cache, no trace.
  uint8_t raw_read8(uint64_t addr) const { return mem_.at(addr); }
  uint64_t raw_read64(uint64_t addr) const;
  void raw_write8(uint64_t addr, uint8_t v) { mem_.at(addr) = v; }
  void raw_write64(uint64_t addr, uint64_t v);
  void raw_read_block(uint64_t addr, std::span<uint8_t> out) const;
  void raw_write_block(uint64_t addr, std::span<const uint8_t> data);
  void raw_fill(uint64_t addr, uint64_t len, uint8_t value);

  /// Installs a PMP entry at `idx` on every hart, modeling the synchronous
  /// inter-hart interrupt dance: all harts observe the update before this
  /// returns. Returns the number of harts updated.
  unsigned broadcast_pmp_set(unsigned origin_hart, unsigned idx,
                             const PmpEntry& e);
  /// Hart-local PMP update (context switches never interrupt other harts).
  void local_pmp_set(unsigned hart, unsigned idx, const PmpEntry& e);

  uint64_t pmp_broadcasts() const { return pmp_broadcasts_; }

  bool save_snapshot(std::ostream& image, std::ostream& manifest) const;
  static std::optional<Machine> load_snapshot(std::istream& image,
                                              std::istream& manifest);

 private:
  std::optional<AccessFault> check_and_touch(unsigned hart, uint64_t addr,
                                             uint64_t len, AccessKind kind,
                                             PrivMode priv);

  Bytes mem_;
  std::vector<Hart> harts_;
  uint64_t step_ = 0;
  uint64_t pmp_broadcasts_ = 0;
  AuditLog* audit_ = nullptr;
  CacheModel* cache_ = nullptr;
  bool trace_enabled_ = false;
  std::vector<TraceEntry> trace_;
};

}  // namespace ksim

#endif
