// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#ifndef KSIM_PAGING_HPP
#define KSIM_PAGING_HPP

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ksim/crypto.hpp"
#include "ksim/edge.hpp"
#include "ksim/machine.hpp"
#include "ksim/pt.hpp"
#include "ksim/sm.hpp"

namespace ksim {

/// Virtual-address conventions shared by the loader, the runtime and the
/// offline measurement tool. Everything here is derived from the image or
/// constant, never from physical placement.
namespace layout {
constexpr uint64_t kBootRecordVa = 0x3fffffe000ULL;
constexpr uint64_t kUtmWindowVa = 0x3000000000ULL;
constexpr uint64_t kMmapBase = 0x1000000000ULL;
constexpr uint32_t kBootRecordMagic = 0x5242534bu;  // "KSBR"
}  // namespace layout

/// Fixed-location page the loader composes from image-derived values only;
/// the runtime reads it at boot instead of trusting any host-passed header.
/// It is part of the measured layout.
struct BootRecord {
  uint64_t eapp_entry = 0;
  uint64_t heap_base = 0;
  uint64_t utm_vbase = 0;
  uint64_t mmap_base = 0;
  uint64_t utm_pages = 0;

  void write_page(std::span<uint8_t> page) const;
  static std::optional<BootRecord> parse(std::span<const uint8_t> page);
};

enum class ActionStatus : uint8_t {
  Ok,
  Denied,        // enclave not running / action after fatal
  Fault,         // unrecoverable eapp fault (see fatal_reason)
  OutOfMemory,
  HostError,     // edge reply dropped or refused
  TooLarge,
  Busy,          // edge mailbox not idle
  ForcedYield,   // watchdog expired during the action
};
const char* action_status_name(ActionStatus s);

enum class FatalReason : uint8_t {
  None,
  IntegrityError,  // backing-store page failed tag or freshness check
  StoreFull,
  BadBootRecord,
  SegFault,
  OutOfMemory,  // reported as a plain error, does not wedge the enclave
};
const char* fatal_reason_name(FatalReason r);

struct ActionResult {
  ActionStatus status = ActionStatus::Ok;
  uint64_t value = 0;
  Bytes bytes;
  FatalReason fatal_reason = FatalReason::None;
  bool ok() const { return status == ActionStatus::Ok; }
  static ActionResult success(uint64_t v = 0) {
    ActionResult r;
    r.value = v;
    return r;
  }
  static ActionResult make(ActionStatus s) {
    ActionResult r;
    r.status = s;
    return r;
  }
};

/// The supervisor-mode runtime living inside one enclave. It owns the
/// enclave's page table, free page list, heap/mmap windows, the edge-call
/// mailbox discipline, and demand paging against a sealed backing store in
/// untrusted memory. All of its memory traffic flows through checked
/// machine accesses on the enclave's hart, so the PMP and cache model see
/// exactly what real runtime code would generate.
class EnclaveRuntime {
 public:
  struct Config {
    uint64_t paging_limit = UINT64_MAX;  // max resident eapp pages
    bool encrypt = false;                // seal page contents in the store
    bool dyn_resize = false;             // ask the host for more memory
  };

  /// Backing-store slot: va(8) | in_use(8) | nonce(16) | tag(32) | data(4096).
  static constexpr uint64_t kSlotBytes = 8 + 8 + 16 + 32 + 4096;
  static constexpr uint64_t kPayloadCap = 4096;

  EnclaveRuntime(Machine& m, SecurityMonitor& sm, edge::HostPort& host,
                 int id, Config cfg);

  /// First entry after sm.run: discovers the memory map from the page
  /// table, zeroes free pages, derives sealing keys, lays out the shared
  /// region. Any structural surprise is fatal.
  ActionResult boot();

  // Application-level operations (one simulation step each).
  ActionResult read_v(uint64_t va);
  ActionResult write_v(uint64_t va, uint8_t byte);
  ActionResult read_bytes(uint64_t va, uint64_t len);
  ActionResult write_bytes(uint64_t va, std::span<const uint8_t> data);
  ActionResult mmap_pages(uint64_t pages);
  ActionResult brk_move(int64_t delta);
  ActionResult get_random();
  ActionResult rdcycle();
  ActionResult spin(uint64_t iterations);
  ActionResult loop_forever();
  ActionResult edge_call(uint32_t fid, std::span<const uint8_t> payload);
  ActionResult syscall(uint32_t nr, std::span<const uint8_t> args);
  ActionResult attest_self(std::span<const uint8_t> data);
  ActionResult yield_now();
  ActionResult exit_self();

  /// Host granted an adjacent region after grant_extend; verifies the grant
  /// against the runtime's own view before adopting the pages.
  bool on_extend_granted(Region add);

  int id() const { return id_; }
  bool fatal() const { return fatal_ != FatalReason::None; }
  FatalReason fatal_reason() const { return fatal_; }
  bool booted() const { return booted_; }

  uint64_t page_faults() const { return page_faults_; }
  uint64_t evictions() const { return evictions_; }
  uint64_t unseals() const { return unseals_; }
  uint64_t resident_pages() const { return resident_.size(); }
  uint64_t free_pages() const { return free_.size(); }
  uint64_t heap_top() const { return heap_top_; }
  const std::vector<uint64_t>& evicted_va_log() const { return evicted_log_; }
  uint64_t edge_calls() const { return edge_calls_; }

  uint64_t slot_count() const { return slot_count_; }
  uint64_t slot_pa(uint64_t slot) const;
  /// Slot currently holding va, if any (test/attack visibility).
  std::optional<uint64_t> slot_of(uint64_t va) const;

 private:
  struct Translated {
    uint64_t pa = 0;
  };

  unsigned hart() const;
  bool running() const;
  ActionResult guard(uint64_t ticks = 1);
  ActionResult fatal_result(FatalReason r);

  uint64_t rt_read64(uint64_t pa);
  void rt_write64(uint64_t pa, uint64_t v);
  bool rt_read_block(uint64_t pa, std::span<uint8_t> out);
  bool rt_write_block(uint64_t pa, std::span<const uint8_t> data);

  pt::Read64 pt_reader();
  pt::Write64 pt_writer();

  bool reserved_va(uint64_t va) const;
  std::optional<Translated> translate(uint64_t va, AccessKind kind,
                                      PrivMode priv, FatalReason& why);
  bool resolve_fault(uint64_t va, FatalReason& why);
  bool evict_one(FatalReason& why);
  std::optional<uint64_t> alloc_page(FatalReason& why);
  bool fault_in_from_store(uint64_t va, uint64_t slot, FatalReason& why);
  bool map_fresh(uint64_t va, uint64_t flags, FatalReason& why);
  void note_resident(uint64_t va);

  Machine& m_;
  SecurityMonitor& sm_;
  edge::HostPort& host_;
  int id_;
  Config cfg_;

  bool booted_ = false;
  FatalReason fatal_ = FatalReason::None;
  Region epm_{};
  Region utm_{};
  uint64_t pt_root_ = 0;
  BootRecord brec_{};
  uint64_t heap_top_ = 0;
  uint64_t mmap_cursor_ = 0;
  std::vector<Region> mmap_ranges_;  // reserved va windows

  std::vector<uint64_t> free_;       // physical pages, ascending
  std::vector<uint64_t> resident_;   // resident evictable (user) page vas
  std::vector<uint64_t> evicted_log_;

  // Backing store bookkeeping. expected_tag_ pins the exact sealed bytes
  // last written per slot, which is what defeats replay of stale slots.
  uint64_t payload_cap_ = 0;
  uint64_t slots_off_ = 0;
  uint64_t slot_count_ = 0;
  std::map<uint64_t, uint64_t> va_slot_;                    // va -> slot
  std::map<uint64_t, std::array<uint8_t, 32>> expected_tag_;  // slot -> tag
  std::map<uint64_t, uint64_t> stored_flags_;               // va -> pte flags
  uint64_t next_slot_ = 0;
  uint64_t seal_counter_ = 0;
  crypto::SealKey seal_key_{};
  std::optional<crypto::Rng> victim_rng_;

  uint64_t page_faults_ = 0;
  uint64_t evictions_ = 0;
  uint64_t unseals_ = 0;
  uint64_t edge_calls_ = 0;
};

}  // namespace ksim

#endif
