// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#ifndef KSIM_PT_HPP
#define KSIM_PT_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ksim/machine.hpp"

namespace ksim::pt {

// Sv39: three levels, 512 eight-byte entries per table, 39-bit virtual
// addresses mapping 4 KiB pages. Superpages are deliberately unsupported:
// enclave page tables must map leaves at the last level only.
constexpr int kLevels = 3;
constexpr unsigned kEntriesPerTable = 512;
constexpr uint64_t kVaBits = 39;
constexpr uint64_t kVaLimit = 1ULL << kVaBits;

constexpr uint64_t kPteV = 1ULL << 0;
constexpr uint64_t kPteR = 1ULL << 1;
constexpr uint64_t kPteW = 1ULL << 2;
constexpr uint64_t kPteX = 1ULL << 3;
constexpr uint64_t kPteU = 1ULL << 4;
constexpr uint64_t kPteA = 1ULL << 6;
constexpr uint64_t kPteD = 1ULL << 7;
/// RSW bit: page is backed by untrusted shared memory and is excluded from
/// measurement and from demand paging.
constexpr uint64_t kPteShared = 1ULL << 8;

constexpr uint64_t kFlagMask = 0x3ff;

struct Pte {
  uint64_t raw = 0;
  bool valid() const { return raw & kPteV; }
  bool leaf() const { return valid() && (raw & (kPteR | kPteW | kPteX)); }
  bool readable() const { return raw & kPteR; }
  bool writable() const { return raw & kPteW; }
  bool executable() const { return raw & kPteX; }
  bool user() const { return raw & kPteU; }
  bool shared() const { return raw & kPteShared; }
  uint64_t flags() const { return raw & kFlagMask; }
  uint64_t pa() const { return (raw >> 10) << 12; }

  static Pte make_leaf(uint64_t pa, uint64_t flags) {
    return Pte{((pa >> 12) << 10) | (flags & kFlagMask) | kPteV};
  }
  static Pte make_table(uint64_t pa) { return Pte{((pa >> 12) << 10) | kPteV}; }
};

/// Permission byte used by the measurement serialization and by image
/// segments: bit0=R bit1=W bit2=X bit3=U.
uint8_t perm_byte(const Pte& pte);

inline uint64_t vpn(uint64_t va, int level) {
  return (va >> (12 + 9 * level)) & (kEntriesPerTable - 1);
}

using Read64 = std::function<uint64_t(uint64_t pa)>;
using Write64 = std::function<void(uint64_t pa, uint64_t value)>;

struct Walk {
  bool ok = false;       // reached a last-level leaf
  uint64_t pa = 0;       // translated physical address (page base + offset)
  uint64_t pte_addr = 0; // physical address of the PTE examined last
  Pte pte;               // its value
  int level = kLevels - 1;
};

Walk walk(const Read64& read64, uint64_t root, uint64_t va);

enum class MapStatus : uint8_t {
  Ok,
  BadVa,
  AlreadyMapped,
  NotMapped,
  NoTable,        // allocator refused an intermediate table
  SuperpageInWay  // a leaf sits where a table is needed
};

/// Installs va -> pa at the last level, allocating intermediate tables via
/// `alloc_table` (must return a zeroed page-aligned physical page, or 0 on
/// exhaustion).
MapStatus map_page(const Read64& read64, const Write64& write64,
                   const std::function<uint64_t()>& alloc_table, uint64_t root,
                   uint64_t va, uint64_t pa, uint64_t flags);

/// Clears the leaf for va. Returns the old PTE through `old` when non-null.
MapStatus unmap_page(const Read64& read64, const Write64& write64,
                     uint64_t root, uint64_t va, Pte* old);

/// Rewrites the leaf for va in place (flags and/or target page).
MapStatus remap_page(const Read64& read64, const Write64& write64,
                     uint64_t root, uint64_t va, uint64_t new_pa,
                     uint64_t new_flags);

struct MappedPage {
  uint64_t va = 0;
  Pte pte;
};

/// Depth-first enumeration of a 3-level tree: every valid last-level leaf in
/// ascending va order plus every table page (root included). Returns false
/// with a reason for structurally malformed trees (superpage leaves,
/// misaligned table pointers).
bool collect(const Read64& read64, uint64_t root,
             std::vector<MappedPage>& pages, std::vector<uint64_t>& table_pas,
             std::string* why);

}  // namespace ksim::pt

#endif
