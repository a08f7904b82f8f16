// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#ifndef KSIM_CACHE_HPP
#define KSIM_CACHE_HPP

#include <cstdint>
#include <map>
#include <vector>

#include "ksim/machine.hpp"

namespace ksim {

struct CacheConfig {
  unsigned sets = 64;
  unsigned ways = 16;
  unsigned line_size = 64;
};

/// Set-associative shared-cache model with optional way partitioning.
///
/// Every line is tagged with the domain that filled it; a domain only ever
/// hits its own lines. With partitioning enabled, a running enclave owns an
/// exclusive slice of ways (its way mask), the host keeps the rest, and the
/// slice is flushed on both entry and exit, so one domain's hit/miss trace
/// carries no information about another's accesses. With partitioning
/// disabled all domains contend for all ways, which is exactly the
/// prime-and-probe leak the partitioned mode exists to close.
class CacheModel {
 public:
  enum class Outcome : uint8_t { Hit, Miss };

  CacheModel(CacheConfig cfg, bool partition_enabled, unsigned enclave_ways);

  /// One line-sized probe. Fill victims are chosen LRU among the ways the
  /// domain's mask permits; an empty mask means the access misses without
  /// allocating.
  Outcome access(Domain d, uint64_t paddr);
  /// Called by Machine for a checked access; touches every line the byte
  /// range [addr, addr+len) covers.
  void access_range(Domain d, uint64_t addr, uint64_t len);

  /// Context-switch hook. Entering an enclave carves its way slice out of
  /// the host's and flushes every line in those ways; returning to the host
  /// flushes the leaving enclave's lines and gives the ways back. Returns
  /// the number of lines invalidated. No-op when partitioning is off.
  unsigned switch_partition(Domain entering, Domain leaving);

  /// Hit/miss sequence as experienced by `d` itself. This is the only cache
  /// state a domain can observe.
  const std::vector<Outcome>& observations(Domain d) const;
  void clear_observations(Domain d);

  /// Ways `d` may currently fill, as a bit mask (bit i = way i).
  uint32_t way_mask(Domain d) const;

  bool partition_enabled() const { return partition_enabled_; }
  unsigned flush_count() const { return flushes_; }
  /// Fills that landed outside the filling domain's permitted ways. Soundness
  /// counter; stays zero by construction and tests assert that.
  uint64_t mask_violations() const { return mask_violations_; }

 private:
  struct Line {
    bool valid = false;
    Domain owner = Domain::host();
    uint64_t tag = 0;
    uint64_t stamp = 0;
  };

  uint32_t full_mask() const { return (cfg_.ways >= 32) ? ~0u : ((1u << cfg_.ways) - 1); }
  unsigned flush_ways(uint32_t ways_mask);
  unsigned flush_owner(Domain d);

  CacheConfig cfg_;
  bool partition_enabled_;
  unsigned enclave_ways_;
  std::vector<std::vector<Line>> sets_;
  uint64_t lru_clock_ = 0;
  unsigned flushes_ = 0;
  uint64_t mask_violations_ = 0;
  std::map<int32_t, uint32_t> active_masks_;  // enclave id -> way mask
  mutable std::map<int32_t, std::vector<Outcome>> observations_;
};

}  // namespace ksim

#endif
