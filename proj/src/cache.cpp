// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include "ksim/cache.hpp"

namespace ksim {

CacheModel::CacheModel(CacheConfig cfg, bool partition_enabled,
                       unsigned enclave_ways)
    : cfg_(cfg), partition_enabled_(partition_enabled),
      enclave_ways_(enclave_ways) {
  if (cfg_.sets == 0) cfg_.sets = 1;
  if (cfg_.ways == 0) cfg_.ways = 1;
  if (cfg_.line_size == 0) cfg_.line_size = 64;
  sets_.assign(cfg_.sets, std::vector<Line>(cfg_.ways));
}

uint32_t CacheModel::way_mask(Domain d) const {
  if (!partition_enabled_) return full_mask();
  if (d.is_host()) {
    uint32_t taken = 0;
    for (const auto& [id, mask] : active_masks_) taken |= mask;
    return full_mask() & ~taken;
  }
  auto it = active_masks_.find(d.id);
  return it == active_masks_.end() ? 0 : it->second;
}

CacheModel::Outcome CacheModel::access(Domain d, uint64_t paddr) {
  uint64_t line_addr = paddr / cfg_.line_size;
  auto& set = sets_[line_addr % cfg_.sets];
  lru_clock_++;

  for (auto& line : set) {
    if (line.valid && line.owner == d && line.tag == line_addr) {
      line.stamp = lru_clock_;
      observations_[d.id].push_back(Outcome::Hit);
      return Outcome::Hit;
    }
  }

  uint32_t mask = way_mask(d);
  int victim = -1;
  for (unsigned w = 0; w < cfg_.ways; w++) {
    if (!(mask & (1u << w))) continue;
    if (!set[w].valid) {
      victim = (int)w;
      break;
    }
    if (victim < 0 || set[w].stamp < set[(unsigned)victim].stamp)
      victim = (int)w;
  }
  if (victim >= 0) {
    if (!(mask & (1u << (unsigned)victim))) mask_violations_++;
    set[(unsigned)victim] = Line{true, d, line_addr, lru_clock_};
  }
  observations_[d.id].push_back(Outcome::Miss);
  return Outcome::Miss;
}

void CacheModel::access_range(Domain d, uint64_t addr, uint64_t len) {
  if (len == 0) return;
  uint64_t first = addr / cfg_.line_size;
  uint64_t last = (addr + len - 1) / cfg_.line_size;
  for (uint64_t l = first; l <= last; l++) access(d, l * cfg_.line_size);
}

unsigned CacheModel::flush_ways(uint32_t ways_mask) {
  unsigned n = 0;
  for (auto& set : sets_) {
    for (unsigned w = 0; w < cfg_.ways; w++) {
      if ((ways_mask & (1u << w)) && set[w].valid) {
        set[w] = Line{};
        n++;
      }
    }
  }
  return n;
}

unsigned CacheModel::flush_owner(Domain d) {
  unsigned n = 0;
  for (auto& set : sets_) {
    for (auto& line : set) {
      if (line.valid && line.owner == d) {
        line = Line{};
        n++;
      }
    }
  }
  return n;
}

unsigned CacheModel::switch_partition(Domain entering, Domain leaving) {
  if (!partition_enabled_) return 0;
  unsigned flushed = 0;
  if (!entering.is_host()) {
    // Carve the slice: lowest free ways, leaving the host at least one way.
    uint32_t taken = 0;
    for (const auto& [id, mask] : active_masks_) taken |= mask;
    uint32_t mask = 0;
    unsigned granted = 0;
    for (unsigned w = 0; w < cfg_.ways && granted < enclave_ways_; w++) {
      uint32_t bit = 1u << w;
      if (taken & bit) continue;
      uint32_t free_after = full_mask() & ~taken & ~(mask | bit);
      if (free_after == 0) break;  // host keeps the last way
      mask |= bit;
      granted++;
    }
    active_masks_[entering.id] = mask;
    flushed += flush_ways(mask);
    flushed += flush_owner(entering);  // stale lines from earlier allocations
  }
  if (!leaving.is_host()) {
    flushed += flush_owner(leaving);
    active_masks_.erase(leaving.id);
  }
  if (flushed) flushes_ += flushed;
  return flushed;
}

const std::vector<CacheModel::Outcome>& CacheModel::observations(
    Domain d) const {
  return observations_[d.id];
}

void CacheModel::clear_observations(Domain d) { observations_[d.id].clear(); }

}  // namespace ksim
