// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include "ksim/pt.hpp"

#include <sstream>

namespace ksim::pt {

uint8_t perm_byte(const Pte& pte) {
  uint8_t b = 0;
  if (pte.readable()) b |= 1;
  if (pte.writable()) b |= 2;
  if (pte.executable()) b |= 4;
  if (pte.user()) b |= 8;
  return b;
}

Walk walk(const Read64& read64, uint64_t root, uint64_t va) {
  Walk w;
  if (va >= kVaLimit) return w;
  uint64_t table = root;
  for (int level = kLevels - 1; level >= 0; level--) {
    w.level = level;
    w.pte_addr = table + vpn(va, level) * 8;
    w.pte = Pte{read64(w.pte_addr)};
    if (!w.pte.valid()) return w;
    if (w.pte.leaf()) {
      if (level != 0) return w;  // superpage: not ok
      w.ok = true;
      w.pa = w.pte.pa() | (va & (kPageSize - 1));
      return w;
    }
    table = w.pte.pa();
  }
  return w;
}

MapStatus map_page(const Read64& read64, const Write64& write64,
                   const std::function<uint64_t()>& alloc_table, uint64_t root,
                   uint64_t va, uint64_t pa, uint64_t flags) {
  if (va >= kVaLimit || (va & (kPageSize - 1)) || (pa & (kPageSize - 1)))
    return MapStatus::BadVa;
  uint64_t table = root;
  for (int level = kLevels - 1; level > 0; level--) {
    uint64_t pte_addr = table + vpn(va, level) * 8;
    Pte pte{read64(pte_addr)};
    if (!pte.valid()) {
      uint64_t fresh = alloc_table();
      if (fresh == 0) return MapStatus::NoTable;
      write64(pte_addr, Pte::make_table(fresh).raw);
      table = fresh;
      continue;
    }
    if (pte.leaf()) return MapStatus::SuperpageInWay;
    table = pte.pa();
  }
  uint64_t leaf_addr = table + vpn(va, 0) * 8;
  if (Pte{read64(leaf_addr)}.valid()) return MapStatus::AlreadyMapped;
  write64(leaf_addr, Pte::make_leaf(pa, flags).raw);
  return MapStatus::Ok;
}

static MapStatus find_leaf(const Read64& read64, uint64_t root, uint64_t va,
                           uint64_t& leaf_addr, Pte& leaf) {
  if (va >= kVaLimit) return MapStatus::BadVa;
  uint64_t table = root;
  for (int level = kLevels - 1; level > 0; level--) {
    Pte pte{read64(table + vpn(va, level) * 8)};
    if (!pte.valid()) return MapStatus::NotMapped;
    if (pte.leaf()) return MapStatus::SuperpageInWay;
    table = pte.pa();
  }
  leaf_addr = table + vpn(va, 0) * 8;
  leaf = Pte{read64(leaf_addr)};
  if (!leaf.valid()) return MapStatus::NotMapped;
  return MapStatus::Ok;
}

MapStatus unmap_page(const Read64& read64, const Write64& write64,
                     uint64_t root, uint64_t va, Pte* old) {
  uint64_t leaf_addr = 0;
  Pte leaf;
  MapStatus st = find_leaf(read64, root, va, leaf_addr, leaf);
  if (st != MapStatus::Ok) return st;
  if (old) *old = leaf;
  write64(leaf_addr, 0);
  return MapStatus::Ok;
}

MapStatus remap_page(const Read64& read64, const Write64& write64,
                     uint64_t root, uint64_t va, uint64_t new_pa,
                     uint64_t new_flags) {
  uint64_t leaf_addr = 0;
  Pte leaf;
  MapStatus st = find_leaf(read64, root, va, leaf_addr, leaf);
  if (st != MapStatus::Ok) return st;
  write64(leaf_addr, Pte::make_leaf(new_pa, new_flags).raw);
  return MapStatus::Ok;
}

bool collect(const Read64& read64, uint64_t root,
             std::vector<MappedPage>& pages, std::vector<uint64_t>& table_pas,
             std::string* why) {
  auto fail = [&](uint64_t va, const char* what) {
    if (why) {
      std::ostringstream os;
      os << what << " at va " << hex_u64(va);
      *why = os.str();
    }
    return false;
  };
  if (root & (kPageSize - 1)) return fail(0, "misaligned root");
  table_pas.push_back(root);
  for (uint64_t i2 = 0; i2 < kEntriesPerTable; i2++) {
    Pte p2{read64(root + i2 * 8)};
    if (!p2.valid()) continue;
    uint64_t va2 = i2 << 30;
    if (p2.leaf()) return fail(va2, "superpage leaf");
    if (p2.pa() & (kPageSize - 1)) return fail(va2, "misaligned table");
    table_pas.push_back(p2.pa());
    for (uint64_t i1 = 0; i1 < kEntriesPerTable; i1++) {
      Pte p1{read64(p2.pa() + i1 * 8)};
      if (!p1.valid()) continue;
      uint64_t va1 = va2 | (i1 << 21);
      if (p1.leaf()) return fail(va1, "superpage leaf");
      if (p1.pa() & (kPageSize - 1)) return fail(va1, "misaligned table");
      table_pas.push_back(p1.pa());
      for (uint64_t i0 = 0; i0 < kEntriesPerTable; i0++) {
        Pte p0{read64(p1.pa() + i0 * 8)};
        if (!p0.valid()) continue;
        uint64_t va0 = va1 | (i0 << 12);
        if (!p0.leaf()) return fail(va0, "table at leaf level");
        pages.push_back({va0, p0});
      }
    }
  }
  return true;
}

}  // namespace ksim::pt
