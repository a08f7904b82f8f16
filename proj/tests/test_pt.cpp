// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include <doctest.h>

#include <string>
#include <vector>

#include "ksim/pt.hpp"

using namespace ksim;

namespace {

// A toy physical memory for driving the walker without a Machine.
struct Phys {
  std::vector<uint64_t> words;
  uint64_t next_page = 0;
  uint64_t limit = 0;

  explicit Phys(uint64_t bytes) : words(bytes / 8, 0), limit(bytes) {}

  pt::Read64 reader() {
    return [this](uint64_t pa) { return words.at(pa / 8); };
  }
  pt::Write64 writer() {
    return [this](uint64_t pa, uint64_t v) { words.at(pa / 8) = v; };
  }
  std::function<uint64_t()> alloc() {
    return [this]() -> uint64_t {
      if (next_page + kPageSize > limit) return 0;
      uint64_t pa = next_page;
      next_page += kPageSize;
      return pa;
    };
  }
};

}  // namespace

TEST_CASE("vpn slicing") {
  uint64_t va = (3ULL << 30) | (5ULL << 21) | (7ULL << 12) | 0x123;
  CHECK(pt::vpn(va, 2) == 3);
  CHECK(pt::vpn(va, 1) == 5);
  CHECK(pt::vpn(va, 0) == 7);
}

TEST_CASE("pte helpers") {
  auto leaf = pt::Pte::make_leaf(0x1234000, pt::kPteR | pt::kPteW | pt::kPteU);
  CHECK(leaf.valid());
  CHECK(leaf.leaf());
  CHECK(leaf.pa() == 0x1234000);
  CHECK(leaf.readable());
  CHECK(leaf.writable());
  CHECK(!leaf.executable());
  CHECK(leaf.user());
  CHECK(!leaf.shared());

  auto table = pt::Pte::make_table(0x5000);
  CHECK(table.valid());
  CHECK(!table.leaf());
  CHECK(table.pa() == 0x5000);

  auto shared = pt::Pte::make_leaf(0x2000, pt::kPteR | pt::kPteShared);
  CHECK(shared.shared());

  CHECK(pt::perm_byte(pt::Pte::make_leaf(0, pt::kPteR)) == 1);
  CHECK(pt::perm_byte(pt::Pte::make_leaf(0, pt::kPteR | pt::kPteW)) == 3);
  CHECK(pt::perm_byte(pt::Pte::make_leaf(0, pt::kPteX)) == 4);
  CHECK(pt::perm_byte(pt::Pte::make_leaf(
            0, pt::kPteR | pt::kPteW | pt::kPteX | pt::kPteU)) == 15);
}

TEST_CASE("map then walk round trip") {
  Phys p(64 * kPageSize);
  uint64_t root = p.alloc()();

  uint64_t va = 0x40123000;
  uint64_t pa = 20 * kPageSize;
  auto st = pt::map_page(p.reader(), p.writer(), p.alloc(), root, va, pa,
                         pt::kPteR | pt::kPteW | pt::kPteU);
  REQUIRE(st == pt::MapStatus::Ok);
  // Two intermediate tables were allocated beyond the root.
  CHECK(p.next_page == 3 * kPageSize);

  auto w = pt::walk(p.reader(), root, va | 0x7ff);
  REQUIRE(w.ok);
  CHECK(w.pa == pa + 0x7ff);
  CHECK(w.pte.user());
  CHECK(w.level == 0);

  // A sibling page in the same 2 MiB window reuses the tables.
  REQUIRE(pt::map_page(p.reader(), p.writer(), p.alloc(), root, va + kPageSize,
                       pa + kPageSize, pt::kPteR) == pt::MapStatus::Ok);
  CHECK(p.next_page == 3 * kPageSize);

  // Unmapped neighbors do not resolve.
  CHECK(!pt::walk(p.reader(), root, va + 2 * kPageSize).ok);
}

TEST_CASE("map_page error paths") {
  Phys p(64 * kPageSize);
  uint64_t root = p.alloc()();
  auto rd = p.reader();
  auto wr = p.writer();
  auto al = p.alloc();

  CHECK(pt::map_page(rd, wr, al, root, pt::kVaLimit, 0x1000, pt::kPteR) ==
        pt::MapStatus::BadVa);
  CHECK(pt::map_page(rd, wr, al, root, 0x1234, 0x1000, pt::kPteR) ==
        pt::MapStatus::BadVa);  // unaligned va

  REQUIRE(pt::map_page(rd, wr, al, root, 0x2000, 0x5000, pt::kPteR) ==
          pt::MapStatus::Ok);
  CHECK(pt::map_page(rd, wr, al, root, 0x2000, 0x6000, pt::kPteR) ==
        pt::MapStatus::AlreadyMapped);

  // Allocator exhaustion surfaces as NoTable.
  Phys q(2 * kPageSize);  // root plus one table, then dry
  uint64_t root2 = q.alloc()();
  CHECK(pt::map_page(q.reader(), q.writer(), q.alloc(), root2, 0x2000, 0x5000,
                     pt::kPteR) == pt::MapStatus::NoTable);

  // A leaf where a table is required blocks deeper mappings.
  Phys s(64 * kPageSize);
  uint64_t root3 = s.alloc()();
  uint64_t l1 = root3 + 8 * pt::vpn(0x2000, 2);
  s.writer()(l1, pt::Pte::make_leaf(0x10000, pt::kPteR).raw);  // superpage
  CHECK(pt::map_page(s.reader(), s.writer(), s.alloc(), root3, 0x2000, 0x5000,
                     pt::kPteR) == pt::MapStatus::SuperpageInWay);
  auto w = pt::walk(s.reader(), root3, 0x2000);
  CHECK(!w.ok);  // walks refuse superpage leaves too
}

TEST_CASE("unmap and remap") {
  Phys p(64 * kPageSize);
  uint64_t root = p.alloc()();
  auto rd = p.reader();
  auto wr = p.writer();

  REQUIRE(pt::map_page(rd, wr, p.alloc(), root, 0x3000, 0x8000,
                       pt::kPteR | pt::kPteW) == pt::MapStatus::Ok);

  pt::Pte old;
  REQUIRE(pt::unmap_page(rd, wr, root, 0x3000, &old) == pt::MapStatus::Ok);
  CHECK(old.pa() == 0x8000);
  CHECK(old.writable());
  CHECK(!pt::walk(rd, root, 0x3000).ok);
  CHECK(pt::unmap_page(rd, wr, root, 0x3000, nullptr) ==
        pt::MapStatus::NotMapped);

  REQUIRE(pt::map_page(rd, wr, p.alloc(), root, 0x4000, 0x9000, pt::kPteR) ==
          pt::MapStatus::Ok);
  REQUIRE(pt::remap_page(rd, wr, root, 0x4000, 0xa000,
                         pt::kPteR | pt::kPteShared) == pt::MapStatus::Ok);
  auto w = pt::walk(rd, root, 0x4000);
  REQUIRE(w.ok);
  CHECK(w.pa == 0xa000);
  CHECK(w.pte.shared());
  CHECK(pt::remap_page(rd, wr, root, 0x7000, 0xa000, pt::kPteR) ==
        pt::MapStatus::NotMapped);
}

TEST_CASE("collect enumerates leaves in ascending va order") {
  Phys p(64 * kPageSize);
  uint64_t root = p.alloc()();
  auto rd = p.reader();
  auto wr = p.writer();
  auto al = p.alloc();

  // Map out of order across distant windows.
  const uint64_t vas[] = {0x40000000, 0x1000, 0x3fffffe000, 0x2000000};
  for (uint64_t va : vas)
    REQUIRE(pt::map_page(rd, wr, al, root, va, va & 0xfffff000, pt::kPteR) ==
            pt::MapStatus::Ok);

  std::vector<pt::MappedPage> pages;
  std::vector<uint64_t> tables;
  std::string why;
  REQUIRE(pt::collect(rd, root, pages, tables, &why));
  REQUIRE(pages.size() == 4);
  CHECK(pages[0].va == 0x1000);
  CHECK(pages[1].va == 0x2000000);
  CHECK(pages[2].va == 0x40000000);
  CHECK(pages[3].va == 0x3fffffe000);

  // Root plus every intermediate table, no duplicates.
  CHECK(tables.size() == (size_t)p.next_page / kPageSize);
  CHECK(tables[0] == root);

  // Malformed tree: leaf at a non-last level.
  {
    Phys s(64 * kPageSize);
    uint64_t root2 = s.alloc()();
    s.writer()(root2, pt::Pte::make_leaf(0x10000, pt::kPteR).raw);
    std::vector<pt::MappedPage> pg;
    std::vector<uint64_t> tb;
    std::string reason;
    CHECK(!pt::collect(s.reader(), root2, pg, tb, &reason));
    CHECK(!reason.empty());
  }
}
