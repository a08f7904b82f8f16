// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include <doctest.h>

#include <vector>

#include "ksim/host.hpp"

using namespace ksim;

namespace {

struct Rig {
  World w;
  int id = -1;
  EnclaveRuntime* rt = nullptr;
  uint64_t heap = 0;

  explicit Rig(WorldOptions o, uint64_t epm_pages = 48, uint64_t utm_pages = 8)
      : w(o) {
    REQUIRE(w.boot());
    SbiRet c = w.create_enclave("counter", epm_pages, utm_pages);
    REQUIRE(c.ok());
    id = (int)c.value;
    REQUIRE(w.run_enclave(id, 1).ok());
    rt = w.runtime(id);
    REQUIRE(rt != nullptr);
    REQUIRE(rt->booted());
    heap = rt->heap_top();
  }
};

WorldOptions paged(uint64_t limit, bool encrypt) {
  WorldOptions o;
  o.mem_size = 1 << 23;
  o.seed = 3;
  o.watchdog = 1u << 20;  // paging tests are not about the watchdog
  o.paging_limit = limit;
  o.encrypt = encrypt;
  return o;
}

}  // namespace

TEST_CASE("basic memory actions") {
  Rig r(paged(UINT64_MAX, false));

  // Image bytes are readable and the eapp code pages have known content.
  auto v = r.rt->read_v(0x400000);
  REQUIRE(v.ok());

  // Heap: grow, use, shrink.
  auto brk = r.rt->brk_move(2 * (int64_t)kPageSize);
  REQUIRE(brk.ok());
  CHECK(brk.value == r.heap + 2 * kPageSize);
  REQUIRE(r.rt->write_v(r.heap + 10, 0x5a).ok());
  auto back = r.rt->read_v(r.heap + 10);
  REQUIRE(back.ok());
  CHECK(back.value == 0x5a);

  // Fresh heap pages come up zeroed.
  auto z = r.rt->read_v(r.heap + kPageSize + 100);
  REQUIRE(z.ok());
  CHECK(z.value == 0);

  // Block transfer round trip.
  Bytes blob;
  for (int i = 0; i < 300; i++) blob.push_back((uint8_t)(i * 7));
  REQUIRE(r.rt->write_bytes(r.heap + 500, blob).ok());
  auto rb = r.rt->read_bytes(r.heap + 500, blob.size());
  REQUIRE(rb.ok());
  CHECK(rb.bytes == blob);

  // Shrink drops the second page; touching it afterwards is a fault.
  REQUIRE(r.rt->brk_move(-(int64_t)kPageSize).ok());
  CHECK(r.rt->read_v(r.heap + 10).ok());  // first page still there
  auto gone = r.rt->read_v(r.heap + kPageSize + 100);
  CHECK(gone.status == ActionStatus::Fault);
}

TEST_CASE("rdcycle and get_random") {
  Rig r(paged(UINT64_MAX, false));
  auto c1 = r.rt->rdcycle();
  auto c2 = r.rt->rdcycle();
  REQUIRE(c1.ok());
  REQUIRE(c2.ok());
  CHECK(c2.value > c1.value);

  auto g1 = r.rt->get_random();
  auto g2 = r.rt->get_random();
  REQUIRE(g1.ok());
  REQUIRE(g2.ok());
  CHECK(g1.value != g2.value);
}

TEST_CASE("mmap reserves lazily materialized windows") {
  Rig r(paged(UINT64_MAX, false));
  auto m1 = r.rt->mmap_pages(3);
  REQUIRE(m1.ok());
  CHECK(m1.value >= 0x1000000000ULL);
  auto m2 = r.rt->mmap_pages(2);
  REQUIRE(m2.ok());
  CHECK(m2.value >= m1.value + 3 * kPageSize);

  uint64_t before = r.rt->page_faults();
  REQUIRE(r.rt->write_v(m1.value + 2 * kPageSize + 5, 0x77).ok());
  CHECK(r.rt->page_faults() == before + 1);
  auto v = r.rt->read_v(m1.value + 2 * kPageSize + 5);
  REQUIRE(v.ok());
  CHECK(v.value == 0x77);

  // The hole between ranges is unmapped on purpose.
  auto hole = r.rt->write_v(m1.value + 3 * kPageSize, 1);
  CHECK(hole.status == ActionStatus::Fault);
  CHECK(hole.fatal_reason == FatalReason::SegFault);
}

TEST_CASE("stray pointers are fatal and wedge the enclave") {
  Rig r(paged(UINT64_MAX, false));
  auto bad = r.rt->write_v(0x123450000ULL, 9);
  CHECK(bad.status == ActionStatus::Fault);
  CHECK(bad.fatal_reason == FatalReason::SegFault);
  CHECK(r.rt->fatal());
  CHECK(r.rt->read_v(0x400000).status == ActionStatus::Denied);
  // A fatal fault hands the hart back, so the host can tear it down.
  CHECK(r.w.sm().enclave(r.id)->state == EnclaveState::Stopped);
  CHECK(r.w.destroy_enclave(r.id).ok());
}

TEST_CASE("actions are refused while the enclave is not running") {
  Rig r(paged(UINT64_MAX, false));
  REQUIRE(r.rt->yield_now().ok());
  CHECK(r.w.sm().enclave(r.id)->state == EnclaveState::Stopped);
  CHECK(r.rt->read_v(0x400000).status == ActionStatus::Denied);
  REQUIRE(r.w.resume_enclave(r.id, 1).ok());
  CHECK(r.rt->read_v(0x400000).ok());
}

TEST_CASE("paging limit caps residency and preserves contents") {
  for (bool encrypt : {false, true}) {
    CAPTURE(encrypt);
    Rig r(paged(2, encrypt), 48, 16);
    REQUIRE(r.rt->brk_move(6 * (int64_t)kPageSize).ok());
    for (uint64_t p = 0; p < 6; p++) {
      REQUIRE(r.rt->write_v(r.heap + p * kPageSize + 7, (uint8_t)(p + 1)).ok());
      CHECK(r.rt->resident_pages() <= 2);
    }
    CHECK(r.rt->evictions() > 0);
    uint64_t faults = r.rt->page_faults();
    for (uint64_t p = 0; p < 6; p++) {
      auto v = r.rt->read_v(r.heap + p * kPageSize + 7);
      REQUIRE(v.ok());
      CHECK(v.value == p + 1);
      CHECK(r.rt->resident_pages() <= 2);
    }
    CHECK(r.rt->page_faults() > faults);
    if (encrypt) CHECK(r.rt->unseals() > 0);
    CHECK(r.w.audit().count("rt_evict") > 0);
    CHECK(r.w.audit().count("rt_fault_in") > 0);
  }
}

TEST_CASE("a page keeps its backing slot across evictions") {
  Rig r(paged(1, true), 48, 16);
  REQUIRE(r.rt->brk_move(3 * (int64_t)kPageSize).ok());
  REQUIRE(r.rt->write_v(r.heap, 1).ok());
  REQUIRE(r.rt->write_v(r.heap + kPageSize, 2).ok());  // likely evicts heap 0
  // Walk all three pages a few times; each va must stick to one slot.
  std::vector<std::optional<uint64_t>> seen(3);
  for (int round = 0; round < 6; round++) {
    for (uint64_t p = 0; p < 3; p++) {
      REQUIRE(r.rt->write_v(r.heap + p * kPageSize, (uint8_t)p).ok());
      auto s = r.rt->slot_of(r.heap + p * kPageSize);
      if (s) {
        if (seen[p]) CHECK(*seen[p] == *s);
        seen[p] = s;
      }
    }
  }
}

TEST_CASE("backing store tampering is detected on fault-in") {
  for (bool encrypt : {false, true}) {
    CAPTURE(encrypt);
    Rig r(paged(1, encrypt), 48, 16);
    REQUIRE(r.rt->brk_move(2 * (int64_t)kPageSize).ok());
    REQUIRE(r.rt->write_v(r.heap + 5, 0xaa).ok());
    // Touch the second page so the first gets evicted (limit is 1).
    REQUIRE(r.rt->write_v(r.heap + kPageSize + 5, 0xbb).ok());
    auto slot = r.rt->slot_of(r.heap);
    REQUIRE(slot.has_value());

    // The host flips one byte of the stored page image.
    uint64_t pa = r.rt->slot_pa(*slot) + 64 + 5;
    r.w.machine().raw_write8(pa, r.w.machine().raw_read8(pa) ^ 0x01);

    auto v = r.rt->read_v(r.heap + 5);
    CHECK(v.status == ActionStatus::Fault);
    CHECK(v.fatal_reason == FatalReason::IntegrityError);
    CHECK(r.rt->fatal());
    CHECK(r.w.audit().count("rt_integrity_fail") == 1);
  }
}

TEST_CASE("replaying a stale sealed page is detected") {
  Rig r(paged(1, true), 48, 16);
  REQUIRE(r.rt->brk_move(2 * (int64_t)kPageSize).ok());

  // Round 1: value 1 goes to the store.
  REQUIRE(r.rt->write_v(r.heap, 1).ok());
  REQUIRE(r.rt->write_v(r.heap + kPageSize, 9).ok());
  auto slot = r.rt->slot_of(r.heap);
  REQUIRE(slot.has_value());
  uint64_t base = r.rt->slot_pa(*slot);
  Bytes stale(EnclaveRuntime::kSlotBytes);
  r.w.machine().raw_read_block(base, stale);

  // Round 2: value 2 replaces it in the store.
  REQUIRE(r.rt->write_v(r.heap, 2).ok());
  REQUIRE(r.rt->write_v(r.heap + kPageSize, 9).ok());
  REQUIRE(r.rt->slot_of(r.heap) == slot);

  // Host rolls the slot back to the round-1 bytes. The seal checks out (it
  // is a genuine old seal) but the pinned tag does not.
  r.w.machine().raw_write_block(base, stale);
  auto v = r.rt->read_v(r.heap);
  CHECK(v.status == ActionStatus::Fault);
  CHECK(v.fatal_reason == FatalReason::IntegrityError);
}

TEST_CASE("swapping two sealed slots is detected") {
  Rig r(paged(1, true), 48, 16);
  REQUIRE(r.rt->brk_move(3 * (int64_t)kPageSize).ok());
  REQUIRE(r.rt->write_v(r.heap, 1).ok());
  REQUIRE(r.rt->write_v(r.heap + kPageSize, 2).ok());
  REQUIRE(r.rt->write_v(r.heap + 2 * kPageSize, 3).ok());
  auto s0 = r.rt->slot_of(r.heap);
  auto s1 = r.rt->slot_of(r.heap + kPageSize);
  REQUIRE(s0.has_value());
  REQUIRE(s1.has_value());

  Bytes a(EnclaveRuntime::kSlotBytes), b(EnclaveRuntime::kSlotBytes);
  r.w.machine().raw_read_block(r.rt->slot_pa(*s0), a);
  r.w.machine().raw_read_block(r.rt->slot_pa(*s1), b);
  r.w.machine().raw_write_block(r.rt->slot_pa(*s0), b);
  r.w.machine().raw_write_block(r.rt->slot_pa(*s1), a);

  auto v = r.rt->read_v(r.heap);
  CHECK(v.status == ActionStatus::Fault);
  CHECK(v.fatal_reason == FatalReason::IntegrityError);
}

TEST_CASE("the backing store can fill up") {
  // utm 4 pages: 16384 bytes minus header and payload leaves 2 slots.
  Rig r(paged(1, true), 48, 4);
  CHECK(r.rt->slot_count() == 2);
  REQUIRE(r.rt->brk_move(8 * (int64_t)kPageSize).ok());
  ActionResult last = ActionResult::success();
  for (uint64_t p = 0; p < 8 && last.ok(); p++)
    last = r.rt->write_v(r.heap + p * kPageSize, (uint8_t)p);
  CHECK(last.status == ActionStatus::Fault);
  CHECK(last.fatal_reason == FatalReason::StoreFull);
  CHECK(r.rt->fatal());
}

TEST_CASE("dynamic resizing grows instead of thrashing") {
  WorldOptions o = paged(UINT64_MAX, false);
  o.dyn_resize = true;
  World w(o);
  REQUIRE(w.boot());
  // Tight epm: image payload plus page tables leave only a few free pages.
  SbiRet c = w.create_enclave("counter", 18, 8);
  REQUIRE(c.ok());
  int id = (int)c.value;
  REQUIRE(w.run_enclave(id, 1).ok());
  EnclaveRuntime* rt = w.runtime(id);
  uint64_t epm_before = w.sm().enclave(id)->epm.size;
  crypto::Hash meas = w.sm().enclave(id)->measurement;

  uint64_t heap = rt->heap_top();
  REQUIRE(rt->brk_move(16 * (int64_t)kPageSize).ok());
  for (uint64_t p = 0; p < 16; p++)
    REQUIRE(rt->write_v(heap + p * kPageSize, (uint8_t)p).ok());

  CHECK(w.audit().count("os_extend_grant") > 0);
  CHECK(w.sm().enclave(id)->epm.size > epm_before);
  CHECK(rt->evictions() == 0);

  // All sixteen pages are resident and intact; identity never moved.
  for (uint64_t p = 0; p < 16; p++) {
    auto v = rt->read_v(heap + p * kPageSize);
    REQUIRE(v.ok());
    CHECK(v.value == p);
  }
  CHECK(w.sm().enclave(id)->measurement == meas);
  std::string why;
  CHECK(w.sm().check_pmp_agreement(&why));
  CHECK(w.sm().check_disjointness(&why));
}

TEST_CASE("refused growth falls back to eviction") {
  WorldOptions o = paged(UINT64_MAX, false);
  o.dyn_resize = true;
  World w(o);
  REQUIRE(w.boot());
  // The shared region is sized so the backing store can absorb every page
  // the fallback path can touch: slot bindings are permanent, so it needs
  // one slot per distinct evictable page, not per resident page.
  SbiRet c = w.create_enclave("counter", 18, 24);
  REQUIRE(c.ok());
  int id = (int)c.value;
  // Another allocation right above the enclave blocks adjacent growth.
  Region plug = *w.os_alloc().alloc(kPageSize);
  CHECK(plug.base == w.sm().enclave(id)->epm.end());
  REQUIRE(w.run_enclave(id, 1).ok());
  EnclaveRuntime* rt = w.runtime(id);

  uint64_t heap = rt->heap_top();
  REQUIRE(rt->brk_move(16 * (int64_t)kPageSize).ok());
  for (uint64_t p = 0; p < 16; p++)
    REQUIRE(rt->write_v(heap + p * kPageSize, (uint8_t)p).ok());
  CHECK(w.audit().count("os_extend_refuse") > 0);
  CHECK(rt->evictions() > 0);
  for (uint64_t p = 0; p < 16; p++) {
    auto v = rt->read_v(heap + p * kPageSize);
    REQUIRE(v.ok());
    CHECK(v.value == p);
  }
}

TEST_CASE("attest_self produces a verifiable wire report") {
  Rig r(paged(UINT64_MAX, false));
  Bytes channel{'k', 'e', 'y'};
  auto a = r.rt->attest_self(channel);
  REQUIRE(a.ok());
  auto rep = AttestationReport::parse(a.bytes);
  REQUIRE(rep.has_value());
  crypto::Hash expect = r.w.sm().enclave(r.id)->measurement;
  CHECK(verify_report(*rep, r.w.sm().device_public(), &expect) ==
        VerifyResult::Valid);
  CHECK(rep->data == channel);
}

TEST_CASE("exit_self retires the enclave") {
  Rig r(paged(UINT64_MAX, false));
  REQUIRE(r.rt->exit_self().ok());
  CHECK(r.w.sm().enclave(r.id)->state == EnclaveState::Stopped);
  CHECK(r.w.sm().enclave(r.id)->exited);
  CHECK(r.w.resume_enclave(r.id, 1).err == SbiError::WrongState);
  CHECK(r.w.destroy_enclave(r.id).ok());
}

TEST_CASE("spin burns watchdog budget and loop_forever hits the limit") {
  WorldOptions o = paged(UINT64_MAX, false);
  o.watchdog = 100;
  World w(o);
  REQUIRE(w.boot());
  SbiRet c = w.create_enclave("counter", 48, 8);
  REQUIRE(c.ok());
  int id = (int)c.value;
  REQUIRE(w.run_enclave(id, 1).ok());
  EnclaveRuntime* rt = w.runtime(id);

  // A bounded spin inside the budget completes.
  REQUIRE(rt->yield_now().ok());
  REQUIRE(w.resume_enclave(id, 1).ok());
  auto s = rt->spin(10);
  REQUIRE(s.ok());

  // An unbounded loop is cut at exactly the remaining budget.
  REQUIRE(rt->yield_now().ok());
  REQUIRE(w.resume_enclave(id, 1).ok());
  auto l = rt->loop_forever();
  CHECK(l.status == ActionStatus::ForcedYield);
  CHECK(l.value == 100);
  CHECK(w.sm().enclave(id)->state == EnclaveState::Stopped);

  // The host regains control and can resume; the budget is fresh again.
  REQUIRE(w.resume_enclave(id, 0).ok());
  auto l2 = rt->loop_forever();
  CHECK(l2.status == ActionStatus::ForcedYield);
  CHECK(l2.value == 100);
}
