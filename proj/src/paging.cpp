// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include "ksim/paging.hpp"

#include <algorithm>
#include <sstream>

namespace ksim {

const char* action_status_name(ActionStatus s) {
  switch (s) {
    case ActionStatus::Ok: return "ok";
    case ActionStatus::Denied: return "denied";
    case ActionStatus::Fault: return "fault";
    case ActionStatus::OutOfMemory: return "oom";
    case ActionStatus::HostError: return "host_error";
    case ActionStatus::TooLarge: return "too_large";
    case ActionStatus::Busy: return "busy";
    case ActionStatus::ForcedYield: return "forced_yield";
  }
  return "?";
}

const char* fatal_reason_name(FatalReason r) {
  switch (r) {
    case FatalReason::None: return "none";
    case FatalReason::IntegrityError: return "integrity_error";
    case FatalReason::StoreFull: return "store_full";
    case FatalReason::BadBootRecord: return "bad_boot_record";
    case FatalReason::SegFault: return "segfault";
    case FatalReason::OutOfMemory: return "oom";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Boot record page
// ---------------------------------------------------------------------------

void BootRecord::write_page(std::span<uint8_t> page) const {
  std::fill(page.begin(), page.end(), 0);
  store_le32(page.data(), layout::kBootRecordMagic);
  store_le32(page.data() + 4, 1);
  store_le64(page.data() + 8, eapp_entry);
  store_le64(page.data() + 16, heap_base);
  store_le64(page.data() + 24, utm_vbase);
  store_le64(page.data() + 32, mmap_base);
  store_le64(page.data() + 40, utm_pages);
}

std::optional<BootRecord> BootRecord::parse(std::span<const uint8_t> page) {
  if (page.size() < 48) return std::nullopt;
  if (get_le32(page.data()) != layout::kBootRecordMagic) return std::nullopt;
  if (get_le32(page.data() + 4) != 1) return std::nullopt;
  BootRecord b;
  b.eapp_entry = get_le64(page.data() + 8);
  b.heap_base = get_le64(page.data() + 16);
  b.utm_vbase = get_le64(page.data() + 24);
  b.mmap_base = get_le64(page.data() + 32);
  b.utm_pages = get_le64(page.data() + 40);
  return b;
}

// ---------------------------------------------------------------------------
// Plumbing
// ---------------------------------------------------------------------------

EnclaveRuntime::EnclaveRuntime(Machine& m, SecurityMonitor& sm,
                               edge::HostPort& host, int id, Config cfg)
    : m_(m), sm_(sm), host_(host), id_(id), cfg_(cfg) {
  if (cfg_.paging_limit == 0) cfg_.paging_limit = 1;
}

unsigned EnclaveRuntime::hart() const {
  const EnclaveDescriptor* e = sm_.enclave(id_);
  return e ? e->running_hart : 0;
}

bool EnclaveRuntime::running() const {
  const EnclaveDescriptor* e = sm_.enclave(id_);
  return e && e->state == EnclaveState::Running;
}

static void rt_audit(Machine& m, unsigned hart, const char* event,
                     const std::string& args) {
  if (m.audit()) m.audit()->record(m.step(), hart, event, args);
}

ActionResult EnclaveRuntime::guard(uint64_t ticks) {
  if (fatal_ != FatalReason::None || !running())
    return ActionResult::make(ActionStatus::Denied);
  for (uint64_t i = 0; i < ticks; i++) {
    m_.tick(hart());
    if (sm_.watchdog_tick(id_) == SecurityMonitor::Tick::ForcedYield)
      return ActionResult::make(ActionStatus::ForcedYield);
  }
  return ActionResult::success();
}

ActionResult EnclaveRuntime::fatal_result(FatalReason r) {
  if (r == FatalReason::None) return ActionResult::success();
  if (r == FatalReason::OutOfMemory)
    return ActionResult::make(ActionStatus::OutOfMemory);
  fatal_ = r;
  rt_audit(m_, hart(), "rt_fatal", fatal_reason_name(r));
  if (running()) sm_.exit_enclave(Caller::rt(id_, hart()), id_);
  ActionResult res = ActionResult::make(ActionStatus::Fault);
  res.fatal_reason = r;
  return res;
}

uint64_t EnclaveRuntime::rt_read64(uint64_t pa) {
  uint8_t buf[8] = {};
  if (m_.read(hart(), pa, buf, PrivMode::S)) return 0;
  return get_le64(buf);
}

void EnclaveRuntime::rt_write64(uint64_t pa, uint64_t v) {
  uint8_t buf[8];
  store_le64(buf, v);
  m_.write(hart(), pa, buf, PrivMode::S);
}

bool EnclaveRuntime::rt_read_block(uint64_t pa, std::span<uint8_t> out) {
  return !m_.read(hart(), pa, out, PrivMode::S);
}

bool EnclaveRuntime::rt_write_block(uint64_t pa,
                                    std::span<const uint8_t> data) {
  return !m_.write(hart(), pa, data, PrivMode::S);
}

pt::Read64 EnclaveRuntime::pt_reader() {
  return [this](uint64_t pa) { return rt_read64(pa); };
}

pt::Write64 EnclaveRuntime::pt_writer() {
  return [this](uint64_t pa, uint64_t v) { rt_write64(pa, v); };
}

// ---------------------------------------------------------------------------
// Boot
// ---------------------------------------------------------------------------

ActionResult EnclaveRuntime::boot() {
  ActionResult g = guard();
  if (!g.ok()) return g;
  if (booted_) return ActionResult::success();

  const EnclaveDescriptor* desc = sm_.enclave(id_);
  epm_ = desc->epm;
  utm_ = desc->utm;
  pt_root_ = desc->pt_root;

  std::vector<pt::MappedPage> pages;
  std::vector<uint64_t> tables;
  if (!pt::collect(pt_reader(), pt_root_, pages, tables, nullptr))
    return fatal_result(FatalReason::BadBootRecord);

  // The boot record pins every image-derived constant the runtime needs.
  pt::Walk bw = pt::walk(pt_reader(), pt_root_, layout::kBootRecordVa);
  Bytes page_buf(kPageSize);
  if (!bw.ok || !rt_read_block(bw.pa, page_buf))
    return fatal_result(FatalReason::BadBootRecord);
  auto brec = BootRecord::parse(page_buf);
  if (!brec) return fatal_result(FatalReason::BadBootRecord);
  brec_ = *brec;
  heap_top_ = brec_.heap_base;
  mmap_cursor_ = brec_.mmap_base;

  // Instruction fetch sanity for both entry points.
  if (m_.fetch(hart(), pt::walk(pt_reader(), pt_root_, desc->entry_point).pa,
               4, PrivMode::S))
    return fatal_result(FatalReason::BadBootRecord);
  pt::Walk ew = pt::walk(pt_reader(), pt_root_, brec_.eapp_entry);
  if (!ew.ok || !ew.pte.user() || !ew.pte.executable())
    return fatal_result(FatalReason::BadBootRecord);

  // Free list: every enclave page that neither the page table nor a mapping
  // claims. Zeroed before the application may run.
  std::vector<uint64_t> used;
  used.insert(used.end(), tables.begin(), tables.end());
  for (const auto& p : pages)
    if (!p.pte.shared()) used.push_back(p.pte.pa());
  std::sort(used.begin(), used.end());
  Bytes zeros(kPageSize, 0);
  for (uint64_t pa = epm_.base; pa < epm_.end(); pa += kPageSize) {
    if (!std::binary_search(used.begin(), used.end(), pa)) {
      free_.push_back(pa);
      rt_write_block(pa, zeros);
    }
  }

  // Evictable set: user pages. Runtime pages, table pages and the shared
  // window never leave enclave memory.
  for (const auto& p : pages)
    if (p.pte.user() && !p.pte.shared()) resident_.push_back(p.va);

  payload_cap_ = utm_.size > edge::kHeaderSize
                     ? std::min<uint64_t>(kPayloadCap,
                                          utm_.size - edge::kHeaderSize)
                     : 0;
  slots_off_ = edge::kHeaderSize + payload_cap_;
  slot_count_ =
      utm_.size > slots_off_ ? (utm_.size - slots_off_) / kSlotBytes : 0;

  // Key material over the monitor's boot-seeded entropy source.
  Caller me = Caller::rt(id_, hart());
  uint64_t k0 = sm_.random(me, id_).value;
  uint64_t k1 = sm_.random(me, id_).value;
  store_le64(seal_key_.data(), k0);
  store_le64(seal_key_.data() + 8, k1);
  victim_rng_.emplace(sm_.random(me, id_).value);

  booted_ = true;
  FatalReason why = FatalReason::None;
  while (resident_.size() > cfg_.paging_limit) {
    if (!evict_one(why)) return fatal_result(why);
  }
  std::ostringstream os;
  os << "id=" << id_ << ",free=" << free_.size()
     << ",resident=" << resident_.size() << ",slots=" << slot_count_;
  rt_audit(m_, hart(), "rt_boot", os.str());
  return ActionResult::success();
}

// ---------------------------------------------------------------------------
// Demand paging
// ---------------------------------------------------------------------------

uint64_t EnclaveRuntime::slot_pa(uint64_t slot) const {
  return utm_.base + slots_off_ + slot * kSlotBytes;
}

std::optional<uint64_t> EnclaveRuntime::slot_of(uint64_t va) const {
  auto it = va_slot_.find(va & ~(kPageSize - 1));
  if (it == va_slot_.end()) return std::nullopt;
  return it->second;
}

bool EnclaveRuntime::reserved_va(uint64_t va) const {
  if (va >= brec_.heap_base && va < heap_top_) return true;
  for (const auto& r : mmap_ranges_)
    if (r.contains(va)) return true;
  return false;
}

void EnclaveRuntime::note_resident(uint64_t va) { resident_.push_back(va); }

std::optional<uint64_t> EnclaveRuntime::alloc_page(FatalReason& why) {
  while (resident_.size() >= cfg_.paging_limit) {
    if (!evict_one(why)) return std::nullopt;
  }
  if (free_.empty() && cfg_.dyn_resize) {
    // Growing is preferred over paging when the host allows it. The monitor
    // only accepts an extension the runtime asked for.
    constexpr uint64_t kGrowPages = 4;
    SbiRet req = sm_.request_extend(Caller::rt(id_, hart()), id_, kGrowPages);
    if (req.ok()) host_.grant_extend(id_, kGrowPages);
  }
  if (free_.empty() && !resident_.empty()) {
    if (!evict_one(why)) return std::nullopt;
  }
  if (free_.empty()) {
    why = FatalReason::OutOfMemory;
    return std::nullopt;
  }
  uint64_t pa = free_.front();
  free_.erase(free_.begin());
  return pa;
}

/// Seals (or plainly checksums, when encryption is off) one page for the
/// untrusted store. The tag is always kept privately by the runtime.
static crypto::SealedPage protect_page(
    bool encrypt, const crypto::SealKey& key, const crypto::Nonce& nonce,
    std::span<const uint8_t, crypto::kPageSize> plain) {
  if (encrypt) return crypto::seal_page(key, nonce, plain);
  crypto::SealedPage s;
  std::copy(plain.begin(), plain.end(), s.ciphertext.begin());
  s.nonce = nonce;
  crypto::Hasher h;
  h.update(nonce);
  h.update(plain);
  s.tag = h.finish();
  return s;
}

static std::optional<std::array<uint8_t, crypto::kPageSize>> unprotect_page(
    bool encrypt, const crypto::SealKey& key, const crypto::SealedPage& s) {
  if (encrypt) return crypto::unseal_page(key, s);
  crypto::Hasher h;
  h.update(s.nonce);
  h.update(s.ciphertext);
  if (h.finish() != s.tag) return std::nullopt;
  return s.ciphertext;
}

bool EnclaveRuntime::evict_one(FatalReason& why) {
  if (resident_.empty()) {
    why = FatalReason::OutOfMemory;
    return false;
  }
  size_t idx = (size_t)victim_rng_->below(resident_.size());
  uint64_t va = resident_[idx];

  uint64_t slot;
  auto it = va_slot_.find(va);
  if (it != va_slot_.end()) {
    slot = it->second;
  } else {
    if (next_slot_ >= slot_count_) {
      why = FatalReason::StoreFull;
      return false;
    }
    slot = next_slot_++;
    va_slot_[va] = slot;
  }

  pt::Walk w = pt::walk(pt_reader(), pt_root_, va);
  if (!w.ok) {
    why = FatalReason::SegFault;
    return false;
  }
  std::array<uint8_t, crypto::kPageSize> plain{};
  if (!rt_read_block(w.pte.pa(), plain)) {
    why = FatalReason::SegFault;
    return false;
  }
  crypto::Nonce nonce{};
  store_le64(nonce.data(), (uint64_t)id_);
  store_le64(nonce.data() + 8, seal_counter_++);
  crypto::SealedPage sealed =
      protect_page(cfg_.encrypt, seal_key_, nonce, plain);

  uint64_t base = slot_pa(slot);
  rt_write64(base, va);
  rt_write64(base + 8, 1);
  rt_write_block(base + 16, sealed.nonce);
  rt_write_block(base + 32, sealed.tag);
  rt_write_block(base + 64, sealed.ciphertext);
  expected_tag_[slot] = sealed.tag;
  stored_flags_[va] = w.pte.flags();

  pt::unmap_page(pt_reader(), pt_writer(), pt_root_, va, nullptr);
  free_.push_back(w.pte.pa());
  resident_.erase(resident_.begin() + (long)idx);
  evictions_++;
  evicted_log_.push_back(va);
  std::ostringstream os;
  os << "id=" << id_ << ",va=" << hex_u64(va) << ",slot=" << slot;
  rt_audit(m_, hart(), "rt_evict", os.str());
  return true;
}

bool EnclaveRuntime::fault_in_from_store(uint64_t va, uint64_t slot,
                                         FatalReason& why) {
  auto pa_opt = alloc_page(why);
  if (!pa_opt) return false;
  uint64_t pa = *pa_opt;

  uint64_t base = slot_pa(slot);
  crypto::SealedPage sealed;
  uint64_t stored_va = rt_read64(base);
  if (!rt_read_block(base + 16, sealed.nonce) ||
      !rt_read_block(base + 32, sealed.tag) ||
      !rt_read_block(base + 64, sealed.ciphertext)) {
    why = FatalReason::SegFault;
    return false;
  }

  // Freshness first: the bytes must be the exact sealed image the runtime
  // wrote last (a replayed older slot carries a stale, correctly-MACed tag).
  auto pin = expected_tag_.find(slot);
  if (pin == expected_tag_.end() || sealed.tag != pin->second ||
      stored_va != va) {
    rt_audit(m_, hart(), "rt_integrity_fail",
             "slot=" + std::to_string(slot));
    why = FatalReason::IntegrityError;
    free_.insert(free_.begin(), pa);
    return false;
  }
  auto plain = unprotect_page(cfg_.encrypt, seal_key_, sealed);
  if (!plain) {
    rt_audit(m_, hart(), "rt_integrity_fail",
             "slot=" + std::to_string(slot));
    why = FatalReason::IntegrityError;
    free_.insert(free_.begin(), pa);
    return false;
  }

  if (!rt_write_block(pa, *plain)) {
    why = FatalReason::SegFault;
    return false;
  }
  uint64_t flags = stored_flags_.count(va) ? stored_flags_[va]
                                           : (pt::kPteR | pt::kPteW | pt::kPteU);
  FatalReason twhy = FatalReason::None;
  auto alloc_table = [this, &twhy]() -> uint64_t {
    auto p = alloc_page(twhy);
    return p ? *p : 0;
  };
  if (pt::map_page(pt_reader(), pt_writer(), alloc_table, pt_root_, va, pa,
                   flags) != pt::MapStatus::Ok) {
    why = twhy != FatalReason::None ? twhy : FatalReason::SegFault;
    return false;
  }
  note_resident(va);
  rt_write64(base + 8, 0);  // slot no longer authoritative
  expected_tag_.erase(slot);
  unseals_++;
  std::ostringstream os;
  os << "id=" << id_ << ",va=" << hex_u64(va) << ",slot=" << slot;
  rt_audit(m_, hart(), "rt_fault_in", os.str());
  return true;
}

bool EnclaveRuntime::map_fresh(uint64_t va, uint64_t flags, FatalReason& why) {
  auto pa_opt = alloc_page(why);
  if (!pa_opt) return false;
  uint64_t pa = *pa_opt;
  Bytes zeros(kPageSize, 0);
  if (!rt_write_block(pa, zeros)) {
    why = FatalReason::SegFault;
    return false;
  }
  FatalReason twhy = FatalReason::None;
  auto alloc_table = [this, &twhy]() -> uint64_t {
    auto p = alloc_page(twhy);
    return p ? *p : 0;
  };
  if (pt::map_page(pt_reader(), pt_writer(), alloc_table, pt_root_, va, pa,
                   flags) != pt::MapStatus::Ok) {
    why = twhy != FatalReason::None ? twhy : FatalReason::SegFault;
    return false;
  }
  note_resident(va);
  return true;
}

bool EnclaveRuntime::resolve_fault(uint64_t va, FatalReason& why) {
  uint64_t page_va = va & ~(kPageSize - 1);
  page_faults_++;
  sm_.delegate_trap(id_, SecurityMonitor::TrapKind::PageFault);
  if (va_slot_.count(page_va) && expected_tag_.count(va_slot_[page_va]))
    return fault_in_from_store(page_va, va_slot_[page_va], why);
  if (reserved_va(page_va))
    return map_fresh(page_va, pt::kPteR | pt::kPteW | pt::kPteU, why);
  why = FatalReason::SegFault;
  return false;
}

std::optional<EnclaveRuntime::Translated> EnclaveRuntime::translate(
    uint64_t va, AccessKind kind, PrivMode priv, FatalReason& why) {
  pt::Walk w = pt::walk(pt_reader(), pt_root_, va);
  if (!w.ok) {
    if (!resolve_fault(va, why)) return std::nullopt;
    w = pt::walk(pt_reader(), pt_root_, va);
    if (!w.ok) {
      why = FatalReason::SegFault;
      return std::nullopt;
    }
  }
  const pt::Pte& pte = w.pte;
  bool perm_ok = true;
  if (priv == PrivMode::U && !pte.user()) perm_ok = false;
  if (priv == PrivMode::S && kind == AccessKind::Execute && pte.user())
    perm_ok = false;
  switch (kind) {
    case AccessKind::Read: perm_ok = perm_ok && pte.readable(); break;
    case AccessKind::Write: perm_ok = perm_ok && pte.writable(); break;
    case AccessKind::Execute: perm_ok = perm_ok && pte.executable(); break;
  }
  if (!perm_ok) {
    sm_.delegate_trap(id_, SecurityMonitor::TrapKind::EappException);
    why = FatalReason::SegFault;
    return std::nullopt;
  }
  return Translated{w.pa};
}

// ---------------------------------------------------------------------------
// Application operations
// ---------------------------------------------------------------------------

ActionResult EnclaveRuntime::read_v(uint64_t va) {
  ActionResult g = guard();
  if (!g.ok()) return g;
  FatalReason why = FatalReason::None;
  auto t = translate(va, AccessKind::Read, PrivMode::U, why);
  if (!t) return fatal_result(why);
  uint8_t b = 0;
  if (m_.read(hart(), t->pa, {&b, 1}, PrivMode::U))
    return fatal_result(FatalReason::SegFault);
  return ActionResult::success(b);
}

ActionResult EnclaveRuntime::write_v(uint64_t va, uint8_t byte) {
  ActionResult g = guard();
  if (!g.ok()) return g;
  FatalReason why = FatalReason::None;
  auto t = translate(va, AccessKind::Write, PrivMode::U, why);
  if (!t) return fatal_result(why);
  if (m_.write(hart(), t->pa, {&byte, 1}, PrivMode::U))
    return fatal_result(FatalReason::SegFault);
  return ActionResult::success(byte);
}

ActionResult EnclaveRuntime::read_bytes(uint64_t va, uint64_t len) {
  ActionResult g = guard();
  if (!g.ok()) return g;
  if (len > (1u << 16)) return ActionResult::make(ActionStatus::TooLarge);
  ActionResult res = ActionResult::success();
  res.bytes.reserve(len);
  uint64_t off = 0;
  while (off < len) {
    uint64_t cur = va + off;
    uint64_t chunk = std::min<uint64_t>(len - off,
                                        kPageSize - (cur & (kPageSize - 1)));
    FatalReason why = FatalReason::None;
    auto t = translate(cur, AccessKind::Read, PrivMode::U, why);
    if (!t) return fatal_result(why);
    size_t pos = res.bytes.size();
    res.bytes.resize(pos + chunk);
    if (m_.read(hart(), t->pa, {res.bytes.data() + pos, (size_t)chunk},
                PrivMode::U))
      return fatal_result(FatalReason::SegFault);
    off += chunk;
  }
  return res;
}

ActionResult EnclaveRuntime::write_bytes(uint64_t va,
                                         std::span<const uint8_t> data) {
  ActionResult g = guard();
  if (!g.ok()) return g;
  if (data.size() > (1u << 16)) return ActionResult::make(ActionStatus::TooLarge);
  uint64_t off = 0;
  while (off < data.size()) {
    uint64_t cur = va + off;
    uint64_t chunk = std::min<uint64_t>(data.size() - off,
                                        kPageSize - (cur & (kPageSize - 1)));
    FatalReason why = FatalReason::None;
    auto t = translate(cur, AccessKind::Write, PrivMode::U, why);
    if (!t) return fatal_result(why);
    if (m_.write(hart(), t->pa, data.subspan(off, chunk), PrivMode::U))
      return fatal_result(FatalReason::SegFault);
    off += chunk;
  }
  return ActionResult::success(data.size());
}

ActionResult EnclaveRuntime::mmap_pages(uint64_t pages) {
  ActionResult g = guard();
  if (!g.ok()) return g;
  if (pages == 0 || pages > (1u << 16))
    return ActionResult::make(ActionStatus::TooLarge);
  Region r{mmap_cursor_, pages * kPageSize};
  // One-page hole between ranges keeps off-by-one bugs loud.
  mmap_cursor_ += (pages + 1) * kPageSize;
  mmap_ranges_.push_back(r);
  std::ostringstream os;
  os << "id=" << id_ << ",va=" << hex_u64(r.base) << ",pages=" << pages;
  rt_audit(m_, hart(), "rt_mmap", os.str());
  return ActionResult::success(r.base);
}

ActionResult EnclaveRuntime::brk_move(int64_t delta) {
  ActionResult g = guard();
  if (!g.ok()) return g;
  int64_t top = (int64_t)heap_top_ + delta;
  if (top < (int64_t)brec_.heap_base ||
      top > (int64_t)(brec_.heap_base + (1ULL << 30)))
    return ActionResult::make(ActionStatus::TooLarge);
  uint64_t new_top = (uint64_t)top;
  if (new_top < heap_top_) {
    // Shrink: drop materialized pages above the new break.
    uint64_t first_gone = (new_top + kPageSize - 1) & ~(kPageSize - 1);
    for (uint64_t va = first_gone; va < heap_top_; va += kPageSize) {
      pt::Pte old;
      if (pt::unmap_page(pt_reader(), pt_writer(), pt_root_, va, &old) ==
          pt::MapStatus::Ok) {
        free_.push_back(old.pa());
        auto it = std::find(resident_.begin(), resident_.end(), va);
        if (it != resident_.end()) resident_.erase(it);
      }
      auto st = va_slot_.find(va);
      if (st != va_slot_.end()) {
        expected_tag_.erase(st->second);
        va_slot_.erase(st);
      }
      stored_flags_.erase(va);
    }
  }
  heap_top_ = new_top;
  return ActionResult::success(heap_top_);
}

ActionResult EnclaveRuntime::get_random() {
  ActionResult g = guard();
  if (!g.ok()) return g;
  SbiRet r = sm_.random(Caller::rt(id_, hart()), id_);
  if (!r.ok()) return ActionResult::make(ActionStatus::Denied);
  return ActionResult::success(r.value);
}

ActionResult EnclaveRuntime::rdcycle() {
  ActionResult g = guard();
  if (!g.ok()) return g;
  return ActionResult::success(m_.hart(hart()).cycles);
}

ActionResult EnclaveRuntime::spin(uint64_t iterations) {
  if (fatal_ != FatalReason::None || !running())
    return ActionResult::make(ActionStatus::Denied);
  for (uint64_t i = 0; i < iterations; i++) {
    m_.tick(hart());
    if (sm_.watchdog_tick(id_) == SecurityMonitor::Tick::ForcedYield) {
      ActionResult r = ActionResult::make(ActionStatus::ForcedYield);
      r.value = i + 1;
      return r;
    }
  }
  return ActionResult::success(iterations);
}

ActionResult EnclaveRuntime::loop_forever() {
  if (fatal_ != FatalReason::None || !running())
    return ActionResult::make(ActionStatus::Denied);
  // Termination backstop for configurations with the watchdog disabled.
  constexpr uint64_t kCap = 10'000'000;
  for (uint64_t i = 0; i < kCap; i++) {
    m_.tick(hart());
    if (sm_.watchdog_tick(id_) == SecurityMonitor::Tick::ForcedYield) {
      ActionResult r = ActionResult::make(ActionStatus::ForcedYield);
      r.value = i + 1;
      return r;
    }
  }
  return ActionResult::success(kCap);
}

// ---------------------------------------------------------------------------
// Edge calls
// ---------------------------------------------------------------------------

ActionResult EnclaveRuntime::edge_call(uint32_t fid,
                                       std::span<const uint8_t> payload) {
  ActionResult g = guard();
  if (!g.ok()) return g;
  edge_calls_++;
  if (payload.size() > payload_cap_)
    return ActionResult::make(ActionStatus::TooLarge);

  unsigned h = hart();
  edge::Header hdr;
  if (!edge::read_header(m_, h, PrivMode::S, utm_.base, hdr))
    return fatal_result(FatalReason::SegFault);
  if (hdr.status == (uint32_t)edge::Status::Pending)
    return ActionResult::make(ActionStatus::Busy);

  if (!payload.empty() &&
      !rt_write_block(utm_.base + edge::kHeaderSize, payload))
    return fatal_result(FatalReason::SegFault);
  hdr = edge::Header{};
  hdr.fid = fid;
  hdr.status = (uint32_t)edge::Status::Pending;
  hdr.args_off = (uint32_t)edge::kHeaderSize;
  hdr.args_len = (uint32_t)payload.size();
  hdr.ret_off = (uint32_t)edge::kHeaderSize;
  edge::write_header(m_, h, PrivMode::S, utm_.base, hdr);

  std::ostringstream os;
  os << "id=" << id_ << ",fid=" << fid << ",len=" << payload.size();
  rt_audit(m_, h, "edge_call", os.str());

  sm_.stop(Caller::rt(id_, h), id_);
  host_.service_edge_call(id_);
  if (!running()) {
    // Host sat on the reply and never resumed us: denial of service, which
    // the design tolerates. Nothing enclave-side to clean up.
    return ActionResult::make(ActionStatus::HostError);
  }

  edge::Header back;
  if (!edge::read_header(m_, hart(), PrivMode::S, utm_.base, back))
    return fatal_result(FatalReason::SegFault);

  ActionResult res;
  if (back.status == (uint32_t)edge::Status::Done) {
    if (back.ret_len > payload_cap_) {
      res = ActionResult::make(ActionStatus::HostError);
      res.value = edge::kErrMalformed;
    } else {
      res = ActionResult::success();
      res.bytes.resize(back.ret_len);
      if (back.ret_len &&
          !rt_read_block(utm_.base + back.ret_off, res.bytes))
        return fatal_result(FatalReason::SegFault);
    }
  } else if (back.status == (uint32_t)edge::Status::Error) {
    res = ActionResult::make(ActionStatus::HostError);
    res.value = back.err;
  } else {
    // Still Pending (or trashed): reply was dropped.
    res = ActionResult::make(ActionStatus::HostError);
    res.value = edge::kErrDropped;
  }

  // Scrub the shared window: payload bytes must not outlive the call.
  Bytes zeros(payload_cap_, 0);
  rt_write_block(utm_.base + edge::kHeaderSize, zeros);
  edge::write_header(m_, hart(), PrivMode::S, utm_.base, edge::Header{});
  return res;
}

ActionResult EnclaveRuntime::syscall(uint32_t nr,
                                     std::span<const uint8_t> args) {
  Bytes payload;
  put_le32(payload, nr);
  payload.insert(payload.end(), args.begin(), args.end());
  ActionResult r = edge_call(edge::kProxySyscallFid, payload);
  if (r.status != ActionStatus::Ok) return r;
  if (r.bytes.size() < 4) {
    r.status = ActionStatus::HostError;
    r.value = edge::kErrMalformed;
    return r;
  }
  r.value = get_le32(r.bytes.data());
  r.bytes.erase(r.bytes.begin(), r.bytes.begin() + 4);
  return r;
}

ActionResult EnclaveRuntime::attest_self(std::span<const uint8_t> data) {
  ActionResult g = guard();
  if (!g.ok()) return g;
  AttestationReport report;
  SbiRet r = sm_.attest(Caller::rt(id_, hart()), id_, data, report);
  if (r.err == SbiError::DataTooLarge)
    return ActionResult::make(ActionStatus::TooLarge);
  if (!r.ok()) return ActionResult::make(ActionStatus::Denied);
  ActionResult res = ActionResult::success();
  res.bytes = report.serialize();
  return res;
}

ActionResult EnclaveRuntime::yield_now() {
  ActionResult g = guard();
  if (!g.ok()) return g;
  sm_.stop(Caller::rt(id_, hart()), id_);
  return ActionResult::success();
}

ActionResult EnclaveRuntime::exit_self() {
  ActionResult g = guard();
  if (!g.ok()) return g;
  sm_.exit_enclave(Caller::rt(id_, hart()), id_);
  return ActionResult::success();
}

// ---------------------------------------------------------------------------
// Dynamic resizing
// ---------------------------------------------------------------------------

bool EnclaveRuntime::on_extend_granted(Region add) {
  const EnclaveDescriptor* desc = sm_.enclave(id_);
  // Trust nothing about the grant: it must sit exactly at the end of the
  // region this runtime believes it owns, and the monitor must agree that
  // the grown region is enclave memory.
  if (!desc || add.size == 0 || add.size % kPageSize != 0 ||
      add.base != epm_.end() || desc->epm.base != epm_.base ||
      desc->epm.end() != add.end()) {
    rt_audit(m_, hart(), "rt_extend_reject",
             "id=" + std::to_string(id_) + ",add=" + hex_u64(add.base));
    return false;
  }
  Bytes zeros(kPageSize, 0);
  for (uint64_t pa = add.base; pa < add.end(); pa += kPageSize) {
    rt_write_block(pa, zeros);
    free_.push_back(pa);
  }
  epm_ = desc->epm;
  std::ostringstream os;
  os << "id=" << id_ << ",add=" << hex_u64(add.base) << "+"
     << hex_u64(add.size);
  rt_audit(m_, hart(), "rt_extend_adopt", os.str());
  return true;
}

}  // namespace ksim
