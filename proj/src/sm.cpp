// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include "ksim/sm.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

#include "ksim/cache.hpp"
#include "ksim/pt.hpp"

namespace ksim {

const char* enclave_state_name(EnclaveState s) {
  switch (s) {
    case EnclaveState::Created: return "created";
    case EnclaveState::Running: return "running";
    case EnclaveState::Stopped: return "stopped";
    case EnclaveState::Destroyed: return "destroyed";
  }
  return "?";
}

const char* sbi_error_name(SbiError e) {
  switch (e) {
    case SbiError::Ok: return "ok";
    case SbiError::NotBooted: return "not_booted";
    case SbiError::AlreadyBooted: return "already_booted";
    case SbiError::RegionOutOfBounds: return "region_out_of_bounds";
    case SbiError::UnalignedRegion: return "unaligned_region";
    case SbiError::OverlapError: return "overlap_error";
    case SbiError::InvalidMapping: return "invalid_mapping";
    case SbiError::DuplicatePhysicalPage: return "duplicate_physical_page";
    case SbiError::NoFreePmpEntry: return "no_free_pmp_entry";
    case SbiError::WrongState: return "wrong_state";
    case SbiError::HartBusy: return "hart_busy";
    case SbiError::WrongCaller: return "wrong_caller";
    case SbiError::NoSuchEnclave: return "no_such_enclave";
    case SbiError::DataTooLarge: return "data_too_large";
    case SbiError::NotAdjacent: return "not_adjacent";
    case SbiError::ScratchpadTooSmall: return "scratchpad_too_small";
    case SbiError::ScratchpadBusy: return "scratchpad_busy";
  }
  return "?";
}

const char* verify_result_name(VerifyResult r) {
  switch (r) {
    case VerifyResult::Valid: return "Valid";
    case VerifyResult::Malformed: return "Malformed";
    case VerifyResult::BadDeviceSig: return "BadDeviceSig";
    case VerifyResult::BadSmSig: return "BadSmSig";
    case VerifyResult::WrongEnclaveMeasurement:
      return "WrongEnclaveMeasurement";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Attestation report wire format
// ---------------------------------------------------------------------------

Bytes AttestationReport::serialize() const {
  Bytes out;
  out.insert(out.end(), sm_measurement.begin(), sm_measurement.end());
  out.insert(out.end(), sm_attest_pub.begin(), sm_attest_pub.end());
  out.insert(out.end(), device_sig.begin(), device_sig.end());
  out.insert(out.end(), enclave_measurement.begin(),
             enclave_measurement.end());
  put_le16(out, (uint16_t)data.size());
  out.insert(out.end(), data.begin(), data.end());
  out.insert(out.end(), sm_sig.begin(), sm_sig.end());
  return out;
}

std::optional<AttestationReport> AttestationReport::parse(
    std::span<const uint8_t> in) {
  constexpr size_t kFixedHead = 32 + 32 + 64 + 32 + 2;
  if (in.size() < kFixedHead + 64) return std::nullopt;
  AttestationReport r;
  size_t off = 0;
  auto take = [&](uint8_t* dst, size_t n) {
    std::copy(in.begin() + (long)off, in.begin() + (long)(off + n), dst);
    off += n;
  };
  take(r.sm_measurement.data(), 32);
  take(r.sm_attest_pub.data(), 32);
  take(r.device_sig.data(), 64);
  take(r.enclave_measurement.data(), 32);
  uint16_t dlen = get_le16(in.data() + off);
  off += 2;
  if (dlen > kMaxAttestData || in.size() != kFixedHead + dlen + 64)
    return std::nullopt;
  r.data.assign(in.begin() + (long)off, in.begin() + (long)(off + dlen));
  off += dlen;
  take(r.sm_sig.data(), 64);
  return r;
}

VerifyResult verify_report(const AttestationReport& r,
                           const crypto::PublicKey& device_pub,
                           const crypto::Hash* expect_enclave) {
  if (r.data.size() > kMaxAttestData) return VerifyResult::Malformed;
  Bytes cert_msg;
  cert_msg.insert(cert_msg.end(), r.sm_measurement.begin(),
                  r.sm_measurement.end());
  cert_msg.insert(cert_msg.end(), r.sm_attest_pub.begin(),
                  r.sm_attest_pub.end());
  if (!crypto::verify(device_pub, cert_msg, r.device_sig))
    return VerifyResult::BadDeviceSig;
  Bytes encl_msg;
  encl_msg.insert(encl_msg.end(), r.enclave_measurement.begin(),
                  r.enclave_measurement.end());
  encl_msg.insert(encl_msg.end(), r.data.begin(), r.data.end());
  if (!crypto::verify(r.sm_attest_pub, encl_msg, r.sm_sig))
    return VerifyResult::BadSmSig;
  if (expect_enclave && r.enclave_measurement != *expect_enclave)
    return VerifyResult::WrongEnclaveMeasurement;
  return VerifyResult::Valid;
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

static std::string region_str(const Region& r) {
  std::ostringstream os;
  os << hex_u64(r.base) << "+" << hex_u64(r.size);
  return os.str();
}

void sm_audit(Machine& m, unsigned hart, const char* event,
              const std::string& args) {
  if (m.audit()) m.audit()->record(m.step(), hart, event, args);
}

static bool page_aligned(const Region& r) {
  return (r.base % kPageSize == 0) && (r.size % kPageSize == 0);
}

static bool in_bounds(const Machine& m, const Region& r) {
  return r.size != 0 && r.base <= m.mem_size() &&
         r.size <= m.mem_size() - r.base;
}

// ---------------------------------------------------------------------------
// Validation + measurement
// ---------------------------------------------------------------------------

SbiError SecurityMonitor::measure_enclave(const Machine& m, const Region& epm,
                                          const Region& utm, uint64_t pt_root,
                                          uint64_t entry_point,
                                          std::span<const uint8_t> config,
                                          crypto::Hash& out,
                                          std::string* why) {
  auto explain = [&](const char* w) {
    if (why) *why = w;
  };
  if (pt_root % kPageSize != 0 || !epm.contains(pt_root, kPageSize)) {
    explain("pt_root outside protected region");
    return SbiError::InvalidMapping;
  }
  auto read64 = [&m](uint64_t pa) { return m.raw_read64(pa); };

  std::vector<pt::MappedPage> pages;
  std::vector<uint64_t> tables;
  std::string collect_why;
  if (!pt::collect(read64, pt_root, pages, tables, &collect_why)) {
    if (why) *why = collect_why;
    return SbiError::InvalidMapping;
  }

  for (uint64_t t : tables) {
    if (!epm.contains(t, kPageSize)) {
      explain("page table page outside protected region");
      return SbiError::InvalidMapping;
    }
  }
  for (const auto& p : pages) {
    const Region& home = p.pte.shared() ? utm : epm;
    if (!home.contains(p.pte.pa(), kPageSize)) {
      explain(p.pte.shared() ? "shared page outside untrusted region"
                             : "mapped page outside protected region");
      return SbiError::InvalidMapping;
    }
  }

  // Every physical page must appear exactly once: no aliased mappings, no
  // leaf overlapping a table page.
  std::vector<uint64_t> phys;
  phys.reserve(pages.size() + tables.size());
  for (const auto& p : pages)
    if (!p.pte.shared()) phys.push_back(p.pte.pa());
  for (uint64_t t : tables) phys.push_back(t);
  std::sort(phys.begin(), phys.end());
  if (std::adjacent_find(phys.begin(), phys.end()) != phys.end()) {
    explain("physical page mapped more than once");
    return SbiError::DuplicatePhysicalPage;
  }

  pt::Walk entry_walk = pt::walk(read64, pt_root, entry_point);
  if (!entry_walk.ok || !entry_walk.pte.executable()) {
    explain("entry point not mapped executable");
    return SbiError::InvalidMapping;
  }

  // Canonical serialization: config, entry point, then every measured page
  // in ascending virtual address order as (va, permission byte, contents).
  // Pages backed by untrusted shared memory carry host-controlled bytes and
  // are excluded; page-table pages are placement-dependent and excluded.
  crypto::Hasher h;
  h.update(config);
  h.update_u64le(entry_point);
  Bytes page_buf(kPageSize);
  for (const auto& p : pages) {
    if (p.pte.shared()) continue;
    h.update_u64le(p.va);
    h.update_byte(pt::perm_byte(p.pte));
    m.raw_read_block(p.pte.pa(), page_buf);
    h.update(page_buf);
  }
  out = h.finish();
  return SbiError::Ok;
}

// ---------------------------------------------------------------------------
// Boot
// ---------------------------------------------------------------------------

SbiError SecurityMonitor::boot(Region sm_region,
                               std::span<const uint8_t> sm_image,
                               uint64_t boot_seed, const SmOptions& opts) {
  if (booted_) return SbiError::AlreadyBooted;
  uint64_t mem = machine_.mem_size();
  // The catch-all entry covers all of memory with a single NAPOT range, so
  // memory must be a power-of-two number of bytes.
  if (mem == 0 || (mem & (mem - 1)) || mem % kPageSize)
    return SbiError::UnalignedRegion;
  if (!in_bounds(machine_, sm_region) || !page_aligned(sm_region))
    return SbiError::RegionOutOfBounds;
  if (sm_image.size() > sm_region.size) return SbiError::RegionOutOfBounds;

  EncodedRegion sm_enc;
  if (encode_region(sm_region.base, sm_region.size, kPermsNone, sm_enc) !=
      EncodeError::Ok)
    return SbiError::UnalignedRegion;
  // Entry 0 guards the monitor itself. A TOR encoding only works there when
  // the region starts at zero (entry 0's lower bound is hardwired to zero).
  if (sm_enc.uses_guard && sm_region.base != 0)
    return SbiError::UnalignedRegion;

  if (opts.scratchpad) {
    const Region& sp = *opts.scratchpad;
    if (!in_bounds(machine_, sp) || !page_aligned(sp))
      return SbiError::RegionOutOfBounds;
    if (sp.overlaps(sm_region)) return SbiError::OverlapError;
  }

  opts_ = opts;
  sm_region_ = sm_region;
  hart_enclave_.assign(machine_.hart_count(), -1);

  machine_.raw_fill(sm_region.base, sm_region.size, 0);
  machine_.raw_write_block(sm_region.base, sm_image);

  pmp_used_.fill(false);
  pmp_used_[0] = true;
  machine_.broadcast_pmp_set(0, 0, sm_enc.entry);

  EncodedRegion all;
  encode_region(0, mem, kPermsRwx, all);
  catch_all_entry_ = all.entry;
  pmp_used_[kPmpEntryCount - 1] = true;
  machine_.broadcast_pmp_set(0, kPmpEntryCount - 1, catch_all_entry_);

  if (opts_.scratchpad) {
    // The scratchpad keeps a dedicated TOR pair for its whole lifetime;
    // enclaves loaded into it flip the data entry's permissions only.
    spad_pair_ = PmpAlloc{1, 2};
    pmp_used_[1] = pmp_used_[2] = true;
    machine_.broadcast_pmp_set(
        0, 1, PmpEntry{PmpMode::Off, kPermsNone, opts_.scratchpad->base >> 2});
    machine_.broadcast_pmp_set(
        0, 2,
        PmpEntry{PmpMode::Tor, kPermsNone, opts_.scratchpad->end() >> 2});
  }

  device_ = crypto::DeviceKey::from_seed(opts_.device_seed);
  boot_out_ = crypto::secure_boot(device_, sm_image, boot_seed);
  rng_.emplace(boot_seed);

  booted_ = true;
  std::ostringstream os;
  os << "sm=" << region_str(sm_region)
     << ",meas=" << to_hex({boot_out_.sm_measurement.data(), 8});
  sm_audit(machine_, 0, "sm_boot", os.str());
  return SbiError::Ok;
}

// ---------------------------------------------------------------------------
// PMP entry pool
// ---------------------------------------------------------------------------

bool SecurityMonitor::alloc_pair(PmpAlloc& out) {
  for (unsigned i = 2; i < kPmpEntryCount - 1; i++) {
    if (!pmp_used_[i - 1] && !pmp_used_[i]) {
      pmp_used_[i - 1] = pmp_used_[i] = true;
      out = {(int)(i - 1), (int)i};
      return true;
    }
  }
  return false;
}

bool SecurityMonitor::alloc_single_or_pair(const Region& r, PmpAlloc& out) {
  EncodedRegion enc;
  if (encode_region(r.base, r.size, kPermsNone, enc) != EncodeError::Ok)
    return false;
  if (!enc.uses_guard) {
    for (unsigned i = 1; i < kPmpEntryCount - 1; i++) {
      if (!pmp_used_[i]) {
        pmp_used_[i] = true;
        out = {-1, (int)i};
        return true;
      }
    }
    return false;
  }
  return alloc_pair(out);
}

void SecurityMonitor::free_index(int idx) {
  if (idx < 0) return;
  pmp_used_[(unsigned)idx] = false;
  machine_.broadcast_pmp_set(0, (unsigned)idx, PmpEntry{});
}

// ---------------------------------------------------------------------------
// Create
// ---------------------------------------------------------------------------

SbiError SecurityMonitor::validate_regions(const CreateRequest& req) const {
  if (!booted_) return SbiError::NotBooted;
  if (!page_aligned(req.epm) || !page_aligned(req.utm))
    return SbiError::UnalignedRegion;
  if (!in_bounds(machine_, req.epm) || !in_bounds(machine_, req.utm))
    return SbiError::RegionOutOfBounds;
  if (req.epm.overlaps(req.utm)) return SbiError::OverlapError;
  for (const Region& r : {req.epm, req.utm}) {
    if (r.overlaps(sm_region_)) return SbiError::OverlapError;
    if (opts_.scratchpad && r.overlaps(*opts_.scratchpad))
      return SbiError::OverlapError;
    for (const auto& [id, e] : enclaves_) {
      if (e.state == EnclaveState::Destroyed) continue;
      if (r.overlaps(e.epm) || r.overlaps(e.utm))
        return SbiError::OverlapError;
    }
  }
  return SbiError::Ok;
}

SbiRet SecurityMonitor::create(const Caller& c, const CreateRequest& req) {
  if (c.kind != Caller::Kind::Os) return SbiRet::fail(SbiError::WrongCaller);
  SbiError err = validate_regions(req);
  if (err != SbiError::Ok) return SbiRet::fail(err);

  unsigned live = 0;
  for (const auto& [id, e] : enclaves_)
    if (e.state != EnclaveState::Destroyed) live++;
  if (live >= kPmpEntryCount - 2) return SbiRet::fail(SbiError::NoFreePmpEntry);

  if (req.use_scratchpad) {
    if (!opts_.scratchpad || req.epm.size > opts_.scratchpad->size)
      return SbiRet::fail(SbiError::ScratchpadTooSmall);
    if (scratchpad_holder_ >= 0)
      return SbiRet::fail(SbiError::ScratchpadBusy);
  }

  crypto::Hash meas{};
  std::string why;
  err = measure_enclave(machine_, req.epm, req.utm, req.pt_root,
                        req.entry_point, req.config, meas, &why);
  if (err != SbiError::Ok) {
    sm_audit(machine_, c.hart, "create_rejected",
             std::string(sbi_error_name(err)) + ":" + why);
    return SbiRet::fail(err);
  }

  EnclaveDescriptor e;
  e.id = next_id_;
  e.state = EnclaveState::Created;
  e.epm = req.epm;
  e.utm = req.utm;
  e.pt_root = req.pt_root;
  e.entry_point = req.entry_point;
  e.measurement = meas;
  e.config = req.config;
  e.uses_scratchpad = req.use_scratchpad;

  if (req.use_scratchpad) {
    // Copy the enclave into the on-chip scratchpad, shifting every table
    // pointer and in-enclave leaf by the relocation delta, then hand the
    // original (scrubbed) region back to the host.
    const Region sp = *opts_.scratchpad;
    uint64_t delta = sp.base - req.epm.base;  // mod 2^64; both directions fine
    Bytes img(req.epm.size);
    machine_.raw_read_block(req.epm.base, img);
    machine_.raw_write_block(sp.base, img);

    uint64_t new_root = req.pt_root + delta;
    std::vector<uint64_t> fix_tables{new_root};
    for (size_t i = 0; i < fix_tables.size(); i++) {
      for (unsigned j = 0; j < pt::kEntriesPerTable; j++) {
        uint64_t pte_addr = fix_tables[i] + j * 8;
        pt::Pte pte{machine_.raw_read64(pte_addr)};
        if (!pte.valid()) continue;
        if (!pte.leaf()) {
          uint64_t moved = pte.pa() + delta;
          machine_.raw_write64(pte_addr, pt::Pte::make_table(moved).raw);
          fix_tables.push_back(moved);
        } else if (!pte.shared()) {
          machine_.raw_write64(
              pte_addr,
              pt::Pte::make_leaf(pte.pa() + delta, pte.flags()).raw);
        }
      }
    }

    e.retired_epm = req.epm;
    e.epm = Region{sp.base, req.epm.size};
    e.pt_root = new_root;

    crypto::Hash meas2{};
    SbiError err2 = measure_enclave(machine_, e.epm, e.utm, e.pt_root,
                                    e.entry_point, e.config, meas2, &why);
    // Relocation preserves the virtual layout byte for byte, so the digest
    // must not move. A mismatch is a simulator bug, not a guest error.
    if (err2 != SbiError::Ok || meas2 != meas) {
      std::fprintf(stderr, "scratchpad relocation changed measurement: %s\n",
                   why.c_str());
      std::abort();
    }

    machine_.raw_fill(req.epm.base, req.epm.size, 0);
    scratchpad_holder_ = e.id;
    e.epm_guard_idx = spad_pair_.guard;
    e.epm_idx = spad_pair_.idx;
  } else {
    PmpAlloc epm_alloc;
    if (!alloc_pair(epm_alloc)) return SbiRet::fail(SbiError::NoFreePmpEntry);
    e.epm_guard_idx = epm_alloc.guard;
    e.epm_idx = epm_alloc.idx;
    machine_.broadcast_pmp_set(
        c.hart, (unsigned)e.epm_guard_idx,
        PmpEntry{PmpMode::Off, kPermsNone, e.epm.base >> 2});
    machine_.broadcast_pmp_set(
        c.hart, (unsigned)e.epm_idx,
        PmpEntry{PmpMode::Tor, kPermsNone, e.epm.end() >> 2});
  }

  PmpAlloc utm_alloc;
  if (!alloc_single_or_pair(e.utm, utm_alloc)) {
    if (!e.uses_scratchpad) {
      free_index(e.epm_idx);
      free_index(e.epm_guard_idx);
    } else {
      scratchpad_holder_ = -1;
    }
    return SbiRet::fail(SbiError::NoFreePmpEntry);
  }
  e.utm_guard_idx = utm_alloc.guard;
  e.utm_idx = utm_alloc.idx;
  EncodedRegion utm_enc;
  encode_region(e.utm.base, e.utm.size, kPermsRw, utm_enc);
  if (utm_enc.uses_guard) {
    machine_.broadcast_pmp_set(c.hart, (unsigned)e.utm_guard_idx,
                               utm_enc.guard);
  }
  machine_.broadcast_pmp_set(c.hart, (unsigned)e.utm_idx, utm_enc.entry);

  next_id_++;
  int id = e.id;
  std::ostringstream os;
  os << "id=" << id << ",epm=" << region_str(e.epm)
     << ",utm=" << region_str(e.utm)
     << ",meas=" << to_hex({e.measurement.data(), 8})
     << (e.uses_scratchpad ? ",scratchpad=1" : "");
  enclaves_.emplace(id, std::move(e));
  sm_audit(machine_, c.hart, "enclave_create", os.str());
  return SbiRet::success((uint64_t)id);
}

// ---------------------------------------------------------------------------
// Context switches
// ---------------------------------------------------------------------------

EnclaveDescriptor* SecurityMonitor::find(int id) {
  auto it = enclaves_.find(id);
  return it == enclaves_.end() ? nullptr : &it->second;
}

const EnclaveDescriptor* SecurityMonitor::enclave(int id) const {
  auto it = enclaves_.find(id);
  return it == enclaves_.end() ? nullptr : &it->second;
}

std::vector<int> SecurityMonitor::live_ids() const {
  std::vector<int> ids;
  for (const auto& [id, e] : enclaves_)
    if (e.state != EnclaveState::Destroyed) ids.push_back(id);
  return ids;
}

static SbiRet enter_enclave(Machine& machine, CacheModel* cache,
                            EnclaveDescriptor& e, unsigned hart,
                            std::vector<int>& hart_enclave,
                            const PmpEntry& catch_all, uint64_t budget,
                            const char* event) {
  if (hart >= machine.hart_count() || hart_enclave[hart] != -1)
    return SbiRet::fail(SbiError::HartBusy);
  // Context-switch PMP flips are hart-local: grant the enclave its region
  // and blind the hart to everything the catch-all used to offer.
  machine.local_pmp_set(hart, (unsigned)e.epm_idx,
                        PmpEntry{PmpMode::Tor, kPermsRwx, e.epm.end() >> 2});
  PmpEntry blind = catch_all;
  blind.perms = kPermsNone;
  machine.local_pmp_set(hart, kPmpEntryCount - 1, blind);
  machine.hart(hart).domain = Domain::enclave(e.id);
  machine.hart(hart).priv = PrivMode::U;
  if (cache) cache->switch_partition(Domain::enclave(e.id), Domain::host());
  e.state = EnclaveState::Running;
  e.running_hart = hart;
  e.watchdog_left = budget;
  hart_enclave[hart] = e.id;
  std::ostringstream os;
  os << "id=" << e.id;
  sm_audit(machine, hart, event, os.str());
  return SbiRet::success();
}

SbiRet SecurityMonitor::run(const Caller& c, int id, unsigned hart) {
  if (c.kind != Caller::Kind::Os) return SbiRet::fail(SbiError::WrongCaller);
  EnclaveDescriptor* e = find(id);
  if (!e) return SbiRet::fail(SbiError::NoSuchEnclave);
  if (e->state != EnclaveState::Created)
    return SbiRet::fail(SbiError::WrongState);
  return enter_enclave(machine_, cache_, *e, hart, hart_enclave_,
                       catch_all_entry_, opts_.watchdog_budget,
                       "enclave_run");
}

SbiRet SecurityMonitor::resume(const Caller& c, int id, unsigned hart) {
  if (c.kind != Caller::Kind::Os) return SbiRet::fail(SbiError::WrongCaller);
  EnclaveDescriptor* e = find(id);
  if (!e) return SbiRet::fail(SbiError::NoSuchEnclave);
  if (e->state != EnclaveState::Stopped || e->exited)
    return SbiRet::fail(SbiError::WrongState);
  return enter_enclave(machine_, cache_, *e, hart, hart_enclave_,
                       catch_all_entry_, opts_.watchdog_budget,
                       "enclave_resume");
}

void SecurityMonitor::context_scrub(EnclaveDescriptor& e, const char* event) {
  unsigned hart = e.running_hart;
  e.saved_context.clear();
  put_le64(e.saved_context, machine_.step());
  put_le64(e.saved_context, e.watchdog_left);
  put_le32(e.saved_context, hart);

  machine_.local_pmp_set(hart, (unsigned)e.epm_idx,
                         PmpEntry{PmpMode::Tor, kPermsNone, e.epm.end() >> 2});
  machine_.local_pmp_set(hart, kPmpEntryCount - 1, catch_all_entry_);
  machine_.hart(hart).domain = Domain::host();
  machine_.hart(hart).priv = PrivMode::S;
  if (cache_)
    cache_->switch_partition(Domain::host(), Domain::enclave(e.id));
  e.state = EnclaveState::Stopped;
  hart_enclave_[hart] = -1;
  std::ostringstream os;
  os << "id=" << e.id;
  sm_audit(machine_, hart, event, os.str());
}

SbiRet SecurityMonitor::stop(const Caller& c, int id) {
  if (c.kind != Caller::Kind::Rt || c.enclave_id != id)
    return SbiRet::fail(SbiError::WrongCaller);
  EnclaveDescriptor* e = find(id);
  if (!e) return SbiRet::fail(SbiError::NoSuchEnclave);
  if (e->state != EnclaveState::Running)
    return SbiRet::fail(SbiError::WrongState);
  context_scrub(*e, "enclave_stop");
  return SbiRet::success();
}

SbiRet SecurityMonitor::exit_enclave(const Caller& c, int id) {
  if (c.kind != Caller::Kind::Rt || c.enclave_id != id)
    return SbiRet::fail(SbiError::WrongCaller);
  EnclaveDescriptor* e = find(id);
  if (!e) return SbiRet::fail(SbiError::NoSuchEnclave);
  if (e->state != EnclaveState::Running)
    return SbiRet::fail(SbiError::WrongState);
  e->exited = true;
  context_scrub(*e, "enclave_exit");
  return SbiRet::success();
}

SbiRet SecurityMonitor::destroy(const Caller& c, int id) {
  if (c.kind != Caller::Kind::Os) return SbiRet::fail(SbiError::WrongCaller);
  EnclaveDescriptor* e = find(id);
  if (!e) return SbiRet::fail(SbiError::NoSuchEnclave);
  if (e->state != EnclaveState::Created && e->state != EnclaveState::Stopped)
    return SbiRet::fail(SbiError::WrongState);

  machine_.raw_fill(e->epm.base, e->epm.size, 0);
  if (e->uses_scratchpad) {
    // The pair entries stay reserved; restore the boot-time registers in
    // case a run shrank the data entry's bound on some hart.
    scratchpad_holder_ = -1;
    machine_.broadcast_pmp_set(
        c.hart, (unsigned)spad_pair_.idx,
        PmpEntry{PmpMode::Tor, kPermsNone, opts_.scratchpad->end() >> 2});
  } else {
    free_index(e->epm_idx);
    free_index(e->epm_guard_idx);
  }
  free_index(e->utm_idx);
  free_index(e->utm_guard_idx);
  e->state = EnclaveState::Destroyed;
  std::ostringstream os;
  os << "id=" << id;
  sm_audit(machine_, c.hart, "enclave_destroy", os.str());
  return SbiRet::success();
}

// ---------------------------------------------------------------------------
// Runtime services
// ---------------------------------------------------------------------------

SbiRet SecurityMonitor::attest(const Caller& c, int id,
                               std::span<const uint8_t> data,
                               AttestationReport& out) {
  if (c.kind != Caller::Kind::Rt || c.enclave_id != id)
    return SbiRet::fail(SbiError::WrongCaller);
  EnclaveDescriptor* e = find(id);
  if (!e) return SbiRet::fail(SbiError::NoSuchEnclave);
  if (e->state != EnclaveState::Running)
    return SbiRet::fail(SbiError::WrongState);
  if (data.size() > kMaxAttestData)
    return SbiRet::fail(SbiError::DataTooLarge);

  out.sm_measurement = boot_out_.sm_measurement;
  out.sm_attest_pub = boot_out_.attest.pub;
  out.device_sig = boot_out_.certificate;
  out.enclave_measurement = e->measurement;
  out.data.assign(data.begin(), data.end());
  Bytes msg;
  msg.insert(msg.end(), e->measurement.begin(), e->measurement.end());
  msg.insert(msg.end(), data.begin(), data.end());
  out.sm_sig = crypto::sign(boot_out_.attest.sec, msg);
  std::ostringstream os;
  os << "id=" << id << ",data_len=" << data.size();
  sm_audit(machine_, e->running_hart, "enclave_attest", os.str());
  return SbiRet::success();
}

SbiRet SecurityMonitor::random(const Caller& c, int id) {
  if (c.kind != Caller::Kind::Rt || c.enclave_id != id)
    return SbiRet::fail(SbiError::WrongCaller);
  EnclaveDescriptor* e = find(id);
  if (!e) return SbiRet::fail(SbiError::NoSuchEnclave);
  if (e->state != EnclaveState::Running)
    return SbiRet::fail(SbiError::WrongState);
  return SbiRet::success(rng_->next());
}

SbiRet SecurityMonitor::request_extend(const Caller& c, int id,
                                       uint64_t pages) {
  if (c.kind != Caller::Kind::Rt || c.enclave_id != id)
    return SbiRet::fail(SbiError::WrongCaller);
  EnclaveDescriptor* e = find(id);
  if (!e) return SbiRet::fail(SbiError::NoSuchEnclave);
  if (e->state != EnclaveState::Running)
    return SbiRet::fail(SbiError::WrongState);
  if (pages == 0 || pages > (1u << 20))
    return SbiRet::fail(SbiError::RegionOutOfBounds);
  e->pending_extend = pages;
  std::ostringstream os;
  os << "id=" << id << ",pages=" << pages;
  sm_audit(machine_, e->running_hart, "extend_request", os.str());
  return SbiRet::success();
}

SbiRet SecurityMonitor::extend(const Caller& c, int id, Region add) {
  if (c.kind != Caller::Kind::Os) return SbiRet::fail(SbiError::WrongCaller);
  EnclaveDescriptor* e = find(id);
  if (!e) return SbiRet::fail(SbiError::NoSuchEnclave);
  if (e->uses_scratchpad) return SbiRet::fail(SbiError::WrongState);
  if (e->state != EnclaveState::Running &&
      e->state != EnclaveState::Stopped)
    return SbiRet::fail(SbiError::WrongState);
  if (!e->pending_extend) return SbiRet::fail(SbiError::WrongState);
  if (!page_aligned(add) || add.size == 0)
    return SbiRet::fail(SbiError::UnalignedRegion);
  if (!in_bounds(machine_, add)) return SbiRet::fail(SbiError::RegionOutOfBounds);
  if (add.base != e->epm.end()) return SbiRet::fail(SbiError::NotAdjacent);
  if (add.overlaps(sm_region_) || add.overlaps(e->utm))
    return SbiRet::fail(SbiError::OverlapError);
  if (opts_.scratchpad && add.overlaps(*opts_.scratchpad))
    return SbiRet::fail(SbiError::OverlapError);
  for (const auto& [oid, other] : enclaves_) {
    if (oid == id || other.state == EnclaveState::Destroyed) continue;
    if (add.overlaps(other.epm) || add.overlaps(other.utm))
      return SbiRet::fail(SbiError::OverlapError);
  }

  e->epm.size += add.size;
  machine_.broadcast_pmp_set(
      c.hart, (unsigned)e->epm_idx,
      PmpEntry{PmpMode::Tor, kPermsNone, e->epm.end() >> 2});
  if (e->state == EnclaveState::Running) {
    machine_.local_pmp_set(
        e->running_hart, (unsigned)e->epm_idx,
        PmpEntry{PmpMode::Tor, kPermsRwx, e->epm.end() >> 2});
  }
  e->pending_extend.reset();
  std::ostringstream os;
  os << "id=" << id << ",add=" << region_str(add)
     << ",epm=" << region_str(e->epm);
  sm_audit(machine_, c.hart, "enclave_extend", os.str());
  return SbiRet::success(e->epm.size);
}

// ---------------------------------------------------------------------------
// Watchdog and trap routing
// ---------------------------------------------------------------------------

SecurityMonitor::Tick SecurityMonitor::watchdog_tick(int id) {
  EnclaveDescriptor* e = find(id);
  if (!e || e->state != EnclaveState::Running) return Tick::Continue;
  if (e->watchdog_left > 0) e->watchdog_left--;
  if (e->watchdog_left == 0) {
    context_scrub(*e, "watchdog_yield");
    return Tick::ForcedYield;
  }
  return Tick::Continue;
}

SecurityMonitor::TrapRoute SecurityMonitor::delegate_trap(int id,
                                                          TrapKind kind) {
  EnclaveDescriptor* e = find(id);
  if (!e || e->state != EnclaveState::Running) return TrapRoute::ToHost;
  if (kind == TrapKind::ExternalInterrupt) {
    context_scrub(*e, "trap_to_host");
    return TrapRoute::ToHost;
  }
  std::ostringstream os;
  os << "id=" << id << ",kind="
     << (kind == TrapKind::PageFault ? "page_fault" : "eapp_exception");
  sm_audit(machine_, e->running_hart, "trap_to_rt", os.str());
  return TrapRoute::ToRuntime;
}

// ---------------------------------------------------------------------------
// Dispatcher
// ---------------------------------------------------------------------------

SbiRet SecurityMonitor::sbi(const Caller& c, SbiFn fn, const SbiArgs& a) {
  if (!booted_) return SbiRet::fail(SbiError::NotBooted);
  switch (fn) {
    case SbiFn::Create:
      if (!a.create) return SbiRet::fail(SbiError::InvalidMapping);
      return create(c, *a.create);
    case SbiFn::Run: return run(c, a.id, a.hart);
    case SbiFn::Resume: return resume(c, a.id, a.hart);
    case SbiFn::Destroy: return destroy(c, a.id);
    case SbiFn::Extend: return extend(c, a.id, a.region);
    case SbiFn::Stop: return stop(c, a.id);
    case SbiFn::Exit: return exit_enclave(c, a.id);
    case SbiFn::Attest: {
      AttestationReport tmp;
      return attest(c, a.id, a.attest_data,
                    a.report_out ? *a.report_out : tmp);
    }
    case SbiFn::Random: return random(c, a.id);
    case SbiFn::RequestExtend: return request_extend(c, a.id, a.pages);
  }
  return SbiRet::fail(SbiError::WrongCaller);
}

// ---------------------------------------------------------------------------
// Invariant probes
// ---------------------------------------------------------------------------

bool SecurityMonitor::check_disjointness(std::string* why) const {
  std::vector<std::pair<std::string, Region>> rs;
  rs.push_back({"sm", sm_region_});
  if (opts_.scratchpad) rs.push_back({"scratchpad", *opts_.scratchpad});
  for (const auto& [id, e] : enclaves_) {
    if (e.state == EnclaveState::Destroyed) continue;
    rs.push_back({"epm" + std::to_string(id), e.epm});
    rs.push_back({"utm" + std::to_string(id), e.utm});
  }
  for (size_t i = 0; i < rs.size(); i++) {
    for (size_t j = i + 1; j < rs.size(); j++) {
      // A scratchpad enclave's region is a slice of the scratchpad itself.
      if (rs[i].first == "scratchpad" &&
          rs[j].first.rfind("epm", 0) == 0 &&
          opts_.scratchpad->contains(rs[j].second.base, rs[j].second.size))
        continue;
      if (rs[i].second.overlaps(rs[j].second)) {
        if (why) *why = rs[i].first + " overlaps " + rs[j].first;
        return false;
      }
    }
  }
  return true;
}

bool SecurityMonitor::check_pmp_agreement(std::string* why) const {
  auto explain = [&](const std::string& w) {
    if (why) *why = w;
    return false;
  };
  for (unsigned h = 0; h < machine_.hart_count(); h++) {
    const PmpFile& pmp = machine_.hart(h).pmp;
    if (pmp_check(pmp, sm_region_.base, 8, AccessKind::Read, PrivMode::S) ==
        PmpDecision::Allow)
      return explain("monitor region readable from hart " + std::to_string(h));
    for (const auto& [id, e] : enclaves_) {
      if (e.state == EnclaveState::Destroyed) continue;
      bool should_allow =
          e.state == EnclaveState::Running && e.running_hart == h;
      for (AccessKind k :
           {AccessKind::Read, AccessKind::Write, AccessKind::Execute}) {
        bool allowed = pmp_check(pmp, e.epm.base, 8, k, PrivMode::S) ==
                       PmpDecision::Allow;
        if (allowed != should_allow) {
          return explain("epm of enclave " + std::to_string(id) +
                         (allowed ? " reachable" : " unreachable") +
                         " from hart " + std::to_string(h) + " in state " +
                         enclave_state_name(e.state));
        }
      }
    }
  }
  // Host memory must stay reachable exactly on harts not inside an enclave.
  uint64_t probe = machine_.mem_size();
  while (probe > kPageSize) {
    probe -= kPageSize;
    Region pr{probe, 8};
    bool clear = !pr.overlaps(sm_region_);
    if (opts_.scratchpad && pr.overlaps(*opts_.scratchpad)) clear = false;
    for (const auto& [id, e] : enclaves_) {
      if (e.state == EnclaveState::Destroyed) continue;
      if (pr.overlaps(e.epm) || pr.overlaps(e.utm)) clear = false;
    }
    if (!clear) continue;
    for (unsigned h = 0; h < machine_.hart_count(); h++) {
      bool host_ctx = hart_enclave_[h] == -1;
      bool allowed = pmp_check(machine_.hart(h).pmp, probe, 8,
                               AccessKind::Read,
                               PrivMode::S) == PmpDecision::Allow;
      if (allowed != host_ctx)
        return explain("host memory visibility wrong on hart " +
                       std::to_string(h));
    }
    break;
  }
  return true;
}

}  // namespace ksim
