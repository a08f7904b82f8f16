// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include "ksim/machine.hpp"

#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include "ksim/cache.hpp"

namespace ksim {

char access_kind_char(AccessKind k) {
  switch (k) {
    case AccessKind::Read: return 'r';
    case AccessKind::Write: return 'w';
    case AccessKind::Execute: return 'x';
  }
  return '?';
}

char priv_char(PrivMode p) {
  switch (p) {
    case PrivMode::U: return 'U';
    case PrivMode::S: return 'S';
    case PrivMode::M: return 'M';
  }
  return '?';
}

// ---------------------------------------------------------------------------
// PMP encode/decode
// ---------------------------------------------------------------------------

static unsigned trailing_ones(uint64_t v) {
  unsigned n = 0;
  while (v & 1) {
    v >>= 1;
    n++;
  }
  return n;
}

std::optional<Region> PmpFile::region_of(unsigned i) const {
  const PmpEntry& e = entries_.at(i);
  switch (e.mode) {
    case PmpMode::Off:
      return std::nullopt;
    case PmpMode::Na4:
      return Region{e.addr << 2, 4};
    case PmpMode::Napot: {
      unsigned t = trailing_ones(e.addr);
      if (t + 3 >= 64) return Region{0, UINT64_MAX};
      uint64_t size = 8ULL << t;
      uint64_t base = (e.addr & ~((1ULL << t) - 1)) << 2;
      return Region{base, size};
    }
    case PmpMode::Tor: {
      // The lower bound comes from the previous entry's address register no
      // matter what mode that entry is in; index 0 bottoms out at zero.
      uint64_t lo = (i == 0) ? 0 : entries_[i - 1].addr << 2;
      uint64_t hi = e.addr << 2;
      if (lo >= hi) return std::nullopt;
      return Region{lo, hi - lo};
    }
  }
  return std::nullopt;
}

std::optional<unsigned> PmpFile::match_byte(uint64_t addr) const {
  for (unsigned i = 0; i < kPmpEntryCount; i++) {
    auto r = region_of(i);
    if (r && r->contains(addr)) return i;
  }
  return std::nullopt;
}

static bool is_pow2(uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

EncodeError encode_region(uint64_t base, uint64_t size, PmpPerms perms,
                          EncodedRegion& out) {
  out = EncodedRegion{};
  if (size == 0) return EncodeError::ZeroSize;
  if (size == 4 && base % 4 == 0) {
    out.entry = PmpEntry{PmpMode::Na4, perms, base >> 2};
    return EncodeError::Ok;
  }
  if (size >= 8 && is_pow2(size) && base % size == 0) {
    out.entry = PmpEntry{PmpMode::Napot, perms, (base >> 2) | ((size >> 3) - 1)};
    return EncodeError::Ok;
  }
  if (base % 4 == 0 && size % 4 == 0) {
    out.uses_guard = true;
    out.guard = PmpEntry{PmpMode::Off, kPermsNone, base >> 2};
    out.entry = PmpEntry{PmpMode::Tor, perms, (base + size) >> 2};
    return EncodeError::Ok;
  }
  return EncodeError::Unaligned;
}

PmpDecision pmp_check(const PmpFile& pmp, uint64_t addr, uint64_t len,
                      AccessKind kind, PrivMode priv) {
  if (priv == PrivMode::M) return PmpDecision::Allow;
  if (len == 0) return PmpDecision::Allow;
  // Highest-priority match for the first byte; the whole access must then
  // resolve to that same entry, otherwise it fails as a partial match.
  std::optional<unsigned> first = pmp.match_byte(addr);
  if (!first) return PmpDecision::Deny;
  for (uint64_t off = 1; off < len; off++) {
    if (pmp.match_byte(addr + off) != first) return PmpDecision::Deny;
  }
  return pmp.entry(*first).perms.grants(kind) ? PmpDecision::Allow
                                              : PmpDecision::Deny;
}

// ---------------------------------------------------------------------------
// Machine
// ---------------------------------------------------------------------------

Machine::Machine(uint64_t mem_size, unsigned hart_count) {
  mem_.assign(mem_size, 0);
  harts_.resize(hart_count ? hart_count : 1);
  for (unsigned i = 0; i < harts_.size(); i++) harts_[i].id = i;
}

void Machine::tick(unsigned hart) {
  step_++;
  harts_.at(hart).cycles++;
}

uint64_t Machine::raw_read64(uint64_t addr) const {
  uint8_t buf[8];
  raw_read_block(addr, buf);
  return get_le64(buf);
}

void Machine::raw_write64(uint64_t addr, uint64_t v) {
  uint8_t buf[8];
  store_le64(buf, v);
  raw_write_block(addr, buf);
}

void Machine::raw_read_block(uint64_t addr, std::span<uint8_t> out) const {
  if (addr > mem_.size() || out.size() > mem_.size() - addr) {
    std::memset(out.data(), 0, out.size());
    return;
  }
  std::memcpy(out.data(), mem_.data() + addr, out.size());
}

void Machine::raw_write_block(uint64_t addr, std::span<const uint8_t> data) {
  if (addr > mem_.size() || data.size() > mem_.size() - addr) return;
  std::memcpy(mem_.data() + addr, data.data(), data.size());
}

void Machine::raw_fill(uint64_t addr, uint64_t len, uint8_t value) {
  if (addr > mem_.size() || len > mem_.size() - addr) return;
  std::memset(mem_.data() + addr, value, len);
}

std::optional<AccessFault> Machine::check_and_touch(unsigned hart,
                                                    uint64_t addr,
                                                    uint64_t len,
                                                    AccessKind kind,
                                                    PrivMode priv) {
  Hart& h = harts_.at(hart);
  AccessFault fault{addr, len, kind, priv, hart, false};
  if (addr > mem_.size() || len > mem_.size() - addr) {
    fault.oob = true;
  } else if (pmp_check(h.pmp, addr, len, kind, priv) == PmpDecision::Deny) {
    // fall through with oob=false
  } else {
    if (trace_enabled_) {
      trace_.push_back(
          {step_, hart, h.domain, addr, len, kind, priv, true});
    }
    if (cache_) cache_->access_range(h.domain, addr, len);
    return std::nullopt;
  }
  if (trace_enabled_) {
    trace_.push_back({step_, hart, h.domain, addr, len, kind, priv, false});
  }
  if (audit_) {
    std::ostringstream os;
    os << "addr=" << hex_u64(addr) << ",len=" << len << ",kind="
       << access_kind_char(kind) << ",priv=" << priv_char(priv)
       << (fault.oob ? ",oob=1" : "");
    audit_->record(step_, hart, "access_denied", os.str());
  }
  return fault;
}

std::optional<AccessFault> Machine::read(unsigned hart, uint64_t addr,
                                         std::span<uint8_t> out,
                                         PrivMode priv) {
  auto fault = check_and_touch(hart, addr, out.size(), AccessKind::Read, priv);
  if (fault) return fault;
  std::memcpy(out.data(), mem_.data() + addr, out.size());
  return std::nullopt;
}

std::optional<AccessFault> Machine::write(unsigned hart, uint64_t addr,
                                          std::span<const uint8_t> data,
                                          PrivMode priv) {
  auto fault =
      check_and_touch(hart, addr, data.size(), AccessKind::Write, priv);
  if (fault) return fault;
  std::memcpy(mem_.data() + addr, data.data(), data.size());
  return std::nullopt;
}

std::optional<AccessFault> Machine::fetch(unsigned hart, uint64_t addr,
                                          uint64_t len, PrivMode priv) {
  return check_and_touch(hart, addr, len, AccessKind::Execute, priv);
}

unsigned Machine::broadcast_pmp_set(unsigned origin_hart, unsigned idx,
                                    const PmpEntry& e) {
  for (auto& h : harts_) h.pmp.set_entry(idx, e);
  pmp_broadcasts_++;
  if (audit_) {
    std::ostringstream os;
    os << "idx=" << idx << ",mode=" << (int)e.mode << ",addr="
       << hex_u64(e.addr) << ",harts=" << harts_.size();
    audit_->record(step_, origin_hart, "pmp_broadcast", os.str());
  }
  return (unsigned)harts_.size();
}

void Machine::local_pmp_set(unsigned hart, unsigned idx, const PmpEntry& e) {
  harts_.at(hart).pmp.set_entry(idx, e);
  if (audit_) {
    std::ostringstream os;
    os << "idx=" << idx << ",mode=" << (int)e.mode << ",addr="
       << hex_u64(e.addr);
    audit_->record(step_, hart, "pmp_local", os.str());
  }
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

bool Machine::save_snapshot(std::ostream& image, std::ostream& manifest) const {
  image.write(reinterpret_cast<const char*>(mem_.data()),
              (std::streamsize)mem_.size());
  manifest << "ksim-snapshot-v1\n";
  manifest << "mem_size=" << mem_.size() << "\n";
  manifest << "harts=" << harts_.size() << "\n";
  manifest << "step=" << step_ << "\n";
  for (const auto& h : harts_) {
    manifest << "hart " << h.id << " " << priv_char(h.priv) << " "
             << h.domain.id << " " << h.cycles << "\n";
    for (unsigned i = 0; i < kPmpEntryCount; i++) {
      const PmpEntry& e = h.pmp.entry(i);
      if (e.mode == PmpMode::Off && e.addr == 0 && e.perms == kPermsNone)
        continue;
      manifest << "pmp " << h.id << " " << i << " " << (int)e.mode << " "
               << (e.perms.r ? 1 : 0) << (e.perms.w ? 1 : 0)
               << (e.perms.x ? 1 : 0) << " " << hex_u64(e.addr) << "\n";
    }
  }
  return image.good() && manifest.good();
}

std::optional<Machine> Machine::load_snapshot(std::istream& image,
                                              std::istream& manifest) {
  std::string line;
  if (!std::getline(manifest, line) || line != "ksim-snapshot-v1")
    return std::nullopt;
  uint64_t mem_size = 0, harts = 0, step = 0;
  auto parse_kv = [&](const std::string& l, const char* key,
                      uint64_t& out) -> bool {
    std::string prefix = std::string(key) + "=";
    if (l.rfind(prefix, 0) != 0) return false;
    out = std::strtoull(l.c_str() + prefix.size(), nullptr, 10);
    return true;
  };
  if (!std::getline(manifest, line) || !parse_kv(line, "mem_size", mem_size))
    return std::nullopt;
  if (!std::getline(manifest, line) || !parse_kv(line, "harts", harts))
    return std::nullopt;
  if (!std::getline(manifest, line) || !parse_kv(line, "step", step))
    return std::nullopt;

  Machine m(mem_size, (unsigned)harts);
  m.step_ = step;
  image.read(reinterpret_cast<char*>(m.mem_.data()),
             (std::streamsize)mem_size);
  if ((uint64_t)image.gcount() != mem_size) return std::nullopt;

  while (std::getline(manifest, line)) {
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag == "hart") {
      unsigned id;
      std::string priv;
      int64_t dom;
      uint64_t cycles;
      is >> id >> priv >> dom >> cycles;
      if (!is || id >= m.harts_.size()) return std::nullopt;
      Hart& h = m.harts_[id];
      h.priv = priv == "M" ? PrivMode::M
                           : (priv == "U" ? PrivMode::U : PrivMode::S);
      h.domain.id = (int32_t)dom;
      h.cycles = cycles;
    } else if (tag == "pmp") {
      unsigned id, idx;
      int mode;
      std::string perms, addr_hex;
      is >> id >> idx >> mode >> perms >> addr_hex;
      if (!is || id >= m.harts_.size() || idx >= kPmpEntryCount ||
          perms.size() != 3)
        return std::nullopt;
      PmpEntry e;
      e.mode = static_cast<PmpMode>(mode);
      e.perms = PmpPerms{perms[0] == '1', perms[1] == '1', perms[2] == '1'};
      e.addr = std::strtoull(addr_hex.c_str(), nullptr, 16);
      m.harts_[id].pmp.set_entry(idx, e);
    } else if (!tag.empty()) {
      return std::nullopt;
    }
  }
  return m;
}

}  // namespace ksim
