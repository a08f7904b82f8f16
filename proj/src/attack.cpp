// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include "ksim/attack.hpp"

#include <algorithm>
#include <memory>
#include <sstream>

#include "ksim/pt.hpp"

namespace ksim::attacks {

namespace {

std::unique_ptr<World> boot_world(WorldOptions o) {
  if (o.harts < 2) o.harts = 2;
  auto w = std::make_unique<World>(o);
  if (!w->boot()) return nullptr;
  return w;
}

unsigned enclave_hart(const World& w) {
  // Keep hart 0 for the host so a second hart can probe while the enclave
  // runs.
  (void)w;
  return 1;
}

int make_running(World& w, const std::string& image = "counter",
                 uint64_t epm_pages = 24, uint64_t utm_pages = 8,
                 bool scratch = false) {
  SbiRet c = w.create_enclave(image, epm_pages, utm_pages, scratch);
  if (!c.ok()) return -1;
  int id = (int)c.value;
  if (!w.run_enclave(id, enclave_hart(w)).ok()) return -1;
  EnclaveRuntime* rt = w.runtime(id);
  if (!rt || rt->fatal()) return -1;
  return id;
}

/// The eapp conjures a secret the host cannot predict (monitor RNG) and
/// stores it in private memory. Returns the secret bytes.
Bytes plant_secret(World& w, int id, uint64_t va, size_t len) {
  EnclaveRuntime* rt = w.runtime(id);
  Bytes secret;
  while (secret.size() < len) {
    ActionResult r = rt->get_random();
    if (!r.ok()) return {};
    for (int i = 0; i < 8 && secret.size() < len; i++)
      secret.push_back((uint8_t)(r.value >> (8 * i)));
  }
  if (!rt->write_bytes(va, secret).ok()) return {};
  return secret;
}

bool contains_seq(std::span<const uint8_t> hay,
                  std::span<const uint8_t> needle) {
  if (needle.empty() || hay.size() < needle.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) !=
         hay.end();
}

Bytes host_region_dump(World& w, Region r) {
  // Page by page: some pages may be denied while others are not; collect
  // whatever the PMP lets through.
  Bytes out;
  Bytes page(kPageSize);
  for (uint64_t pa = r.base; pa < r.end(); pa += kPageSize) {
    if (!w.host_read(pa, page)) out.insert(out.end(), page.begin(), page.end());
  }
  return out;
}

void note(Report& rep, const std::string& s) { rep.notes.push_back(s); }

Report fail_setup(const char* name, const char* what) {
  Report r;
  r.name = name;
  r.attempts = 1;
  note(r, std::string("setup failed: ") + what);
  return r;
}

constexpr uint64_t kSecretVa = 0x401000;  // second page of the user segment

// -------------------------------------------------------------- attacks

Report atk_host_read_created(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "host_read_created";
  auto w = boot_world(o);
  if (!w) return fail_setup("host_read_created", "boot");
  (void)seed;
  SbiRet c = w->create_enclave("counter", 24, 8);
  if (!c.ok()) return fail_setup("host_read_created", "create");
  const EnclaveDescriptor* d = w->sm().enclave((int)c.value);
  Bytes buf(64);
  for (uint64_t pa = d->epm.base; pa < d->epm.end(); pa += kPageSize) {
    rep.attempts++;
    if (!w->host_read(pa, buf)) rep.successes++;
  }
  rep.audit_denials = (unsigned)w->audit().count("access_denied");
  return rep;
}

Report atk_host_read_running(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "host_read_running";
  auto w = boot_world(o);
  if (!w) return fail_setup("host_read_running", "boot");
  (void)seed;
  int id = make_running(*w);
  if (id < 0) return fail_setup("host_read_running", "run");
  Bytes secret = plant_secret(*w, id, kSecretVa, 16);
  if (secret.empty()) return fail_setup("host_read_running", "secret");
  const EnclaveDescriptor* d = w->sm().enclave(id);
  Bytes page(kPageSize);
  for (uint64_t pa = d->epm.base; pa < d->epm.end(); pa += kPageSize) {
    rep.attempts++;
    if (!w->host_read(pa, page)) {
      rep.successes++;
      if (contains_seq(page, secret)) note(rep, "secret bytes recovered");
    }
  }
  rep.audit_denials = (unsigned)w->audit().count("access_denied");
  return rep;
}

Report atk_host_read_stopped(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "host_read_stopped";
  auto w = boot_world(o);
  if (!w) return fail_setup("host_read_stopped", "boot");
  (void)seed;
  int id = make_running(*w);
  if (id < 0) return fail_setup("host_read_stopped", "run");
  Bytes secret = plant_secret(*w, id, kSecretVa, 16);
  w->runtime(id)->yield_now();
  const EnclaveDescriptor* d = w->sm().enclave(id);
  if (d->state != EnclaveState::Stopped)
    return fail_setup("host_read_stopped", "stop");
  Bytes page(kPageSize);
  for (uint64_t pa = d->epm.base; pa < d->epm.end(); pa += kPageSize) {
    rep.attempts++;
    if (!w->host_read(pa, page)) {
      rep.successes++;
      if (contains_seq(page, secret)) note(rep, "secret bytes recovered");
    }
  }
  rep.audit_denials = (unsigned)w->audit().count("access_denied");
  return rep;
}

Report atk_host_write_epm(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "host_write_epm";
  auto w = boot_world(o);
  if (!w) return fail_setup("host_write_epm", "boot");
  crypto::Rng rng(seed);
  int id = make_running(*w);
  if (id < 0) return fail_setup("host_write_epm", "run");
  Bytes secret = plant_secret(*w, id, kSecretVa, 16);
  const EnclaveDescriptor* d = w->sm().enclave(id);
  for (int i = 0; i < 32; i++) {
    uint64_t pa = d->epm.base + rng.below(d->epm.size);
    uint8_t before = w->machine().raw_read8(pa);
    uint8_t poke = (uint8_t)(before ^ 0xff);
    rep.attempts++;
    if (!w->host_write(pa, std::span<const uint8_t>(&poke, 1))) {
      // Write went through; undetected alteration of protected state.
      rep.successes++;
    } else if (w->machine().raw_read8(pa) != before) {
      rep.successes++;
      note(rep, "denied write still mutated memory");
    }
  }
  // The secret must read back intact inside the enclave.
  EnclaveRuntime* rt = w->runtime(id);
  for (size_t i = 0; i < secret.size(); i++) {
    ActionResult r = rt->read_v(kSecretVa + i);
    if (!r.ok() || (uint8_t)r.value != secret[i]) {
      rep.successes++;
      note(rep, "enclave state altered by host writes");
      break;
    }
  }
  rep.audit_denials = (unsigned)w->audit().count("access_denied");
  return rep;
}

Report atk_sm_probe(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "sm_probe";
  auto w = boot_world(o);
  if (!w) return fail_setup("sm_probe", "boot");
  crypto::Rng rng(seed);
  Region sm = w->sm_region();
  Bytes buf(8);
  uint8_t poke = 0x5a;
  for (int i = 0; i < 64; i++) {
    uint64_t pa = sm.base + rng.below(sm.size - 8);
    rep.attempts++;
    if (!w->host_read(pa, buf)) rep.successes++;
    rep.attempts++;
    uint8_t before = w->machine().raw_read8(pa);
    if (!w->host_write(pa, std::span<const uint8_t>(&poke, 1)))
      rep.successes++;
    else if (w->machine().raw_read8(pa) != before)
      rep.successes++;
  }
  rep.audit_denials = (unsigned)w->audit().count("access_denied");
  return rep;
}

Report atk_utm_snoop(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "utm_snoop";
  WorldOptions opts = o;
  opts.encrypt = true;     // the confidentiality claim under test
  opts.paging_limit = 2;   // force traffic through the untrusted store
  auto w = boot_world(opts);
  if (!w) return fail_setup("utm_snoop", "boot");
  (void)seed;
  int id = make_running(*w, "counter", 24, 16);
  if (id < 0) return fail_setup("utm_snoop", "run");
  EnclaveRuntime* rt = w->runtime(id);

  Bytes secret = plant_secret(*w, id, kSecretVa, 16);
  if (secret.empty()) return fail_setup("utm_snoop", "secret");
  ActionResult mm = rt->mmap_pages(4);
  if (!mm.ok()) return fail_setup("utm_snoop", "mmap");
  Bytes page(kPageSize);
  for (size_t i = 0; i < page.size(); i++) page[i] = secret[i % secret.size()];
  for (uint64_t p = 0; p < 4; p++) {
    if (!rt->write_bytes(mm.value + p * kPageSize, page).ok())
      return fail_setup("utm_snoop", "fill");
  }
  if (rt->evictions() == 0) return fail_setup("utm_snoop", "no evictions");

  const EnclaveDescriptor* d = w->sm().enclave(id);
  Bytes utm = host_region_dump(*w, d->utm);
  rep.attempts++;
  if (utm.size() != d->utm.size) {
    // Untrusted memory is supposed to be host-visible; treat surprises as
    // setup failures, not security wins.
    return fail_setup("utm_snoop", "utm not readable");
  }
  if (contains_seq(utm, secret)) {
    rep.successes++;
    note(rep, "secret plaintext found in shared memory");
  }
  std::ostringstream osn;
  osn << "evictions=" << rt->evictions();
  note(rep, osn.str());
  return rep;
}

Report atk_store_tamper(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "store_tamper";
  WorldOptions opts = o;
  opts.paging_limit = 1;
  auto w = boot_world(opts);
  if (!w) return fail_setup("store_tamper", "boot");
  crypto::Rng rng(seed);
  int id = make_running(*w, "counter", 24, 16);
  if (id < 0) return fail_setup("store_tamper", "run");
  EnclaveRuntime* rt = w->runtime(id);

  ActionResult mm = rt->mmap_pages(2);
  if (!mm.ok()) return fail_setup("store_tamper", "mmap");
  uint64_t va0 = mm.value, va1 = mm.value + kPageSize;
  uint8_t marker = (uint8_t)(0x40 + rng.below(0x80));
  if (!rt->write_v(va0, marker).ok()) return fail_setup("store_tamper", "w0");
  if (!rt->write_v(va1, 0x01).ok()) return fail_setup("store_tamper", "w1");
  auto slot = rt->slot_of(va0);
  if (!slot) return fail_setup("store_tamper", "no slot");

  // Flip one ciphertext byte in the victim's backing slot (data area starts
  // 64 bytes into the slot).
  uint64_t pa = rt->slot_pa(*slot) + 64 + rng.below(kPageSize);
  uint8_t b;
  if (w->host_read(pa, std::span<uint8_t>(&b, 1)))
    return fail_setup("store_tamper", "store unreadable");
  b ^= 0x20;
  if (w->host_write(pa, std::span<const uint8_t>(&b, 1)))
    return fail_setup("store_tamper", "store unwritable");

  rep.attempts++;
  ActionResult back = rt->read_v(va0);
  if (back.ok()) {
    rep.successes++;  // corrupted page accepted
    note(rep, back.value == marker ? "tamper survived but value intact"
                                   : "corrupted value surfaced to eapp");
  } else if (back.fatal_reason == FatalReason::IntegrityError) {
    rep.detected++;
  }
  return rep;
}

Report atk_store_replay(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "store_replay";
  WorldOptions opts = o;
  opts.paging_limit = 1;
  auto w = boot_world(opts);
  if (!w) return fail_setup("store_replay", "boot");
  (void)seed;
  int id = make_running(*w, "counter", 24, 16);
  if (id < 0) return fail_setup("store_replay", "run");
  EnclaveRuntime* rt = w->runtime(id);

  ActionResult mm = rt->mmap_pages(2);
  if (!mm.ok()) return fail_setup("store_replay", "mmap");
  uint64_t va0 = mm.value, va1 = mm.value + kPageSize;

  if (!rt->write_v(va0, 0xAA).ok()) return fail_setup("store_replay", "w0");
  if (!rt->write_v(va1, 0x01).ok()) return fail_setup("store_replay", "w1");
  auto slot = rt->slot_of(va0);
  if (!slot) return fail_setup("store_replay", "no slot");
  uint64_t spa = rt->slot_pa(*slot);

  // Snapshot the sealed slot holding version A.
  Bytes old_slot(EnclaveRuntime::kSlotBytes);
  if (w->host_read(spa, old_slot)) return fail_setup("store_replay", "read");

  // Let the enclave advance the page to version B and seal it out again.
  if (!rt->write_v(va0, 0xBB).ok()) return fail_setup("store_replay", "w2");
  if (!rt->write_v(va1, 0x02).ok()) return fail_setup("store_replay", "w3");
  auto slot2 = rt->slot_of(va0);
  if (!slot2 || *slot2 != *slot) return fail_setup("store_replay", "slot moved");

  // Roll the slot back to version A.
  if (w->host_write(spa, old_slot)) return fail_setup("store_replay", "write");

  rep.attempts++;
  ActionResult back = rt->read_v(va0);
  if (back.ok()) {
    if (back.value == 0xAA) {
      rep.successes++;
      note(rep, "stale page accepted: rollback undetected");
    }
  } else if (back.fatal_reason == FatalReason::IntegrityError) {
    rep.detected++;
  }
  return rep;
}

Report atk_foreign_map(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "foreign_map";
  auto w = boot_world(o);
  if (!w) return fail_setup("foreign_map", "boot");
  (void)seed;
  int victim = make_running(*w);
  if (victim < 0) return fail_setup("foreign_map", "victim");
  Bytes secret = plant_secret(*w, victim, kSecretVa, 16);
  const EnclaveDescriptor* vd = w->sm().enclave(victim);

  // Build a well-formed second enclave, then have the OS splice one extra
  // leaf into its page table pointing at the victim's memory before create.
  const EnclaveImage* img = w->image("counter");
  auto epm = w->os_alloc().alloc(24 * kPageSize);
  auto utm = w->os_alloc().alloc(8 * kPageSize);
  if (!epm || !utm) return fail_setup("foreign_map", "alloc");
  LoadResult lr;
  if (build_enclave(w->machine(), w->host_hart(), *img, *epm, *utm, false,
                    lr) != LoadError::Ok)
    return fail_setup("foreign_map", "load");

  Machine& m = w->machine();
  auto rd64 = [&m](uint64_t pa) { return m.raw_read64(pa); };
  auto wr64 = [&m](uint64_t pa, uint64_t v) { m.raw_write64(pa, v); };
  uint64_t spare = epm->end() - kPageSize;
  bool spare_used = false;
  auto alloc_spare = [&]() -> uint64_t {
    if (spare_used) return 0;
    spare_used = true;
    m.raw_fill(spare, kPageSize, 0);
    return spare;
  };
  uint64_t foreign_target = vd->epm.base + (kSecretVa & (kPageSize - 1)) +
                            kPageSize;  // somewhere in the victim payload
  foreign_target &= ~(kPageSize - 1);
  if (pt::map_page(rd64, wr64, alloc_spare, lr.req.pt_root, 0x600000,
                   foreign_target,
                   pt::kPteV | pt::kPteR | pt::kPteU) != pt::MapStatus::Ok)
    return fail_setup("foreign_map", "splice");

  rep.attempts++;
  SbiRet c = w->sm().create(Caller::os(w->host_hart()), lr.req);
  if (c.ok()) {
    rep.successes++;
    note(rep, "create accepted a mapping into foreign memory");
    w->sm().destroy(Caller::os(w->host_hart()), (int)c.value);
  }
  w->os_alloc().release(*epm);
  w->os_alloc().release(*utm);
  return rep;
}

Report atk_dup_physical(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "dup_physical";
  auto w = boot_world(o);
  if (!w) return fail_setup("dup_physical", "boot");
  (void)seed;
  const EnclaveImage* img = w->image("counter");
  auto epm = w->os_alloc().alloc(24 * kPageSize);
  auto utm = w->os_alloc().alloc(8 * kPageSize);
  if (!epm || !utm) return fail_setup("dup_physical", "alloc");
  LoadResult lr;
  if (build_enclave(w->machine(), w->host_hart(), *img, *epm, *utm, false,
                    lr) != LoadError::Ok)
    return fail_setup("dup_physical", "load");

  Machine& m = w->machine();
  auto rd64 = [&m](uint64_t pa) { return m.raw_read64(pa); };
  auto wr64 = [&m](uint64_t pa, uint64_t v) { m.raw_write64(pa, v); };
  uint64_t spare = epm->end() - kPageSize;
  bool spare_used = false;
  auto alloc_spare = [&]() -> uint64_t {
    if (spare_used) return 0;
    spare_used = true;
    m.raw_fill(spare, kPageSize, 0);
    return spare;
  };
  // Alias the first payload page at a second virtual address.
  if (pt::map_page(rd64, wr64, alloc_spare, lr.req.pt_root, 0x600000,
                   epm->base,
                   pt::kPteV | pt::kPteR | pt::kPteW | pt::kPteU) !=
      pt::MapStatus::Ok)
    return fail_setup("dup_physical", "splice");

  rep.attempts++;
  SbiRet c = w->sm().create(Caller::os(w->host_hart()), lr.req);
  if (c.ok()) {
    rep.successes++;
    note(rep, "create accepted an aliased physical page");
    w->sm().destroy(Caller::os(w->host_hart()), (int)c.value);
  }
  w->os_alloc().release(*epm);
  w->os_alloc().release(*utm);
  return rep;
}

Report atk_report_forgery(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "report_forgery";
  auto w = boot_world(o);
  if (!w) return fail_setup("report_forgery", "boot");
  crypto::Rng rng(seed);
  int id = make_running(*w);
  if (id < 0) return fail_setup("report_forgery", "run");
  const uint8_t claim[] = {'o', 'k'};
  ActionResult ar = w->runtime(id)->attest_self(claim);
  if (!ar.ok()) return fail_setup("report_forgery", "attest");
  Bytes wire = ar.bytes;
  auto orig = AttestationReport::parse(wire);
  if (!orig) return fail_setup("report_forgery", "parse");
  crypto::Hash expect = w->sm().enclave(id)->measurement;
  crypto::PublicKey dev = w->sm().device_public();

  for (int trial = 0; trial < 64; trial++) {
    Bytes mut = wire;
    mut[rng.below(mut.size())] ^= (uint8_t)(1u << rng.below(8));
    rep.attempts++;
    auto rpt = AttestationReport::parse(mut);
    if (!rpt) continue;  // malformed: rejected
    if (verify_report(*rpt, dev, &expect) == VerifyResult::Valid) {
      // Valid is only a forgery if the verifier-meaningful content moved.
      if (rpt->enclave_measurement != orig->enclave_measurement ||
          rpt->data != orig->data || rpt->sm_measurement != orig->sm_measurement) {
        rep.successes++;
        note(rep, "mutated report verified");
      }
    }
  }

  // Graft: claim a different enclave measurement under the same signatures.
  AttestationReport graft = *orig;
  graft.enclave_measurement[0] ^= 0xff;
  rep.attempts++;
  if (verify_report(graft, dev, nullptr) == VerifyResult::Valid) {
    rep.successes++;
    note(rep, "grafted measurement verified");
  }

  // Replay against a verifier pinning another image's measurement.
  crypto::Hash other{};
  other[0] = 1;
  rep.attempts++;
  if (verify_report(*orig, dev, &other) == VerifyResult::Valid) {
    rep.successes++;
    note(rep, "report accepted for wrong expected measurement");
  }
  return rep;
}

Report atk_drop_edge_reply(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "drop_edge_reply";
  auto w = boot_world(o);
  if (!w) return fail_setup("drop_edge_reply", "boot");
  (void)seed;
  int id = make_running(*w);
  if (id < 0) return fail_setup("drop_edge_reply", "run");
  EnclaveRuntime* rt = w->runtime(id);
  Bytes secret = plant_secret(*w, id, kSecretVa, 16);

  w->arm_drop_edge_reply();
  const uint8_t ping[] = {1, 2, 3};
  rep.attempts++;
  ActionResult r = rt->edge_call(0, ping);
  // Denial of service is tolerated; the enclave must neither wedge nor leak.
  bool survived = !rt->fatal();
  ActionResult after = rt->read_v(kSecretVa);
  if (!survived || !after.ok() || (uint8_t)after.value != secret[0]) {
    rep.successes++;
    note(rep, "dropped reply corrupted enclave state");
  }
  if (r.ok()) {
    rep.successes++;
    note(rep, "dropped call reported success");
  }
  return rep;
}

Report atk_state_storm(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "state_storm";
  auto w = boot_world(o);
  if (!w) return fail_setup("state_storm", "boot");
  (void)seed;
  int id = make_running(*w);
  if (id < 0) return fail_setup("state_storm", "run");
  Bytes secret = plant_secret(*w, id, kSecretVa, 16);
  const EnclaveDescriptor* d = w->sm().enclave(id);
  Region epm = d->epm;

  // Forbidden transitions while the enclave runs.
  rep.attempts++;
  if (w->destroy_enclave(id).ok()) {
    rep.successes++;
    note(rep, "destroyed a running enclave");
    return rep;
  }
  rep.attempts++;
  if (w->run_enclave(id, enclave_hart(*w)).ok()) {
    rep.successes++;
    note(rep, "double run accepted");
  }
  rep.attempts++;
  if (w->resume_enclave(id, 0).ok()) {
    rep.successes++;
    note(rep, "resume of running enclave accepted");
  }
  // Destroy must scrub: stop it properly, kill it, then scan the old frame.
  w->runtime(id)->yield_now();
  if (!w->destroy_enclave(id).ok()) return fail_setup("state_storm", "destroy");
  Bytes dump = host_region_dump(*w, epm);
  rep.attempts++;
  if (contains_seq(dump, secret)) {
    rep.successes++;
    note(rep, "secret survived destroy");
  }
  rep.audit_denials = (unsigned)w->audit().count("access_denied");
  return rep;
}

Report atk_overlap_create(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "overlap_create";
  auto w = boot_world(o);
  if (!w) return fail_setup("overlap_create", "boot");
  (void)seed;
  int victim = make_running(*w);
  if (victim < 0) return fail_setup("overlap_create", "victim");
  const EnclaveDescriptor* vd = w->sm().enclave(victim);

  const EnclaveImage* img = w->image("counter");
  auto epm = w->os_alloc().alloc(24 * kPageSize);
  auto utm = w->os_alloc().alloc(8 * kPageSize);
  if (!epm || !utm) return fail_setup("overlap_create", "alloc");
  LoadResult lr;
  if (build_enclave(w->machine(), w->host_hart(), *img, *epm, *utm, false,
                    lr) != LoadError::Ok)
    return fail_setup("overlap_create", "load");

  auto try_req = [&](Region e, Region u, const char* label) {
    CreateRequest req = lr.req;
    req.epm = e;
    req.utm = u;
    rep.attempts++;
    SbiRet c = w->sm().create(Caller::os(w->host_hart()), req);
    if (c.ok()) {
      rep.successes++;
      note(rep, std::string("accepted ") + label);
      w->sm().destroy(Caller::os(w->host_hart()), (int)c.value);
    }
  };
  try_req(vd->epm, lr.req.utm, "epm over victim epm");
  try_req(Region{vd->epm.base + kPageSize, 4 * kPageSize}, lr.req.utm,
          "epm sliced into victim epm");
  try_req(lr.req.epm, vd->utm, "utm over victim utm");
  try_req(lr.req.epm, vd->epm, "utm over victim epm");
  try_req(w->sm_region(), lr.req.utm, "epm over monitor region");
  try_req(lr.req.epm, w->sm_region(), "utm over monitor region");

  w->os_alloc().release(*epm);
  w->os_alloc().release(*utm);
  return rep;
}

Report atk_oob_create(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "oob_create";
  auto w = boot_world(o);
  if (!w) return fail_setup("oob_create", "boot");
  (void)seed;
  uint64_t top = w->machine().mem_size();
  const EnclaveImage* img = w->image("counter");
  auto epm = w->os_alloc().alloc(24 * kPageSize);
  auto utm = w->os_alloc().alloc(8 * kPageSize);
  if (!epm || !utm) return fail_setup("oob_create", "alloc");
  LoadResult lr;
  if (build_enclave(w->machine(), w->host_hart(), *img, *epm, *utm, false,
                    lr) != LoadError::Ok)
    return fail_setup("oob_create", "load");

  auto try_req = [&](Region e, Region u, const char* label) {
    CreateRequest req = lr.req;
    req.epm = e;
    req.utm = u;
    rep.attempts++;
    SbiRet c = w->sm().create(Caller::os(w->host_hart()), req);
    if (c.ok()) {
      rep.successes++;
      note(rep, std::string("accepted ") + label);
      w->sm().destroy(Caller::os(w->host_hart()), (int)c.value);
    }
  };
  try_req(Region{top - 8 * kPageSize, 16 * kPageSize}, lr.req.utm,
          "epm straddling end of memory");
  try_req(Region{top, 16 * kPageSize}, lr.req.utm, "epm beyond memory");
  try_req(Region{lr.req.epm.base + 7, lr.req.epm.size}, lr.req.utm,
          "unaligned epm base");
  try_req(lr.req.epm, Region{lr.req.utm.base, lr.req.utm.size - 9},
          "unaligned utm size");
  try_req(Region{lr.req.epm.base, 0}, lr.req.utm, "zero-size epm");
  w->os_alloc().release(*epm);
  w->os_alloc().release(*utm);
  return rep;
}

Report atk_caller_confusion(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "caller_confusion";
  auto w = boot_world(o);
  if (!w) return fail_setup("caller_confusion", "boot");
  (void)seed;
  int a = make_running(*w);
  if (a < 0) return fail_setup("caller_confusion", "run");
  SecurityMonitor& sm = w->sm();
  Caller os = Caller::os(0);
  Caller rt_a = Caller::rt(a, enclave_hart(*w));
  Caller rt_fake = Caller::rt(a + 100, enclave_hart(*w));

  auto expect_fail = [&](SbiRet r, const char* label) {
    rep.attempts++;
    if (r.ok()) {
      rep.successes++;
      note(rep, std::string("accepted ") + label);
    }
  };
  AttestationReport out;
  const uint8_t d[] = {1};
  expect_fail(sm.stop(os, a), "host-issued stop");
  expect_fail(sm.exit_enclave(os, a), "host-issued exit");
  expect_fail(sm.attest(os, a, d, out), "host-issued attest");
  expect_fail(sm.random(os, a), "host-issued random");
  expect_fail(sm.request_extend(os, a, 4), "host-issued extend request");
  expect_fail(sm.run(rt_a, a, 0), "runtime-issued run");
  expect_fail(sm.destroy(rt_a, a), "runtime-issued destroy");
  expect_fail(sm.extend(rt_a, a, Region{0, kPageSize}), "runtime-issued extend");
  expect_fail(sm.stop(rt_fake, a), "stop with mismatched id");
  expect_fail(sm.attest(rt_fake, a, d, out), "attest with mismatched id");
  return rep;
}

Report atk_destroy_scrub(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "destroy_scrub";
  auto w = boot_world(o);
  if (!w) return fail_setup("destroy_scrub", "boot");
  (void)seed;
  int id = make_running(*w);
  if (id < 0) return fail_setup("destroy_scrub", "run");
  Bytes secret = plant_secret(*w, id, kSecretVa, 16);
  if (secret.empty()) return fail_setup("destroy_scrub", "secret");
  const EnclaveDescriptor* d = w->sm().enclave(id);
  Region epm = d->epm;
  // Sanity: the secret really is in physical memory before destroy.
  {
    Bytes raw(epm.size);
    w->machine().raw_read_block(epm.base, raw);
    if (!contains_seq(raw, secret))
      return fail_setup("destroy_scrub", "secret not resident");
  }
  w->runtime(id)->yield_now();
  if (!w->destroy_enclave(id).ok())
    return fail_setup("destroy_scrub", "destroy");
  rep.attempts++;
  Bytes dump = host_region_dump(*w, epm);
  if (dump.size() != epm.size) {
    rep.successes++;
    note(rep, "freed memory still fenced");  // liveness bug surfaced as red
  } else if (contains_seq(dump, secret)) {
    rep.successes++;
    note(rep, "secret readable after destroy");
  }
  rep.audit_denials = (unsigned)w->audit().count("access_denied");
  return rep;
}

Report atk_utm_header_abuse(const WorldOptions& o, uint64_t seed) {
  Report rep;
  rep.name = "utm_header_abuse";
  auto w = boot_world(o);
  if (!w) return fail_setup("utm_header_abuse", "boot");
  crypto::Rng rng(seed);
  int id = make_running(*w, "counter", 24, 8);
  if (id < 0) return fail_setup("utm_header_abuse", "run");
  EnclaveRuntime* rt = w->runtime(id);
  Bytes secret = plant_secret(*w, id, kSecretVa, 16);
  const EnclaveDescriptor* d = w->sm().enclave(id);

  // Host scribbles garbage headers between calls; enclave calls must stay
  // correct (error out or round-trip intact) and never leak or wedge.
  for (int i = 0; i < 16; i++) {
    Bytes junk(edge::kHeaderSize);
    for (auto& b : junk) b = (uint8_t)rng.next();
    w->host_write(d->utm.base, junk);
    const uint8_t ping[] = {0x7e, (uint8_t)i};
    rep.attempts++;
    ActionResult r = rt->edge_call(0, ping);
    if (rt->fatal()) {
      rep.successes++;
      note(rep, "hostile header wedged the runtime");
      break;
    }
    if (r.ok() && !(r.bytes.size() == 2 && r.bytes[0] == 0x7e &&
                    r.bytes[1] == (uint8_t)i)) {
      rep.successes++;
      note(rep, "echo returned corrupted payload as success");
    }
  }
  ActionResult after = rt->read_v(kSecretVa);
  if (!after.ok() || (uint8_t)after.value != secret[0]) {
    rep.successes++;
    note(rep, "header abuse corrupted enclave state");
  }
  return rep;
}

const std::vector<Attack>& all() {
  static const std::vector<Attack> v = {
      {"host_read_created", "host reads protected memory before first run",
       atk_host_read_created},
      {"host_read_running", "host reads protected memory while running",
       atk_host_read_running},
      {"host_read_stopped", "host reads protected memory while stopped",
       atk_host_read_stopped},
      {"host_write_epm", "host writes protected memory", atk_host_write_epm},
      {"sm_probe", "host reads/writes the monitor region", atk_sm_probe},
      {"utm_snoop", "host scans shared memory for paged-out plaintext",
       atk_utm_snoop},
      {"store_tamper", "host corrupts a sealed backing slot",
       atk_store_tamper},
      {"store_replay", "host rolls a backing slot back to an old version",
       atk_store_replay},
      {"foreign_map", "create with a page table leaf into foreign memory",
       atk_foreign_map},
      {"dup_physical", "create with an aliased physical page",
       atk_dup_physical},
      {"report_forgery", "bit-flip and graft attacks on attestation reports",
       atk_report_forgery},
      {"drop_edge_reply", "host drops an edge-call reply (DoS allowed)",
       atk_drop_edge_reply},
      {"state_storm", "forbidden lifecycle transitions, scrub-on-destroy",
       atk_state_storm},
      {"overlap_create", "create with regions overlapping live memory",
       atk_overlap_create},
      {"oob_create", "create with out-of-bounds or unaligned regions",
       atk_oob_create},
      {"caller_confusion", "SBI calls from the wrong caller class",
       atk_caller_confusion},
      {"destroy_scrub", "scan freed enclave memory for secrets",
       atk_destroy_scrub},
      {"utm_header_abuse", "host scribbles over the edge-call mailbox",
       atk_utm_header_abuse},
  };
  return v;
}

}  // namespace

const std::vector<Attack>& corpus() { return all(); }

Report run_one(const std::string& name, const WorldOptions& opts,
               uint64_t seed) {
  for (const auto& a : corpus()) {
    if (a.name == name) return a.fn(opts, seed);
  }
  Report r;
  r.name = name;
  r.attempts = 1;
  r.notes.push_back("unknown attack name");
  return r;
}

}  // namespace ksim::attacks
