// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include "ksim/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>

#include "ksim/attack.hpp"
#include "ksim/host.hpp"
#include "ksim/scenario.hpp"

namespace ksim::cli {

crypto::Hash oracle_measure(const EnclaveImage& img) {
  // Layout ABI, restated here on purpose rather than pulled from the
  // runtime headers: measured pages are the image segments plus one
  // read-only boot record page; the shared window and page tables are not
  // part of the identity.
  constexpr uint64_t kBootRecVa = 0x3fffffe000ULL;
  constexpr uint64_t kUtmWindowVa = 0x3000000000ULL;
  constexpr uint64_t kMmapBase = 0x1000000000ULL;
  constexpr uint32_t kMagic = 0x5242534bu;
  constexpr uint64_t kPage = 4096;

  struct Page {
    uint64_t va;
    uint8_t perm;
    std::span<const uint8_t> data;
  };
  std::vector<Page> pages;
  for (const auto& s : img.segments) {
    for (uint64_t i = 0; i * kPage < s.bytes.size(); i++) {
      pages.push_back({s.vaddr + i * kPage, s.flags,
                       std::span<const uint8_t>(s.bytes).subspan(i * kPage,
                                                                 kPage)});
    }
  }

  uint64_t heap = 0;
  for (const auto& s : img.segments)
    if (s.flags & kSegU) heap = std::max(heap, s.vaddr + s.bytes.size());
  heap = heap ? heap + kPage : 0x10000000ULL;

  Bytes brec(kPage, 0);
  store_le32(brec.data(), kMagic);
  store_le32(brec.data() + 4, 1);
  store_le64(brec.data() + 8, img.eapp_entry);
  store_le64(brec.data() + 16, heap);
  store_le64(brec.data() + 24, kUtmWindowVa);
  store_le64(brec.data() + 32, kMmapBase);
  store_le64(brec.data() + 40, 0);
  pages.push_back({kBootRecVa, 1 /*read only*/, brec});

  std::sort(pages.begin(), pages.end(),
            [](const Page& a, const Page& b) { return a.va < b.va; });

  crypto::Hasher h;
  h.update(img.config);
  h.update_u64le(img.rt_entry);
  for (const auto& p : pages) {
    h.update_u64le(p.va);
    h.update_byte(p.perm);
    h.update(p.data);
  }
  return h.finish();
}

namespace {

std::optional<Bytes> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  return Bytes((std::istreambuf_iterator<char>(in)),
               std::istreambuf_iterator<char>());
}

std::optional<EnclaveImage> load_image(const std::string& file,
                                       const std::string& builtin,
                                       std::string& err) {
  if (!builtin.empty()) {
    auto img = make_builtin_image(builtin);
    if (!img) err = "unknown builtin image: " + builtin;
    return img;
  }
  auto data = slurp(file);
  if (!data) {
    err = "cannot read " + file;
    return std::nullopt;
  }
  std::string why;
  auto img = EnclaveImage::parse(*data, &why);
  if (!img) err = "malformed image: " + why;
  return img;
}

int cmd_run(const std::string& scenario, const scn::Overrides& ov,
            const std::string& audit_path, bool quiet) {
  scn::Result res = scn::run_file(scenario, ov);
  if (!quiet)
    for (const auto& l : res.log) std::cout << l << "\n";
  if (res.exit_code == 2) {
    std::cerr << "error: " << res.error << "\n";
    return 2;
  }
  if (!audit_path.empty()) {
    std::ofstream out(audit_path);
    out << res.audit_text;
  }
  std::cout << "checks: " << res.passed << " passed, " << res.failed
            << " failed\n";
  return res.exit_code;
}

int cmd_measure(const std::string& file, const std::string& builtin,
                bool cross_check, uint64_t epm_pages, uint64_t utm_pages) {
  std::string err;
  auto img = load_image(file, builtin, err);
  if (!img) {
    std::cerr << "error: " << err << "\n";
    return 2;
  }
  crypto::Hash oracle = oracle_measure(*img);
  std::cout << to_hex(oracle) << "\n";
  if (!cross_check) return 0;

  // Second, independent route: load into a live machine at two different
  // physical placements and ask the monitor.
  WorldOptions o;
  World w(o);
  if (!w.boot()) {
    std::cerr << "error: world boot failed\n";
    return 2;
  }
  w.define_image("x", *img);
  crypto::Hash got[2];
  for (int i = 0; i < 2; i++) {
    // Skew the second placement by holding back a page.
    auto skew = i ? w.os_alloc().alloc(kPageSize * 3) : std::nullopt;
    SbiRet c = w.create_enclave("x", epm_pages, utm_pages);
    if (!c.ok()) {
      std::cerr << "error: create failed: " << sbi_error_name(c.err) << "\n";
      return 2;
    }
    got[i] = w.sm().enclave((int)c.value)->measurement;
    w.destroy_enclave((int)c.value);
    if (skew) w.os_alloc().release(*skew);
  }
  bool ok = got[0] == oracle && got[1] == oracle;
  std::cout << "monitor[a]: " << to_hex(got[0]) << "\n";
  std::cout << "monitor[b]: " << to_hex(got[1]) << "\n";
  std::cout << (ok ? "cross-check: MATCH\n" : "cross-check: MISMATCH\n");
  return ok ? 0 : 1;
}

int cmd_mkimage(const std::string& out, const std::string& builtin) {
  auto img = make_builtin_image(builtin);
  if (!img) {
    std::cerr << "error: unknown builtin image: " << builtin << "\n";
    return 2;
  }
  Bytes data = img->serialize();
  std::ofstream f(out, std::ios::binary);
  if (!f) {
    std::cerr << "error: cannot write " << out << "\n";
    return 2;
  }
  f.write((const char*)data.data(), (std::streamsize)data.size());
  std::cout << "wrote " << out << " (" << data.size() << " bytes)\n";
  return 0;
}

int cmd_verify(const std::string& report_path, const std::string& device_hex,
               const std::string& expect_hex) {
  auto wire = slurp(report_path);
  if (!wire) {
    std::cerr << "error: cannot read " << report_path << "\n";
    return 2;
  }
  auto dev = from_hex(device_hex);
  if (!dev || dev->size() != crypto::kKeySize) {
    std::cerr << "error: --device-key must be 32 hex bytes\n";
    return 2;
  }
  crypto::PublicKey pub{};
  std::copy(dev->begin(), dev->end(), pub.begin());
  crypto::Hash expect{};
  bool have_expect = false;
  if (!expect_hex.empty()) {
    auto e = from_hex(expect_hex);
    if (!e || e->size() != crypto::kHashSize) {
      std::cerr << "error: --expect must be 32 hex bytes\n";
      return 2;
    }
    std::copy(e->begin(), e->end(), expect.begin());
    have_expect = true;
  }
  auto report = AttestationReport::parse(*wire);
  if (!report) {
    std::cout << "malformed\n";
    return 1;
  }
  VerifyResult v =
      verify_report(*report, pub, have_expect ? &expect : nullptr);
  std::cout << verify_result_name(v) << "\n";
  std::cout << "enclave: " << to_hex(report->enclave_measurement) << "\n";
  std::cout << "monitor: " << to_hex(report->sm_measurement) << "\n";
  std::cout << "data: " << to_hex(report->data) << "\n";
  return v == VerifyResult::Valid ? 0 : 1;
}

int cmd_attack(const std::string& name, bool all_of_them, uint64_t seed,
               unsigned trials) {
  WorldOptions o;
  unsigned breached = 0, ran = 0;
  auto run_one_line = [&](const attacks::Attack& a) {
    unsigned succ = 0, att = 0, det = 0;
    std::vector<std::string> notes;
    for (unsigned t = 0; t < trials; t++) {
      attacks::Report r = a.fn(o, seed + t);
      succ += r.successes;
      att += r.attempts;
      det += r.detected;
      for (auto& n : r.notes) notes.push_back(n);
    }
    ran++;
    if (succ) breached++;
    std::cout << std::left << std::setw(20) << a.name << ' ' << std::setw(8)
              << (succ ? "BREACH" : "held") << " attempts=" << att
              << " successes=" << succ << " detected=" << det << "\n";
    for (const auto& n : notes) std::cout << "    note: " << n << "\n";
  };
  for (const auto& a : attacks::corpus()) {
    if (all_of_them || a.name == name) run_one_line(a);
  }
  if (!ran) {
    std::cerr << "error: no attack matched '" << name << "'\n";
    return 2;
  }
  return breached ? 1 : 0;
}

}  // namespace

int run_main(int argc, char** argv) {
  CLI::App app{"ksim: a desk-scale enclave framework simulator"};
  app.require_subcommand(1);

  // run
  std::string scenario, audit_path;
  bool quiet = false;
  scn::Overrides ov;
  uint64_t ov_seed = 0, ov_limit = 0, ov_spad = 0, ov_watchdog = 0;
  unsigned ov_ways = 0;
  bool ov_encrypt = false, ov_resize = false;
  auto* run = app.add_subcommand("run", "execute a scenario script");
  run->add_option("scenario", scenario, "scenario file")->required();
  auto* o_seed = run->add_option("--seed", ov_seed, "override boot seed");
  auto* o_limit =
      run->add_option("--paging-limit", ov_limit, "override resident limit");
  auto* o_spad = run->add_option("--scratchpad", ov_spad,
                                 "override scratchpad size (pages)");
  auto* o_ways = run->add_option("--cache-partition", ov_ways,
                                 "enable cache partitioning with N ways");
  auto* o_wd = run->add_option("--watchdog", ov_watchdog,
                               "override watchdog budget");
  auto* o_enc = run->add_flag("--encrypt", ov_encrypt, "seal paged-out data");
  auto* o_rsz =
      run->add_flag("--dyn-resize", ov_resize, "allow dynamic growth");
  run->add_option("--audit", audit_path, "write the audit log to a file");
  run->add_flag("--quiet", quiet, "suppress command echo");

  // measure
  std::string m_file, m_builtin;
  bool m_cross = false;
  uint64_t m_epm = 32, m_utm = 8;
  auto* measure =
      app.add_subcommand("measure", "expected measurement of an image");
  measure->add_option("image", m_file, "KSIM1 image file");
  measure->add_option("--builtin", m_builtin, "use a builtin image instead");
  measure->add_flag("--cross-check", m_cross,
                    "also load into a machine twice and compare");
  measure->add_option("--epm-pages", m_epm, "protected pages for cross-check");
  measure->add_option("--utm-pages", m_utm, "shared pages for cross-check");

  // mkimage
  std::string mi_out, mi_builtin = "counter";
  auto* mkimage = app.add_subcommand("mkimage", "write a builtin image file");
  mkimage->add_option("out", mi_out, "output file")->required();
  mkimage->add_option("--builtin", mi_builtin, "builtin name");

  // verify
  std::string v_report, v_device, v_expect;
  auto* verify =
      app.add_subcommand("verify", "verify a serialized attestation report");
  verify->add_option("report", v_report, "report file")->required();
  verify->add_option("--device-key", v_device, "device public key (hex)")
      ->required();
  verify->add_option("--expect", v_expect, "expected enclave measurement");

  // attack
  std::string a_name;
  bool a_all = false;
  uint64_t a_seed = 1;
  unsigned a_trials = 1;
  auto* attack = app.add_subcommand("attack", "run adversarial campaigns");
  attack->add_option("--name", a_name, "attack name");
  attack->add_flag("--all", a_all, "run the whole corpus");
  attack->add_option("--seed", a_seed, "campaign seed");
  attack->add_option("--trials", a_trials, "repetitions per attack");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 2 : 0;
  }

  if (run->parsed()) {
    if (o_seed->count()) ov.seed = ov_seed;
    if (o_limit->count()) ov.paging_limit = ov_limit;
    if (o_spad->count()) ov.scratchpad_pages = ov_spad;
    if (o_ways->count()) ov.cache_partition_ways = ov_ways;
    if (o_wd->count()) ov.watchdog = ov_watchdog;
    if (o_enc->count()) ov.encrypt = ov_encrypt;
    if (o_rsz->count()) ov.dyn_resize = ov_resize;
    return cmd_run(scenario, ov, audit_path, quiet);
  }
  if (measure->parsed()) {
    if (m_file.empty() && m_builtin.empty()) {
      std::cerr << "error: measure needs an image file or --builtin\n";
      return 2;
    }
    return cmd_measure(m_file, m_builtin, m_cross, m_epm, m_utm);
  }
  if (mkimage->parsed()) return cmd_mkimage(mi_out, mi_builtin);
  if (verify->parsed()) return cmd_verify(v_report, v_device, v_expect);
  if (attack->parsed()) {
    if (a_name.empty() && !a_all) {
      std::cerr << "error: attack needs --name or --all\n";
      return 2;
    }
    return cmd_attack(a_name, a_all, a_seed, a_trials);
  }
  return 2;
}

}  // namespace ksim::cli
