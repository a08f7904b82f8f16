// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ksim/cli.hpp"
#include "ksim/host.hpp"

using namespace ksim;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

// Argv round trip through the real entry point, with the streams captured so
// assertions can look at what a user would have seen.
CliRun run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ksim");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  std::streambuf* so = std::cout.rdbuf(out.rdbuf());
  std::streambuf* se = std::cerr.rdbuf(err.rdbuf());
  int code = cli::run_main((int)argv.size(), argv.data());
  std::cout.rdbuf(so);
  std::cerr.rdbuf(se);
  return {code, out.str(), err.str()};
}

fs::path tmp_file(const std::string& name) {
  return fs::temp_directory_path() / name;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

void write_file(const fs::path& p, const Bytes& data) {
  std::ofstream f(p, std::ios::binary);
  f.write((const char*)data.data(), (std::streamsize)data.size());
}

Bytes read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return Bytes((std::istreambuf_iterator<char>(f)),
               std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("mkimage writes a parseable container") {
  fs::path img_path = tmp_file("ksim_cli_counter.img");
  CliRun r = run_cli({"mkimage", img_path.string(), "--builtin", "counter"});
  CHECK(r.code == 0);
  Bytes data = read_file(img_path);
  auto img = EnclaveImage::parse(data);
  REQUIRE(img.has_value());
  CHECK(img->serialize() == make_builtin_image("counter")->serialize());

  CHECK(run_cli({"mkimage", (fs::temp_directory_path() / "x.img").string(),
                 "--builtin", "no_such_program"})
            .code == 2);
  fs::remove(img_path);
}

TEST_CASE("measure agrees across the oracle and the monitor") {
  CliRun r = run_cli({"measure", "--builtin", "counter", "--cross-check"});
  CHECK(r.code == 0);
  CHECK(r.out.find("cross-check: MATCH") != std::string::npos);

  // File route produces the same digest as the builtin route.
  fs::path img_path = tmp_file("ksim_cli_measure.img");
  write_file(img_path, make_builtin_image("counter")->serialize());
  CliRun file_r = run_cli({"measure", img_path.string()});
  CHECK(file_r.code == 0);
  CliRun builtin_r = run_cli({"measure", "--builtin", "counter"});
  CHECK(file_r.out == builtin_r.out);
  fs::remove(img_path);

  CHECK(run_cli({"measure"}).code == 2);
  CHECK(run_cli({"measure", "/nonexistent.img"}).code == 2);
}

TEST_CASE("verify judges real and doctored reports") {
  WorldOptions o;
  o.mem_size = 1 << 23;
  o.harts = 2;
  o.seed = 11;
  World w(o);
  REQUIRE(w.boot());
  SbiRet c = w.create_enclave("counter", 32, 8);
  REQUIRE(c.ok());
  int id = (int)c.value;
  REQUIRE(w.run_enclave(id, 1).ok());
  ActionResult a = w.runtime(id)->attest_self(Bytes{0x61, 0x62});
  REQUIRE(a.status == ActionStatus::Ok);

  fs::path rep_path = tmp_file("ksim_cli_report.bin");
  write_file(rep_path, a.bytes);
  std::string dev = to_hex(w.sm().device_public());
  std::string meas = to_hex(w.sm().enclave(id)->measurement);

  CliRun good = run_cli({"verify", rep_path.string(), "--device-key", dev});
  CHECK(good.code == 0);
  CHECK(good.out.find("Valid") != std::string::npos);
  CHECK(good.out.find("data: 6162") != std::string::npos);

  CHECK(run_cli({"verify", rep_path.string(), "--device-key", dev, "--expect",
                 meas})
            .code == 0);

  // Expecting some other enclave fails the check.
  std::string other = meas;
  other[0] = other[0] == 'f' ? 'e' : 'f';
  CliRun wrong = run_cli(
      {"verify", rep_path.string(), "--device-key", dev, "--expect", other});
  CHECK(wrong.code == 1);
  CHECK(wrong.out.find("WrongEnclaveMeasurement") != std::string::npos);

  // A single flipped byte in the monitor signature is caught.
  Bytes doctored = a.bytes;
  doctored.back() ^= 0x01;
  fs::path bad_path = tmp_file("ksim_cli_report_bad.bin");
  write_file(bad_path, doctored);
  CliRun bad = run_cli({"verify", bad_path.string(), "--device-key", dev});
  CHECK(bad.code == 1);

  // Truncation is malformed, not a crash.
  Bytes stub(a.bytes.begin(), a.bytes.begin() + 10);
  write_file(bad_path, stub);
  CliRun trunc = run_cli({"verify", bad_path.string(), "--device-key", dev});
  CHECK(trunc.code == 1);
  CHECK(trunc.out.find("malformed") != std::string::npos);

  CHECK(run_cli({"verify", rep_path.string(), "--device-key", "zz"}).code ==
        2);
  fs::remove(rep_path);
  fs::remove(bad_path);
}

TEST_CASE("attack subcommand runs campaigns") {
  CliRun one = run_cli({"attack", "--name", "host_read_created"});
  CHECK(one.code == 0);
  CHECK(one.out.find("held") != std::string::npos);
  CHECK(run_cli({"attack", "--name", "no_such_attack"}).code == 2);
  CHECK(run_cli({"attack"}).code == 2);
}

TEST_CASE("run executes a scenario file and can save the audit") {
  fs::path scn_path = tmp_file("ksim_cli_scn.scn");
  fs::path audit_path = tmp_file("ksim_cli_audit.log");
  write_file(scn_path, std::string(R"(
boot seed=2 mem=8m
create counter epm=32p utm=8p
expect ok id=0
run 0
eapp 0 readv 0x400000
expect ok
eapp 0 yield
destroy 0
)"));
  CliRun r = run_cli({"run", scn_path.string(), "--audit",
                      audit_path.string(), "--quiet"});
  CHECK(r.code == 0);
  CHECK(r.out.find("checks: 2 passed, 0 failed") != std::string::npos);
  std::string audit((const char*)read_file(audit_path).data(),
                    read_file(audit_path).size());
  CHECK(audit.find("event=sm_boot") != std::string::npos);
  CHECK(audit.find("event=enclave_destroy") != std::string::npos);

  CHECK(run_cli({"run", "/nonexistent.scn"}).code == 2);

  // A failing check surfaces as exit 1.
  write_file(scn_path, std::string("boot\ncreate counter epm=32p utm=8p\n"
                                   "expect error\n"));
  CHECK(run_cli({"run", scn_path.string(), "--quiet"}).code == 1);
  fs::remove(scn_path);
  fs::remove(audit_path);
}
