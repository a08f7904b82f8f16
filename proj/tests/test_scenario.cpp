// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include <doctest.h>

#include <string>

#include "ksim/scenario.hpp"

using namespace ksim;

namespace {
const scn::Overrides kNone{};
}

TEST_CASE("a passing script exits zero") {
  std::string script = R"(
# lifecycle smoke
boot seed=4 mem=8m
create counter epm=32p utm=8p
expect ok id=0
run 0
expect ok
eapp 0 writev 0x400800 170
expect ok
eapp 0 readv 0x400800
expect ok value=170
state 0
expect state=running
eapp 0 yield
destroy 0
expect ok
expect-audit event=enclave_destroy
)";
  scn::Result r = scn::run_text(script, kNone);
  CHECK(r.error == "");
  CHECK(r.exit_code == 0);
  CHECK(r.passed == 7);
  CHECK(r.failed == 0);
  CHECK(!r.audit_text.empty());
}

TEST_CASE("a failed expectation exits one") {
  std::string script = R"(
boot seed=4 mem=8m
create counter epm=32p utm=8p
expect error
)";
  scn::Result r = scn::run_text(script, kNone);
  CHECK(r.exit_code == 1);
  CHECK(r.failed == 1);
}

TEST_CASE("parse and structural errors exit two") {
  SUBCASE("unknown command") {
    scn::Result r = scn::run_text("boot\nfrobnicate 1\n", kNone);
    CHECK(r.exit_code == 2);
    CHECK(!r.error.empty());
  }
  SUBCASE("first command must boot the world") {
    scn::Result r = scn::run_text("create counter epm=32p utm=8p\n", kNone);
    CHECK(r.exit_code == 2);
  }
  SUBCASE("bad argument") {
    scn::Result r = scn::run_text("boot\ncreate counter epm=zz utm=8p\n",
                                  kNone);
    CHECK(r.exit_code == 2);
  }
  SUBCASE("missing file") {
    scn::Result r = scn::run_file("/nonexistent/path.scn", kNone);
    CHECK(r.exit_code == 2);
  }
}

TEST_CASE("denials and faults are describable outcomes, not crashes") {
  std::string script = R"(
boot seed=9 mem=8m
create counter epm=32p utm=8p
eapp 0 readv 0x400000
expect denied
run 0
eapp 0 writev 0x123450000 1
expect fault reason=segfault
eapp 0 readv 0x400000
expect denied
)";
  scn::Result r = scn::run_text(script, kNone);
  CHECK(r.exit_code == 0);
  CHECK(r.passed == 3);
}

TEST_CASE("same seed same transcript") {
  std::string script = R"(
boot seed=31 mem=8m
create counter epm=32p utm=8p
run 0
eapp 0 getrandom
eapp 0 brk 8192
eapp 0 writev 0x403000 7
eapp 0 readv 0x403000
expect ok value=7
)";
  scn::Result a = scn::run_text(script, kNone);
  scn::Result b = scn::run_text(script, kNone);
  REQUIRE(a.exit_code == 0);
  CHECK(a.log == b.log);
  CHECK(a.audit_text == b.audit_text);

  // A different seed produces a different transcript (getrandom differs).
  scn::Overrides ov;
  ov.seed = 32;
  scn::Result c = scn::run_text(script, ov);
  CHECK(c.exit_code == 0);
  CHECK(a.log != c.log);
}

TEST_CASE("overrides replace boot-line settings") {
  // The script asks for a huge watchdog; the override cuts it to 50, so the
  // loop is forced off the hart at 50.
  std::string script = R"(
boot seed=1 mem=8m watchdog=100000
create counter epm=32p utm=8p
run 0
eapp 0 yield
resume 0
eapp 0 loopforever
expect forced_yield value=50
)";
  scn::Overrides ov;
  ov.watchdog = 50;
  scn::Result r = scn::run_text(script, ov);
  CHECK(r.exit_code == 0);
  CHECK(r.passed == 1);
}

TEST_CASE("attack command reports a held campaign") {
  std::string script = R"(
boot seed=5 mem=8m
attack run host_read_created
expect held successes=0
)";
  scn::Result r = scn::run_text(script, kNone);
  CHECK(r.exit_code == 0);
  CHECK(r.passed == 1);
}

TEST_CASE("host file staging plus proxied read") {
  std::string script = R"(
boot seed=6 mem=8m
host put greeting.txt 68656c6c6f
create counter epm=32p utm=8p
run 0
eapp 0 sysopen greeting.txt
expect ok value=0
eapp 0 sysread 0 5
expect ok bytes=68656c6c6f
eapp 0 sysclose 0
expect ok
)";
  scn::Result r = scn::run_text(script, kNone);
  CHECK(r.error == "");
  CHECK(r.exit_code == 0);
  CHECK(r.passed == 3);
}
