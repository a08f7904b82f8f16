// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include <doctest.h>

#include <string>

#include "ksim/edge.hpp"
#include "ksim/host.hpp"

using namespace ksim;

namespace {

Bytes str_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

struct Rig {
  World w;
  int id = -1;
  EnclaveRuntime* rt = nullptr;

  explicit Rig(WorldOptions o = WorldOptions{.mem_size = 1 << 23, .seed = 5})
      : w([&] {
          o.watchdog = 1u << 20;
          return o;
        }()) {
    REQUIRE(w.boot());
    SbiRet c = w.create_enclave("counter", 32, 8);
    REQUIRE(c.ok());
    id = (int)c.value;
    REQUIRE(w.run_enclave(id, 1).ok());
    rt = w.runtime(id);
    REQUIRE(rt->booted());
  }
};

}  // namespace

TEST_CASE("edge header round trips through shared memory") {
  Machine m(1 << 20, 1);
  m.local_pmp_set(0, 0, PmpEntry{PmpMode::Napot, kPermsRw,
                                 (0x4000 >> 2) | ((0x1000 >> 3) - 1)});
  edge::Header h;
  h.fid = 7;
  h.status = (uint32_t)edge::Status::Pending;
  h.args_off = 32;
  h.args_len = 100;
  h.ret_off = 32;
  h.ret_len = 0;
  h.err = 0;
  REQUIRE(edge::write_header(m, 0, PrivMode::S, 0x4000, h));
  edge::Header back;
  REQUIRE(edge::read_header(m, 0, PrivMode::S, 0x4000, back));
  CHECK(back.fid == 7);
  CHECK(back.status == 1);
  CHECK(back.args_len == 100);

  // Accesses outside the PMP window fail instead of faking success.
  CHECK(!edge::write_header(m, 0, PrivMode::S, 0x8000, h));
  CHECK(!edge::read_header(m, 0, PrivMode::S, 0x8000, back));
}

TEST_CASE("host function table is dense plus proxy") {
  edge::HostFunctionTable t;
  CHECK(t.register_fn(0, [](std::span<const uint8_t>) {
    return std::make_pair(edge::kErrOk, Bytes{1});
  }));
  // Sparse registration is a host bug and is refused.
  CHECK(!t.register_fn(5, [](std::span<const uint8_t>) {
    return std::make_pair(edge::kErrOk, Bytes{});
  }));
  CHECK(t.register_fn(1, [](std::span<const uint8_t>) {
    return std::make_pair(edge::kErrOk, Bytes{2});
  }));
  CHECK(t.size() == 2);
  CHECK(t.has(0));
  CHECK(t.has(1));
  CHECK(!t.has(2));

  CHECK(t.dispatch(0, {}).second == Bytes{1});
  CHECK(t.dispatch(9, {}).first == edge::kErrUnknownFid);

  CHECK(!t.has(edge::kProxySyscallFid));
  CHECK(t.set_proxy([](std::span<const uint8_t>) {
    return std::make_pair(edge::kErrOk, Bytes{9});
  }));
  CHECK(t.has(edge::kProxySyscallFid));
  CHECK(t.dispatch(edge::kProxySyscallFid, {}).second == Bytes{9});
}

TEST_CASE("toy filesystem") {
  ToyFs fs;
  CHECK(fs.open("missing", false) < 0);
  int fd = fs.open("a.txt", true);
  REQUIRE(fd >= 0);
  CHECK(fs.write(fd, str_bytes("hello ")) == 6);
  CHECK(fs.write(fd, str_bytes("world")) == 5);
  CHECK(fs.close(fd) == 0);
  CHECK(fs.close(fd) != 0);  // double close

  int fd2 = fs.open("a.txt", false);
  REQUIRE(fd2 >= 0);
  CHECK(fs.read(fd2, 5) == str_bytes("hello"));
  CHECK(fs.read(fd2, 100) == str_bytes(" world"));
  CHECK(fs.read(fd2, 10).empty());  // at end
  CHECK(fs.write(-1, str_bytes("x")) < 0);
  CHECK(fs.read(99, 4).empty());

  fs.put("b.bin", Bytes{1, 2, 3});
  REQUIRE(fs.file("b.bin") != nullptr);
  CHECK(fs.file("b.bin")->size() == 3);
  CHECK(fs.exists("a.txt"));
  CHECK(!fs.exists("c"));
}

TEST_CASE("os page allocator") {
  OsAllocator a;
  a.init(Region{0x10000, 0x10000});
  CHECK(a.total_free() == 0x10000);

  auto r1 = a.alloc(0x4000);
  REQUIRE(r1.has_value());
  CHECK(r1->base == 0x10000);
  auto r2 = a.alloc(0x4000);
  REQUIRE(r2.has_value());
  CHECK(r2->base == 0x14000);
  CHECK(!a.alloc(0x10000).has_value());  // too big now

  // Release the first block: first fit reuses it.
  a.release(*r1);
  CHECK(a.is_free(*r1));
  CHECK(!a.is_free(*r2));
  auto r3 = a.alloc(0x2000);
  REQUIRE(r3.has_value());
  CHECK(r3->base == 0x10000);

  // Exact placement.
  CHECK(a.alloc_at(Region{0x12000, 0x2000}));
  CHECK(!a.alloc_at(Region{0x14000, 0x1000}));  // taken by r2

  // Coalescing: free everything, one big block again.
  a.release(*r3);
  a.release(Region{0x12000, 0x2000});
  a.release(*r2);
  CHECK(a.total_free() == 0x10000);
  auto big = a.alloc(0x10000);
  CHECK(big.has_value());
}

TEST_CASE("loader output is deterministic") {
  WorldOptions o;
  o.mem_size = 1 << 23;
  World w(o);
  REQUIRE(w.boot());
  const EnclaveImage* img = w.image("counter");

  Region epm1 = *w.os_alloc().alloc(32 * kPageSize);
  Region utm1 = *w.os_alloc().alloc(8 * kPageSize);
  Region epm2 = *w.os_alloc().alloc(32 * kPageSize);
  Region utm2 = *w.os_alloc().alloc(8 * kPageSize);

  LoadResult a, b;
  REQUIRE(build_enclave(w.machine(), 0, *img, epm1, utm1, false, a) ==
          LoadError::Ok);
  REQUIRE(build_enclave(w.machine(), 0, *img, epm2, utm2, false, b) ==
          LoadError::Ok);

  // Same bytes at both placements, modulo the placement itself.
  Bytes m1(32 * kPageSize), m2(32 * kPageSize);
  w.machine().raw_read_block(epm1.base, m1);
  w.machine().raw_read_block(epm2.base, m2);
  // Page tables embed physical addresses, so compare only payload pages.
  uint64_t payload = img->payload_pages() + 1;  // plus the boot record
  CHECK(Bytes(m1.begin(), m1.begin() + (long)(payload * kPageSize)) ==
        Bytes(m2.begin(), m2.begin() + (long)(payload * kPageSize)));
  CHECK(a.pt_pages == b.pt_pages);
  CHECK(a.brec.eapp_entry == b.brec.eapp_entry);
  CHECK(a.brec.heap_base == b.brec.heap_base);

  // Too small to fit: clean refusal.
  Region tiny = *w.os_alloc().alloc(2 * kPageSize);
  LoadResult c;
  CHECK(build_enclave(w.machine(), 0, *img, tiny, utm1, false, c) ==
        LoadError::TooSmall);
}

TEST_CASE("image heap base sits one guard page above the user segments") {
  auto img = make_builtin_image("counter");
  REQUIRE(img.has_value());
  // eapp segment: two pages at 0x400000; heap starts one page past its end.
  CHECK(image_heap_base(*img) == 0x400000 + 2 * kPageSize + kPageSize);
  CHECK(!make_builtin_image("nonsense").has_value());
}

TEST_CASE("echo edge call round trips payload") {
  Rig r;
  Bytes payload = str_bytes("ping over the shared window");
  auto res = r.rt->edge_call(0, payload);
  REQUIRE(res.ok());
  CHECK(res.bytes == payload);
  CHECK(r.rt->edge_calls() == 1);
  CHECK(r.w.audit().count("edge_call") == 1);
  CHECK(r.w.audit().count("host_edge_serve") == 1);
  // The enclave is running again after the reply.
  CHECK(r.w.sm().enclave(r.id)->state == EnclaveState::Running);
}

TEST_CASE("edge call scrubs the shared window afterwards") {
  Rig r;
  Bytes payload = str_bytes("SECRET-ARGUMENT-BYTES");
  REQUIRE(r.rt->edge_call(0, payload).ok());

  Region utm = r.w.sm().enclave(r.id)->utm;
  Bytes window(edge::kHeaderSize + 256);
  REQUIRE(!r.w.host_read(utm.base, window).has_value());
  for (uint8_t b : window) CHECK(b == 0);
}

TEST_CASE("unknown fid and oversized payloads") {
  Rig r;
  auto res = r.rt->edge_call(42, str_bytes("x"));
  CHECK(res.status == ActionStatus::HostError);
  CHECK(res.value == edge::kErrUnknownFid);

  Bytes big(EnclaveRuntime::kPayloadCap + 1, 0);
  CHECK(r.rt->edge_call(0, big).status == ActionStatus::TooLarge);
}

TEST_CASE("host input and output functions") {
  Rig r;
  r.w.set_host_input(str_bytes("stdin text"));
  auto in = r.rt->edge_call(1, {});
  REQUIRE(in.ok());
  CHECK(in.bytes == str_bytes("stdin text"));

  auto out = r.rt->edge_call(2, str_bytes("result: 42"));
  REQUIRE(out.ok());
  CHECK(r.w.host_output() == str_bytes("result: 42"));
}

TEST_CASE("dropped replies surface as host errors, not hangs") {
  Rig r;
  r.w.arm_drop_edge_reply();
  auto res = r.rt->edge_call(0, str_bytes("please"));
  CHECK(res.status == ActionStatus::HostError);
  CHECK(res.value == edge::kErrDropped);
  CHECK(r.w.audit().count("host_edge_drop") == 1);
  // The enclave survives and the next call works.
  auto again = r.rt->edge_call(0, str_bytes("again"));
  REQUIRE(again.ok());
  CHECK(again.bytes == str_bytes("again"));
}

TEST_CASE("proxied file system syscalls") {
  Rig r;
  r.w.fs().put("input.txt", str_bytes("hello world"));

  // open(create=0, "input.txt")
  Bytes args;
  put_le32(args, 0);
  Bytes path = str_bytes("input.txt");
  args.insert(args.end(), path.begin(), path.end());
  auto open_res = r.rt->syscall(edge::kSysOpen, args);
  REQUIRE(open_res.ok());
  CHECK(open_res.value == 0);  // status u32
  REQUIRE(open_res.bytes.size() == 4);
  uint32_t fd = get_le32(open_res.bytes.data());

  // read(fd, 5)
  Bytes rd;
  put_le32(rd, fd);
  put_le32(rd, 5);
  auto read_res = r.rt->syscall(edge::kSysRead, rd);
  REQUIRE(read_res.ok());
  CHECK(read_res.value == 0);
  CHECK(read_res.bytes == str_bytes("hello"));

  // write to a new file: open(create=1, "out.txt")
  Bytes out;
  put_le32(out, 1);
  Bytes p2 = str_bytes("out.txt");
  out.insert(out.end(), p2.begin(), p2.end());
  auto o2 = r.rt->syscall(edge::kSysOpen, out);
  REQUIRE(o2.ok());
  uint32_t fd2 = get_le32(o2.bytes.data());
  Bytes wr;
  put_le32(wr, fd2);
  Bytes content = str_bytes("saved by the enclave");
  wr.insert(wr.end(), content.begin(), content.end());
  auto wres = r.rt->syscall(edge::kSysWrite, wr);
  REQUIRE(wres.ok());
  CHECK(wres.value == 0);

  // close both
  Bytes cl;
  put_le32(cl, fd);
  CHECK(r.rt->syscall(edge::kSysClose, cl).ok());
  cl.clear();
  put_le32(cl, fd2);
  CHECK(r.rt->syscall(edge::kSysClose, cl).ok());

  REQUIRE(r.w.fs().file("out.txt") != nullptr);
  CHECK(*r.w.fs().file("out.txt") == content);

  // Unknown syscall numbers come back as malformed.
  Bytes bogus;
  put_le32(bogus, 999);
  auto bad = r.rt->syscall(999, bogus);
  CHECK(bad.status == ActionStatus::HostError);
}

TEST_CASE("busy mailbox is reported") {
  Rig r;
  // Forge a Pending header in the shared window from the host side.
  Region utm = r.w.sm().enclave(r.id)->utm;
  edge::Header h;
  h.status = (uint32_t)edge::Status::Pending;
  REQUIRE(edge::write_header(r.w.machine(), 0, PrivMode::S, utm.base, h));
  auto res = r.rt->edge_call(0, {});
  CHECK(res.status == ActionStatus::Busy);
}

TEST_CASE("full remote word count flow") {
  WorldOptions o;
  o.mem_size = 1 << 23;
  o.watchdog = 1u << 20;
  World w(o);
  REQUIRE(w.boot());
  SbiRet c = w.create_enclave("wordcount", 32, 8);
  REQUIRE(c.ok());
  int id = (int)c.value;
  REQUIRE(w.run_enclave(id, 1).ok());

  auto cr = w.client_wordcount(id, "hello world");
  CHECK(cr.verdict == VerifyResult::Valid);
  CHECK(cr.reply == "2");
  CHECK(cr.transport_ok);

  auto cr2 = w.client_wordcount(id, "one  two \t three\nfour");
  CHECK(cr2.reply == "4");
  CHECK(cr2.verdict == VerifyResult::Valid);

  auto cr3 = w.client_wordcount(id, "");
  CHECK(cr3.reply == "0");
  CHECK(cr3.verdict == VerifyResult::Valid);
}
