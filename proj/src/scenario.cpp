// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include "ksim/scenario.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "ksim/attack.hpp"

namespace ksim::scn {

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

bool parse_u64(const std::string& s, uint64_t& out) {
  if (s.empty()) return false;
  try {
    size_t pos = 0;
    unsigned long long v = std::stoull(s, &pos, 0);  // handles 0x prefixes
    if (pos != s.size()) return false;
    out = v;
    return true;
  } catch (...) {
    return false;
  }
}

/// Sizes accept suffixes: p pages, k KiB, m MiB; bare numbers are bytes.
bool parse_size(const std::string& s, uint64_t& out) {
  if (s.empty()) return false;
  uint64_t mult = 1;
  std::string num = s;
  switch (s.back()) {
    case 'p': mult = kPageSize; num = s.substr(0, s.size() - 1); break;
    case 'k': mult = 1024; num = s.substr(0, s.size() - 1); break;
    case 'm': mult = 1048576; num = s.substr(0, s.size() - 1); break;
    default: break;
  }
  uint64_t v;
  if (!parse_u64(num, v)) return false;
  out = v * mult;
  return true;
}

bool parse_i64(const std::string& s, int64_t& out) {
  if (s.empty()) return false;
  bool neg = s[0] == '-';
  uint64_t mag;
  if (!parse_u64(neg ? s.substr(1) : s, mag)) return false;
  out = neg ? -(int64_t)mag : (int64_t)mag;
  return true;
}

std::string kv_value(const std::vector<std::string>& toks,
                     const std::string& key) {
  std::string prefix = key + "=";
  for (const auto& t : toks)
    if (t.rfind(prefix, 0) == 0) return t.substr(prefix.size());
  return {};
}

bool has_flag(const std::vector<std::string>& toks, const std::string& f) {
  for (const auto& t : toks)
    if (t == f) return true;
  return false;
}

std::string describe_action(const ActionResult& r) {
  std::ostringstream os;
  switch (r.status) {
    case ActionStatus::Ok:
      os << "ok value=" << r.value;
      if (!r.bytes.empty()) {
        if (r.bytes.size() <= 64)
          os << " bytes=" << to_hex(r.bytes);
        else
          os << " byteslen=" << r.bytes.size();
      }
      break;
    case ActionStatus::Denied:
      os << "denied";
      break;
    case ActionStatus::Fault:
      os << "fault reason=" << fatal_reason_name(r.fatal_reason);
      break;
    case ActionStatus::OutOfMemory:
      os << "oom";
      break;
    case ActionStatus::HostError:
      os << "host_error err=" << r.value;
      break;
    case ActionStatus::TooLarge:
      os << "too_large";
      break;
    case ActionStatus::Busy:
      os << "busy";
      break;
    case ActionStatus::ForcedYield:
      os << "forced_yield value=" << r.value;
      break;
  }
  return os.str();
}

std::string describe_sbi(const SbiRet& r, bool with_id) {
  std::ostringstream os;
  if (r.ok()) {
    os << "ok";
    if (with_id) os << " id=" << r.value;
  } else {
    os << "error " << sbi_error_name(r.err);
  }
  return os.str();
}

struct Runner {
  Overrides ov;
  Result res;
  std::unique_ptr<World> world;
  std::string last = "none";
  unsigned default_hart = 1;

  void out_line(const std::string& s) { res.log.push_back(s); }

  bool fail_parse(size_t lineno, const std::string& why) {
    std::ostringstream os;
    os << "line " << lineno << ": " << why;
    res.error = os.str();
    res.exit_code = 2;
    return false;
  }

  bool cmd_boot(const std::vector<std::string>& t, size_t ln) {
    if (world) return fail_parse(ln, "duplicate boot");
    WorldOptions o;
    std::string v;
    if (!(v = kv_value(t, "seed")).empty() && !parse_u64(v, o.seed))
      return fail_parse(ln, "bad seed");
    if (!(v = kv_value(t, "mem")).empty() && !parse_size(v, o.mem_size))
      return fail_parse(ln, "bad mem");
    uint64_t u;
    if (!(v = kv_value(t, "harts")).empty()) {
      if (!parse_u64(v, u)) return fail_parse(ln, "bad harts");
      o.harts = (unsigned)u;
    }
    if (!(v = kv_value(t, "watchdog")).empty() && !parse_u64(v, o.watchdog))
      return fail_parse(ln, "bad watchdog");
    if (!(v = kv_value(t, "paging-limit")).empty() &&
        !parse_u64(v, o.paging_limit))
      return fail_parse(ln, "bad paging-limit");
    if (has_flag(t, "encrypt")) o.encrypt = true;
    if (has_flag(t, "dyn-resize")) o.dyn_resize = true;
    if (has_flag(t, "cache")) o.cache_enabled = true;
    if (!(v = kv_value(t, "cache-partition")).empty()) {
      if (!parse_u64(v, u)) return fail_parse(ln, "bad cache-partition");
      o.cache_enabled = o.cache_partition = true;
      o.cache_ways = (unsigned)u;
    }
    if (!(v = kv_value(t, "scratchpad")).empty()) {
      uint64_t sz;
      if (!parse_size(v, sz) || sz % kPageSize)
        return fail_parse(ln, "bad scratchpad");
      o.scratchpad_pages = sz / kPageSize;
    }
    // Command line overrides win over the script.
    if (ov.seed) o.seed = *ov.seed;
    if (ov.paging_limit) o.paging_limit = *ov.paging_limit;
    if (ov.scratchpad_pages) o.scratchpad_pages = *ov.scratchpad_pages;
    if (ov.watchdog) o.watchdog = *ov.watchdog;
    if (ov.encrypt) o.encrypt = *ov.encrypt;
    if (ov.dyn_resize) o.dyn_resize = *ov.dyn_resize;
    if (ov.cache_partition_ways) {
      o.cache_enabled = o.cache_partition = true;
      o.cache_ways = *ov.cache_partition_ways;
    }
    world = std::make_unique<World>(o);
    if (!world->boot()) return fail_parse(ln, "world boot failed");
    default_hart = world->machine().hart_count() > 1 ? 1 : 0;
    last = "ok";
    return true;
  }

  bool cmd_image(const std::vector<std::string>& t, size_t ln) {
    if (t.size() < 3) return fail_parse(ln, "image NAME builtin=...|file=...");
    std::string name = t[1];
    std::string builtin = kv_value(t, "builtin");
    std::string file = kv_value(t, "file");
    if (!builtin.empty()) {
      auto img = make_builtin_image(builtin);
      if (!img) return fail_parse(ln, "unknown builtin image");
      world->define_image(name, *img);
      last = "ok";
      return true;
    }
    if (!file.empty()) {
      std::ifstream in(file, std::ios::binary);
      if (!in) return fail_parse(ln, "cannot open image file");
      Bytes data((std::istreambuf_iterator<char>(in)),
                 std::istreambuf_iterator<char>());
      auto img = EnclaveImage::parse(data);
      if (!img) return fail_parse(ln, "malformed image file");
      world->define_image(name, *img);
      last = "ok";
      return true;
    }
    return fail_parse(ln, "image needs builtin= or file=");
  }

  bool cmd_create(const std::vector<std::string>& t, size_t ln) {
    std::string name = kv_value(t, "image");
    if (name.empty() && t.size() > 1 && t[1].find('=') == std::string::npos)
      name = t[1];
    if (name.empty()) return fail_parse(ln, "create needs an image name");
    uint64_t epm = 0, utm = 0;
    std::string v = kv_value(t, "epm");
    if (v.empty() || !parse_size(v, epm) || epm % kPageSize)
      return fail_parse(ln, "bad epm size");
    v = kv_value(t, "utm");
    if (v.empty() || !parse_size(v, utm) || utm % kPageSize)
      return fail_parse(ln, "bad utm size");
    SbiRet r = world->create_enclave(name, epm / kPageSize, utm / kPageSize,
                                     has_flag(t, "scratchpad"));
    last = describe_sbi(r, true);
    return true;
  }

  bool id_arg(const std::vector<std::string>& t, size_t ln, int& id) {
    uint64_t v;
    if (t.size() < 2 || !parse_u64(t[1], v)) {
      fail_parse(ln, "missing enclave id");
      return false;
    }
    id = (int)v;
    return true;
  }

  unsigned hart_arg(const std::vector<std::string>& t) {
    std::string v = kv_value(t, "hart");
    uint64_t h;
    if (!v.empty() && parse_u64(v, h) && h < world->machine().hart_count())
      return (unsigned)h;
    return default_hart;
  }

  bool cmd_eapp(const std::vector<std::string>& t, size_t ln,
                const std::string& raw) {
    int id;
    if (!id_arg(t, ln, id)) return false;
    if (t.size() < 3) return fail_parse(ln, "eapp ID ACTION ...");
    EnclaveRuntime* rt = world->runtime(id);
    if (!rt) {
      last = "error no_such_enclave";
      return true;
    }
    const std::string& act = t[2];
    auto arg_u64 = [&](size_t i, uint64_t& out) {
      return t.size() > i && parse_u64(t[i], out);
    };
    ActionResult r;
    if (act == "readv") {
      uint64_t a;
      if (!arg_u64(3, a)) return fail_parse(ln, "readv ADDR");
      r = rt->read_v(a);
    } else if (act == "writev") {
      uint64_t a, b;
      if (!arg_u64(3, a) || !arg_u64(4, b))
        return fail_parse(ln, "writev ADDR BYTE");
      r = rt->write_v(a, (uint8_t)b);
    } else if (act == "readbytes") {
      uint64_t a, n;
      if (!arg_u64(3, a) || !arg_u64(4, n))
        return fail_parse(ln, "readbytes ADDR LEN");
      r = rt->read_bytes(a, n);
    } else if (act == "writebytes") {
      uint64_t a;
      if (!arg_u64(3, a) || t.size() < 5)
        return fail_parse(ln, "writebytes ADDR HEX");
      auto data = from_hex(t[4]);
      if (!data) return fail_parse(ln, "bad hex");
      r = rt->write_bytes(a, *data);
    } else if (act == "mmap") {
      uint64_t n;
      if (!arg_u64(3, n)) return fail_parse(ln, "mmap PAGES");
      r = rt->mmap_pages(n);
    } else if (act == "brk") {
      int64_t d;
      if (t.size() < 4 || !parse_i64(t[3], d))
        return fail_parse(ln, "brk DELTA");
      r = rt->brk_move(d);
    } else if (act == "getrandom") {
      r = rt->get_random();
    } else if (act == "rdcycle") {
      r = rt->rdcycle();
    } else if (act == "spin") {
      uint64_t n;
      if (!arg_u64(3, n)) return fail_parse(ln, "spin N");
      r = rt->spin(n);
    } else if (act == "loopforever") {
      r = rt->loop_forever();
    } else if (act == "edge") {
      uint64_t fid;
      if (!arg_u64(3, fid)) return fail_parse(ln, "edge FID [HEX]");
      Bytes payload;
      if (t.size() > 4) {
        auto p = from_hex(t[4]);
        if (!p) return fail_parse(ln, "bad hex");
        payload = *p;
      }
      r = rt->edge_call((uint32_t)fid, payload);
    } else if (act == "sysopen") {
      if (t.size() < 4) return fail_parse(ln, "sysopen PATH [create]");
      Bytes args;
      put_le32(args, t.size() > 4 && t[4] == "create" ? 1 : 0);
      args.insert(args.end(), t[3].begin(), t[3].end());
      r = rt->syscall(edge::kSysOpen, args);
    } else if (act == "sysclose") {
      uint64_t fd;
      if (!arg_u64(3, fd)) return fail_parse(ln, "sysclose FD");
      Bytes args;
      put_le32(args, (uint32_t)fd);
      r = rt->syscall(edge::kSysClose, args);
    } else if (act == "sysread") {
      uint64_t fd, len;
      if (!arg_u64(3, fd) || !arg_u64(4, len))
        return fail_parse(ln, "sysread FD LEN");
      Bytes args;
      put_le32(args, (uint32_t)fd);
      put_le32(args, (uint32_t)len);
      r = rt->syscall(edge::kSysRead, args);
    } else if (act == "syswrite") {
      uint64_t fd;
      if (!arg_u64(3, fd) || t.size() < 5)
        return fail_parse(ln, "syswrite FD HEX");
      auto data = from_hex(t[4]);
      if (!data) return fail_parse(ln, "bad hex");
      Bytes args;
      put_le32(args, (uint32_t)fd);
      args.insert(args.end(), data->begin(), data->end());
      r = rt->syscall(edge::kSysWrite, args);
    } else if (act == "attest") {
      Bytes data;
      if (t.size() > 3) {
        auto p = from_hex(t[3]);
        if (!p) return fail_parse(ln, "bad hex");
        data = *p;
      }
      r = rt->attest_self(data);
    } else if (act == "yield") {
      r = rt->yield_now();
    } else if (act == "exit") {
      r = rt->exit_self();
    } else {
      (void)raw;
      return fail_parse(ln, "unknown eapp action: " + act);
    }
    last = describe_action(r);
    return true;
  }

  bool cmd_attack(const std::vector<std::string>& t, size_t ln) {
    if (t.size() < 2) return fail_parse(ln, "attack KIND ...");
    const std::string& kind = t[1];
    auto resolve_addr = [&](size_t i, uint64_t& addr) -> bool {
      if (t.size() <= i) return false;
      if (t[i] == "sm") {
        addr = world->sm_region().base;
        return true;
      }
      if (t[i] == "epm" || t[i] == "utm") {
        uint64_t id;
        if (t.size() <= i + 1 || !parse_u64(t[i + 1], id)) return false;
        const EnclaveDescriptor* d = world->sm().enclave((int)id);
        if (!d) return false;
        addr = t[i] == "epm" ? d->epm.base : d->utm.base;
        return true;
      }
      return parse_u64(t[i], addr);
    };
    if (kind == "hostread") {
      uint64_t addr;
      if (!resolve_addr(2, addr)) return fail_parse(ln, "attack hostread ADDR");
      Bytes buf(16);
      auto f = world->host_read(addr, buf);
      last = f ? "denied" : "ok bytes=" + to_hex(buf);
      return true;
    }
    if (kind == "hostwrite") {
      uint64_t addr;
      if (!resolve_addr(2, addr))
        return fail_parse(ln, "attack hostwrite ADDR [BYTE]");
      uint64_t byte = 0xFF;
      if (t.size() > 3 && t.back() != "sm") parse_u64(t.back(), byte);
      uint8_t b = (uint8_t)byte;
      auto f = world->host_write(addr, std::span<const uint8_t>(&b, 1));
      last = f ? "denied" : "ok";
      return true;
    }
    if (kind == "dropreply") {
      world->arm_drop_edge_reply();
      last = "ok";
      return true;
    }
    if (kind == "tamperstore") {
      uint64_t id, slot;
      if (t.size() < 4 || !parse_u64(t[2], id) || !parse_u64(t[3], slot))
        return fail_parse(ln, "attack tamperstore ID SLOT");
      EnclaveRuntime* rt = world->runtime((int)id);
      if (!rt || slot >= rt->slot_count()) {
        last = "error no_such_slot";
        return true;
      }
      uint64_t pa = rt->slot_pa(slot) + 64;
      uint8_t b;
      if (world->host_read(pa, std::span<uint8_t>(&b, 1))) {
        last = "denied";
        return true;
      }
      b ^= 0x1;
      last = world->host_write(pa, std::span<const uint8_t>(&b, 1)) ? "denied"
                                                                    : "ok";
      return true;
    }
    // Whole campaigns from the corpus: attack run NAME
    if (kind == "run") {
      if (t.size() < 3) return fail_parse(ln, "attack run NAME");
      attacks::Report rep =
          attacks::run_one(t[2], world->options(), world->options().seed);
      std::ostringstream os;
      os << (rep.successes ? "breached" : "held") << " attempts="
         << rep.attempts << " successes=" << rep.successes
         << " detected=" << rep.detected;
      last = os.str();
      return true;
    }
    return fail_parse(ln, "unknown attack kind: " + kind);
  }

  bool cmd_host(const std::vector<std::string>& t, size_t ln,
                const std::string& raw) {
    if (t.size() < 2) return fail_parse(ln, "host input|output|put|cat ...");
    if (t[1] == "input") {
      size_t pos = raw.find("input");
      std::string text = pos == std::string::npos || pos + 6 > raw.size()
                             ? ""
                             : raw.substr(pos + 6);
      world->set_host_input(Bytes(text.begin(), text.end()));
      last = "ok";
      return true;
    }
    if (t[1] == "output") {
      last = "ok bytes=" + to_hex(world->host_output());
      return true;
    }
    if (t[1] == "put") {
      if (t.size() < 4) return fail_parse(ln, "host put PATH HEX");
      auto data = from_hex(t[3]);
      if (!data) return fail_parse(ln, "bad hex");
      world->fs().put(t[2], *data);
      last = "ok";
      return true;
    }
    if (t[1] == "cat") {
      if (t.size() < 3) return fail_parse(ln, "host cat PATH");
      const Bytes* f = world->fs().file(t[2]);
      last = f ? "ok bytes=" + to_hex(*f) : "error no_such_file";
      return true;
    }
    return fail_parse(ln, "unknown host subcommand");
  }

  bool cmd_client(const std::vector<std::string>& t, size_t ln,
                  const std::string& raw) {
    int id;
    if (!id_arg(t, ln, id)) return false;
    if (t.size() < 3 || t[2] != "wordcount")
      return fail_parse(ln, "client ID wordcount TEXT");
    size_t pos = raw.find("wordcount");
    std::string text =
        pos == std::string::npos ? "" : raw.substr(pos + strlen("wordcount"));
    if (!text.empty() && text[0] == ' ') text = text.substr(1);
    World::ClientResult c = world->client_wordcount(id, text);
    std::ostringstream os;
    os << "verdict=" << verify_result_name(c.verdict) << " reply=" << c.reply
       << " transport=" << (c.transport_ok ? "ok" : "bad");
    last = os.str();
    return true;
  }

  bool cmd_state(const std::vector<std::string>& t, size_t ln) {
    int id;
    if (!id_arg(t, ln, id)) return false;
    const EnclaveDescriptor* d = world->sm().enclave(id);
    if (!d) {
      last = "error no_such_enclave";
      return true;
    }
    std::ostringstream os;
    os << "state=" << enclave_state_name(d->state)
       << " exited=" << (d->exited ? 1 : 0);
    EnclaveRuntime* rt = world->runtime(id);
    if (rt)
      os << " resident=" << rt->resident_pages()
         << " evictions=" << rt->evictions() << " faults=" << rt->page_faults();
    last = os.str();
    return true;
  }

  bool cmd_snapshot(const std::vector<std::string>& t, size_t ln) {
    if (t.size() < 2) return fail_parse(ln, "snapshot PREFIX");
    std::ofstream mem(t[1] + ".mem", std::ios::binary);
    std::ofstream man(t[1] + ".manifest");
    if (!mem || !man) return fail_parse(ln, "cannot write snapshot");
    last = world->machine().save_snapshot(mem, man) ? "ok" : "error snapshot";
    return true;
  }

  void check_expect(const std::vector<std::string>& t) {
    std::vector<std::string> have = tokenize(last);
    bool ok = true;
    for (size_t i = 1; i < t.size(); i++) {
      bool found = false;
      for (const auto& h : have)
        if (h == t[i]) {
          found = true;
          break;
        }
      if (!found) {
        ok = false;
        break;
      }
    }
    if (ok) {
      res.passed++;
      out_line("  PASS (" + last + ")");
    } else {
      res.failed++;
      out_line("  FAIL (got: " + last + ")");
    }
  }

  void check_expect_audit(const std::string& raw) {
    size_t pos = raw.find("expect-audit");
    std::string needle =
        pos == std::string::npos ? "" : raw.substr(pos + strlen("expect-audit"));
    if (!needle.empty() && needle[0] == ' ') needle = needle.substr(1);
    bool found = false;
    for (const auto& l : world->audit().lines())
      if (l.find(needle) != std::string::npos) {
        found = true;
        break;
      }
    if (found) {
      res.passed++;
      out_line("  PASS (audit)");
    } else {
      res.failed++;
      out_line("  FAIL (audit missing: " + needle + ")");
    }
  }

  Result run(const std::string& text) {
    std::istringstream is(text);
    std::string raw;
    size_t ln = 0;
    while (std::getline(is, raw)) {
      ln++;
      std::string line = raw;
      size_t h = line.find('#');
      if (h != std::string::npos) line = line.substr(0, h);
      auto t = tokenize(line);
      if (t.empty()) continue;
      out_line("> " + line);
      const std::string& cmd = t[0];
      if (!world && cmd != "boot") {
        fail_parse(ln, "first command must be boot");
        return res;
      }
      bool ok;
      if (cmd == "boot") {
        ok = cmd_boot(t, ln);
      } else if (cmd == "image") {
        ok = cmd_image(t, ln);
      } else if (cmd == "create") {
        ok = cmd_create(t, ln);
      } else if (cmd == "run" || cmd == "resume") {
        int id;
        if (!(ok = id_arg(t, ln, id))) break;
        SbiRet r = cmd == "run" ? world->run_enclave(id, hart_arg(t))
                                : world->resume_enclave(id, hart_arg(t));
        last = describe_sbi(r, false);
      } else if (cmd == "destroy") {
        int id;
        if (!(ok = id_arg(t, ln, id))) break;
        last = describe_sbi(world->destroy_enclave(id), false);
      } else if (cmd == "extend-grant") {
        int id;
        uint64_t pages;
        if (!(ok = id_arg(t, ln, id))) break;
        if (t.size() < 3 || !parse_u64(t[2], pages)) {
          ok = fail_parse(ln, "extend-grant ID PAGES");
          break;
        }
        const EnclaveDescriptor* d = world->sm().enclave(id);
        if (!d) {
          last = "error no_such_enclave";
        } else {
          SbiRet rq = world->sm().request_extend(
              Caller::rt(id, d->running_hart), id, pages);
          if (!rq.ok())
            last = describe_sbi(rq, false);
          else
            last = world->grant_extend(id, pages) ? "ok" : "error refused";
        }
      } else if (cmd == "eapp") {
        ok = cmd_eapp(t, ln, raw);
      } else if (cmd == "attack") {
        ok = cmd_attack(t, ln);
      } else if (cmd == "host") {
        ok = cmd_host(t, ln, raw);
      } else if (cmd == "client") {
        ok = cmd_client(t, ln, raw);
      } else if (cmd == "state") {
        ok = cmd_state(t, ln);
      } else if (cmd == "snapshot") {
        ok = cmd_snapshot(t, ln);
      } else if (cmd == "expect") {
        check_expect(t);
        ok = true;
      } else if (cmd == "expect-audit") {
        check_expect_audit(raw);
        ok = true;
      } else {
        ok = fail_parse(ln, "unknown command: " + cmd);
      }
      if (!ok) return res;
      if (cmd != "expect" && cmd != "expect-audit")
        out_line("  -> " + last);
    }
    res.exit_code = res.failed ? 1 : 0;
    if (world) res.audit_text = world->audit().text();
    return res;
  }
};

}  // namespace

Result run_text(const std::string& text, const Overrides& ov) {
  Runner r;
  r.ov = ov;
  return r.run(text);
}

Result run_file(const std::string& path, const Overrides& ov) {
  std::ifstream in(path);
  if (!in) {
    Result res;
    res.exit_code = 2;
    res.error = "cannot open scenario: " + path;
    return res;
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return run_text(text, ov);
}

}  // namespace ksim::scn
