// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include "ksim/host.hpp"

#include <algorithm>
#include <cstring>
#include <sstream>

#include "ksim/cli.hpp"
#include "ksim/pt.hpp"

namespace ksim {

// ---------------------------------------------------------------- ToyFs

int ToyFs::open(const std::string& path, bool create) {
  if (files_.find(path) == files_.end()) {
    if (!create) return -1;
    files_[path] = Bytes{};
  }
  for (size_t i = 0; i < handles_.size(); i++) {
    if (!handles_[i].open) {
      handles_[i] = Handle{path, 0, true};
      return (int)i;
    }
  }
  handles_.push_back(Handle{path, 0, true});
  return (int)handles_.size() - 1;
}

int ToyFs::close(int fd) {
  if (fd < 0 || (size_t)fd >= handles_.size() || !handles_[fd].open) return -1;
  handles_[fd].open = false;
  return 0;
}

Bytes ToyFs::read(int fd, uint32_t len) {
  if (fd < 0 || (size_t)fd >= handles_.size() || !handles_[fd].open) return {};
  Handle& h = handles_[fd];
  const Bytes& f = files_[h.path];
  if (h.cursor >= f.size()) return {};
  size_t n = std::min<size_t>(len, f.size() - h.cursor);
  Bytes out(f.begin() + h.cursor, f.begin() + h.cursor + n);
  h.cursor += n;
  return out;
}

int64_t ToyFs::write(int fd, std::span<const uint8_t> data) {
  if (fd < 0 || (size_t)fd >= handles_.size() || !handles_[fd].open) return -1;
  Handle& h = handles_[fd];
  Bytes& f = files_[h.path];
  if (f.size() < h.cursor + data.size()) f.resize(h.cursor + data.size());
  std::copy(data.begin(), data.end(), f.begin() + h.cursor);
  h.cursor += data.size();
  return (int64_t)data.size();
}

const Bytes* ToyFs::file(const std::string& path) const {
  auto it = files_.find(path);
  return it == files_.end() ? nullptr : &it->second;
}

void ToyFs::put(const std::string& path, Bytes content) {
  files_[path] = std::move(content);
}

// ---------------------------------------------------------- OsAllocator

void OsAllocator::init(Region usable) {
  free_.clear();
  if (usable.size) free_.push_back(usable);
}

std::optional<Region> OsAllocator::alloc(uint64_t size) {
  if (!size) return std::nullopt;
  for (size_t i = 0; i < free_.size(); i++) {
    if (free_[i].size >= size) {
      Region r{free_[i].base, size};
      free_[i].base += size;
      free_[i].size -= size;
      if (!free_[i].size) free_.erase(free_.begin() + i);
      return r;
    }
  }
  return std::nullopt;
}

bool OsAllocator::alloc_at(Region r) {
  if (!r.size) return false;
  for (size_t i = 0; i < free_.size(); i++) {
    Region f = free_[i];
    if (r.base >= f.base && r.end() <= f.end()) {
      free_.erase(free_.begin() + i);
      if (r.base > f.base) free_.insert(free_.begin() + i++, Region{f.base, r.base - f.base});
      if (r.end() < f.end()) free_.insert(free_.begin() + i, Region{r.end(), f.end() - r.end()});
      return true;
    }
  }
  return false;
}

void OsAllocator::release(Region r) {
  if (!r.size) return;
  auto it = std::lower_bound(
      free_.begin(), free_.end(), r,
      [](const Region& a, const Region& b) { return a.base < b.base; });
  it = free_.insert(it, r);
  // Coalesce with the right then the left neighbor.
  size_t i = (size_t)(it - free_.begin());
  if (i + 1 < free_.size() && free_[i].end() == free_[i + 1].base) {
    free_[i].size += free_[i + 1].size;
    free_.erase(free_.begin() + i + 1);
  }
  if (i > 0 && free_[i - 1].end() == free_[i].base) {
    free_[i - 1].size += free_[i].size;
    free_.erase(free_.begin() + i);
  }
}

bool OsAllocator::is_free(Region r) const {
  for (const auto& f : free_)
    if (r.base >= f.base && r.end() <= f.end()) return true;
  return false;
}

uint64_t OsAllocator::total_free() const {
  uint64_t t = 0;
  for (const auto& f : free_) t += f.size;
  return t;
}

// --------------------------------------------------------------- loader

uint64_t image_heap_base(const EnclaveImage& img) {
  uint64_t top = 0;
  for (const auto& s : img.segments) {
    if (s.flags & kSegU) top = std::max(top, s.vaddr + s.bytes.size());
  }
  if (!top) return 0x10000000ULL;
  return top + kPageSize;  // one guard page above the user payload
}

static uint64_t seg_pte_flags(uint8_t f) {
  uint64_t out = pt::kPteV;
  if (f & kSegR) out |= pt::kPteR;
  if (f & kSegW) out |= pt::kPteW;
  if (f & kSegX) out |= pt::kPteX;
  if (f & kSegU) out |= pt::kPteU;
  return out;
}

LoadError build_enclave(Machine& m, unsigned hart, const EnclaveImage& img,
                        Region epm, Region utm, bool use_scratchpad,
                        LoadResult& out) {
  if (!img.validate()) return LoadError::BadImage;
  if (epm.base % kPageSize || epm.size % kPageSize || utm.base % kPageSize ||
      utm.size % kPageSize || !epm.size || !utm.size)
    return LoadError::BadLayout;

  const uint64_t payload = img.payload_pages() + 1;  // plus the boot record
  if (epm.size / kPageSize < payload + 1) return LoadError::TooSmall;

  bool faulted = false;
  auto rd64 = [&](uint64_t pa) -> uint64_t {
    uint8_t b[8];
    if (m.read(hart, pa, b, PrivMode::S)) {
      faulted = true;
      return 0;
    }
    return get_le64(b);
  };
  auto wr64 = [&](uint64_t pa, uint64_t v) {
    uint8_t b[8];
    store_le64(b, v);
    if (m.write(hart, pa, b, PrivMode::S)) faulted = true;
  };

  // The region is plain OS memory until create() fences it; clear whatever
  // the host left behind so the enclave never boots over stale data.
  Bytes zero(kPageSize, 0);
  for (uint64_t pa = epm.base; pa < epm.end(); pa += kPageSize) {
    if (m.write(hart, pa, zero, PrivMode::S)) return LoadError::BadLayout;
  }

  uint64_t pt_cursor = epm.base + payload * kPageSize;
  auto alloc_table = [&]() -> uint64_t {
    if (pt_cursor + kPageSize > epm.end()) return 0;
    uint64_t pa = pt_cursor;
    pt_cursor += kPageSize;
    return pa;
  };
  const uint64_t root = alloc_table();

  uint64_t cursor = epm.base;
  auto place = [&](uint64_t va, uint64_t flags,
                   std::span<const uint8_t> content) -> LoadError {
    pt::MapStatus s =
        pt::map_page(rd64, wr64, alloc_table, root, va, cursor, flags);
    if (s == pt::MapStatus::NoTable) return LoadError::TooSmall;
    if (s != pt::MapStatus::Ok) return LoadError::BadLayout;
    if (m.write(hart, cursor, content, PrivMode::S)) return LoadError::BadLayout;
    cursor += kPageSize;
    return LoadError::Ok;
  };

  for (const auto& seg : img.segments) {
    for (uint64_t i = 0; i < seg.bytes.size() / kPageSize; i++) {
      LoadError e = place(seg.vaddr + i * kPageSize, seg_pte_flags(seg.flags),
                          std::span<const uint8_t>(seg.bytes).subspan(
                              i * kPageSize, kPageSize));
      if (e != LoadError::Ok) return e;
    }
  }

  BootRecord brec;
  brec.eapp_entry = img.eapp_entry;
  brec.heap_base = image_heap_base(img);
  brec.utm_vbase = layout::kUtmWindowVa;
  brec.mmap_base = layout::kMmapBase;
  brec.utm_pages = 0;  // geometry comes from the monitor, keeps the
                       // measurement independent of the shared region size
  Bytes bpage(kPageSize, 0);
  brec.write_page(bpage);
  LoadError e = place(layout::kBootRecordVa, pt::kPteV | pt::kPteR, bpage);
  if (e != LoadError::Ok) return e;

  for (uint64_t i = 0; i < utm.size / kPageSize; i++) {
    pt::MapStatus s = pt::map_page(
        rd64, wr64, alloc_table, root, layout::kUtmWindowVa + i * kPageSize,
        utm.base + i * kPageSize,
        pt::kPteV | pt::kPteR | pt::kPteW | pt::kPteShared);
    if (s == pt::MapStatus::NoTable) return LoadError::TooSmall;
    if (s != pt::MapStatus::Ok) return LoadError::BadLayout;
  }
  if (faulted) return LoadError::BadLayout;

  out.req.epm = epm;
  out.req.utm = utm;
  out.req.pt_root = root;
  out.req.entry_point = img.rt_entry;
  out.req.config = img.config;
  out.req.use_scratchpad = use_scratchpad;
  out.brec = brec;
  out.pt_pages = (pt_cursor - (epm.base + payload * kPageSize)) / kPageSize;
  return LoadError::Ok;
}

// ------------------------------------------------------ builtin images

static uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

static Bytes pattern_page(const std::string& name, uint64_t page) {
  crypto::Rng rng(fnv1a64(name) + page * 0x9e3779b97f4a7c15ULL);
  Bytes out;
  out.reserve(kPageSize);
  for (size_t i = 0; i < kPageSize / 8; i++) put_le64(out, rng.next());
  return out;
}

static Bytes pattern_pages(const std::string& name, uint64_t first,
                           uint64_t count) {
  Bytes out;
  for (uint64_t i = 0; i < count; i++) {
    Bytes p = pattern_page(name, first + i);
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::optional<EnclaveImage> make_builtin_image(const std::string& name) {
  constexpr uint64_t kEappVa = 0x400000;
  constexpr uint64_t kRtVa = 0x3F00000000ULL;
  EnclaveImage img;
  img.eapp_entry = kEappVa;
  img.rt_entry = kRtVa;
  if (name == "counter" || name == "wordcount") {
    img.segments.push_back(
        {kEappVa, kSegR | kSegW | kSegX | kSegU, pattern_pages(name, 0, 2)});
    img.segments.push_back({kRtVa, kSegR | kSegX, pattern_pages(name, 2, 1)});
    if (name == "wordcount") {
      const char* tag = "wordcount-v1";
      img.config.assign(tag, tag + strlen(tag));
    }
    return img;
  }
  if (name == "noop") {
    img.segments.push_back(
        {kEappVa, kSegR | kSegX | kSegU, pattern_pages(name, 0, 1)});
    img.segments.push_back({kRtVa, kSegR | kSegX, pattern_pages(name, 1, 1)});
    return img;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- World

namespace {
constexpr uint64_t kSmRegionSize = 1ULL << 16;
constexpr uint64_t kDeviceSeed = 0xD0;

Bytes sm_firmware() {
  // Fixed content: the monitor measurement is a constant of this release,
  // which is what a remote verifier pins.
  return pattern_pages("ksim-sm-firmware-r1", 0, 1);
}
}  // namespace

World::World(const WorldOptions& opts)
    : opts_(opts),
      machine_(opts.mem_size, opts.harts ? opts.harts : 1),
      sm_(machine_),
      host_rng_(opts.seed ^ 0x484f5354524e47ULL) {
  machine_.set_audit(&audit_);
  if (opts_.cache_enabled || opts_.cache_partition) {
    cache_.emplace(CacheConfig{}, opts_.cache_partition, opts_.cache_ways);
    machine_.attach_cache(&*cache_);
    sm_.attach_cache(&*cache_);
  }
}

bool World::boot() {
  sm_region_ = Region{0, kSmRegionSize};
  SmOptions so;
  so.watchdog_budget = opts_.watchdog;
  so.cache_enclave_ways = opts_.cache_partition ? opts_.cache_ways : 0;
  so.device_seed = kDeviceSeed;
  uint64_t os_top = machine_.mem_size();
  if (opts_.scratchpad_pages) {
    uint64_t sz = opts_.scratchpad_pages * kPageSize;
    if (sz >= machine_.mem_size() - sm_region_.size) return false;
    so.scratchpad = Region{machine_.mem_size() - sz, sz};
    os_top = so.scratchpad->base;
  }
  Bytes fw = sm_firmware();
  if (sm_.boot(sm_region_, fw, opts_.seed, so) != SbiError::Ok) return false;
  os_.init(Region{sm_region_.end(), os_top - sm_region_.end()});
  register_host_fns();
  for (const char* n : {"counter", "wordcount", "noop"})
    images_[n] = *make_builtin_image(n);
  return true;
}

void World::define_image(const std::string& name, EnclaveImage img) {
  images_[name] = std::move(img);
}

const EnclaveImage* World::image(const std::string& name) const {
  auto it = images_.find(name);
  return it == images_.end() ? nullptr : &it->second;
}

void World::register_host_fns() {
  host_fns_.register_fn(0, [](std::span<const uint8_t> args) {
    return std::make_pair(edge::kErrOk, Bytes(args.begin(), args.end()));
  });
  host_fns_.register_fn(1, [this](std::span<const uint8_t>) {
    return std::make_pair(edge::kErrOk, host_input_);
  });
  host_fns_.register_fn(2, [this](std::span<const uint8_t> args) {
    host_output_.assign(args.begin(), args.end());
    return std::make_pair(edge::kErrOk, Bytes{});
  });
  host_fns_.set_proxy([this](std::span<const uint8_t> args)
                          -> std::pair<uint32_t, Bytes> {
    if (args.size() < 4) return {edge::kErrMalformed, {}};
    uint32_t nr = get_le32(args.data());
    Bytes reply;
    switch (nr) {
      case edge::kSysOpen: {
        if (args.size() < 8) return {edge::kErrMalformed, {}};
        bool create = get_le32(args.data() + 4) != 0;
        std::string path(args.begin() + 8, args.end());
        int fd = fs_.open(path, create);
        put_le32(reply, fd < 0 ? 1 : 0);
        put_le32(reply, (uint32_t)fd);
        return {edge::kErrOk, reply};
      }
      case edge::kSysClose: {
        if (args.size() < 8) return {edge::kErrMalformed, {}};
        int rc = fs_.close((int)get_le32(args.data() + 4));
        put_le32(reply, rc == 0 ? 0 : 1);
        return {edge::kErrOk, reply};
      }
      case edge::kSysRead: {
        if (args.size() < 12) return {edge::kErrMalformed, {}};
        Bytes data = fs_.read((int)get_le32(args.data() + 4),
                              get_le32(args.data() + 8));
        put_le32(reply, 0);
        reply.insert(reply.end(), data.begin(), data.end());
        return {edge::kErrOk, reply};
      }
      case edge::kSysWrite: {
        if (args.size() < 8) return {edge::kErrMalformed, {}};
        int64_t n = fs_.write((int)get_le32(args.data() + 4), args.subspan(8));
        put_le32(reply, n < 0 ? 1 : 0);
        put_le32(reply, (uint32_t)(n < 0 ? 0 : n));
        return {edge::kErrOk, reply};
      }
      default:
        return {edge::kErrMalformed, {}};
    }
  });
}

unsigned World::host_hart() const {
  if (!sm_.booted()) return 0;
  for (unsigned h = 0; h < machine_.hart_count(); h++)
    if (sm_.running_on(h) < 0) return h;
  return 0;
}

SbiRet World::create_enclave(const std::string& image_name,
                             uint64_t epm_pages, uint64_t utm_pages,
                             bool use_scratchpad) {
  const EnclaveImage* img = image(image_name);
  if (!img) {
    audit_.record(0, host_hart(), "os_create_fail", "reason=no_image");
    return SbiRet::fail(SbiError::InvalidMapping);
  }
  // utm below epm, so the space right above a fresh enclave stays free and
  // an adjacent extension grant has somewhere to go.
  auto utm = os_.alloc(utm_pages * kPageSize);
  if (!utm) return SbiRet::fail(SbiError::RegionOutOfBounds);
  auto epm = os_.alloc(epm_pages * kPageSize);
  if (!epm) {
    os_.release(*utm);
    return SbiRet::fail(SbiError::RegionOutOfBounds);
  }
  LoadResult lr;
  LoadError le = build_enclave(machine_, host_hart(), *img, *epm, *utm,
                               use_scratchpad, lr);
  if (le != LoadError::Ok) {
    os_.release(*epm);
    os_.release(*utm);
    std::ostringstream why;
    why << "reason=load_error_" << (int)le;
    audit_.record(0, host_hart(), "os_create_fail", why.str());
    return SbiRet::fail(le == LoadError::TooSmall ? SbiError::RegionOutOfBounds
                                                  : SbiError::InvalidMapping);
  }
  SbiRet ret = sm_.create(Caller::os(host_hart()), lr.req);
  if (!ret.ok()) {
    os_.release(*epm);
    os_.release(*utm);
    return ret;
  }
  int id = (int)ret.value;
  const EnclaveDescriptor* d = sm_.enclave(id);
  if (d && d->uses_scratchpad) os_.release(d->retired_epm);
  enclave_image_[id] = image_name;
  EnclaveRuntime::Config rc;
  rc.paging_limit = opts_.paging_limit;
  rc.encrypt = opts_.encrypt;
  rc.dyn_resize = opts_.dyn_resize;
  rts_[id] = std::make_unique<EnclaveRuntime>(machine_, sm_, *this, id, rc);
  return ret;
}

SbiRet World::run_enclave(int id, unsigned hart) {
  SbiRet r = sm_.run(Caller::os(hart), id, hart);
  if (r.ok()) {
    auto it = rts_.find(id);
    if (it != rts_.end() && !it->second->booted() && !it->second->fatal())
      it->second->boot();
  }
  return r;
}

SbiRet World::resume_enclave(int id, unsigned hart) {
  return sm_.resume(Caller::os(hart), id, hart);
}

SbiRet World::destroy_enclave(int id) {
  const EnclaveDescriptor* d = sm_.enclave(id);
  if (!d) return SbiRet::fail(SbiError::NoSuchEnclave);
  Region epm = d->epm, utm = d->utm;
  bool scratch = d->uses_scratchpad;
  SbiRet r = sm_.destroy(Caller::os(host_hart()), id);
  if (r.ok()) {
    os_.release(utm);
    if (!scratch) os_.release(epm);
    rts_.erase(id);
    enclave_image_.erase(id);
  }
  return r;
}

EnclaveRuntime* World::runtime(int id) {
  auto it = rts_.find(id);
  return it == rts_.end() ? nullptr : it->second.get();
}

std::optional<AccessFault> World::host_read(uint64_t addr,
                                            std::span<uint8_t> out) {
  unsigned h = host_hart();
  machine_.tick(h);
  return machine_.read(h, addr, out, PrivMode::S);
}

std::optional<AccessFault> World::host_write(uint64_t addr,
                                             std::span<const uint8_t> data) {
  unsigned h = host_hart();
  machine_.tick(h);
  return machine_.write(h, addr, data, PrivMode::S);
}

void World::service_edge_call(int id) {
  const EnclaveDescriptor* d = sm_.enclave(id);
  if (!d || d->state != EnclaveState::Stopped) return;
  unsigned h = host_hart();
  machine_.tick(h);

  if (drop_edge_reply_) {
    drop_edge_reply_ = false;
    std::ostringstream os;
    os << "id=" << id;
    audit_.record(0, h, "host_edge_drop", os.str());
  } else {
    edge::Header hd;
    if (edge::read_header(machine_, h, PrivMode::S, d->utm.base, hd) &&
        hd.status == (uint32_t)edge::Status::Pending) {
      const uint64_t cap =
          d->utm.size > edge::kHeaderSize
              ? std::min<uint64_t>(EnclaveRuntime::kPayloadCap,
                                   d->utm.size - edge::kHeaderSize)
              : 0;
      Bytes args;
      bool args_ok = hd.args_off >= edge::kHeaderSize &&
                     (uint64_t)hd.args_off + hd.args_len <= d->utm.size;
      if (args_ok && hd.args_len) {
        args.resize(hd.args_len);
        if (machine_.read(h, d->utm.base + hd.args_off, args, PrivMode::S))
          args_ok = false;
      }
      uint32_t err = edge::kErrMalformed;
      Bytes ret;
      if (args_ok) std::tie(err, ret) = host_fns_.dispatch(hd.fid, args);
      if (err == edge::kErrOk && ret.size() > cap) {
        err = edge::kErrTooLarge;
        ret.clear();
      }
      if (err == edge::kErrOk) {
        if (!ret.empty())
          machine_.write(h, d->utm.base + edge::kHeaderSize, ret, PrivMode::S);
        hd.ret_off = (uint32_t)edge::kHeaderSize;
        hd.ret_len = (uint32_t)ret.size();
        hd.err = edge::kErrOk;
        hd.status = (uint32_t)edge::Status::Done;
      } else {
        hd.ret_len = 0;
        hd.err = err;
        hd.status = (uint32_t)edge::Status::Error;
      }
      edge::write_header(machine_, h, PrivMode::S, d->utm.base, hd);
      std::ostringstream os;
      os << "id=" << id << ",fid=" << hd.fid << ",err=" << hd.err;
      audit_.record(0, h, "host_edge_serve", os.str());
    }
  }
  sm_.resume(Caller::os(h), id, d->running_hart);
}

bool World::grant_extend(int id, uint64_t pages) {
  const EnclaveDescriptor* d = sm_.enclave(id);
  if (!d || !pages) return false;
  Region add{d->epm.end(), pages * kPageSize};
  if (!os_.alloc_at(add)) {
    std::ostringstream os;
    os << "id=" << id << ",pages=" << pages;
    audit_.record(0, host_hart(), "os_extend_refuse", os.str());
    return false;
  }
  SbiRet r = sm_.extend(Caller::os(host_hart()), id, add);
  if (!r.ok()) {
    os_.release(add);
    return false;
  }
  auto it = rts_.find(id);
  bool adopted = it != rts_.end() && it->second->on_extend_granted(add);
  std::ostringstream os;
  os << "id=" << id << ",base=" << hex_u64(add.base) << ",pages=" << pages
     << ",adopted=" << (adopted ? 1 : 0);
  audit_.record(0, host_hart(), "os_extend_grant", os.str());
  return adopted;
}

World::ClientResult World::client_wordcount(int id, const std::string& text) {
  ClientResult out;
  EnclaveRuntime* rt = runtime(id);
  const EnclaveDescriptor* d = sm_.enclave(id);
  if (!rt || !d) return out;
  auto img_it = enclave_image_.find(id);
  if (img_it == enclave_image_.end()) return out;
  const EnclaveImage* img = image(img_it->second);
  if (!img) return out;

  // The client ships its input through untrusted host memory.
  host_input_.assign(text.begin(), text.end());

  // Enclave side: pull the input, stage it in private memory, count words
  // there, attest the answer, push the reply out.
  ActionResult in = rt->edge_call(1, {});
  if (!in.ok()) return out;
  uint64_t pages = (in.bytes.size() + kPageSize - 1) / kPageSize;
  ActionResult buf = rt->mmap_pages(pages ? pages : 1);
  if (!buf.ok()) return out;
  uint64_t va = buf.value;
  if (!in.bytes.empty() && !rt->write_bytes(va, in.bytes).ok()) return out;

  uint64_t count = 0;
  bool in_word = false;
  for (size_t i = 0; i < in.bytes.size(); i++) {
    ActionResult rb = rt->read_v(va + i);
    if (!rb.ok()) return out;
    uint8_t c = (uint8_t)rb.value;
    bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r';
    if (!space && !in_word) count++;
    in_word = !space;
  }
  std::string reply = std::to_string(count);

  Bytes bound;
  const char* prefix = "wc:";
  bound.insert(bound.end(), prefix, prefix + 3);
  bound.insert(bound.end(), reply.begin(), reply.end());
  ActionResult att = rt->attest_self(bound);
  if (!att.ok()) return out;

  Bytes payload;
  put_le32(payload, (uint32_t)reply.size());
  payload.insert(payload.end(), reply.begin(), reply.end());
  payload.insert(payload.end(), att.bytes.begin(), att.bytes.end());
  if (!rt->edge_call(2, payload).ok()) return out;

  // Client side: everything below uses only what left the enclave plus the
  // device public key and an expected measurement computed from the image
  // alone, never the monitor's own bookkeeping.
  const Bytes& got = host_output_;
  if (got.size() < 4) return out;
  uint32_t rlen = get_le32(got.data());
  if (got.size() < 4 + (uint64_t)rlen) return out;
  out.reply.assign(got.begin() + 4, got.begin() + 4 + rlen);
  auto report = AttestationReport::parse(
      std::span<const uint8_t>(got).subspan(4 + rlen));
  if (!report) return out;

  Bytes expect_data;
  expect_data.insert(expect_data.end(), prefix, prefix + 3);
  expect_data.insert(expect_data.end(), out.reply.begin(), out.reply.end());
  out.transport_ok = report->data == expect_data;

  crypto::Hash expect_meas = cli::oracle_measure(*img);
  out.verdict = verify_report(*report, sm_.device_public(), &expect_meas);
  return out;
}

}  // namespace ksim
