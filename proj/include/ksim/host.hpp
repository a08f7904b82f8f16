// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#ifndef KSIM_HOST_HPP
#define KSIM_HOST_HPP

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ksim/cache.hpp"
#include "ksim/edge.hpp"
#include "ksim/image.hpp"
#include "ksim/machine.hpp"
#include "ksim/paging.hpp"
#include "ksim/sm.hpp"

namespace ksim {

/// Host-side in-memory filesystem backing the proxied system calls.
class ToyFs {
 public:
  int open(const std::string& path, bool create);
  int close(int fd);
  Bytes read(int fd, uint32_t len);
  int64_t write(int fd, std::span<const uint8_t> data);
  bool exists(const std::string& path) const { return files_.count(path) != 0; }
  const Bytes* file(const std::string& path) const;
  void put(const std::string& path, Bytes content);

 private:
  struct Handle {
    std::string path;
    size_t cursor = 0;
    bool open = false;
  };
  std::map<std::string, Bytes> files_;
  std::vector<Handle> handles_;
};

/// First-fit physical page allocator for the host OS's share of memory.
class OsAllocator {
 public:
  void init(Region usable);
  std::optional<Region> alloc(uint64_t size);
  bool alloc_at(Region r);  // exact placement, e.g. adjacent extension
  void release(Region r);
  bool is_free(Region r) const;
  uint64_t total_free() const;

 private:
  std::vector<Region> free_;  // sorted by base, coalesced
};

/// Output of the enclave loader.
struct LoadResult {
  CreateRequest req;
  BootRecord brec;
  uint64_t pt_pages = 0;
};

enum class LoadError : uint8_t { Ok, TooSmall, BadImage, BadLayout };

/// Derived from the image alone (and therefore measurement-stable): the
/// first heap address is one guard page above the highest user segment.
uint64_t image_heap_base(const EnclaveImage& img);

/// Writes segments, boot record and page tables into epm and maps the
/// shared window over utm. Uses checked host-privilege accesses; the region
/// is still ordinary memory until the monitor accepts it.
LoadError build_enclave(Machine& m, unsigned hart, const EnclaveImage& img,
                        Region epm, Region utm, bool use_scratchpad,
                        LoadResult& out);

/// Built-in images for scenarios and tests: "counter" (two user pages of
/// deterministic bytes, entry at the first), "wordcount" (counter layout
/// plus a config tag the verifier pins), "noop".
std::optional<EnclaveImage> make_builtin_image(const std::string& name);

struct WorldOptions {
  uint64_t mem_size = 1ULL << 24;
  unsigned harts = 2;
  uint64_t seed = 1;
  uint64_t watchdog = 10000;
  uint64_t paging_limit = UINT64_MAX;
  bool encrypt = false;
  bool dyn_resize = false;
  bool cache_enabled = false;
  bool cache_partition = false;
  unsigned cache_ways = 4;
  uint64_t scratchpad_pages = 0;
};

/// One complete simulated machine: hardware, monitor, host OS state and the
/// per-enclave runtimes, with the host half of the edge-call protocol.
class World : public edge::HostPort {
 public:
  explicit World(const WorldOptions& opts);
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  bool boot();

  void define_image(const std::string& name, EnclaveImage img);
  const EnclaveImage* image(const std::string& name) const;

  /// OS operations. create returns the enclave id in .value.
  SbiRet create_enclave(const std::string& image_name, uint64_t epm_pages,
                        uint64_t utm_pages, bool use_scratchpad = false);
  SbiRet run_enclave(int id, unsigned hart);
  SbiRet resume_enclave(int id, unsigned hart);
  SbiRet destroy_enclave(int id);

  EnclaveRuntime* runtime(int id);

  /// Host software poking at physical memory through the PMP (S-mode on a
  /// hart that is not inside an enclave).
  std::optional<AccessFault> host_read(uint64_t addr, std::span<uint8_t> out);
  std::optional<AccessFault> host_write(uint64_t addr,
                                        std::span<const uint8_t> data);
  unsigned host_hart() const;

  // edge::HostPort
  void service_edge_call(int enclave_id) override;
  bool grant_extend(int enclave_id, uint64_t pages) override;

  /// Attack lever: the next Pending edge call is left unserviced.
  void arm_drop_edge_reply() { drop_edge_reply_ = true; }

  void set_host_input(Bytes in) { host_input_ = std::move(in); }
  const Bytes& host_output() const { return host_output_; }

  struct ClientResult {
    VerifyResult verdict = VerifyResult::Malformed;
    std::string reply;
    bool transport_ok = false;
  };
  /// Full remote-computation flow: ship `text` to the enclave, let the
  /// word-count program run, verify the attested answer against an
  /// independently computed expected measurement.
  ClientResult client_wordcount(int id, const std::string& text);

  Machine& machine() { return machine_; }
  SecurityMonitor& sm() { return sm_; }
  CacheModel* cache() { return cache_ ? &*cache_ : nullptr; }
  AuditLog& audit() { return audit_; }
  ToyFs& fs() { return fs_; }
  OsAllocator& os_alloc() { return os_; }
  const WorldOptions& options() const { return opts_; }
  crypto::Rng& host_rng() { return host_rng_; }
  Region sm_region() const { return sm_region_; }

 private:
  void register_host_fns();

  WorldOptions opts_;
  Machine machine_;
  AuditLog audit_;
  std::optional<CacheModel> cache_;
  SecurityMonitor sm_;
  OsAllocator os_;
  ToyFs fs_;
  edge::HostFunctionTable host_fns_;
  std::map<std::string, EnclaveImage> images_;
  std::map<int, std::unique_ptr<EnclaveRuntime>> rts_;
  std::map<int, std::string> enclave_image_;
  crypto::Rng host_rng_;
  Region sm_region_{};
  bool drop_edge_reply_ = false;
  Bytes host_input_;
  Bytes host_output_;
};

}  // namespace ksim

#endif
