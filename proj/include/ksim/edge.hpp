// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#ifndef KSIM_EDGE_HPP
#define KSIM_EDGE_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "ksim/machine.hpp"

namespace ksim::edge {

/// RPC mailbox at the start of untrusted shared memory. 32 bytes, all
/// fields u32 little-endian, offsets relative to the shared region base:
///   fid | status | args_off | args_len | ret_off | ret_len | err | pad
constexpr uint64_t kHeaderSize = 32;

enum class Status : uint32_t { Idle = 0, Pending = 1, Done = 2, Error = 3 };

// Values for the header's err field.
constexpr uint32_t kErrOk = 0;
constexpr uint32_t kErrUnknownFid = 1;
constexpr uint32_t kErrTooLarge = 2;
constexpr uint32_t kErrMalformed = 3;
/// Synthesized by the runtime when the host never serviced a Pending call.
constexpr uint32_t kErrDropped = 4;

/// Function id reserved for proxied system calls.
constexpr uint32_t kProxySyscallFid = 0xffffffffu;

// Proxied system call numbers (first u32 of the args payload).
constexpr uint32_t kSysOpen = 1;
constexpr uint32_t kSysClose = 2;
constexpr uint32_t kSysRead = 3;
constexpr uint32_t kSysWrite = 4;

struct Header {
  uint32_t fid = 0;
  uint32_t status = 0;
  uint32_t args_off = 0;
  uint32_t args_len = 0;
  uint32_t ret_off = 0;
  uint32_t ret_len = 0;
  uint32_t err = 0;
  uint32_t pad = 0;
};

/// Header accessors go through checked machine accesses so the PMP and the
/// cache model see the traffic. false means the access faulted.
bool read_header(Machine& m, unsigned hart, PrivMode priv, uint64_t utm_base,
                 Header& out);
bool write_header(Machine& m, unsigned hart, PrivMode priv, uint64_t utm_base,
                  const Header& h);

/// Host-side handler: takes the argument bytes, returns (err, return bytes).
using HostFn =
    std::function<std::pair<uint32_t, Bytes>(std::span<const uint8_t>)>;

/// Host call table. Registration must be dense (fid n registered as the
/// n-th function) so a whole table can be audited by walking 0..size).
/// The proxy fid lives outside the dense range.
class HostFunctionTable {
 public:
  bool register_fn(uint32_t fid, HostFn fn);
  bool set_proxy(HostFn fn);
  bool has(uint32_t fid) const;
  size_t size() const { return fns_.size(); }
  std::pair<uint32_t, Bytes> dispatch(uint32_t fid,
                                      std::span<const uint8_t> args) const;

 private:
  std::vector<HostFn> fns_;
  HostFn proxy_;
};

/// What the runtime needs from the host world while servicing its enclave.
struct HostPort {
  virtual ~HostPort() = default;
  /// An edge-call header went Pending and the enclave yielded; give the
  /// host a chance to service it (or maliciously not).
  virtual void service_edge_call(int enclave_id) = 0;
  /// The runtime asked for more memory; returns true when the host granted
  /// and the monitor accepted an adjacent region.
  virtual bool grant_extend(int enclave_id, uint64_t pages) = 0;
};

}  // namespace ksim::edge

#endif
