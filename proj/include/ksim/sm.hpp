// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#ifndef KSIM_SM_HPP
#define KSIM_SM_HPP

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ksim/crypto.hpp"
#include "ksim/machine.hpp"

namespace ksim {

class CacheModel;

enum class EnclaveState : uint8_t { Created, Running, Stopped, Destroyed };
const char* enclave_state_name(EnclaveState s);

enum class SbiError : uint8_t {
  Ok,
  NotBooted,
  AlreadyBooted,
  RegionOutOfBounds,
  UnalignedRegion,
  OverlapError,
  InvalidMapping,
  DuplicatePhysicalPage,
  NoFreePmpEntry,
  WrongState,
  HartBusy,
  WrongCaller,
  NoSuchEnclave,
  DataTooLarge,
  NotAdjacent,
  ScratchpadTooSmall,
  ScratchpadBusy,
};
const char* sbi_error_name(SbiError e);

struct SbiRet {
  SbiError err = SbiError::Ok;
  uint64_t value = 0;
  bool ok() const { return err == SbiError::Ok; }
  static SbiRet success(uint64_t v = 0) { return {SbiError::Ok, v}; }
  static SbiRet fail(SbiError e) { return {e, 0}; }
};

/// Who is issuing an SBI call. The monitor trusts this tag the way real
/// hardware trusts the privilege/satp state at ecall time: host software
/// calls as Os, a runtime calls as Rt with its own enclave id.
struct Caller {
  enum class Kind : uint8_t { Os, Rt } kind = Kind::Os;
  int enclave_id = -1;
  unsigned hart = 0;
  static Caller os(unsigned hart = 0) { return {Kind::Os, -1, hart}; }
  static Caller rt(int id, unsigned hart) { return {Kind::Rt, id, hart}; }
};

struct CreateRequest {
  Region epm;
  Region utm;
  uint64_t pt_root = 0;
  uint64_t entry_point = 0;
  Bytes config;
  bool use_scratchpad = false;
};

struct EnclaveDescriptor {
  int id = -1;
  EnclaveState state = EnclaveState::Created;
  bool exited = false;
  unsigned running_hart = 0;
  Region epm;   // the protected region in use (scratchpad slice if relocated)
  Region utm;
  uint64_t pt_root = 0;
  uint64_t entry_point = 0;
  crypto::Hash measurement{};
  Bytes config;
  int epm_guard_idx = -1, epm_idx = -1;
  int utm_guard_idx = -1, utm_idx = -1;
  uint64_t watchdog_left = 0;
  std::optional<uint64_t> pending_extend;  // pages asked for by the runtime
  bool uses_scratchpad = false;
  Region retired_epm;  // original region handed back to the OS (scratchpad)
  Bytes saved_context;
};

/// Wire format of an attestation report; see docs/FORMATS.md.
struct AttestationReport {
  crypto::Hash sm_measurement{};
  crypto::PublicKey sm_attest_pub{};
  crypto::Signature device_sig{};   // device key over sm_measurement||attest_pub
  crypto::Hash enclave_measurement{};
  Bytes data;                       // caller-bound bytes, at most kMaxAttestData
  crypto::Signature sm_sig{};       // attest key over enclave_measurement||data

  Bytes serialize() const;
  static std::optional<AttestationReport> parse(std::span<const uint8_t> in);
};

constexpr size_t kMaxAttestData = 1024;

enum class VerifyResult : uint8_t {
  Valid,
  Malformed,
  BadDeviceSig,
  BadSmSig,
  WrongEnclaveMeasurement,
};
const char* verify_result_name(VerifyResult r);

/// Full chain check a remote party runs: device signature binds the attest
/// key to the device root, the attest signature binds measurement and data
/// to that key. `expect_enclave` pins the enclave measurement when given.
VerifyResult verify_report(const AttestationReport& r,
                           const crypto::PublicKey& device_pub,
                           const crypto::Hash* expect_enclave);

struct SmOptions {
  uint64_t watchdog_budget = 10000;
  unsigned cache_enclave_ways = 0;        // ways granted per running enclave
  std::optional<Region> scratchpad;       // on-chip memory slice, if any
  uint64_t device_seed = 1;               // selects the device root key
};

/// The machine-mode reference monitor. Owns enclave descriptors, the PMP
/// layout, measurement, the attestation keys and the watchdog. Everything
/// here runs conceptually in M-mode, so its own memory touches use the raw
/// machine interface; PMP exists to police the S/U world.
class SecurityMonitor {
 public:
  explicit SecurityMonitor(Machine& m) : machine_(m) {}

  SbiError boot(Region sm_region, std::span<const uint8_t> sm_image,
                uint64_t boot_seed, const SmOptions& opts);
  bool booted() const { return booted_; }
  void attach_cache(CacheModel* c) { cache_ = c; }

  // Host-callable surface.
  SbiRet create(const Caller& c, const CreateRequest& req);
  SbiRet run(const Caller& c, int id, unsigned hart);
  SbiRet resume(const Caller& c, int id, unsigned hart);
  SbiRet destroy(const Caller& c, int id);
  SbiRet extend(const Caller& c, int id, Region add);

  // Runtime-callable surface.
  SbiRet stop(const Caller& c, int id);
  SbiRet exit_enclave(const Caller& c, int id);
  SbiRet attest(const Caller& c, int id, std::span<const uint8_t> data,
                AttestationReport& out);
  SbiRet random(const Caller& c, int id);
  SbiRet request_extend(const Caller& c, int id, uint64_t pages);

  /// Uniform dispatcher used by the call fuzzer; routes to the methods above
  /// and enforces which caller class may use which function.
  enum class SbiFn : uint8_t {
    Create, Run, Resume, Destroy, Extend,
    Stop, Exit, Attest, Random, RequestExtend,
  };
  struct SbiArgs {
    int id = -1;
    unsigned hart = 0;
    Region region{};
    uint64_t pages = 0;
    const CreateRequest* create = nullptr;
    std::span<const uint8_t> attest_data{};
    AttestationReport* report_out = nullptr;
  };
  SbiRet sbi(const Caller& c, SbiFn fn, const SbiArgs& a);

  /// Charged once per enclave execution step. Hitting zero forces a yield
  /// (stop-equivalent transition) and returns ForcedYield.
  enum class Tick : uint8_t { Continue, ForcedYield };
  Tick watchdog_tick(int id);

  /// Trap router for events raised while an enclave runs. Page faults and
  /// eapp exceptions stay inside the enclave (runtime handles them);
  /// external interrupts return to the host after a full context scrub.
  enum class TrapKind : uint8_t { PageFault, EappException, ExternalInterrupt };
  enum class TrapRoute : uint8_t { ToRuntime, ToHost };
  TrapRoute delegate_trap(int id, TrapKind kind);

  /// Validation plus measurement of a prospective enclave without creating
  /// it. This is the exact digest create() would record.
  static SbiError measure_enclave(const Machine& m, const Region& epm,
                                  const Region& utm, uint64_t pt_root,
                                  uint64_t entry_point,
                                  std::span<const uint8_t> config,
                                  crypto::Hash& out, std::string* why);

  const EnclaveDescriptor* enclave(int id) const;
  std::vector<int> live_ids() const;
  int running_on(unsigned hart) const { return hart_enclave_.at(hart); }

  crypto::PublicKey device_public() const { return device_.kp.pub; }
  const crypto::BootOutput& boot_output() const { return boot_out_; }
  Region sm_region() const { return sm_region_; }
  std::optional<Region> scratchpad() const { return opts_.scratchpad; }
  const SmOptions& options() const { return opts_; }

  /// Invariant probes used by tests and the lifecycle fuzzer.
  bool check_disjointness(std::string* why) const;
  bool check_pmp_agreement(std::string* why) const;

 private:
  struct PmpAlloc {
    int guard = -1, idx = -1;
  };
  bool alloc_pair(PmpAlloc& out);
  bool alloc_single_or_pair(const Region& r, PmpAlloc& out);
  void free_index(int idx);
  void context_scrub(EnclaveDescriptor& e, const char* event);
  SbiError validate_regions(const CreateRequest& req) const;
  EnclaveDescriptor* find(int id);

  Machine& machine_;
  CacheModel* cache_ = nullptr;
  bool booted_ = false;
  SmOptions opts_;
  Region sm_region_;
  crypto::DeviceKey device_;
  crypto::BootOutput boot_out_;
  std::optional<crypto::Rng> rng_;
  std::map<int, EnclaveDescriptor> enclaves_;
  int next_id_ = 0;
  std::array<bool, kPmpEntryCount> pmp_used_{};
  std::vector<int> hart_enclave_;  // per hart: running enclave id or -1
  int scratchpad_holder_ = -1;
  PmpEntry catch_all_entry_;       // entry 15, NAPOT over all memory, rwx
  PmpAlloc spad_pair_;             // boot-reserved scratchpad TOR pair
};

}  // namespace ksim

#endif
