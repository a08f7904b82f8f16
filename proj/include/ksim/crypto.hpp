// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#ifndef KSIM_CRYPTO_HPP
#define KSIM_CRYPTO_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "ksim/bytes.hpp"

namespace ksim::crypto {

constexpr size_t kHashSize = 32;       // SHA3-256
constexpr size_t kKeySize = 32;        // Ed25519 public key / seed
constexpr size_t kSignatureSize = 64;  // Ed25519
constexpr size_t kPageSize = 4096;
constexpr size_t kSealKeySize = 16;    // AES-128
constexpr size_t kNonceSize = 16;
constexpr size_t kTagSize = 32;

using Hash = std::array<uint8_t, kHashSize>;
using PublicKey = std::array<uint8_t, kKeySize>;
using SecretKey = std::array<uint8_t, kKeySize>;  // Ed25519 seed form
using Signature = std::array<uint8_t, kSignatureSize>;
using SealKey = std::array<uint8_t, kSealKeySize>;
using Nonce = std::array<uint8_t, kNonceSize>;

struct KeyPair {
  PublicKey pub{};
  SecretKey sec{};
};

/// One-shot SHA3-256.
Hash hash(std::span<const uint8_t> data);

/// Streaming SHA3-256, used where the input is assembled from many parts
/// (enclave measurement walks pages one at a time).
class Hasher {
 public:
  Hasher();
  ~Hasher();
  Hasher(const Hasher&) = delete;
  Hasher& operator=(const Hasher&) = delete;
  void update(std::span<const uint8_t> data);
  void update_u64le(uint64_t v);
  void update_byte(uint8_t b);
  Hash finish();

 private:
  void* ctx_;
};

/// Ed25519. Secret keys are the 32-byte seed; signatures never fail for
/// well-formed keys, verification returns false on any mismatch.
KeyPair keypair_from_seed(const SecretKey& seed);
Signature sign(const SecretKey& sec, std::span<const uint8_t> msg);
bool verify(const PublicKey& pub, std::span<const uint8_t> msg,
            const Signature& sig);

/// Authenticated page sealing: AES-128-CTR plus an encrypt-then-MAC tag
///   key_mac = hash(key || "mac")
///   tag     = hash(key_mac || nonce || ciphertext)
/// The tag binds the nonce, so replaying a stale (ciphertext, nonce, tag)
/// triple still verifies; callers that need freshness must pin the expected
/// tag themselves (the in-enclave pager does).
struct SealedPage {
  std::array<uint8_t, kPageSize> ciphertext{};
  Nonce nonce{};
  std::array<uint8_t, kTagSize> tag{};
};

SealedPage seal_page(const SealKey& key, const Nonce& nonce,
                     std::span<const uint8_t, kPageSize> plain);
/// nullopt means the tag check failed (tampered or mismatched key/nonce).
std::optional<std::array<uint8_t, kPageSize>> unseal_page(
    const SealKey& key, const SealedPage& sealed);

/// SplitMix64. Every pseudo-random draw in the simulator funnels through
/// this so runs are reproducible from one seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}
  uint64_t next();
  /// Uniform in [0, bound) via rejection sampling; bound > 0.
  uint64_t below(uint64_t bound);

 private:
  uint64_t state_;
};

/// Device root of trust. The secret never leaves this struct; everything a
/// verifier needs is the public half.
struct DeviceKey {
  KeyPair kp;
  static DeviceKey from_seed(uint64_t seed);
};

/// Output of the measured-boot sequence: the firmware measurement, the
/// freshly derived attestation keypair, and the device-signed certificate
/// over (sm_measurement || attest_pub).
struct BootOutput {
  Hash sm_measurement{};
  KeyPair attest;
  Signature certificate{};
};

BootOutput secure_boot(const DeviceKey& device,
                       std::span<const uint8_t> sm_image, uint64_t boot_seed);

}  // namespace ksim::crypto

#endif
