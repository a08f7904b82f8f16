// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include "ksim/crypto.hpp"

#include <openssl/evp.h>

#include <cstdlib>
#include <cstring>

namespace ksim::crypto {

// OpenSSL failures here would mean a broken build environment, not a
// recoverable simulation condition, so they abort loudly.
static void check(int ok, const char* what) {
  if (ok != 1) {
    std::fprintf(stderr, "crypto: %s failed\n", what);
    std::abort();
  }
}

Hash hash(std::span<const uint8_t> data) {
  Hasher h;
  h.update(data);
  return h.finish();
}

Hasher::Hasher() {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  check(ctx != nullptr, "EVP_MD_CTX_new");
  check(EVP_DigestInit_ex(ctx, EVP_sha3_256(), nullptr), "DigestInit sha3-256");
  ctx_ = ctx;
}

Hasher::~Hasher() {
  if (ctx_) EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_));
}

void Hasher::update(std::span<const uint8_t> data) {
  check(EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data.data(),
                         data.size()),
        "DigestUpdate");
}

void Hasher::update_u64le(uint64_t v) {
  uint8_t buf[8];
  store_le64(buf, v);
  update(buf);
}

void Hasher::update_byte(uint8_t b) { update({&b, 1}); }

Hash Hasher::finish() {
  Hash out{};
  unsigned len = 0;
  check(EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), out.data(), &len),
        "DigestFinal");
  check(len == kHashSize, "sha3-256 length");
  return out;
}

KeyPair keypair_from_seed(const SecretKey& seed) {
  EVP_PKEY* pkey = EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr,
                                                seed.data(), seed.size());
  check(pkey != nullptr, "new ed25519 key");
  KeyPair kp;
  kp.sec = seed;
  size_t publen = kp.pub.size();
  check(EVP_PKEY_get_raw_public_key(pkey, kp.pub.data(), &publen),
        "get ed25519 public");
  check(publen == kKeySize, "ed25519 public length");
  EVP_PKEY_free(pkey);
  return kp;
}

Signature sign(const SecretKey& sec, std::span<const uint8_t> msg) {
  EVP_PKEY* pkey = EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr,
                                                sec.data(), sec.size());
  check(pkey != nullptr, "load ed25519 secret");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  check(ctx != nullptr, "EVP_MD_CTX_new");
  check(EVP_DigestSignInit(ctx, nullptr, nullptr, nullptr, pkey),
        "DigestSignInit");
  Signature sig{};
  size_t siglen = sig.size();
  check(EVP_DigestSign(ctx, sig.data(), &siglen, msg.data(), msg.size()),
        "DigestSign");
  check(siglen == kSignatureSize, "ed25519 signature length");
  EVP_MD_CTX_free(ctx);
  EVP_PKEY_free(pkey);
  return sig;
}

bool verify(const PublicKey& pub, std::span<const uint8_t> msg,
            const Signature& sig) {
  EVP_PKEY* pkey = EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr,
                                               pub.data(), pub.size());
  if (!pkey) return false;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  check(ctx != nullptr, "EVP_MD_CTX_new");
  bool ok = EVP_DigestVerifyInit(ctx, nullptr, nullptr, nullptr, pkey) == 1 &&
            EVP_DigestVerify(ctx, sig.data(), sig.size(), msg.data(),
                             msg.size()) == 1;
  EVP_MD_CTX_free(ctx);
  EVP_PKEY_free(pkey);
  return ok;
}

static std::array<uint8_t, kHashSize> mac_key_for(const SealKey& key) {
  Hasher h;
  h.update(key);
  static const uint8_t kLabel[3] = {'m', 'a', 'c'};
  h.update(kLabel);
  return h.finish();
}

static std::array<uint8_t, kTagSize> seal_tag(
    const std::array<uint8_t, kHashSize>& mac_key, const Nonce& nonce,
    std::span<const uint8_t, kPageSize> ciphertext) {
  Hasher h;
  h.update(mac_key);
  h.update(nonce);
  h.update(ciphertext);
  return h.finish();
}

static void aes128_ctr(const SealKey& key, const Nonce& iv,
                       std::span<const uint8_t, kPageSize> in, uint8_t* out) {
  EVP_CIPHER_CTX* ctx = EVP_CIPHER_CTX_new();
  check(ctx != nullptr, "EVP_CIPHER_CTX_new");
  check(EVP_EncryptInit_ex(ctx, EVP_aes_128_ctr(), nullptr, key.data(),
                           iv.data()),
        "EncryptInit aes-128-ctr");
  int outl = 0;
  check(EVP_EncryptUpdate(ctx, out, &outl, in.data(), (int)in.size()),
        "EncryptUpdate");
  check(outl == (int)kPageSize, "ctr stream length");
  int fin = 0;
  check(EVP_EncryptFinal_ex(ctx, out + outl, &fin), "EncryptFinal");
  check(fin == 0, "ctr final length");
  EVP_CIPHER_CTX_free(ctx);
}

SealedPage seal_page(const SealKey& key, const Nonce& nonce,
                     std::span<const uint8_t, kPageSize> plain) {
  SealedPage sealed;
  sealed.nonce = nonce;
  aes128_ctr(key, nonce, plain, sealed.ciphertext.data());
  sealed.tag = seal_tag(mac_key_for(key), nonce,
                        std::span<const uint8_t, kPageSize>(sealed.ciphertext));
  return sealed;
}

std::optional<std::array<uint8_t, kPageSize>> unseal_page(
    const SealKey& key, const SealedPage& sealed) {
  auto tag = seal_tag(mac_key_for(key), sealed.nonce,
                      std::span<const uint8_t, kPageSize>(sealed.ciphertext));
  // Not constant-time; the simulated attacker has no timing channel here.
  if (tag != sealed.tag) return std::nullopt;
  std::array<uint8_t, kPageSize> plain{};
  aes128_ctr(key, sealed.nonce,
             std::span<const uint8_t, kPageSize>(sealed.ciphertext),
             plain.data());
  return plain;
}

uint64_t Rng::next() {
  state_ += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

uint64_t Rng::below(uint64_t bound) {
  // Rejection sampling keeps the distribution exactly uniform.
  uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  uint64_t v;
  do {
    v = next();
  } while (v >= limit);
  return v % bound;
}

DeviceKey DeviceKey::from_seed(uint64_t seed) {
  Hasher h;
  static const uint8_t kLabel[11] = {'k', 's', 'i', 'm', '-', 'd',
                                     'e', 'v', 'i', 'c', 'e'};
  h.update(kLabel);
  h.update_u64le(seed);
  DeviceKey dk;
  dk.kp = keypair_from_seed(h.finish());
  return dk;
}

BootOutput secure_boot(const DeviceKey& device,
                       std::span<const uint8_t> sm_image, uint64_t boot_seed) {
  BootOutput out;
  out.sm_measurement = hash(sm_image);

  // Attestation key derivation mimics sampling from a boot-time entropy
  // source: deterministic per (device, firmware, seed), and two boots with
  // different seeds get unrelated keys.
  Hasher h;
  static const uint8_t kLabel[11] = {'k', 's', 'i', 'm', '-', 'a',
                                     't', 't', 'e', 's', 't'};
  h.update(kLabel);
  h.update(device.kp.sec);
  h.update_u64le(boot_seed);
  h.update(out.sm_measurement);
  out.attest = keypair_from_seed(h.finish());

  Bytes cert_msg;
  cert_msg.insert(cert_msg.end(), out.sm_measurement.begin(),
                  out.sm_measurement.end());
  cert_msg.insert(cert_msg.end(), out.attest.pub.begin(), out.attest.pub.end());
  out.certificate = sign(device.kp.sec, cert_msg);
  return out;
}

}  // namespace ksim::crypto
