// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include <doctest.h>

#include <algorithm>
#include <string>

#include "ksim/bytes.hpp"
#include "ksim/crypto.hpp"

using namespace ksim;

namespace {

Bytes str_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

crypto::SecretKey seed_from_hex(const std::string& hex) {
  auto b = from_hex(hex);
  REQUIRE(b.has_value());
  REQUIRE(b->size() == crypto::kKeySize);
  crypto::SecretKey k{};
  std::copy(b->begin(), b->end(), k.begin());
  return k;
}

}  // namespace

// FIPS 202 test vectors.
TEST_CASE("sha3-256 known answers") {
  CHECK(to_hex(crypto::hash(Bytes{})) ==
        "a7ffc6f8bf1ed76651c14756a061d662f580ff4de43b49fa82d80a4b80f8434a");
  CHECK(to_hex(crypto::hash(str_bytes("abc"))) ==
        "3a985da74fe225b2045c172d6bd390bd855f086e3e9d525b46bfe24511431532");
  CHECK(to_hex(crypto::hash(str_bytes(
            "abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"))) ==
        "41c0dba2a9d6240849100376a8235e2c82e1b9998a999e21db32dd97496d3376");
}

TEST_CASE("streaming hasher matches one-shot") {
  Bytes all;
  crypto::Hasher h;
  crypto::Rng rng(7);
  for (int part = 0; part < 20; part++) {
    Bytes chunk(rng.below(200));
    for (auto& b : chunk) b = (uint8_t)rng.next();
    h.update(chunk);
    all.insert(all.end(), chunk.begin(), chunk.end());
  }
  h.update_u64le(0x123456789abcdef0ULL);
  put_le64(all, 0x123456789abcdef0ULL);
  h.update_byte(0x5a);
  all.push_back(0x5a);
  CHECK(h.finish() == crypto::hash(all));
}

// RFC 8032 section 7.1, TEST 1 (empty message) and TEST 2 (one byte).
TEST_CASE("ed25519 known answers") {
  auto seed1 = seed_from_hex(
      "9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60");
  auto kp1 = crypto::keypair_from_seed(seed1);
  CHECK(to_hex(kp1.pub) ==
        "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a");
  auto sig1 = crypto::sign(kp1.sec, Bytes{});
  CHECK(to_hex(sig1) ==
        "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e06522490155"
        "5fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b");
  CHECK(crypto::verify(kp1.pub, Bytes{}, sig1));

  auto seed2 = seed_from_hex(
      "4ccd089b28ff96da9db6c346ec114e0f5b8a319f35aba624da8cf6ed4fb8a6fb");
  auto kp2 = crypto::keypair_from_seed(seed2);
  CHECK(to_hex(kp2.pub) ==
        "3d4017c3e843895a92b70aa74d1b7ebc9c982ccf2ec4968cc0cd55f12af4660c");
  Bytes msg{0x72};
  auto sig2 = crypto::sign(kp2.sec, msg);
  CHECK(to_hex(sig2) ==
        "92a009a9f0d4cab8720e820b5f642540a2b27b5416503f8fb3762223ebdb69da"
        "085ac1e43e15996e458f3613d0f11d8c387b2eaeb4302aeeb00d291612bb0c00");
  CHECK(crypto::verify(kp2.pub, msg, sig2));
}

TEST_CASE("ed25519 rejects any mismatch") {
  auto kp = crypto::keypair_from_seed(seed_from_hex(
      "9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60"));
  Bytes msg = str_bytes("attested payload");
  auto sig = crypto::sign(kp.sec, msg);
  REQUIRE(crypto::verify(kp.pub, msg, sig));

  auto bad_sig = sig;
  bad_sig[10] ^= 1;
  CHECK(!crypto::verify(kp.pub, msg, bad_sig));

  auto bad_msg = msg;
  bad_msg[0] ^= 0x80;
  CHECK(!crypto::verify(kp.pub, bad_msg, sig));

  auto bad_pub = kp.pub;
  bad_pub[31] ^= 1;
  CHECK(!crypto::verify(bad_pub, msg, sig));
}

TEST_CASE("page sealing round trip and tamper detection") {
  crypto::SealKey key{};
  for (size_t i = 0; i < key.size(); i++) key[i] = (uint8_t)(i * 3 + 1);
  crypto::Nonce nonce{};
  nonce[0] = 9;
  std::array<uint8_t, crypto::kPageSize> plain{};
  for (size_t i = 0; i < plain.size(); i++) plain[i] = (uint8_t)(i ^ (i >> 8));

  auto sealed = crypto::seal_page(key, nonce, plain);
  // CTR keystream must actually change the bytes.
  CHECK(!std::equal(plain.begin(), plain.end(), sealed.ciphertext.begin()));

  auto back = crypto::unseal_page(key, sealed);
  REQUIRE(back.has_value());
  CHECK(*back == plain);

  SUBCASE("ciphertext flip") {
    sealed.ciphertext[100] ^= 1;
    CHECK(!crypto::unseal_page(key, sealed).has_value());
  }
  SUBCASE("tag flip") {
    sealed.tag[0] ^= 1;
    CHECK(!crypto::unseal_page(key, sealed).has_value());
  }
  SUBCASE("nonce flip breaks the tag binding") {
    sealed.nonce[3] ^= 1;
    CHECK(!crypto::unseal_page(key, sealed).has_value());
  }
  SUBCASE("wrong key") {
    auto other = key;
    other[0] ^= 1;
    CHECK(!crypto::unseal_page(other, sealed).has_value());
  }
  SUBCASE("replay of a stale triple still verifies") {
    // The tag has no freshness: this is exactly why the pager pins the
    // expected tag per slot instead of trusting the MAC alone.
    auto stale = sealed;
    auto again = crypto::unseal_page(key, stale);
    REQUIRE(again.has_value());
    CHECK(*again == plain);
  }
}

TEST_CASE("seal nonce separates ciphertexts") {
  crypto::SealKey key{};
  std::array<uint8_t, crypto::kPageSize> plain{};
  crypto::Nonce n1{}, n2{};
  n2[15] = 1;
  auto s1 = crypto::seal_page(key, n1, plain);
  auto s2 = crypto::seal_page(key, n2, plain);
  CHECK(s1.ciphertext != s2.ciphertext);
  CHECK(s1.tag != s2.tag);
}

// Reference outputs from the public splitmix64 test vectors (seed 0).
TEST_CASE("splitmix64 known answers") {
  crypto::Rng r(0);
  CHECK(r.next() == 0xe220a8397b1dcdafULL);
  CHECK(r.next() == 0x6e789e6aa1b965f4ULL);
  CHECK(r.next() == 0x06c45d188009454fULL);

  crypto::Rng r2(0);
  CHECK(r2.next() == 0xe220a8397b1dcdafULL);
}

TEST_CASE("rng below stays in range and is deterministic") {
  crypto::Rng a(42), b(42);
  for (int i = 0; i < 1000; i++) {
    uint64_t bound = 1 + (uint64_t)i * 37;
    uint64_t va = a.below(bound);
    CHECK(va < bound);
    CHECK(va == b.below(bound));
  }
  crypto::Rng c(1);
  for (int i = 0; i < 100; i++) CHECK(c.below(1) == 0);
}

TEST_CASE("device key derivation is deterministic") {
  auto d1 = crypto::DeviceKey::from_seed(0xD0);
  auto d2 = crypto::DeviceKey::from_seed(0xD0);
  auto d3 = crypto::DeviceKey::from_seed(0xD1);
  CHECK(d1.kp.pub == d2.kp.pub);
  CHECK(d1.kp.sec == d2.kp.sec);
  CHECK(d1.kp.pub != d3.kp.pub);
}

TEST_CASE("secure boot chain") {
  auto device = crypto::DeviceKey::from_seed(0xD0);
  Bytes fw = str_bytes("monitor firmware image contents");
  auto out = crypto::secure_boot(device, fw, 77);

  CHECK(out.sm_measurement == crypto::hash(fw));

  // The certificate binds (sm_measurement || attest_pub) under the device key.
  Bytes cert_msg(out.sm_measurement.begin(), out.sm_measurement.end());
  cert_msg.insert(cert_msg.end(), out.attest.pub.begin(), out.attest.pub.end());
  CHECK(crypto::verify(device.kp.pub, cert_msg, out.certificate));

  // The attest key is usable.
  Bytes m = str_bytes("hello");
  CHECK(crypto::verify(out.attest.pub, m, crypto::sign(out.attest.sec, m)));

  // Same firmware, different boot entropy: same measurement, fresh key,
  // certificate still chains to the device.
  auto out2 = crypto::secure_boot(device, fw, 78);
  CHECK(out2.sm_measurement == out.sm_measurement);
  CHECK(out2.attest.pub != out.attest.pub);

  // Different firmware changes the measurement.
  Bytes fw2 = fw;
  fw2[0] ^= 1;
  auto out3 = crypto::secure_boot(device, fw2, 77);
  CHECK(out3.sm_measurement != out.sm_measurement);

  // Certificates do not transplant across devices.
  auto mallory = crypto::DeviceKey::from_seed(0xBAD);
  CHECK(!crypto::verify(mallory.kp.pub, cert_msg, out.certificate));
}
