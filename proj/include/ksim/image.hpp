// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#ifndef KSIM_IMAGE_HPP
#define KSIM_IMAGE_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ksim/bytes.hpp"

namespace ksim {

/// One loadable piece of an enclave image. `flags` uses the measurement
/// permission bits (1=R 2=W 4=X 8=U); payloads are whole pages.
struct Segment {
  uint64_t vaddr = 0;
  uint8_t flags = 0;
  Bytes bytes;
};

constexpr uint8_t kSegR = 1, kSegW = 2, kSegX = 4, kSegU = 8;

/// Container for enclave payloads ("KSIM1" files):
///   magic "KSIM1" | u32 segment count | u64 rt_entry | u64 eapp_entry |
///   u32 config length | config bytes |
///   per segment: u64 vaddr | u32 flags | u32 length | bytes
/// All integers little-endian. Segment payloads must be page multiples and
/// segments must not overlap in the virtual address space.
struct EnclaveImage {
  std::vector<Segment> segments;
  uint64_t rt_entry = 0;
  uint64_t eapp_entry = 0;
  Bytes config;

  Bytes serialize() const;
  static std::optional<EnclaveImage> parse(std::span<const uint8_t> in,
                                           std::string* why = nullptr);
  /// Structural checks shared by parse() and the loader.
  bool validate(std::string* why = nullptr) const;
  /// Total payload pages across segments.
  uint64_t payload_pages() const;
};

}  // namespace ksim

#endif
