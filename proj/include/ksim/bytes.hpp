// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#ifndef KSIM_BYTES_HPP
#define KSIM_BYTES_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ksim {

using Bytes = std::vector<uint8_t>;

std::string to_hex(std::span<const uint8_t> data);
std::optional<Bytes> from_hex(std::string_view hex);

/// Little-endian append helpers. All on-disk and in-memory wire formats in
/// this project are little-endian.
void put_le16(Bytes& out, uint16_t v);
void put_le32(Bytes& out, uint32_t v);
void put_le64(Bytes& out, uint64_t v);

uint16_t get_le16(const uint8_t* p);
uint32_t get_le32(const uint8_t* p);
uint64_t get_le64(const uint8_t* p);

void store_le32(uint8_t* p, uint32_t v);
void store_le64(uint8_t* p, uint64_t v);

/// Formats "key=0x1f40" style hex with no leading zeros (but at least one
/// digit). Used by audit lines so logs stay grep-friendly.
std::string hex_u64(uint64_t v);

}  // namespace ksim

#endif
