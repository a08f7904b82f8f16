// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include "ksim/image.hpp"

#include <algorithm>

namespace ksim {

static const char kMagic[5] = {'K', 'S', 'I', 'M', '1'};
constexpr uint64_t kPage = 4096;

Bytes EnclaveImage::serialize() const {
  Bytes out;
  out.insert(out.end(), kMagic, kMagic + 5);
  put_le32(out, (uint32_t)segments.size());
  put_le64(out, rt_entry);
  put_le64(out, eapp_entry);
  put_le32(out, (uint32_t)config.size());
  out.insert(out.end(), config.begin(), config.end());
  for (const auto& s : segments) {
    put_le64(out, s.vaddr);
    put_le32(out, s.flags);
    put_le32(out, (uint32_t)s.bytes.size());
    out.insert(out.end(), s.bytes.begin(), s.bytes.end());
  }
  return out;
}

std::optional<EnclaveImage> EnclaveImage::parse(std::span<const uint8_t> in,
                                                std::string* why) {
  auto fail = [&](const char* w) {
    if (why) *why = w;
    return std::nullopt;
  };
  size_t off = 0;
  auto need = [&](size_t n) { return in.size() - off >= n; };
  if (!need(5) || !std::equal(kMagic, kMagic + 5, in.data()))
    return fail("bad magic");
  off = 5;
  if (!need(4 + 8 + 8 + 4)) return fail("truncated header");
  uint32_t nseg = get_le32(in.data() + off);
  off += 4;
  EnclaveImage img;
  img.rt_entry = get_le64(in.data() + off);
  off += 8;
  img.eapp_entry = get_le64(in.data() + off);
  off += 8;
  uint32_t clen = get_le32(in.data() + off);
  off += 4;
  if (clen > (1u << 20) || !need(clen)) return fail("bad config length");
  img.config.assign(in.begin() + (long)off, in.begin() + (long)(off + clen));
  off += clen;
  if (nseg > 4096) return fail("too many segments");
  for (uint32_t i = 0; i < nseg; i++) {
    if (!need(8 + 4 + 4)) return fail("truncated segment header");
    Segment s;
    s.vaddr = get_le64(in.data() + off);
    off += 8;
    uint32_t flags = get_le32(in.data() + off);
    off += 4;
    uint32_t len = get_le32(in.data() + off);
    off += 4;
    if (flags > 0xff) return fail("bad segment flags");
    s.flags = (uint8_t)flags;
    if (len > (1u << 26) || !need(len)) return fail("bad segment length");
    s.bytes.assign(in.begin() + (long)off, in.begin() + (long)(off + len));
    off += len;
    img.segments.push_back(std::move(s));
  }
  if (off != in.size()) return fail("trailing bytes");
  if (!img.validate(why)) return std::nullopt;
  return img;
}

bool EnclaveImage::validate(std::string* why) const {
  auto fail = [&](const char* w) {
    if (why) *why = w;
    return false;
  };
  if (segments.empty()) return fail("image has no segments");
  std::vector<std::pair<uint64_t, uint64_t>> spans;
  for (const auto& s : segments) {
    if (s.vaddr % kPage) return fail("segment vaddr not page aligned");
    if (s.bytes.empty() || s.bytes.size() % kPage)
      return fail("segment length not a page multiple");
    spans.push_back({s.vaddr, s.vaddr + s.bytes.size()});
  }
  std::sort(spans.begin(), spans.end());
  for (size_t i = 1; i < spans.size(); i++) {
    if (spans[i].first < spans[i - 1].second)
      return fail("segments overlap");
  }
  return true;
}

uint64_t EnclaveImage::payload_pages() const {
  uint64_t n = 0;
  for (const auto& s : segments) n += s.bytes.size() / kPage;
  return n;
}

}  // namespace ksim
