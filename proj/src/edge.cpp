// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include "ksim/edge.hpp"

namespace ksim::edge {

bool read_header(Machine& m, unsigned hart, PrivMode priv, uint64_t utm_base,
                 Header& out) {
  uint8_t buf[kHeaderSize];
  if (m.read(hart, utm_base, buf, priv)) return false;
  out.fid = get_le32(buf + 0);
  out.status = get_le32(buf + 4);
  out.args_off = get_le32(buf + 8);
  out.args_len = get_le32(buf + 12);
  out.ret_off = get_le32(buf + 16);
  out.ret_len = get_le32(buf + 20);
  out.err = get_le32(buf + 24);
  out.pad = get_le32(buf + 28);
  return true;
}

bool write_header(Machine& m, unsigned hart, PrivMode priv, uint64_t utm_base,
                  const Header& h) {
  uint8_t buf[kHeaderSize];
  store_le32(buf + 0, h.fid);
  store_le32(buf + 4, h.status);
  store_le32(buf + 8, h.args_off);
  store_le32(buf + 12, h.args_len);
  store_le32(buf + 16, h.ret_off);
  store_le32(buf + 20, h.ret_len);
  store_le32(buf + 24, h.err);
  store_le32(buf + 28, h.pad);
  return !m.write(hart, utm_base, buf, priv);
}

bool HostFunctionTable::register_fn(uint32_t fid, HostFn fn) {
  if (fid != fns_.size() || !fn) return false;
  fns_.push_back(std::move(fn));
  return true;
}

bool HostFunctionTable::set_proxy(HostFn fn) {
  if (!fn) return false;
  proxy_ = std::move(fn);
  return true;
}

bool HostFunctionTable::has(uint32_t fid) const {
  return fid < fns_.size() || (fid == kProxySyscallFid && proxy_);
}

std::pair<uint32_t, Bytes> HostFunctionTable::dispatch(
    uint32_t fid, std::span<const uint8_t> args) const {
  if (fid == kProxySyscallFid && proxy_) return proxy_(args);
  if (fid >= fns_.size()) return {kErrUnknownFid, {}};
  return fns_[fid](args);
}

}  // namespace ksim::edge
