// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#ifndef KSIM_CLI_HPP
#define KSIM_CLI_HPP

#include "ksim/crypto.hpp"
#include "ksim/image.hpp"

namespace ksim::cli {

/// Reference measurement computed straight from an image container. This
/// deliberately shares no code with the monitor's measurement or with the
/// loader: it re-derives the layout rules (segment pages plus the boot
/// record page, ascending virtual address, permission byte per page) and
/// serializes into the hash by hand, so the two routes check each other.
crypto::Hash oracle_measure(const EnclaveImage& img);

/// Entry point for the ksim command line tool.
int run_main(int argc, char** argv);

}  // namespace ksim::cli

#endif
