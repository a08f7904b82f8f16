// Copyright (c) 2026 The ksim Authors
// SPDX-License-Identifier: MIT

#include "ksim/cli.hpp"

int main(int argc, char** argv) { return ksim::cli::run_main(argc, argv); }
