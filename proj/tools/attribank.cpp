// Copyright 2026 The AttriBank Authors
// SPDX-License-Identifier: Apache-2.0

#include "attribank/cli.hpp"

int main(int argc, char** argv) { return attribank::cli::run(argc, argv); }
