/* SPDX-FileCopyrightText: Copyright (c) 2026, the surroda authors.
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <string>
#include <vector>

namespace surroda::cli {

/// Parses and runs one subcommand. Exit codes: 0 success, 1 invalid input or
/// usage, 2 numerical failure.
int run(const std::vector<std::string>& args);

}  // namespace surroda::cli
