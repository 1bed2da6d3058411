// Copyright 2026 The adaeval Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADAEVAL_CLI_HPP_
#define ADAEVAL_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace adaeval::cli {

// Runs one command line (without the program name). Structured errors are
// written to `err` as a single JSON line; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace adaeval::cli

#endif  // ADAEVAL_CLI_HPP_
