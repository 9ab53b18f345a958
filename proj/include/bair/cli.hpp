#pragma once

// Command-line front end. Returns the process exit code: 0 success,
// 1 usage error, 2 I/O error, 3 contract or format violation.

namespace bair {

int run_cli(int argc, const char* const* argv);

}  // namespace bair
