#pragma once

#include <iosfwd>

namespace linr {

/// Entry point of the `linr` tool. Returns 0 on success, 1 on failure and
/// 2 on a usage error.
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);
int cli_main(int argc, char** argv);

}  // namespace linr
