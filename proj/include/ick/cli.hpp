#pragma once

#include <iosfwd>

namespace ick {

/// Entry point of the `ick` tool. Returns 0 on success, 1 on usage errors and
/// 2 on runtime errors.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ick
