#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace flimsr::cli {

/// Runs the `flimsr` command line. Returns 0 on success, 2 for usage errors
/// (unknown subcommand or flag, malformed value) and 1 when a module rejects
/// its input; failures print a one-line JSON error object to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace flimsr::cli
