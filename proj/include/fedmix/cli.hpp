#pragma once

#include <ostream>

namespace fedmix {

/// Command-line entry point.
///   generate --config C [--seed S] --out D
///   phase1   --config C --instance I [--seed S] --out D
///   phase2   --config C --instance I --start F --out D
///   full     --config C [--seed S] [--out D]
///   eval     --run D [--c-cal X]
/// Exit 0 on success, 1 on configuration or input errors, 2 on algorithmic
/// failure. Errors go to `err` as a single JSON object.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fedmix
