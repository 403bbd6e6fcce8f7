#pragma once

#include <string>
#include <vector>

namespace lnkit {

inline constexpr const char* kToolkitVersion = "0.1.0";
inline constexpr int kGeometrySchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;

/// Runs one command line. Returns 0 on success, 1 on usage or validation
/// errors, 2 on I/O and file-format errors. Diagnostics go to stderr.
int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace lnkit
