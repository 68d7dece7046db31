#ifndef VSDOA_CLI_HPP
#define VSDOA_CLI_HPP

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vsdoa/geometry.hpp"

namespace vsdoa::cli {

// Process exit codes, one per error category.
enum ExitCode : int {
  kOk = 0,
  kUsage = 2,       // unknown subcommand or flag, malformed flag value
  kConfig = 3,      // configuration failed validation
  kIo = 4,          // missing or unwritable file
  kFormat = 5,      // malformed, truncated, corrupted or wrong-version file
  kDimension = 6,   // shape mismatch between model and data
  kTraining = 7,    // optimization diverged
  kInternal = 10,
};

// Relative data paths resolve against this directory when it is set.
inline constexpr const char* kDataDirEnv = "VSDOA_DATA_DIR";

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// "full", "limited", or "elo:ehi,alo:ahi" in degrees.
FieldOfView parse_fov(const std::string& text);
// "lo:hi" or a single value.
std::pair<double, double> parse_range(const std::string& text);
std::filesystem::path resolve_data_path(const std::filesystem::path& p);

}  // namespace vsdoa::cli

#endif  // VSDOA_CLI_HPP
