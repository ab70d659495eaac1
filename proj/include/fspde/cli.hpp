#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fspde::cli {

enum class Subcommand { ml_eval, check_params, kernel_norms, verify_isometry, simulate };

const char* to_string(Subcommand sub);

/// Where a resolved value came from. When a flag overrides the config
/// file both values are kept for the provenance echo.
struct Setting {
    std::string value;
    std::string source;  ///< "flag", "file" or "default"
    std::optional<std::string> file_value;
};

struct RunConfig {
    Subcommand subcommand = Subcommand::ml_eval;
    std::map<std::string, Setting> settings;
    std::vector<std::string> positional;  ///< ml-eval a b z
    std::string output_dir;
    std::uint64_t seed = 0;
    std::string help;  ///< non-empty when --help was requested

    bool has(const std::string& key) const { return settings.count(key) != 0; }
    const std::string& get(const std::string& key) const;
};

/// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "FSPDE_OUT";

/// Parses `fspde <subcommand> [--key value ...] [--config file]`. args
/// excludes the program name. file_text, when given, replaces reading the
/// --config path. Error{usage} names the offending key.
RunConfig parse_config(const std::vector<std::string>& args,
                       const std::optional<std::string>& file_text = std::nullopt);

/// Flat key=value text; '#' starts a comment. Error{usage} on a bad line.
std::map<std::string, std::string> parse_key_values(const std::string& text);

/// 0 success, 1 numerical failure, 2 admissibility refusal, 64 usage.
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

/// parse_config + run with the exit-code mapping, for main().
int main(int argc, char** argv);

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumerical = 1;
inline constexpr int kExitInadmissible = 2;
inline constexpr int kExitUsage = 64;

}  // namespace fspde::cli
