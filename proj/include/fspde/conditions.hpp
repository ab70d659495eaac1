#pragma once

#include <string>
#include <vector>

#include "fspde/kernel.hpp"

namespace fspde {

enum class Regime { white_noise, pure_jump, global_white, global_jump };

const char* to_string(Regime regime);

struct ExponentRow {
    std::string name;
    double value = 0.0;
    std::string needs;  ///< e.g. "> -1"
    bool ok = false;
};

/// Outcome of one admissibility inequality lhs > rhs. Margin zero is a
/// failure: every inequality involved is strict.
struct AdmissibilityReport {
    Regime regime = Regime::white_noise;
    bool satisfied = false;
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;
    std::vector<ExponentRow> exponent_table;
};

/// 2 alpha + min{(alpha/beta)(2 gamma - 1), -2} > d.
AdmissibilityReport check_white_noise(const ModelParams& params);

/// p alpha + min{(alpha/beta)(p gamma - p + 1), -p} > d (p - 1).
AdmissibilityReport check_pure_jump(const ModelParams& params);

/// Same inequality as the local check for `regime` (white_noise or
/// pure_jump); the result is tagged as the global variant.
AdmissibilityReport check_global(const ModelParams& params, Regime regime);

/// Fixed-width table for terminals.
std::string format_report(const AdmissibilityReport& report);

}  // namespace fspde
