#include "fspde/conditions.hpp"

#include <algorithm>
#include <cstdio>

#include "fspde/error.hpp"

namespace fspde {
namespace {

ExponentRow above_minus_one(std::string name, double value) {
    return {std::move(name), value, "> -1", value > -1.0};
}

AdmissibilityReport finish(Regime regime, double lhs, double rhs) {
    AdmissibilityReport r;
    r.regime = regime;
    r.lhs = lhs;
    r.rhs = rhs;
    r.margin = lhs - rhs;
    r.satisfied = r.margin > 0.0;
    return r;
}

}  // namespace

const char* to_string(Regime regime) {
    switch (regime) {
        case Regime::white_noise: return "white-noise";
        case Regime::pure_jump: return "pure-jump";
        case Regime::global_white: return "global-white";
        case Regime::global_jump: return "global-jump";
    }
    return "?";
}

AdmissibilityReport check_white_noise(const ModelParams& params) {
    validate(params);
    const double a = params.alpha, b = params.beta, g = params.gamma;
    const double d = params.dim;
    auto r = finish(Regime::white_noise, 2.0 * a + std::min((a / b) * (2.0 * g - 1.0), -2.0), d);
    r.exponent_table.push_back(above_minus_one("Picard-time exponent", b + g - 1.0));
    r.exponent_table.push_back(above_minus_one("gradient-kernel exponent", b + g - 1.0 - b / a));
    r.exponent_table.push_back(
        above_minus_one("Ito-isometry exponent", 2.0 * b + 2.0 * g - 2.0 - b * d / a));
    return r;
}

AdmissibilityReport check_pure_jump(const ModelParams& params) {
    validate(params);
    const double a = params.alpha, b = params.beta, g = params.gamma;
    const double d = params.dim, p = params.p;
    auto r = finish(Regime::pure_jump, p * a + std::min((a / b) * (p * g - p + 1.0), -p),
                    d * (p - 1.0));
    r.exponent_table.push_back(above_minus_one(
        "jump-kernel exponent", p * (b + g - 1.0) + (b * d / a) * (1.0 - p)));
    r.exponent_table.push_back(above_minus_one("gradient-kernel exponent", b + g - 1.0 - b / a));
    return r;
}

AdmissibilityReport check_global(const ModelParams& params, Regime regime) {
    switch (regime) {
        case Regime::white_noise:
        case Regime::global_white: {
            auto r = check_white_noise(params);
            r.regime = Regime::global_white;
            return r;
        }
        case Regime::pure_jump:
        case Regime::global_jump: {
            auto r = check_pure_jump(params);
            r.regime = Regime::global_jump;
            return r;
        }
    }
    throw Error(Errc::domain, "unknown regime");
}

std::string format_report(const AdmissibilityReport& report) {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof buf, "regime     %s\nsatisfied  %s\nlhs        %.17g\nrhs        %.17g\nmargin     %.17g\n",
                  to_string(report.regime), report.satisfied ? "yes" : "no", report.lhs,
                  report.rhs, report.margin);
    out += buf;
    out += "exponent                     value                  needs  ok\n";
    for (const auto& row : report.exponent_table) {
        std::snprintf(buf, sizeof buf, "%-28s %-22.17g %-6s %s\n", row.name.c_str(), row.value,
                      row.needs.c_str(), row.ok ? "yes" : "no");
        out += buf;
    }
    return out;
}

}  // namespace fspde
