#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fspde {

enum class Errc {
    domain,
    overflow,
    symbol_not_integrable,
    resolution_insufficient,
    shape_mismatch,
    rate_too_high,
    u1_missing,
    inadmissible_params,
    no_convergence,
    usage,
};

constexpr std::string_view to_string(Errc code) {
    switch (code) {
        case Errc::domain: return "domain-error";
        case Errc::overflow: return "overflow";
        case Errc::symbol_not_integrable: return "symbol-not-integrable";
        case Errc::resolution_insufficient: return "resolution-insufficient";
        case Errc::shape_mismatch: return "shape-mismatch";
        case Errc::rate_too_high: return "rate-too-high";
        case Errc::u1_missing: return "u1-missing";
        case Errc::inadmissible_params: return "inadmissible-params";
        case Errc::no_convergence: return "no-convergence";
        case Errc::usage: return "usage";
    }
    return "unknown";
}

// Every failure the library reports carries one of the codes above so the
// CLI can map it onto an exit status without string matching.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace fspde
