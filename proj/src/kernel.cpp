#include "fspde/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>

#include "fspde/error.hpp"
#include "fspde/fft.hpp"

namespace fspde {
namespace {

constexpr double kPi = std::numbers::pi;

int ceil_beta(double beta) { return beta <= 1.0 ? 1 : 2; }

// Curves are immutable, so equal requests (ensemble members, repeated
// solves) share one table.
std::shared_ptr<const ml::MittagLefflerCurve> shared_curve(ml::MLParams p, double x_max) {
    static std::mutex mutex;
    static std::map<std::tuple<double, double, double>, std::shared_ptr<const ml::MittagLefflerCurve>> cache;
    const auto key = std::make_tuple(p.a, p.b, x_max);
    std::lock_guard lock(mutex);
    if (auto it = cache.find(key); it != cache.end()) return it->second;
    if (cache.size() >= 64) cache.clear();
    auto curve = std::make_shared<const ml::MittagLefflerCurve>(p, x_max);
    cache.emplace(key, curve);
    return curve;
}

bool is_power_of_two(std::size_t m) { return m != 0 && (m & (m - 1)) == 0; }

double nyquist(const LatticeSpec& lattice) { return kPi / lattice.dx(); }

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n;
    const double my = sy / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

// |symbol| including the |xi| factor of the gradient.
double symbol_magnitude(const ModelParams& params, KernelKind kind, double t, double xi) {
    const KernelKind radial = kind == KernelKind::GradY ? KernelKind::Y : kind;
    const double v = std::abs(fourier_symbol(params, radial, t, xi));
    return kind == KernelKind::GradY ? xi * v : v;
}

void gate(const ModelParams& params, const LatticeSpec& lattice, KernelKind kind, double t,
          const BuildOptions& options) {
    if (options.check_integrability) {
        // Kernels must have an integrable symbol. The gradient only has to
        // land in L^p: a symbol ~ |xi|^-s inverts to ~ |x|^{s-d} near the
        // origin, which is p-integrable iff s > d (1 - 1/p).
        const double s = symbol_decay_exponent(params, lattice, kind, t);
        const double need =
            kind == KernelKind::GradY ? params.dim * (1.0 - 1.0 / params.p) : params.dim;
        if (s <= need) {
            throw Error(Errc::symbol_not_integrable,
                        "symbol decays like |xi|^-" + std::to_string(s) + ", needs more than " +
                            std::to_string(need) + " in dimension " + std::to_string(params.dim));
        }
    }
    if (options.resolution_tol > 0.0) {
        const double xn = nyquist(lattice);
        double peak = symbol_magnitude(params, kind, t, 0.0);
        for (int i = 0; i <= 64; ++i) {
            const double xi = xn * std::pow(10.0, -3.0 + 3.0 * i / 64.0);
            peak = std::max(peak, symbol_magnitude(params, kind, t, xi));
        }
        const double top = symbol_magnitude(params, kind, t, xn);
        if (top > options.resolution_tol * peak) {
            throw Error(Errc::resolution_insufficient,
                        "symbol at the Nyquist frequency is " + std::to_string(top / peak) +
                            " of its peak; refine the lattice");
        }
    }
}

// Fills the half spectrum with symbol * (-1)^{sum k} (the phase that puts the
// origin at index M/2) and inverts it.
template <class SymbolAt>
std::vector<double> invert(const ModelParams& params, const LatticeSpec& lattice,
                           SymbolAt&& symbol_at) {
    const int dim = params.dim;
    const std::size_t m = lattice.points;
    RealFFT fft(dim, m);
    const auto waves = half_spectrum_wavenumbers(dim, m);
    const double dk = kPi / lattice.half_width;
    std::vector<cplx> spec(fft.complex_size());
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const long* kv = &waves[i * static_cast<std::size_t>(dim)];
        long parity = 0;
        double k2 = 0.0;
        for (int a = 0; a < dim; ++a) {
            parity += kv[a];
            k2 += static_cast<double>(kv[a]) * static_cast<double>(kv[a]);
        }
        const cplx v = symbol_at(kv, dk * std::sqrt(k2), dk);
        spec[i] = (parity & 1) ? -v : v;
    }
    std::vector<double> values(fft.real_size());
    fft.backward(spec.data(), values.data());
    const double scale = 1.0 / std::pow(2.0 * lattice.half_width, dim);
    for (double& v : values) {
        v *= scale;
    }
    return values;
}

}  // namespace

void validate(const ModelParams& params) {
    auto bad = [](const char* what) { throw Error(Errc::domain, what); };
    if (!(params.alpha > 0.0) || !std::isfinite(params.alpha)) bad("alpha must be > 0");
    if (!(params.beta > 0.0 && params.beta < 2.0)) bad("beta must lie in (0, 2)");
    if (!(params.gamma >= 0.0) || !std::isfinite(params.gamma)) bad("gamma must be >= 0");
    if (!(params.nu > 0.0) || !std::isfinite(params.nu)) bad("nu must be > 0");
    if (params.dim < 1 || params.dim > 3) bad("dim must be 1, 2 or 3");
    if (!(params.p >= 1.0 && params.p <= 2.0)) bad("p must lie in [1, 2]");
}

std::size_t LatticeSpec::cells(int dim) const {
    std::size_t n = 1;
    for (int i = 0; i < dim; ++i) {
        n *= points;
    }
    return n;
}

void validate(const LatticeSpec& lattice) {
    if (!(lattice.half_width > 0.0) || !std::isfinite(lattice.half_width)) {
        throw Error(Errc::domain, "lattice half width must be > 0");
    }
    if (!is_power_of_two(lattice.points) || lattice.points < 8 || lattice.points > 1024) {
        throw Error(Errc::domain, "points per axis must be a power of two in [8, 1024]");
    }
}

double default_half_width(const ModelParams& params, double t) {
    return 20.0 * std::pow(params.nu * std::pow(t, params.beta), 1.0 / params.alpha);
}

const char* to_string(KernelKind kind) {
    switch (kind) {
        case KernelKind::Z: return "Z";
        case KernelKind::Y: return "Y";
        case KernelKind::Zstar: return "Zstar";
        case KernelKind::GradY: return "GradY";
    }
    return "?";
}

ml::MLParams symbol_ml_params(const ModelParams& params, KernelKind kind) {
    switch (kind) {
        case KernelKind::Z: return {params.beta, static_cast<double>(ceil_beta(params.beta))};
        case KernelKind::Y:
        case KernelKind::GradY: return {params.beta, params.beta + params.gamma};
        case KernelKind::Zstar: return {params.beta, 1.0};
    }
    return {};
}

double symbol_time_factor(const ModelParams& params, KernelKind kind, double t) {
    switch (kind) {
        case KernelKind::Z: return ceil_beta(params.beta) == 1 ? 1.0 : t;
        case KernelKind::Y:
        case KernelKind::GradY: return std::pow(t, params.beta + params.gamma - 1.0);
        case KernelKind::Zstar: return 1.0;
    }
    return 0.0;
}

double fourier_symbol(const ModelParams& params, KernelKind kind, double t, double xi_norm) {
    validate(params);
    if (kind == KernelKind::GradY) {
        throw Error(Errc::domain, "the gradient symbol is not radial");
    }
    if (!(t > 0.0) || !(xi_norm >= 0.0)) {
        throw Error(Errc::domain, "need t > 0 and |xi| >= 0");
    }
    const double z = -0.5 * params.nu * std::pow(t, params.beta) * std::pow(xi_norm, params.alpha);
    return symbol_time_factor(params, kind, t) * ml::ml_eval(symbol_ml_params(params, kind), z);
}

SymbolTable::SymbolTable(const ModelParams& params, KernelKind kind, double t_max, double xi_max)
    : params_(params), kind_(kind) {
    validate(params);
    const double x_max =
        0.5 * params.nu * std::pow(t_max, params.beta) * std::pow(xi_max, params.alpha);
    curve_ = shared_curve(symbol_ml_params(params, kind), x_max * (1.0 + 1e-9));
}

double SymbolTable::operator()(double t, double xi_norm) const {
    const double x = 0.5 * params_.nu * std::pow(t, params_.beta) * std::pow(xi_norm, params_.alpha);
    return symbol_time_factor(params_, kind_, t) * (*curve_)(x);
}

double symbol_decay_exponent(const ModelParams& params, const LatticeSpec& lattice,
                             KernelKind kind, double t) {
    validate(params);
    validate(lattice);
    const double xn = nyquist(lattice);
    std::vector<double> lx, ly;
    constexpr int kSamples = 17;
    for (int i = 0; i < kSamples; ++i) {
        const double xi = xn * std::pow(10.0, -1.0 + static_cast<double>(i) / (kSamples - 1));
        const double v = symbol_magnitude(params, kind, t, xi);
        // Underflowed samples would flatten the fit; drop them.
        if (v < std::numeric_limits<double>::min()) continue;
        lx.push_back(std::log(xi));
        ly.push_back(std::log(v));
    }
    if (lx.size() < 3) return std::numeric_limits<double>::infinity();
    return -least_squares_slope(lx, ly);
}

KernelGrid build_kernel(const ModelParams& params, const LatticeSpec& lattice, KernelKind kind,
                        double t, const BuildOptions& options) {
    validate(params);
    validate(lattice);
    if (kind == KernelKind::GradY) {
        throw Error(Errc::domain, "use build_gradient for GradY");
    }
    if (!(t > 0.0) || !std::isfinite(t)) {
        throw Error(Errc::domain, "kernel time must be > 0");
    }
    gate(params, lattice, kind, t, options);
    const SymbolTable table(params, kind, t, nyquist(lattice) * std::sqrt(params.dim));
    KernelGrid grid;
    grid.time = t;
    grid.which = kind;
    grid.params = params;
    grid.lattice = lattice;
    grid.values = invert(params, lattice,
                         [&](const long*, double xi, double) { return cplx(table(t, xi), 0.0); });
    return grid;
}

KernelGrid build_gradient(const ModelParams& params, const LatticeSpec& lattice, double t,
                          int axis, const BuildOptions& options) {
    validate(params);
    validate(lattice);
    if (axis < 0 || axis >= params.dim) {
        throw Error(Errc::domain, "gradient axis out of range");
    }
    if (!(t > 0.0) || !std::isfinite(t)) {
        throw Error(Errc::domain, "kernel time must be > 0");
    }
    gate(params, lattice, KernelKind::GradY, t, options);
    const SymbolTable table(params, KernelKind::Y, t, nyquist(lattice) * std::sqrt(params.dim));
    const long half = static_cast<long>(lattice.points / 2);
    KernelGrid grid;
    grid.time = t;
    grid.which = KernelKind::GradY;
    grid.axis = axis;
    grid.params = params;
    grid.lattice = lattice;
    grid.values = invert(params, lattice, [&](const long* kv, double xi, double dk) {
        if (std::abs(kv[axis]) == half) {
            return cplx(0.0, 0.0);
        }
        return cplx(0.0, dk * static_cast<double>(kv[axis]) * table(t, xi));
    });
    return grid;
}

double lattice_lp_power(const double* values, std::size_t count, double cell_volume, double p) {
    double sum = 0.0;
    if (p == 2.0) {
        for (std::size_t i = 0; i < count; ++i) sum += values[i] * values[i];
    } else if (p == 1.0) {
        for (std::size_t i = 0; i < count; ++i) sum += std::abs(values[i]);
    } else {
        for (std::size_t i = 0; i < count; ++i) sum += std::pow(std::abs(values[i]), p);
    }
    return cell_volume * sum;
}

double lp_norm(const KernelGrid& kernel, double p) {
    if (!(p >= 1.0)) {
        throw Error(Errc::domain, "p must be >= 1");
    }
    const double vol = std::pow(kernel.lattice.dx(), kernel.params.dim);
    return lattice_lp_power(kernel.values.data(), kernel.values.size(), vol, p);
}

double scaling_exponent(const ModelParams& params, double p, ScalingKind kind) {
    const double a = params.alpha, b = params.beta, g = params.gamma;
    const double d = params.dim;
    if (kind == ScalingKind::kernel) {
        return p * (b + g - 1.0) + (b * d / a) * (1.0 - p);
    }
    return p * (b + g - 1.0) + (b / a) * (d - p * d - p);
}

ScalingFit scaling_fit(const ModelParams& params, const LatticeSpec& lattice, double p,
                       ScalingKind kind, const std::vector<double>& times,
                       const BuildOptions& options) {
    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    if (std::unique(sorted.begin(), sorted.end()) - sorted.begin() < 3) {
        throw Error(Errc::domain, "scaling fit needs at least 3 distinct times");
    }
    ScalingFit fit;
    fit.times = times;
    std::vector<double> lx, ly;
    for (double t : times) {
        const KernelGrid g = kind == ScalingKind::kernel
                                 ? build_kernel(params, lattice, KernelKind::Y, t, options)
                                 : build_gradient(params, lattice, t, 0, options);
        const double n = lp_norm(g, p);
        fit.norms.push_back(n);
        lx.push_back(std::log(t));
        ly.push_back(std::log(n));
    }
    fit.slope = least_squares_slope(lx, ly);
    return fit;
}

double fit_scaling_slope(const ModelParams& params, const LatticeSpec& lattice, double p,
                         ScalingKind kind, const std::vector<double>& times,
                         const BuildOptions& options) {
    return scaling_fit(params, lattice, p, kind, times, options).slope;
}

double tail_exponent_check(const KernelGrid& kernel) {
    if (kernel.params.alpha == 2.0) {
        throw Error(Errc::domain, "alpha = 2 kernels decay exponentially; no power tail to fit");
    }
    const int dim = kernel.params.dim;
    const std::size_t m = kernel.lattice.points;
    const double L = kernel.lattice.half_width;
    const double dx = kernel.lattice.dx();
    double peak = 0.0;
    for (double v : kernel.values) {
        peak = std::max(peak, std::abs(v));
    }
    std::vector<double> lx, ly;
    for (std::size_t idx = 0; idx < kernel.values.size(); ++idx) {
        std::size_t rest = idx;
        double r2 = 0.0;
        double along = 0.0;
        for (int a = dim - 1; a >= 0; --a) {
            const double x = -L + static_cast<double>(rest % m) * dx;
            rest /= m;
            r2 += x * x;
            if (a == kernel.axis) {
                along = std::abs(x);
            }
        }
        const double r = std::sqrt(r2);
        if (r < 0.05 * L || r > 0.5 * L) {
            continue;
        }
        // Off-axis gradient samples are suppressed by the angular factor.
        if (kernel.which == KernelKind::GradY && dim > 1 && along < 0.5 * r) {
            continue;
        }
        const double v = std::abs(kernel.values[idx]);
        if (v < 1e-13 * peak) {
            throw Error(Errc::resolution_insufficient,
                        "kernel tail is below the numerical noise floor; shrink the lattice");
        }
        lx.push_back(std::log(r));
        ly.push_back(std::log(v));
    }
    if (lx.size() < 3) {
        throw Error(Errc::resolution_insufficient, "too few lattice points in the tail window");
    }
    return least_squares_slope(lx, ly);
}

}  // namespace fspde
