#pragma once

#include <cstddef>
#include <memory>
#include <vector>

#include "fspde/specialfn.hpp"

namespace fspde {

/// Orders and constants of the equation
///   (d_t^beta + nu/2 (-Delta)^{alpha/2}) u = I_t^gamma [ ... ]
/// together with the L^p index used for norms and admissibility.
struct ModelParams {
    double alpha = 2.0;  ///< space-fractional order, > 0
    double beta = 1.0;   ///< Caputo order, in (0, 2)
    double gamma = 0.0;  ///< Riemann-Liouville smoothing order, >= 0
    double nu = 1.0;     ///< diffusivity, > 0
    int dim = 1;         ///< spatial dimension, 1..3
    double p = 2.0;      ///< L^p index, in [1, 2]
};

/// Throws Error{domain} if any field is out of range.
void validate(const ModelParams& params);

/// Periodic lattice on [-L, L)^dim with M points per axis; x_j = -L + j dx.
struct LatticeSpec {
    double half_width = 20.0;      ///< L
    std::size_t points = 256;      ///< M, a power of two in [8, 1024]
    double dx() const { return 2.0 * half_width / static_cast<double>(points); }
    std::size_t cells(int dim) const;
};

void validate(const LatticeSpec& lattice);

/// 20 (nu t^beta)^{1/alpha}: several diffusion lengths at time t.
double default_half_width(const ModelParams& params, double t);

enum class KernelKind { Z, Y, Zstar, GradY };

const char* to_string(KernelKind kind);

/// Radial Fourier transform of a kernel at |xi|:
///   Z     t^{ceil(beta)-1} E_{beta,ceil(beta)}(-nu/2 t^beta |xi|^alpha)
///   Y     t^{beta+gamma-1} E_{beta,beta+gamma}(...)
///   Zstar E_{beta,1}(...)  (time derivative of Z; only used for beta > 1)
/// GradY has no radial symbol (it is i xi_axis times that of Y) and is
/// rejected here.
double fourier_symbol(const ModelParams& params, KernelKind kind, double t, double xi_norm);

/// Mittag-Leffler parameters and time prefactor behind fourier_symbol, so
/// callers can tabulate E once and apply t-dependence themselves.
ml::MLParams symbol_ml_params(const ModelParams& params, KernelKind kind);
double symbol_time_factor(const ModelParams& params, KernelKind kind, double t);

/// Bulk symbol evaluation for many (t, |xi|) with t^beta |xi|^alpha bounded
/// by the value given at construction. Shares the Mittag-Leffler table.
class SymbolTable {
public:
    SymbolTable(const ModelParams& params, KernelKind kind, double t_max, double xi_max);
    double operator()(double t, double xi_norm) const;

private:
    ModelParams params_;
    KernelKind kind_;
    std::shared_ptr<const ml::MittagLefflerCurve> curve_;
};

struct BuildOptions {
    /// Largest accepted |symbol| at the axis Nyquist frequency relative to
    /// its peak. Zero disables the check.
    double resolution_tol = 1e-6;
    /// Run the decay-exponent gate before inverting.
    bool check_integrability = true;
};

/// A kernel sampled on the lattice at time t. Values are row-major with the
/// last axis fastest; index j on an axis sits at x = -L + j dx, so the
/// origin is at j = M/2.
struct KernelGrid {
    double time = 0.0;
    std::vector<double> values;
    KernelKind which = KernelKind::Y;
    int axis = 0;  ///< derivative axis for GradY
    ModelParams params;
    LatticeSpec lattice;
};

/// Decay exponent s of |symbol| ~ |xi|^{-s}, fitted over the top frequency
/// decade of the lattice. Infinity when the symbol is exponentially small
/// there. For GradY the factor |xi| is included.
double symbol_decay_exponent(const ModelParams& params, const LatticeSpec& lattice,
                             KernelKind kind, double t);

/// Inverse DFT of the symbol on the dual grid, scaled so that the lattice
/// integral dx^d sum(values) equals the symbol at xi = 0.
/// Errors: symbol_not_integrable when the decay exponent is <= dim,
/// resolution_insufficient when the Nyquist test fails.
KernelGrid build_kernel(const ModelParams& params, const LatticeSpec& lattice, KernelKind kind,
                        double t, const BuildOptions& options = {});

/// d/dx_axis of Y, inverted from i xi_axis FY. The Nyquist plane along the
/// axis is dropped, which makes the grid exactly antisymmetric.
KernelGrid build_gradient(const ModelParams& params, const LatticeSpec& lattice, double t,
                          int axis, const BuildOptions& options = {});

/// dx^d sum |v|^p: the p-th power of the lattice L^p norm.
double lp_norm(const KernelGrid& kernel, double p);
double lattice_lp_power(const double* values, std::size_t count, double cell_volume, double p);

enum class ScalingKind { kernel, gradient };

/// Exponent c in  int |p(t,x)|^p dx = C t^c  (kernel) and the analogue for
/// the spatial gradient.
double scaling_exponent(const ModelParams& params, double p, ScalingKind kind);

struct ScalingFit {
    std::vector<double> times;
    std::vector<double> norms;  ///< lp_norm at each time
    double slope = 0.0;         ///< least-squares slope of log norm vs log t
};

ScalingFit scaling_fit(const ModelParams& params, const LatticeSpec& lattice, double p,
                       ScalingKind kind, const std::vector<double>& times,
                       const BuildOptions& options = {});

double fit_scaling_slope(const ModelParams& params, const LatticeSpec& lattice, double p,
                         ScalingKind kind, const std::vector<double>& times,
                         const BuildOptions& options = {});

/// Log-log slope of |values| against |x| over radii [0.05 L, 0.5 L].
/// Refused for alpha == 2, where the tail is exponential.
double tail_exponent_check(const KernelGrid& kernel);

}  // namespace fspde
