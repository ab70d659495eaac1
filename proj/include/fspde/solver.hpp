#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "fspde/conditions.hpp"
#include "fspde/kernel.hpp"
#include "fspde/noise.hpp"

namespace fspde {

/// Coefficients of the mild equation. An empty function is the zero map and
/// its term is skipped. x points at dim coordinates of the lattice cell.
struct NonlinearitySpec {
    using Field = std::function<double(double t, const double* x, double z)>;
    using Jump = std::function<double(double t, const double* x, double z, double xi)>;

    Field f;               ///< reaction
    std::vector<Field> q;  ///< flux per axis; empty or dim entries
    Field sigma;           ///< Gaussian amplitude
    Jump h;                ///< jump amplitude
    /// Globally Lipschitz coefficients: the solve runs without truncation.
    bool lipschitz_global = false;
    /// Declared constants of the growth and Lipschitz conditions, if known.
    std::optional<double> growth_constant;
    std::optional<double> lipschitz_constant;
};

/// u(t_k, x_j) for t_k = k dt, k = 0..steps, stored row-major by time.
struct FieldPath {
    std::size_t steps = 0;
    double dt = 0.0;
    double p = 2.0;  ///< index of the cached norms
    ModelParams params;
    LatticeSpec lattice;
    std::vector<double> values;
    std::vector<double> lp_per_time;  ///< (dx^d sum |u(t_k)|^p)^{1/p}

    std::size_t rows() const { return steps + 1; }
    std::size_t cells() const { return lattice.cells(params.dim); }
    double cell_volume() const;
    double* row(std::size_t k) { return &values[k * cells()]; }
    const double* row(std::size_t k) const { return &values[k * cells()]; }
    void refresh_norms();
};

enum class NoiseRegime { white, jump, both };

const char* to_string(NoiseRegime regime);

struct SolverConfig {
    ModelParams params;
    LatticeSpec lattice;
    double horizon = 1.0;
    std::size_t time_steps = 64;
    /// Radius n of the L^p truncation; infinity disables it.
    double truncation_level = std::numeric_limits<double>::infinity();
    double kappa = 0.0;
    std::size_t max_picard = 50;
    double tol = 1e-10;
    std::uint64_t seed = 0;
    std::uint64_t path = 0;  ///< ensemble member, selects the noise streams
    NoiseRegime regime = NoiseRegime::jump;
    MarkIntensity jumps;
    /// Run even when the admissibility check fails.
    bool allow_inadmissible = false;

    double dt() const { return horizon / static_cast<double>(time_steps); }
    TimeGrid time_grid() const;
};

void validate(const SolverConfig& config);

/// Noise frozen for the whole Picard iteration.
struct FrozenNoise {
    std::optional<GaussianSheet> gaussian;
    std::optional<PoissonRealization> poisson;
};

/// Samples whichever parts the regime and the coefficients use.
FrozenNoise sample_noise(const SolverConfig& config, const NonlinearitySpec& spec);

/// Admissibility of the configured regime, using the global variant when
/// `global` is set. White noise requires p = 2.
std::vector<AdmissibilityReport> admissibility(const SolverConfig& config, bool global = false);

/// u0 * Z at time t for beta <= 1, u0 * Zstar + u1 * Z for beta in (1, 2);
/// circular convolutions done in Fourier space. Error{u1_missing} if
/// beta > 1 and u1 is absent.
std::vector<double> j0_term(const std::vector<double>& u0, const std::vector<double>* u1,
                            const ModelParams& params, const LatticeSpec& lattice, double t);

/// pi_n: the field scaled onto the L^p ball of radius n if it lies outside.
std::vector<double> truncate_lp(const std::vector<double>& field, double n, double p,
                                double cell_volume);

struct RhsTerms {
    FieldPath j0;
    FieldPath drift;     ///< Y * f
    FieldPath flux;      ///< - sum_j d_j Y * q_j
    FieldPath gaussian;  ///< Y * sigma dW
    FieldPath jump;      ///< Y * h dM
};

/// One application of the truncated mild map to `current`. Row k uses rows
/// < k of `current` and noise from steps < k only. The Duhamel integral is
/// a left-rectangle sum in s with the kernel taken at lag midpoints
/// (k - m - 1/2) dt. When `terms` is given the pieces are also returned.
FieldPath picard_rhs(const FieldPath& current, const FrozenNoise& noise,
                     const NonlinearitySpec& spec, const SolverConfig& config,
                     const std::vector<double>& u0, const std::vector<double>* u1 = nullptr,
                     RhsTerms* terms = nullptr);

struct StoppingTime {
    double time = 0.0;  ///< horizon when never hit
    bool hit = false;
};

/// First lattice time with ||u(t_k)||_p >= n.
StoppingTime detect_stopping(const FieldPath& path, double n, double p);

/// max_k e^{-kappa t_k} ||u(t_k)||_p.
double weighted_norm(const FieldPath& path, double kappa, double p);

struct SolveResult {
    FieldPath path;
    double tau_n = 0.0;
    bool tau_hit = false;
    std::vector<double> picard_deltas;
    bool converged = false;
    std::size_t iterations = 0;
};

/// Picard iteration from u = J0 until the weighted-norm change drops to tol.
/// Errors: inadmissible_params (unless allowed), no_convergence when
/// max_picard is reached without the deltas decreasing.
SolveResult solve(const SolverConfig& config, const NonlinearitySpec& spec,
                  const std::vector<double>& u0, const std::vector<double>* u1 = nullptr);

/// Same, on a given noise realization.
SolveResult solve(const SolverConfig& config, const NonlinearitySpec& spec,
                  const FrozenNoise& noise, const std::vector<double>& u0,
                  const std::vector<double>* u1 = nullptr);

/// Reference for the linear deterministic case f(z) = lambda z: every Fourier
/// mode solves u(t) = J0(t) + lambda int_0^t FY(t - s) u(s) ds, integrated
/// with product trapezoid weights (exact moments of FY against hat
/// functions) on a grid `refine` times finer than `steps`. Returned on the
/// coarse rows.
FieldPath volterra_oracle(const ModelParams& params, const LatticeSpec& lattice, double lambda,
                          const std::vector<double>& u0, std::size_t steps, double dt,
                          const std::vector<double>* u1 = nullptr, std::size_t refine = 4);

/// Lattice coordinates of cell `index`; out receives dim values.
void cell_coordinates(const LatticeSpec& lattice, int dim, std::size_t index, double* out);

}  // namespace fspde
