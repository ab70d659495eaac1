#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "fspde/kernel.hpp"
#include "fspde/rng.hpp"

namespace fspde {

/// `steps` time cells of width dt over a dim-dimensional lattice.
struct TimeGrid {
    std::size_t steps = 1;
    double dt = 1.0;
    int dim = 1;
    LatticeSpec lattice;

    std::size_t cells() const { return lattice.cells(dim); }
    double cell_volume() const;
    double horizon() const { return dt * static_cast<double>(steps); }
};

void validate(const TimeGrid& grid);

/// White-noise increments dW over each (time cell, lattice cell), i.i.d.
/// N(0, dt dx^d), stored step-major.
struct GaussianSheet {
    std::vector<double> increments;
    std::uint64_t seed = 0;
    TimeGrid grid;

    double variance() const { return grid.dt * grid.cell_volume(); }
    const double* row(std::size_t step) const { return &increments[step * grid.cells()]; }
};

GaussianSheet sample_gaussian(const TimeGrid& grid, std::uint64_t seed, std::uint64_t path = 0);

enum class MarkKind { point, exponential, two_point };

/// Law of the jump marks xi. point: xi = a. exponential: mean a.
/// two_point: a with probability prob, b otherwise.
struct MarkDistribution {
    MarkKind kind = MarkKind::point;
    double a = 1.0;
    double b = -1.0;
    double prob = 0.5;

    double sample(Engine& engine) const;
    /// E[fn(xi)]; quadrature for the exponential law.
    double expect(const std::function<double(double)>& fn) const;
};

/// Finite-activity Levy measure: total rate (events per unit time and
/// volume) times a mark law.
struct MarkIntensity {
    double total_rate = 1.0;
    MarkDistribution marks;
};

struct PoissonEvent {
    double t = 0.0;
    std::size_t step = 0;
    std::size_t cell = 0;
    double mark = 0.0;
};

struct PoissonRealization {
    std::vector<PoissonEvent> events;  ///< sorted by time
    MarkIntensity intensity;           ///< the compensator density
    std::uint64_t seed = 0;
    TimeGrid grid;
};

/// Errors: domain for a non-positive rate, rate_too_high when the expected
/// number of events exceeds max_events.
PoissonRealization sample_poisson(const MarkIntensity& intensity, const TimeGrid& grid,
                                  std::uint64_t seed, std::uint64_t path = 0,
                                  double max_events = 1e7);

/// sum phi[k, j] dW[k, j] over steps k < horizon (all steps by default).
/// phi has the sheet's shape; Error{shape_mismatch} otherwise.
double integrate_gaussian(const std::vector<double>& phi, const GaussianSheet& sheet,
                          std::size_t horizon = static_cast<std::size_t>(-1));

/// h(step, cell, mark) against the compensated measure: the sum over events
/// minus rate * dt * dx^d * sum_{k,j} E[h(k, j, xi)].
using JumpIntegrand = std::function<double(std::size_t step, std::size_t cell, double mark)>;

double integrate_compensated(const JumpIntegrand& h, const PoissonRealization& realization);

/// Separable form h = amplitude[k, j] * mark_fn(xi); amplitude must have the
/// realization's shape.
double integrate_compensated(const std::vector<double>& amplitude,
                             const std::function<double(double)>& mark_fn,
                             const PoissonRealization& realization);

/// The deterministic part alone: rate * dt * dx^d * sum E[h].
double compensator(const JumpIntegrand& h, const PoissonRealization& realization);

/// Exact right-hand side of the isometry, sum phi^2 dt dx^d.
double isometry_variance(const std::vector<double>& phi, const TimeGrid& grid);

/// int int int |h|^p ds dx mu(dxi) for a separable integrand.
double jump_moment(const std::vector<double>& amplitude,
                   const std::function<double(double)>& mark_fn, const MarkIntensity& intensity,
                   const TimeGrid& grid, double p);

}  // namespace fspde
