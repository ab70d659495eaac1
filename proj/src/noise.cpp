#include "fspde/noise.hpp"

#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <limits>

#include "fspde/error.hpp"

namespace fspde {

double TimeGrid::cell_volume() const { return std::pow(lattice.dx(), dim); }

void validate(const TimeGrid& grid) {
    if (grid.steps == 0 || !(grid.dt > 0.0) || !std::isfinite(grid.dt)) {
        throw Error(Errc::domain, "time grid needs steps >= 1 and dt > 0");
    }
    if (grid.dim < 1 || grid.dim > 3) {
        throw Error(Errc::domain, "dim must be 1, 2 or 3");
    }
    validate(grid.lattice);
}

GaussianSheet sample_gaussian(const TimeGrid& grid, std::uint64_t seed, std::uint64_t path) {
    validate(grid);
    GaussianSheet sheet;
    sheet.seed = seed;
    sheet.grid = grid;
    sheet.increments.resize(grid.steps * grid.cells());
    Engine eng = make_engine(seed, path, StreamTag::gaussian);
    std::normal_distribution<double> normal(0.0, std::sqrt(sheet.variance()));
    for (double& v : sheet.increments) {
        v = normal(eng);
    }
    return sheet;
}

double MarkDistribution::sample(Engine& engine) const {
    switch (kind) {
        case MarkKind::point: return a;
        case MarkKind::exponential: return std::exponential_distribution<double>(1.0 / a)(engine);
        case MarkKind::two_point:
            return std::uniform_real_distribution<double>(0.0, 1.0)(engine) < prob ? a : b;
    }
    return a;
}

double MarkDistribution::expect(const std::function<double(double)>& fn) const {
    switch (kind) {
        case MarkKind::point: return fn(a);
        case MarkKind::two_point: return prob * fn(a) + (1.0 - prob) * fn(b);
        case MarkKind::exponential: {
            static thread_local boost::math::quadrature::exp_sinh<double> integrator;
            const double mean = a;
            auto density = [&](double x) { return fn(x) * std::exp(-x / mean) / mean; };
            return integrator.integrate(density);  // over (0, inf)
        }
    }
    return 0.0;
}

PoissonRealization sample_poisson(const MarkIntensity& intensity, const TimeGrid& grid,
                                  std::uint64_t seed, std::uint64_t path, double max_events) {
    validate(grid);
    if (!(intensity.total_rate > 0.0) || !std::isfinite(intensity.total_rate)) {
        throw Error(Errc::domain, "jump rate must be positive and finite");
    }
    if (intensity.marks.kind == MarkKind::exponential && !(intensity.marks.a > 0.0)) {
        throw Error(Errc::domain, "exponential marks need a positive mean");
    }
    const double volume = std::pow(2.0 * grid.lattice.half_width, grid.dim);
    const double mean = intensity.total_rate * grid.horizon() * volume;
    if (mean > max_events) {
        throw Error(Errc::rate_too_high, "expected " + std::to_string(mean) +
                                             " events exceeds the cap of " +
                                             std::to_string(max_events));
    }
    PoissonRealization out;
    out.intensity = intensity;
    out.seed = seed;
    out.grid = grid;

    Engine eng = make_engine(seed, path, StreamTag::poisson);
    const auto count = std::poisson_distribution<long long>(mean)(eng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> cell(0, grid.cells() - 1);
    out.events.resize(static_cast<std::size_t>(count));
    for (auto& e : out.events) {
        e.t = unit(eng) * grid.horizon();
        e.cell = cell(eng);
    }
    std::sort(out.events.begin(), out.events.end(),
              [](const PoissonEvent& x, const PoissonEvent& y) { return x.t < y.t; });
    Engine mark_eng = make_engine(seed, path, StreamTag::marks);
    for (auto& e : out.events) {
        e.step = std::min(grid.steps - 1, static_cast<std::size_t>(e.t / grid.dt));
        e.mark = intensity.marks.sample(mark_eng);
    }
    return out;
}

double integrate_gaussian(const std::vector<double>& phi, const GaussianSheet& sheet,
                          std::size_t horizon) {
    if (phi.size() != sheet.increments.size()) {
        throw Error(Errc::shape_mismatch, "integrand has " + std::to_string(phi.size()) +
                                              " entries, sheet has " +
                                              std::to_string(sheet.increments.size()));
    }
    const std::size_t steps = std::min(horizon, sheet.grid.steps);
    const std::size_t n = steps * sheet.grid.cells();
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sum += phi[i] * sheet.increments[i];
    }
    return sum;
}

double compensator(const JumpIntegrand& h, const PoissonRealization& realization) {
    const TimeGrid& g = realization.grid;
    double sum = 0.0;
    for (std::size_t k = 0; k < g.steps; ++k) {
        for (std::size_t j = 0; j < g.cells(); ++j) {
            sum += realization.intensity.marks.expect([&](double xi) { return h(k, j, xi); });
        }
    }
    return realization.intensity.total_rate * g.dt * g.cell_volume() * sum;
}

double integrate_compensated(const JumpIntegrand& h, const PoissonRealization& realization) {
    double jumps = 0.0;
    for (const auto& e : realization.events) {
        jumps += h(e.step, e.cell, e.mark);
    }
    return jumps - compensator(h, realization);
}

double integrate_compensated(const std::vector<double>& amplitude,
                             const std::function<double(double)>& mark_fn,
                             const PoissonRealization& realization) {
    const TimeGrid& g = realization.grid;
    if (amplitude.size() != g.steps * g.cells()) {
        throw Error(Errc::shape_mismatch, "jump amplitude has " + std::to_string(amplitude.size()) +
                                              " entries, grid has " +
                                              std::to_string(g.steps * g.cells()));
    }
    double jumps = 0.0;
    for (const auto& e : realization.events) {
        jumps += amplitude[e.step * g.cells() + e.cell] * mark_fn(e.mark);
    }
    double total = 0.0;
    for (double v : amplitude) {
        total += v;
    }
    const double mean_mark = realization.intensity.marks.expect(mark_fn);
    return jumps - realization.intensity.total_rate * g.dt * g.cell_volume() * total * mean_mark;
}

double isometry_variance(const std::vector<double>& phi, const TimeGrid& grid) {
    double sum = 0.0;
    for (double v : phi) {
        sum += v * v;
    }
    return sum * grid.dt * grid.cell_volume();
}

double jump_moment(const std::vector<double>& amplitude,
                   const std::function<double(double)>& mark_fn, const MarkIntensity& intensity,
                   const TimeGrid& grid, double p) {
    double sum = 0.0;
    for (double v : amplitude) {
        sum += std::pow(std::abs(v), p);
    }
    const double mark_moment =
        intensity.marks.expect([&](double xi) { return std::pow(std::abs(mark_fn(xi)), p); });
    return intensity.total_rate * grid.dt * grid.cell_volume() * sum * mark_moment;
}

}  // namespace fspde
