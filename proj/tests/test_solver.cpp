#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "fspde/error.hpp"
#include "fspde/solver.hpp"

using namespace fspde;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> on_lattice(const LatticeSpec& lattice, double (*fn)(double)) {
    std::vector<double> out(lattice.points);
    for (std::size_t j = 0; j < out.size(); ++j) {
        out[j] = fn(-lattice.half_width + lattice.dx() * j);
    }
    return out;
}

double norm_p(const std::vector<double>& v, double p, double vol) {
    return std::pow(lattice_lp_power(v.data(), v.size(), vol, p), 1.0 / p);
}

FieldPath path_with_norms(const std::vector<double>& norms, double dt) {
    FieldPath path;
    path.steps = norms.size() - 1;
    path.dt = dt;
    path.params = {2, 1, 0, 1, 1, 2};
    path.lattice = {0.5, 8};  // dx = 1/8, eight cells: norm of a constant c is c
    path.values.assign(norms.size() * 8, 0.0);
    for (std::size_t k = 0; k < norms.size(); ++k) {
        std::fill(path.row(k), path.row(k) + 8, norms[k]);
    }
    path.refresh_norms();
    return path;
}

double final_rel_l2(const FieldPath& a, const FieldPath& b) {
    const double* x = a.row(a.steps);
    const double* y = b.row(b.steps);
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < a.cells(); ++j) {
        num += (x[j] - y[j]) * (x[j] - y[j]);
        den += y[j] * y[j];
    }
    return std::sqrt(num / den);
}

double smooth_u0(double x) { return 0.5 + std::cos(x) + 0.2 * std::cos(3 * x); }

SolverConfig linear_config(const ModelParams& params, std::size_t steps) {
    SolverConfig c;
    c.params = params;
    c.lattice = {kPi, 16};
    c.horizon = 1.0;
    c.time_steps = steps;
    c.regime = NoiseRegime::white;
    c.tol = 1e-13;
    c.max_picard = 60;
    return c;
}

NonlinearitySpec linear_spec(double lambda) {
    NonlinearitySpec s;
    s.f = [lambda](double, const double*, double z) { return lambda * z; };
    s.lipschitz_global = true;
    return s;
}

}  // namespace

TEST_CASE("J0 degenerate cases") {
    const LatticeSpec lat{8.0, 64};
    const ModelParams frac{1.8, 0.7, 0.2, 1.0, 1, 2.0};
    const double vol = lat.dx();

    std::vector<double> impulse(64, 0.0);
    impulse[32] = 1.0 / vol;
    const auto j0 = j0_term(impulse, nullptr, frac, lat, 0.5);
    const auto z = build_kernel(frac, lat, KernelKind::Z, 0.5, {0.0, false});
    for (std::size_t j = 0; j < 64; ++j) {
        CHECK(j0[j] == doctest::Approx(z.values[j]).epsilon(1e-12).scale(1.0));
    }

    const auto flat = j0_term(std::vector<double>(64, 2.5), nullptr, frac, lat, 0.7);
    for (double v : flat) CHECK(v == doctest::Approx(2.5).epsilon(1e-13));

    const ModelParams wave{1.8, 1.4, 0.0, 1.0, 1, 2.0};
    const std::vector<double> zero(64, 0.0), c(64, 0.8);
    for (double t : {0.3, 1.0, 2.0}) {
        const auto v = j0_term(zero, &c, wave, lat, t);
        for (double x : v) CHECK(x == doctest::Approx(0.8 * t).epsilon(1e-12));
    }
    try {
        j0_term(zero, nullptr, wave, lat, 1.0);
        FAIL("expected u1-missing");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::u1_missing);
    }
}

TEST_CASE("truncation map") {
    const double vol = 0.1;
    std::vector<double> u(40);
    for (std::size_t j = 0; j < u.size(); ++j) u[j] = std::sin(0.4 * j) + 0.3;
    const double nu = norm_p(u, 1.5, vol);

    CHECK(truncate_lp(u, 2.0 * nu, 1.5, vol) == u);
    const auto scaled = truncate_lp(u, nu / 2.0, 1.5, vol);
    CHECK(norm_p(scaled, 1.5, vol) == doctest::Approx(nu / 2.0).epsilon(1e-14));
    for (std::size_t j = 0; j < u.size(); ++j) CHECK(scaled[j] == doctest::Approx(u[j] / 2.0));

    std::mt19937_64 eng(21);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> up(1.0, 3.0), un(0.1, 5.0), us(0.1, 4.0);
    for (int trial = 0; trial < 2000; ++trial) {
        const double p = up(eng), n = un(eng);
        const double su = us(eng), sv = us(eng);
        std::vector<double> a(40), b(40), diff(40), tdiff(40);
        for (std::size_t j = 0; j < 40; ++j) {
            a[j] = su * g(eng);
            b[j] = sv * g(eng);
            diff[j] = a[j] - b[j];
        }
        const auto ta = truncate_lp(a, n, p, vol), tb = truncate_lp(b, n, p, vol);
        for (std::size_t j = 0; j < 40; ++j) tdiff[j] = ta[j] - tb[j];
        CHECK(norm_p(ta, p, vol) <= n * (1 + 1e-14));
        CHECK(norm_p(tdiff, p, vol) <= norm_p(diff, p, vol) + 1e-12);
    }
}

TEST_CASE("weighted norm and stopping detection") {
    const auto flat = path_with_norms(std::vector<double>(11, 3.0), 0.1);
    CHECK(flat.lp_per_time[4] == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(weighted_norm(flat, 0.0, 2.0) == doctest::Approx(3.0));
    CHECK(weighted_norm(flat, 4.0, 2.0) == doctest::Approx(3.0));

    std::vector<double> growth(101);
    for (std::size_t k = 0; k < growth.size(); ++k) growth[k] = std::exp(2.0 * 0.01 * k);
    CHECK(weighted_norm(path_with_norms(growth, 0.01), 2.0, 2.0) == doctest::Approx(1.0).epsilon(1e-12));

    const auto zero = path_with_norms({0, 0, 0, 0}, 0.25);
    CHECK_FALSE(detect_stopping(zero, 1.0, 2.0).hit);
    CHECK(detect_stopping(zero, 1.0, 2.0).time == 0.75);

    const auto steps = path_with_norms({0.5, 1.5, 3.0}, 0.2);
    const auto s = detect_stopping(steps, 1.0, 2.0);
    CHECK(s.hit);
    CHECK(s.time == doctest::Approx(0.2));
    CHECK(detect_stopping(steps, 1.5, 2.0).time == doctest::Approx(0.2));
    CHECK(detect_stopping(steps, 0.5, 2.0).time == 0.0);

    std::mt19937_64 eng(4);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::vector<double> rough(30);
    for (double& v : rough) v = u(eng);
    const auto path = path_with_norms(rough, 0.1);
    double prev = -1.0;
    for (double n = 0.5; n < 12.0; n += 0.25) {
        const double t = detect_stopping(path, n, 2.0).time;
        CHECK(t >= prev);
        prev = t;
    }
}

TEST_CASE("zero coefficients and zero noise give the J0 path") {
    SolverConfig c;
    c.params = {1.8, 0.9, 0.2, 1.0, 1, 2.0};
    c.lattice = {6.0, 64};
    c.horizon = 0.5;
    c.time_steps = 16;
    c.truncation_level = 100.0;
    const auto u0 = on_lattice(c.lattice, [](double x) { return std::exp(-x * x); });

    const NonlinearitySpec none;
    const auto r = solve(c, none, FrozenNoise{}, u0);
    CHECK(r.converged);
    CHECK_FALSE(r.tau_hit);
    CHECK(r.tau_n == c.horizon);
    for (std::size_t k = 0; k <= c.time_steps; ++k) {
        const auto j0 = j0_term(u0, nullptr, c.params, c.lattice, k * c.dt());
        for (std::size_t j = 0; j < 64; ++j) CHECK(std::abs(r.path.row(k)[j] - j0[j]) <= 1e-13);
    }

    // picard_rhs with every term zero returns J0 whatever it is fed.
    FieldPath junk = r.path;
    for (double& v : junk.values) v = 7.0;
    RhsTerms terms;
    const auto out = picard_rhs(junk, FrozenNoise{}, none, c, u0, nullptr, &terms);
    CHECK(out.values == r.path.values);
    CHECK(terms.j0.values == r.path.values);
}

TEST_CASE("individual terms add up") {
    SolverConfig c;
    c.params = {1.8, 1.0, 0.0, 1.0, 1, 2.0};
    c.lattice = {5.0, 32};
    c.horizon = 0.5;
    c.time_steps = 8;
    c.regime = NoiseRegime::both;
    c.jumps = {3.0, {MarkKind::two_point, 1.0, -1.0, 0.5}};
    c.seed = 12;
    c.allow_inadmissible = true;
    NonlinearitySpec s;
    s.f = [](double, const double*, double z) { return std::sin(z); };
    s.q = {[](double, const double*, double z) { return 0.5 * z * z; }};
    s.sigma = [](double, const double*, double z) { return 0.3 + 0.1 * z; };
    s.h = [](double, const double*, double z, double xi) { return 0.2 * z * xi; };
    const auto u0 = on_lattice(c.lattice, [](double x) { return std::exp(-x * x); });
    const auto noise = sample_noise(c, s);
    REQUIRE(noise.gaussian);
    REQUIRE(noise.poisson);

    FieldPath current = solve(c, NonlinearitySpec{}, FrozenNoise{}, u0).path;
    RhsTerms terms;
    const auto out = picard_rhs(current, noise, s, c, u0, nullptr, &terms);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const double sum = terms.j0.values[i] + terms.drift.values[i] + terms.flux.values[i] +
                           terms.gaussian.values[i] + terms.jump.values[i];
        CHECK(out.values[i] == doctest::Approx(sum).epsilon(1e-12).scale(1.0));
    }
    for (std::size_t j = 0; j < out.cells(); ++j) {
        CHECK(terms.drift.row(0)[j] == 0.0);
        CHECK(terms.gaussian.row(0)[j] == 0.0);
    }
}

TEST_CASE("causality under perturbed noise") {
    SolverConfig c;
    c.params = {1.8, 0.9, 0.2, 1.0, 1, 2.0};
    c.lattice = {5.0, 32};
    c.horizon = 0.5;
    c.time_steps = 12;
    c.regime = NoiseRegime::both;
    c.jumps = {2.0, {MarkKind::exponential, 0.5}};
    c.truncation_level = 50.0;
    c.seed = 3;
    c.tol = 1e-300;  // iterate until the causal map is exactly fixed
    c.max_picard = c.time_steps + 3;
    c.allow_inadmissible = true;
    NonlinearitySpec s;
    s.f = [](double, const double*, double z) { return z - z * z * z / 3.0; };
    s.sigma = [](double, const double*, double z) { return 0.5 + 0.2 * std::sin(z); };
    s.h = [](double, const double*, double z, double xi) { return 0.1 * (1.0 + z) * xi; };
    const auto u0 = on_lattice(c.lattice, [](double x) { return std::exp(-x * x); });
    const FrozenNoise base = sample_noise(c, s);
    const auto ref = solve(c, s, base, u0);
    REQUIRE(ref.converged);

    for (std::size_t k : {1u, 4u, 9u}) {
        FrozenNoise bumped = base;
        for (std::size_t i = k * 32; i < bumped.gaussian->increments.size(); ++i) {
            bumped.gaussian->increments[i] += 0.37;
        }
        for (auto& e : bumped.poisson->events) {
            if (e.step >= k) e.mark *= 3.0;
        }
        const auto alt = solve(c, s, bumped, u0);
        INFO("k=" << k);
        for (std::size_t row = 0; row <= k; ++row) {
            CHECK(std::equal(ref.path.row(row), ref.path.row(row) + 32, alt.path.row(row)));
        }
        CHECK_FALSE(std::equal(ref.path.row(k + 1), ref.path.row(k + 1) + 32, alt.path.row(k + 1)));
    }
}

TEST_CASE("stochastic convolution variance matches the kernel") {
    SolverConfig c;
    c.params = {1.8, 0.9, 0.3, 1.0, 1, 2.0};
    c.lattice = {4.0, 32};
    c.horizon = 0.5;
    c.time_steps = 8;
    c.regime = NoiseRegime::white;
    NonlinearitySpec s;
    s.sigma = [](double, const double*, double) { return 1.0; };
    const std::vector<double> u0(32, 0.0);

    const int replicas = 4000;
    std::vector<double> sum(33 * 32, 0.0), sum2(33 * 32, 0.0);
    for (int r = 0; r < replicas; ++r) {
        c.path = r;
        const auto res = solve(c, s, u0);
        for (std::size_t i = 0; i < res.path.values.size(); ++i) {
            sum[i] += res.path.values[i];
            sum2[i] += res.path.values[i] * res.path.values[i];
        }
    }
    const double dt = c.dt();
    for (std::size_t k : {1u, 4u, 8u}) {
        double exact = 0.0;
        for (std::size_t m = 0; m < k; ++m) {
            const auto y = build_kernel(c.params, c.lattice, KernelKind::Y, (k - m - 0.5) * dt, {0.0, false});
            exact += dt * lp_norm(y, 2.0);
        }
        double var = 0.0;
        for (std::size_t j = 0; j < 32; ++j) {
            const double mean = sum[k * 32 + j] / replicas;
            var += (sum2[k * 32 + j] / replicas - mean * mean) / 32.0;
        }
        INFO("k=" << k);
        CHECK(var / exact == doctest::Approx(1.0).epsilon(0.05));
    }
}

TEST_CASE("volterra oracle") {
    const LatticeSpec lat{kPi, 16};
    const auto u0 = on_lattice(lat, smooth_u0);
    const ModelParams heat{2, 1, 0, 1, 1, 2};
    const ModelParams frac{1.8, 0.8, 0.2, 1, 1, 2};

    SUBCASE("lambda = 0 is J0") {
        for (const auto& p : {heat, frac}) {
            const auto o = volterra_oracle(p, lat, 0.0, u0, 8, 0.125);
            for (std::size_t k = 0; k <= 8; ++k) {
                const auto j0 = j0_term(u0, nullptr, p, lat, k * 0.125);
                for (std::size_t j = 0; j < 16; ++j) {
                    CHECK(o.row(k)[j] == doctest::Approx(j0[j]).epsilon(1e-12).scale(1.0));
                }
            }
        }
    }
    SUBCASE("heat modes grow like exp((lambda - |xi|^2 / 2) t)") {
        // Product trapezoid on h = 1/2048: O(h^2) error well under 1e-8.
        const auto o = volterra_oracle(heat, lat, 0.3, u0, 512, 1.0 / 512);
        for (std::size_t k : {128u, 512u}) {
            const double t = k / 512.0;
            for (std::size_t j = 0; j < 16; ++j) {
                const double x = -kPi + lat.dx() * j;
                const double exact = 0.5 * std::exp(0.3 * t) + std::exp((0.3 - 0.5) * t) * std::cos(x) +
                                     0.2 * std::exp((0.3 - 4.5) * t) * std::cos(3 * x);
                CHECK(std::abs(o.row(k)[j] - exact) <= 1e-8);
            }
        }
    }
    SUBCASE("halving the oracle step changes little") {
        const auto coarse = volterra_oracle(frac, lat, 0.3, u0, 256, 1.0 / 256, nullptr, 4);
        const auto fine = volterra_oracle(frac, lat, 0.3, u0, 256, 1.0 / 256, nullptr, 8);
        CHECK(final_rel_l2(coarse, fine) < 1e-7);
    }
    SUBCASE("second-order problems need u1") {
        const ModelParams wave{1.8, 1.4, 0.0, 1, 1, 2};
        CHECK_THROWS_AS(volterra_oracle(wave, lat, 0.3, u0, 8, 0.125), Error);
        const std::vector<double> u1(16, 0.0);
        CHECK_NOTHROW(volterra_oracle(wave, lat, 0.3, u0, 8, 0.125, &u1));
    }
}

TEST_CASE("solver against the oracle") {
    const auto u0 = on_lattice({kPi, 16}, smooth_u0);
    // Heat: u is sampled at left endpoints, so the error is first order, about 0.04 / K.
    {
        std::vector<double> heat;
        for (std::size_t steps : {256u, 1024u}) {
            const auto c = linear_config({2, 1, 0, 1, 1, 2}, steps);
            const auto r = solve(c, linear_spec(0.3), u0);
            const auto o = volterra_oracle(c.params, c.lattice, 0.3, u0, steps, c.dt());
            heat.push_back(final_rel_l2(r.path, o));
        }
        CHECK(heat[1] < 5e-5);
        CHECK(heat[0] / heat[1] == doctest::Approx(4.0).epsilon(0.1));
    }
    // Fractional: first order in dt.
    std::vector<double> errors;
    for (std::size_t steps : {64u, 256u, 1024u}) {
        const auto c = linear_config({1.8, 0.8, 0.2, 1, 1, 2}, steps);
        const auto r = solve(c, linear_spec(0.3), u0);
        CHECK(r.converged);
        const auto o = volterra_oracle(c.params, c.lattice, 0.3, u0, steps, c.dt());
        errors.push_back(final_rel_l2(r.path, o));
    }
    CHECK(errors.back() < 1e-4);
    for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
        const double order = std::log(errors[i] / errors[i + 1]) / std::log(4.0);
        CHECK(order > 0.85);
        CHECK(order < 1.3);
    }
}

namespace {

// Largest ratio delta[k+1] / delta[k], k >= 2, while the deltas stay above roundoff.
double picard_ratio(const std::vector<double>& deltas) {
    double rho = 0.0;
    for (std::size_t k = 2; k + 1 < deltas.size(); ++k) {
        if (deltas[k + 1] < 1e-11 * deltas[0]) break;
        rho = std::max(rho, deltas[k + 1] / deltas[k]);
    }
    return rho;
}

}  // namespace

TEST_CASE("weighted-norm contraction improves with kappa") {
    std::mt19937_64 eng(1);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        const double a = 3 * u(eng), b = u(eng), c0 = u(eng), e = 0.5 * u(eng);
        const double alpha = 1.6 + 0.4 * u(eng);
        NonlinearitySpec s;
        s.f = [=](double, const double*, double z) { return a * std::sin(z) + b * z; };
        s.sigma = [=](double, const double*, double z) { return c0 + e * std::tanh(z); };
        s.lipschitz_global = true;
        std::vector<double> rho;
        for (double kappa : {0.0, 5.0, 20.0}) {
            SolverConfig c;
            c.params = {alpha, 1.0, 0.0, 1.0, 1, 2.0};
            c.lattice = {10.0, 256};
            c.time_steps = 64;
            c.regime = NoiseRegime::white;
            c.kappa = kappa;
            c.tol = 1e-14;
            c.max_picard = 40;
            c.seed = 5;
            const auto u0 = on_lattice(c.lattice, [](double x) { return std::exp(-x * x); });
            const auto r = solve(c, s, u0);
            CHECK(r.converged);
            rho.push_back(picard_ratio(r.picard_deltas));
        }
        INFO("trial " << trial << " rho " << rho[0] << " " << rho[1] << " " << rho[2]);
        CHECK(rho[2] < 0.8);
        CHECK(rho[2] < rho[1]);
        CHECK(rho[1] < rho[0]);
    }
}

namespace {

SolverConfig growth_config(double n) {
    SolverConfig c;
    c.params = {1.8, 1.0, 0.0, 1.0, 1, 2.0};
    c.lattice = {kPi, 64};
    c.horizon = 2.0;
    c.time_steps = 64;
    c.regime = NoiseRegime::jump;
    c.jumps = {1.0, {MarkKind::two_point, 1.0, -1.0, 0.5}};
    c.truncation_level = n;
    c.seed = 8;
    c.tol = 1e-13;
    c.max_picard = 200;
    return c;
}

NonlinearitySpec growth_spec() {
    NonlinearitySpec s;
    s.f = [](double, const double*, double z) { return 2.0 * z; };
    s.h = [](double, const double*, double z, double xi) { return 0.3 * z * xi; };
    return s;
}

}  // namespace

TEST_CASE("stopping times are monotone and solves paste together") {
    const auto spec = growth_spec();
    const auto u0 = on_lattice({kPi, 64}, [](double x) { return 0.2 + 0.3 * std::cos(x); });
    const FrozenNoise noise = sample_noise(growth_config(1.0), spec);

    std::vector<SolveResult> runs;
    for (double n : {1.0, 2.0, 4.0, 8.0}) {
        runs.push_back(solve(growth_config(n), spec, noise, u0));
        CHECK(runs.back().converged);
    }
    CHECK(runs[0].tau_hit);
    for (std::size_t i = 0; i + 1 < runs.size(); ++i) {
        CHECK(runs[i].tau_n <= runs[i + 1].tau_n);
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const std::size_t rows = static_cast<std::size_t>(std::ceil(runs[i].tau_n / runs[i].path.dt - 1e-9));
        for (std::size_t m = i + 1; m < runs.size(); ++m) {
            for (std::size_t k = 0; k < rows; ++k) {
                for (std::size_t j = 0; j < 64; ++j) {
                    CHECK(std::abs(runs[i].path.row(k)[j] - runs[m].path.row(k)[j]) <= 1e-9);
                }
            }
        }
    }
}

TEST_CASE("global mode equals a truncated solve with an unreachable level") {
    auto c = growth_config(std::numeric_limits<double>::infinity());
    c.horizon = 0.5;
    auto spec = growth_spec();
    spec.lipschitz_global = true;
    const auto u0 = on_lattice({kPi, 64}, [](double x) { return 0.2 + 0.3 * std::cos(x); });
    const FrozenNoise noise = sample_noise(c, spec);
    const auto global = solve(c, spec, noise, u0);
    const double sup = *std::max_element(global.path.lp_per_time.begin(), global.path.lp_per_time.end());

    spec.lipschitz_global = false;
    c.truncation_level = 2.0 * sup;
    const auto truncated = solve(c, spec, noise, u0);
    CHECK_FALSE(truncated.tau_hit);
    CHECK(truncated.path.values == global.path.values);
    CHECK(truncated.picard_deltas == global.picard_deltas);
}

TEST_CASE("refusals") {
    SolverConfig c;
    c.params = {2, 1, 0, 1, 2, 2};  // white noise in d = 2: margin 0
    c.lattice = {5.0, 16};
    c.time_steps = 4;
    c.regime = NoiseRegime::white;
    NonlinearitySpec s;
    s.sigma = [](double, const double*, double) { return 1.0; };
    const std::vector<double> u0(256, 0.0);
    try {
        solve(c, s, u0);
        FAIL("expected inadmissible-params");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::inadmissible_params);
        CHECK(std::string(e.what()).find("Ito-isometry exponent") != std::string::npos);
    }
    c.allow_inadmissible = true;
    CHECK_NOTHROW(solve(c, s, u0));

    // White noise is only admitted at p = 2.
    SolverConfig w;
    w.params = {2, 1, 0, 1, 1, 1.5};
    w.regime = NoiseRegime::white;
    const auto reports = admissibility(w);
    CHECK(std::any_of(reports.begin(), reports.end(), [](const AdmissibilityReport& r) { return !r.satisfied; }));

    // A map that does not contract on the horizon.
    SolverConfig d;
    d.params = {2, 1, 0, 1, 1, 2};
    d.lattice = {kPi, 16};
    d.time_steps = 32;
    d.horizon = 1.0;
    d.max_picard = 4;
    d.tol = 1e-14;
    NonlinearitySpec grow;
    grow.f = [](double, const double*, double z) { return 40.0 * z; };
    grow.lipschitz_global = true;
    try {
        solve(d, grow, FrozenNoise{}, on_lattice(d.lattice, smooth_u0));
        FAIL("expected no-convergence");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::no_convergence);
    }

    SolverConfig bad;
    bad.tol = 0.0;
    CHECK_THROWS_AS(validate(bad), Error);
}
