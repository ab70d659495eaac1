#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fspde/error.hpp"
#include "fspde/kernel.hpp"

using namespace fspde;

namespace {

constexpr double kPi = std::numbers::pi;

ModelParams heat() { return ModelParams{2.0, 1.0, 0.0, 1.0, 1, 2.0}; }

double x_of(const LatticeSpec& lat, std::size_t j) {
    return -lat.half_width + static_cast<double>(j) * lat.dx();
}

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return Errc::usage;
}

BuildOptions lenient() {
    BuildOptions o;
    o.resolution_tol = 0.0;
    return o;
}

}  // namespace

TEST_CASE("fourier symbols") {
    CHECK(fourier_symbol(heat(), KernelKind::Y, 1.0, 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(fourier_symbol(heat(), KernelKind::Y, 1.0, 2.0) ==
          doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
    const ModelParams z{1.5, 1.5, 0.2, 1.0, 1, 2.0};
    CHECK(fourier_symbol(z, KernelKind::Z, 1.0, 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(fourier_symbol(z, KernelKind::Zstar, 1.0, 0.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK_THROWS_AS(fourier_symbol(heat(), KernelKind::GradY, 1.0, 1.0), Error);
}

TEST_CASE("symbol table follows fourier_symbol") {
    const ModelParams m{1.7, 0.8, 0.3, 1.3, 1, 1.5};
    const SymbolTable table(m, KernelKind::Y, 2.0, 50.0);
    for (double t : {0.01, 0.3, 1.0, 2.0}) {
        for (double xi : {0.0, 0.5, 3.0, 17.0, 50.0}) {
            const double ref = fourier_symbol(m, KernelKind::Y, t, xi);
            CHECK(table(t, xi) == doctest::Approx(ref).epsilon(1e-11));
        }
    }
}

TEST_CASE("heat kernel degeneration") {
    const LatticeSpec lat{20.0, 1024};
    const KernelGrid g = build_kernel(heat(), lat, KernelKind::Y, 1.0);
    double worst = 0.0;
    for (std::size_t j = 0; j < lat.points; ++j) {
        const double x = x_of(lat, j);
        worst = std::max(worst, std::abs(g.values[j] - std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi)));
    }
    CHECK(worst < 1e-6);
    CHECK(g.values[lat.points / 2] == doctest::Approx(0.3989422804014327).epsilon(1e-9));
    CHECK(lp_norm(g, 2.0) == doctest::Approx(1.0 / std::sqrt(4.0 * kPi)).epsilon(1e-9));
    CHECK(lp_norm(g, 1.0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("heat gradient is the Gaussian derivative") {
    const LatticeSpec lat{20.0, 1024};
    const KernelGrid g = build_gradient(heat(), lat, 1.0, 0);
    double worst = 0.0;
    for (std::size_t j = 0; j < lat.points; ++j) {
        const double x = x_of(lat, j);
        worst = std::max(worst, std::abs(g.values[j] + x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi)));
    }
    CHECK(worst < 1e-6);
    CHECK(g.values[lat.points / 2] == 0.0);
}

TEST_CASE("mass equals the symbol at the origin") {
    const ModelParams m{1.8, 0.9, 0.3, 1.0, 1, 1.5};
    const LatticeSpec lat{20.0, 1024};
    const KernelGrid g = build_kernel(m, lat, KernelKind::Y, 1.0, lenient());
    double mass = 0.0;
    for (double v : g.values) mass += v;
    mass *= lat.dx();
    CHECK(mass == doctest::Approx(1.0 / std::tgamma(1.2)).epsilon(1e-12));
    CHECK(mass == doctest::Approx(1.0891225).epsilon(1e-6));

    for (double t : {0.5, 2.0}) {
        const KernelGrid gt = build_kernel(m, lat, KernelKind::Y, t, lenient());
        double s = 0.0;
        for (double v : gt.values) s += v;
        CHECK(s * lat.dx() ==
              doctest::Approx(std::pow(t, 0.2) / std::tgamma(1.2)).epsilon(1e-12));
    }
}

TEST_CASE("reflection symmetry and gradient antisymmetry") {
    for (const ModelParams& m : {heat(), ModelParams{1.8, 0.9, 0.3, 1.0, 1, 1.5},
                                 ModelParams{1.6, 1.3, 0.0, 1.0, 2, 1.5}}) {
        const LatticeSpec lat{m.dim == 1 ? 10.0 : 8.0, m.dim == 1 ? 512u : 64u};
        const std::size_t M = lat.points;
        const KernelGrid y = build_kernel(m, lat, KernelKind::Y, 1.0, lenient());
        const KernelGrid gy = build_gradient(m, lat, 1.0, 0, lenient());
        const double peak = *std::max_element(y.values.begin(), y.values.end());
        double gsum = 0.0;
        for (std::size_t i = 0; i < y.values.size(); ++i) {
            // Index of -x: j -> (M - j) mod M on each axis.
            std::size_t mirrored = 0, rest = i, stride = 1;
            for (int a = 0; a < m.dim; ++a) {
                const std::size_t j = rest % M;
                rest /= M;
                mirrored += ((M - j) % M) * stride;
                stride *= M;
            }
            CHECK(std::abs(y.values[i] - y.values[mirrored]) <= 1e-10 * peak);
            CHECK(std::abs(gy.values[i] + gy.values[mirrored]) <= 1e-10 * peak);
            gsum += gy.values[i];
        }
        CHECK(std::abs(gsum) * std::pow(lat.dx(), m.dim) < 1e-9);
    }
}

TEST_CASE("lp_norm basics") {
    KernelGrid zero;
    zero.lattice = LatticeSpec{5.0, 64};
    zero.values.assign(64, 0.0);
    CHECK(lp_norm(zero, 1.5) == 0.0);

    // p = 1 on a nonnegative kernel is its mass.
    const ModelParams m{1.8, 0.9, 0.3, 1.0, 1, 1.0};
    const KernelGrid g = build_kernel(m, LatticeSpec{20.0, 1024}, KernelKind::Y, 1.0, lenient());
    CHECK(*std::min_element(g.values.begin(), g.values.end()) >= -1e-12);
    CHECK(lp_norm(g, 1.0) ==
          doctest::Approx(fourier_symbol(m, KernelKind::Y, 1.0, 0.0)).epsilon(1e-6));
}

TEST_CASE("scaling exponents") {
    CHECK(scaling_exponent(heat(), 2.0, ScalingKind::kernel) == doctest::Approx(-0.5));
    CHECK(scaling_exponent(heat(), 2.0, ScalingKind::gradient) == doctest::Approx(-1.5));
    const ModelParams m{1.3, 0.7, 0.4, 2.0, 3, 1.0};
    CHECK(scaling_exponent(m, 1.0, ScalingKind::kernel) == doctest::Approx(0.7 + 0.4 - 1.0));
}

TEST_CASE("fitted scaling slopes") {
    const std::vector<double> three{0.5, 1.0, 2.0};
    CHECK(fit_scaling_slope(heat(), LatticeSpec{20.0, 1024}, 2.0, ScalingKind::kernel, three) ==
          doctest::Approx(-0.5).epsilon(0.02));

    const ModelParams pos{1.8, 0.9, 0.3, 1.0, 1, 1.0};
    CHECK(fit_scaling_slope(pos, LatticeSpec{20.0, 1024}, 1.0, ScalingKind::kernel, three,
                            lenient()) == doctest::Approx(0.2).epsilon(0.02));

    const ModelParams m{1.8, 0.9, 0.3, 1.0, 1, 1.5};
    const double expected = scaling_exponent(m, 1.5, ScalingKind::kernel);
    CHECK(fit_scaling_slope(m, LatticeSpec{40.0, 1024}, 1.5, ScalingKind::kernel,
                            {0.5, 0.7, 1.0, 1.4, 2.0}, lenient()) ==
          doctest::Approx(expected).epsilon(0.02));

    CHECK_THROWS_AS(fit_scaling_slope(heat(), LatticeSpec{20.0, 1024}, 2.0, ScalingKind::kernel,
                                      {1.0, 2.0}),
                    Error);
}

TEST_CASE("gradient norm ratio between t = 1 and t = 2") {
    const ModelParams m{1.8, 0.9, 0.3, 1.0, 1, 1.5};
    const LatticeSpec lat{5.0, 1024};
    const double n1 = lp_norm(build_gradient(m, lat, 1.0, 0, lenient()), 1.5);
    const double n2 = lp_norm(build_gradient(m, lat, 2.0, 0, lenient()), 1.5);
    const double expected = std::pow(2.0, scaling_exponent(m, 1.5, ScalingKind::gradient));
    CHECK(n2 / n1 == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("self-similarity of lattice norms") {
    const ModelParams m{2.0, 0.6, 0.0, 1.0, 2, 1.5};
    const LatticeSpec lat{20.0, 256};
    const double c = scaling_exponent(m, 1.5, ScalingKind::kernel);
    const double n1 = lp_norm(build_kernel(m, lat, KernelKind::Y, 0.8, lenient()), 1.5);
    const double n2 = lp_norm(build_kernel(m, lat, KernelKind::Y, 1.6, lenient()), 1.5);
    CHECK(n2 / n1 == doctest::Approx(std::pow(2.0, c)).epsilon(0.02));
}

TEST_CASE("norm is invariant under lattice shifts") {
    const ModelParams m{1.8, 0.9, 0.3, 1.0, 1, 1.5};
    const LatticeSpec lat{10.0, 256};
    const KernelGrid g = build_kernel(m, lat, KernelKind::Y, 1.0, lenient());
    const double base = lp_norm(g, 1.5);
    for (std::size_t shift : {1u, 17u, 128u}) {
        KernelGrid s = g;
        std::rotate(s.values.begin(), s.values.begin() + static_cast<long>(shift), s.values.end());
        CHECK(std::abs(lp_norm(s, 1.5) - base) <= 1e-13 * base);
    }
}

TEST_CASE("tail exponents") {
    const ModelParams m{1.5, 1.0, 0.0, 1.0, 1, 2.0};
    const LatticeSpec lat{100.0, 1024};
    const double slope = tail_exponent_check(build_kernel(m, lat, KernelKind::Y, 1.0, lenient()));
    CHECK(slope == doctest::Approx(-2.5).epsilon(0.05));
    CHECK(slope <= -2.0);
    const double gslope = tail_exponent_check(build_gradient(m, lat, 1.0, 0, lenient()));
    CHECK(gslope <= -3.0);
    const LatticeSpec heat_lat{20.0, 1024};
    CHECK(code_of([&] { tail_exponent_check(build_kernel(heat(), heat_lat, KernelKind::Y, 1.0)); }) ==
          Errc::domain);
}

TEST_CASE("refusals") {
    // E_{b,b}(-x) ~ x^-2, so the symbol decays like |xi|^{-2 alpha}.
    const ModelParams slow{0.4, 0.7, 0.0, 1.0, 1, 2.0};
    CHECK(code_of([&] { build_kernel(slow, LatticeSpec{20.0, 256}, KernelKind::Y, 1.0); }) ==
          Errc::symbol_not_integrable);
    CHECK(code_of([&] { build_kernel(heat(), LatticeSpec{20.0, 32}, KernelKind::Y, 1.0); }) ==
          Errc::resolution_insufficient);
    CHECK(code_of([&] { validate(LatticeSpec{1.0, 100}); }) == Errc::domain);
    CHECK(code_of([&] { validate(ModelParams{2.0, 2.0, 0.0, 1.0, 1, 2.0}); }) == Errc::domain);
    CHECK(code_of([&] { validate(ModelParams{2.0, 1.0, 0.0, 1.0, 4, 2.0}); }) == Errc::domain);
}
