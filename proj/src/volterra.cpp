#include <algorithm>
#include <cmath>

#include "fspde/error.hpp"
#include "fspde/solver.hpp"
#include "fspde/specialfn.hpp"
#include "spectral.hpp"

namespace fspde {

// Per mode c = nu/2 |xi|^alpha and FY(t) = t^(g-1) E_{beta,g}(-c t^beta),
// g = beta + gamma. With u linear between fine nodes the history integral is
// a sum of exact moments of FY over each cell:
//   G1(t) = int_0^t FY     = t^g     E_{beta,g+1}(-c t^beta)
//   G2(t) = int_0^t s FY   = t^(g+1) (E_{beta,g+1} - E_{beta,g+2})(-c t^beta)
FieldPath volterra_oracle(const ModelParams& params, const LatticeSpec& lattice, double lambda,
                          const std::vector<double>& u0, std::size_t steps, double dt,
                          const std::vector<double>* u1, std::size_t refine) {
    validate(params);
    validate(lattice);
    if (steps == 0 || !(dt > 0.0) || refine == 0) {
        throw Error(Errc::domain, "need steps >= 1, dt > 0 and refine >= 1");
    }
    detail::Spectral sp(params.dim, lattice);
    if (u0.size() != sp.cells()) throw Error(Errc::shape_mismatch, "u0 does not match the lattice");
    const bool second_order = params.beta > 1.0;
    if (second_order && u1 == nullptr) {
        throw Error(Errc::u1_missing, "beta > 1 needs the initial velocity u1");
    }
    if (u1 != nullptr && u1->size() != sp.cells()) {
        throw Error(Errc::shape_mismatch, "u1 does not match the lattice");
    }

    const std::size_t modes = sp.modes();
    const std::size_t n_fine = steps * refine;
    const double h = dt / static_cast<double>(refine);
    const double horizon = dt * static_cast<double>(steps);
    const double a = params.beta;
    const double g = params.beta + params.gamma;

    std::vector<cplx> u0_hat(modes), u1_hat(modes);
    sp.forward(u0.data(), u0_hat.data());
    if (u1 != nullptr) sp.forward(u1->data(), u1_hat.data());

    std::vector<char> shell_used(sp.shell_xi.size(), 0);
    for (std::size_t i = 0; i < modes; ++i) {
        if (u0_hat[i] != 0.0 || (second_order && u1_hat[i] != 0.0)) shell_used[sp.shell[i]] = 1;
    }

    const double x_max = 0.5 * params.nu * std::pow(horizon, a) *
                         std::pow(sp.max_xi(), params.alpha) * (1.0 + 1e-9);
    const ml::MittagLefflerCurve e1({a, g + 1.0}, x_max);
    const ml::MittagLefflerCurve e2({a, g + 2.0}, x_max);
    const SymbolTable z_table(params, KernelKind::Z, horizon, sp.max_xi());
    std::optional<SymbolTable> zs_table;
    if (second_order) zs_table.emplace(params, KernelKind::Zstar, horizon, sp.max_xi());

    FieldPath out;
    out.steps = steps;
    out.dt = dt;
    out.p = params.p;
    out.params = params;
    out.lattice = lattice;
    out.values.assign((steps + 1) * sp.cells(), 0.0);
    std::vector<cplx> coarse((steps + 1) * modes, 0.0);

    detail::parallel_for(sp.shell_xi.size(), [&](std::size_t s) {
        if (!shell_used[s]) return;
        const double xi = sp.shell_xi[s];
        const double c = 0.5 * params.nu * std::pow(xi, params.alpha);
        std::vector<double> g1(n_fine + 1), g2(n_fine + 1);
        for (std::size_t i = 0; i <= n_fine; ++i) {
            const double t = static_cast<double>(i) * h;
            const double x = c * std::pow(t, a);
            const double v1 = e1(x), v2 = e2(x);
            g1[i] = std::pow(t, g) * v1;
            g2[i] = std::pow(t, g + 1.0) * (v1 - v2);
        }
        // A(i), B(i): weights of the far and near node of cell i (lag in [(i-1)h, ih]).
        std::vector<double> A(n_fine + 2, 0.0), B(n_fine + 2, 0.0);
        for (std::size_t i = 1; i <= n_fine; ++i) {
            const double d1 = g1[i] - g1[i - 1];
            const double d2 = g2[i] - g2[i - 1];
            A[i] = (d2 - static_cast<double>(i - 1) * h * d1) / h;
            B[i] = d1 - A[i];
        }
        std::vector<double> w(n_fine + 1, 0.0);
        for (std::size_t j = 1; j < n_fine; ++j) w[j] = A[j] + B[j + 1];
        const double w0 = B[1];

        std::vector<double> zf(n_fine + 1), zsf(n_fine + 1);
        for (std::size_t n = 0; n <= n_fine; ++n) {
            const double t = static_cast<double>(n) * h;
            zf[n] = z_table(t, xi);
            if (second_order) zsf[n] = (*zs_table)(t, xi);
        }

        for (std::size_t i = 0; i < modes; ++i) {
            if (sp.shell[i] != s) continue;
            if (u0_hat[i] == 0.0 && !(second_order && u1_hat[i] != 0.0)) continue;
            auto j0 = [&](std::size_t n) {
                return second_order ? u0_hat[i] * zsf[n] + u1_hat[i] * zf[n] : u0_hat[i] * zf[n];
            };
            const cplx start = j0(0);
            causal_convolve(w.data(), n_fine + 1, [&](std::size_t n, cplx conv) -> cplx {
                cplx u = start;
                if (n > 0) {
                    u = (j0(n) + lambda * (conv + A[n] * start)) / (1.0 - lambda * w0);
                }
                if (n % refine == 0) coarse[(n / refine) * modes + i] = u;
                // u_0 enters through A(n), not the convolution.
                return n == 0 ? cplx(0.0) : u;
            });
        }
    });

    for (std::size_t k = 0; k <= steps; ++k) sp.backward(&coarse[k * modes], out.row(k));
    out.refresh_norms();
    return out;
}

}  // namespace fspde
