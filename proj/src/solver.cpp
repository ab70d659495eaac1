#include "fspde/solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fspde/error.hpp"
#include "spectral.hpp"

namespace fspde {
namespace {

using detail::parallel_for;
using detail::Spectral;

void check_field(const std::vector<double>& field, std::size_t cells, const char* name) {
    if (field.size() != cells) {
        throw Error(Errc::shape_mismatch, std::string(name) + " has " +
                                              std::to_string(field.size()) + " entries, lattice has " +
                                              std::to_string(cells));
    }
}

double row_norm(const double* row, std::size_t cells, double vol, double p) {
    return std::pow(lattice_lp_power(row, cells, vol, p), 1.0 / p);
}

// Transforms of J0(t) for each requested time, given the data transforms.
std::vector<cplx> j0_spectrum(const Spectral& sp, const ModelParams& params,
                              const std::vector<cplx>& u0_hat, const std::vector<cplx>* u1_hat,
                              const std::vector<double>& times) {
    const double t_max = std::max(1e-300, *std::max_element(times.begin(), times.end()));
    const bool second_order = params.beta > 1.0;
    const SymbolTable z_table(params, KernelKind::Z, t_max, sp.max_xi());
    std::optional<SymbolTable> zs_table;
    if (second_order) {
        zs_table.emplace(params, KernelKind::Zstar, t_max, sp.max_xi());
    }
    const std::size_t modes = sp.modes();
    std::vector<cplx> out(times.size() * modes);
    parallel_for(times.size(), [&](std::size_t k) {
        const double t = times[k];
        std::vector<double> z(sp.shell_xi.size()), zs(sp.shell_xi.size());
        for (std::size_t s = 0; s < sp.shell_xi.size(); ++s) {
            z[s] = z_table(t, sp.shell_xi[s]);
            if (second_order) zs[s] = (*zs_table)(t, sp.shell_xi[s]);
        }
        cplx* row = &out[k * modes];
        for (std::size_t i = 0; i < modes; ++i) {
            const std::size_t s = sp.shell[i];
            row[i] = second_order ? u0_hat[i] * zs[s] + (*u1_hat)[i] * z[s] : u0_hat[i] * z[s];
        }
    });
    return out;
}

// Everything the Picard map needs that does not change between iterations.
struct Workspace {
    const SolverConfig& config;
    Spectral sp;
    std::size_t steps;
    double dt;
    double vol;
    std::vector<double> coords;               // cells x dim
    std::vector<std::vector<double>> weights;  // per shell: dt FY((j - 1/2) dt), j = 0..steps
    std::vector<cplx> j0_hat;                 // rows x modes
    FieldPath j0;

    Workspace(const SolverConfig& cfg, const std::vector<double>& u0, const std::vector<double>* u1)
        : config(cfg), sp(cfg.params.dim, cfg.lattice), steps(cfg.time_steps), dt(cfg.dt()),
          vol(std::pow(cfg.lattice.dx(), cfg.params.dim)) {
        const int dim = cfg.params.dim;
        const std::size_t cells = sp.cells();
        check_field(u0, cells, "u0");
        if (cfg.params.beta > 1.0) {
            if (u1 == nullptr) {
                throw Error(Errc::u1_missing, "beta > 1 needs the initial velocity u1");
            }
            check_field(*u1, cells, "u1");
        }
        coords.resize(cells * static_cast<std::size_t>(dim));
        for (std::size_t j = 0; j < cells; ++j) {
            cell_coordinates(cfg.lattice, dim, j, &coords[j * static_cast<std::size_t>(dim)]);
        }

        const SymbolTable y_table(cfg.params, KernelKind::Y, cfg.horizon, sp.max_xi());
        weights.assign(sp.shell_xi.size(), std::vector<double>(steps + 1, 0.0));
        parallel_for(sp.shell_xi.size(), [&](std::size_t s) {
            for (std::size_t j = 1; j <= steps; ++j) {
                weights[s][j] = dt * y_table((static_cast<double>(j) - 0.5) * dt, sp.shell_xi[s]);
            }
        });

        std::vector<cplx> u0_hat(sp.modes()), u1_hat(sp.modes());
        sp.forward(u0.data(), u0_hat.data());
        if (u1 != nullptr) sp.forward(u1->data(), u1_hat.data());
        std::vector<double> times(steps + 1);
        for (std::size_t k = 0; k <= steps; ++k) times[k] = static_cast<double>(k) * dt;
        j0_hat = j0_spectrum(sp, cfg.params, u0_hat, u1 ? &u1_hat : nullptr, times);
        j0 = to_path(j0_hat);
    }

    FieldPath empty_path() const {
        FieldPath path;
        path.steps = steps;
        path.dt = dt;
        path.p = config.params.p;
        path.params = config.params;
        path.lattice = config.lattice;
        path.values.assign((steps + 1) * sp.cells(), 0.0);
        return path;
    }

    FieldPath to_path(const std::vector<cplx>& spectrum) const {
        FieldPath path = empty_path();
        const std::size_t modes = sp.modes();
        parallel_for(steps + 1, [&](std::size_t k) { sp.backward(&spectrum[k * modes], path.row(k)); });
        path.refresh_norms();
        return path;
    }

    // rows 1..steps of out += causal time convolution of src (rows 0..steps-1).
    void convolve(const std::vector<cplx>& src, std::vector<cplx>& out) const {
        const std::size_t modes = sp.modes();
        parallel_for(modes, [&](std::size_t i) {
            const std::vector<double>& w = weights[sp.shell[i]];
            causal_convolve(w.data(), steps + 1, [&](std::size_t k, cplx c) {
                out[k * modes + i] += c;
                return k < steps ? src[k * modes + i] : cplx(0.0);
            });
        });
    }
};

enum Term { kDrift, kFlux, kGaussian, kJump, kTerms };

FieldPath apply_map(const Workspace& ws, const FieldPath& current, const FrozenNoise& noise,
                    const NonlinearitySpec& spec, RhsTerms* terms) {
    const SolverConfig& cfg = ws.config;
    const Spectral& sp = ws.sp;
    const int dim = cfg.params.dim;
    const std::size_t cells = sp.cells();
    const std::size_t modes = sp.modes();
    const std::size_t steps = ws.steps;
    if (current.steps != steps || current.values.size() != (steps + 1) * cells) {
        throw Error(Errc::shape_mismatch, "current path does not match the solver grid");
    }
    if (!spec.q.empty() && spec.q.size() != static_cast<std::size_t>(dim)) {
        throw Error(Errc::shape_mismatch, "need one flux component per axis");
    }

    bool active[kTerms];
    active[kDrift] = static_cast<bool>(spec.f);
    active[kFlux] = !spec.q.empty();
    active[kGaussian] = spec.sigma && noise.gaussian && cfg.regime != NoiseRegime::jump;
    active[kJump] = spec.h && noise.poisson && cfg.regime != NoiseRegime::white;

    const bool truncate = !spec.lipschitz_global && std::isfinite(cfg.truncation_level);
    const double p = cfg.params.p;
    const double density = 1.0 / (ws.dt * ws.vol);

    // Events of each step occupy a contiguous range since they are time sorted.
    std::vector<std::size_t> first_event(steps + 1, 0);
    if (active[kJump]) {
        const auto& ev = noise.poisson->events;
        std::size_t e = 0;
        for (std::size_t m = 0; m <= steps; ++m) {
            while (e < ev.size() && ev[e].step < m) ++e;
            first_event[m] = e;
        }
    }

    // Source transforms; all terms share slot 0 unless they are wanted apart.
    const bool split = terms != nullptr;
    std::vector<std::vector<cplx>> src(split ? kTerms : 1);
    for (auto& s : src) s.assign(steps * modes, 0.0);
    auto slot = [&](int term) -> std::vector<cplx>& { return src[split ? term : 0]; };

    parallel_for(steps, [&](std::size_t m) {
        const double tm = static_cast<double>(m) * ws.dt;
        const double* u = current.row(m);
        double scale = 1.0;
        if (truncate) {
            const double norm = row_norm(u, cells, ws.vol, p);
            if (norm > cfg.truncation_level) scale = cfg.truncation_level / norm;
        }
        std::vector<double> z(cells), buf(cells);
        for (std::size_t j = 0; j < cells; ++j) z[j] = scale * u[j];
        std::vector<cplx> hat(modes);
        auto add = [&](int term, const std::vector<cplx>& h) {
            cplx* dst = &slot(term)[m * modes];
            for (std::size_t i = 0; i < modes; ++i) dst[i] += h[i];
        };
        const double* x = ws.coords.data();
        const std::size_t ud = static_cast<std::size_t>(dim);

        if (active[kDrift]) {
            for (std::size_t j = 0; j < cells; ++j) buf[j] = spec.f(tm, x + j * ud, z[j]);
            sp.forward(buf.data(), hat.data());
            add(kDrift, hat);
        }
        if (active[kFlux]) {
            // - sum_a d_a Y * q_a  ->  - i xi_a FY q_a^
            for (int a = 0; a < dim; ++a) {
                for (std::size_t j = 0; j < cells; ++j) buf[j] = spec.q[a](tm, x + j * ud, z[j]);
                sp.forward(buf.data(), hat.data());
                for (std::size_t i = 0; i < modes; ++i) {
                    hat[i] = sp.on_nyquist(i, a) ? cplx(0.0)
                                                 : cplx(0.0, -sp.xi_component(i, a)) * hat[i];
                }
                add(kFlux, hat);
            }
        }
        if (active[kGaussian]) {
            const double* dw = noise.gaussian->row(m);
            for (std::size_t j = 0; j < cells; ++j) {
                buf[j] = spec.sigma(tm, x + j * ud, z[j]) * dw[j] * density;
            }
            sp.forward(buf.data(), hat.data());
            add(kGaussian, hat);
        }
        if (active[kJump]) {
            const auto& pr = *noise.poisson;
            const double rate = pr.intensity.total_rate;
            for (std::size_t j = 0; j < cells; ++j) {
                const double* xj = x + j * ud;
                buf[j] = -rate * pr.intensity.marks.expect(
                                     [&](double xi) { return spec.h(tm, xj, z[j], xi); });
            }
            for (std::size_t e = first_event[m]; e < first_event[m + 1]; ++e) {
                const auto& ev = pr.events[e];
                buf[ev.cell] += spec.h(tm, x + ev.cell * ud, z[ev.cell], ev.mark) * density;
            }
            sp.forward(buf.data(), hat.data());
            add(kJump, hat);
        }
    });

    std::vector<cplx> total = ws.j0_hat;
    if (!split) {
        ws.convolve(src[0], total);
        FieldPath out = ws.to_path(total);
        return out;
    }
    FieldPath* dst[kTerms] = {&terms->drift, &terms->flux, &terms->gaussian, &terms->jump};
    for (int t = 0; t < kTerms; ++t) {
        std::vector<cplx> part(total.size(), 0.0);
        if (active[t]) ws.convolve(src[t], part);
        for (std::size_t i = 0; i < part.size(); ++i) total[i] += part[i];
        *dst[t] = ws.to_path(part);
    }
    terms->j0 = ws.j0;
    return ws.to_path(total);
}

void integrability_gate(const SolverConfig& cfg, const NonlinearitySpec& spec) {
    BuildOptions opts;
    opts.resolution_tol = 0.0;
    const double s = symbol_decay_exponent(cfg.params, cfg.lattice, KernelKind::Y, cfg.horizon);
    if (s <= cfg.params.dim) {
        throw Error(Errc::symbol_not_integrable,
                    "Y symbol decays like |xi|^-" + std::to_string(s) + " on this lattice");
    }
    if (!spec.q.empty()) {
        const double g = symbol_decay_exponent(cfg.params, cfg.lattice, KernelKind::GradY, cfg.horizon);
        if (g <= cfg.params.dim * (1.0 - 1.0 / cfg.params.p)) {
            throw Error(Errc::symbol_not_integrable,
                        "gradient symbol decays like |xi|^-" + std::to_string(g) +
                            ", too slow for L^p");
        }
    }
}

void admissibility_gate(const SolverConfig& cfg, const NonlinearitySpec& spec) {
    for (const auto& r : admissibility(cfg, spec.lipschitz_global)) {
        if (!r.satisfied && !cfg.allow_inadmissible) {
            throw Error(Errc::inadmissible_params, "\n" + format_report(r));
        }
    }
}

}  // namespace

double FieldPath::cell_volume() const { return std::pow(lattice.dx(), params.dim); }

void FieldPath::refresh_norms() {
    lp_per_time.resize(rows());
    const double vol = cell_volume();
    for (std::size_t k = 0; k < rows(); ++k) {
        lp_per_time[k] = row_norm(row(k), cells(), vol, p);
    }
}

const char* to_string(NoiseRegime regime) {
    switch (regime) {
        case NoiseRegime::white: return "white";
        case NoiseRegime::jump: return "jump";
        case NoiseRegime::both: return "both";
    }
    return "?";
}

TimeGrid SolverConfig::time_grid() const {
    TimeGrid g;
    g.steps = time_steps;
    g.dt = dt();
    g.dim = params.dim;
    g.lattice = lattice;
    return g;
}

void validate(const SolverConfig& config) {
    validate(config.params);
    validate(config.lattice);
    if (!(config.horizon > 0.0) || config.time_steps == 0) {
        throw Error(Errc::domain, "need horizon > 0 and at least one time step");
    }
    if (!(config.tol > 0.0)) throw Error(Errc::domain, "tol must be > 0");
    if (!(config.truncation_level > 0.0)) throw Error(Errc::domain, "truncation level must be > 0");
    if (!(config.kappa >= 0.0)) throw Error(Errc::domain, "kappa must be >= 0");
    if (config.max_picard == 0) throw Error(Errc::domain, "max_picard must be >= 1");
}

std::vector<AdmissibilityReport> admissibility(const SolverConfig& config, bool global) {
    std::vector<AdmissibilityReport> out;
    const bool white = config.regime != NoiseRegime::jump;
    const bool jump = config.regime != NoiseRegime::white;
    if (white) {
        out.push_back(global ? check_global(config.params, Regime::white_noise)
                             : check_white_noise(config.params));
        if (config.params.p != 2.0) {
            // The white-noise theory is an L^2 theory; refuse other indices.
            out.back().satisfied = false;
            out.back().exponent_table.push_back({"white regime index p", config.params.p, "= 2", false});
        }
    }
    if (jump) {
        out.push_back(global ? check_global(config.params, Regime::pure_jump)
                             : check_pure_jump(config.params));
    }
    return out;
}

FrozenNoise sample_noise(const SolverConfig& config, const NonlinearitySpec& spec) {
    FrozenNoise noise;
    const TimeGrid grid = config.time_grid();
    if (spec.sigma && config.regime != NoiseRegime::jump) {
        noise.gaussian = sample_gaussian(grid, config.seed, config.path);
    }
    if (spec.h && config.regime != NoiseRegime::white) {
        noise.poisson = sample_poisson(config.jumps, grid, config.seed, config.path);
    }
    return noise;
}

void cell_coordinates(const LatticeSpec& lattice, int dim, std::size_t index, double* out) {
    const double dx = lattice.dx();
    for (int a = dim - 1; a >= 0; --a) {
        out[a] = -lattice.half_width + static_cast<double>(index % lattice.points) * dx;
        index /= lattice.points;
    }
}

std::vector<double> j0_term(const std::vector<double>& u0, const std::vector<double>* u1,
                            const ModelParams& params, const LatticeSpec& lattice, double t) {
    validate(params);
    validate(lattice);
    if (!(t >= 0.0)) throw Error(Errc::domain, "t must be >= 0");
    Spectral sp(params.dim, lattice);
    check_field(u0, sp.cells(), "u0");
    if (params.beta > 1.0) {
        if (u1 == nullptr) throw Error(Errc::u1_missing, "beta > 1 needs the initial velocity u1");
        check_field(*u1, sp.cells(), "u1");
    }
    std::vector<cplx> u0_hat(sp.modes()), u1_hat(sp.modes());
    sp.forward(u0.data(), u0_hat.data());
    if (u1 != nullptr) sp.forward(u1->data(), u1_hat.data());
    const auto hat = j0_spectrum(sp, params, u0_hat, u1 ? &u1_hat : nullptr, {t});
    std::vector<double> out(sp.cells());
    sp.backward(hat.data(), out.data());
    return out;
}

std::vector<double> truncate_lp(const std::vector<double>& field, double n, double p,
                                double cell_volume) {
    if (!(n > 0.0) || !(p >= 1.0)) throw Error(Errc::domain, "need n > 0 and p >= 1");
    const double norm = row_norm(field.data(), field.size(), cell_volume, p);
    if (norm <= n) return field;
    std::vector<double> out(field);
    const double s = n / norm;
    for (double& v : out) v *= s;
    return out;
}

FieldPath picard_rhs(const FieldPath& current, const FrozenNoise& noise,
                     const NonlinearitySpec& spec, const SolverConfig& config,
                     const std::vector<double>& u0, const std::vector<double>* u1,
                     RhsTerms* terms) {
    validate(config);
    admissibility_gate(config, spec);
    integrability_gate(config, spec);
    const Workspace ws(config, u0, u1);
    return apply_map(ws, current, noise, spec, terms);
}

StoppingTime detect_stopping(const FieldPath& path, double n, double p) {
    if (!(n > 0.0)) throw Error(Errc::domain, "n must be > 0");
    const double vol = path.cell_volume();
    for (std::size_t k = 0; k < path.rows(); ++k) {
        const double norm =
            p == path.p ? path.lp_per_time[k] : row_norm(path.row(k), path.cells(), vol, p);
        if (norm >= n) return {static_cast<double>(k) * path.dt, true};
    }
    return {static_cast<double>(path.steps) * path.dt, false};
}

double weighted_norm(const FieldPath& path, double kappa, double p) {
    if (!(kappa >= 0.0)) throw Error(Errc::domain, "kappa must be >= 0");
    const double vol = path.cell_volume();
    double best = 0.0;
    for (std::size_t k = 0; k < path.rows(); ++k) {
        const double norm =
            p == path.p ? path.lp_per_time[k] : row_norm(path.row(k), path.cells(), vol, p);
        best = std::max(best, std::exp(-kappa * static_cast<double>(k) * path.dt) * norm);
    }
    return best;
}

SolveResult solve(const SolverConfig& config, const NonlinearitySpec& spec,
                  const std::vector<double>& u0, const std::vector<double>* u1) {
    validate(config);
    admissibility_gate(config, spec);
    return solve(config, spec, sample_noise(config, spec), u0, u1);
}

SolveResult solve(const SolverConfig& config, const NonlinearitySpec& spec,
                  const FrozenNoise& noise, const std::vector<double>& u0,
                  const std::vector<double>* u1) {
    validate(config);
    admissibility_gate(config, spec);
    integrability_gate(config, spec);
    const Workspace ws(config, u0, u1);
    const double p = config.params.p;
    const double vol = ws.vol;
    const std::size_t cells = ws.sp.cells();

    SolveResult res;
    FieldPath u = ws.j0;
    for (std::size_t it = 0; it < config.max_picard; ++it) {
        FieldPath next = apply_map(ws, u, noise, spec, nullptr);
        double delta = 0.0;
        std::vector<double> diff(cells);
        for (std::size_t k = 0; k < u.rows(); ++k) {
            const double* a = next.row(k);
            const double* b = u.row(k);
            for (std::size_t j = 0; j < cells; ++j) diff[j] = a[j] - b[j];
            const double w = std::exp(-config.kappa * static_cast<double>(k) * ws.dt);
            delta = std::max(delta, w * row_norm(diff.data(), cells, vol, p));
        }
        res.picard_deltas.push_back(delta);
        res.iterations = it + 1;
        u = std::move(next);
        if (delta <= config.tol) {
            res.converged = true;
            break;
        }
    }
    const auto& d = res.picard_deltas;
    if (!res.converged && d.size() >= 2 && d.back() >= *std::min_element(d.begin(), d.end() - 1)) {
        throw Error(Errc::no_convergence, "Picard deltas stopped decreasing after " +
                                              std::to_string(d.size()) + " iterations");
    }
    const double level = std::isfinite(config.truncation_level)
                             ? config.truncation_level
                             : std::numeric_limits<double>::infinity();
    if (std::isfinite(level)) {
        const auto tau = detect_stopping(u, level, p);
        res.tau_n = tau.time;
        res.tau_hit = tau.hit;
    } else {
        res.tau_n = config.horizon;
    }
    res.path = std::move(u);
    return res;
}

}  // namespace fspde
