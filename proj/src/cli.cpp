#include "fspde/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "fspde/conditions.hpp"
#include "fspde/error.hpp"
#include "fspde/kernel.hpp"
#include "fspde/noise.hpp"
#include "fspde/solver.hpp"
#include "fspde/specialfn.hpp"
#include "spectral.hpp"

namespace fspde::cli {
namespace {

struct KeyDef {
    const char* name;
    const char* fallback;  // nullptr: required
    const char* help;
};

#define FSPDE_MODEL_KEYS                                                        \
    {"alpha", nullptr, "space order"}, {"beta", nullptr, "time order"},         \
        {"gamma", nullptr, "smoothing order"}, {"d", nullptr, "dimension"},     \
        {"nu", "1", "diffusivity"}, {"p", "2", "L^p index"}

const std::vector<KeyDef>& keys_for(Subcommand sub) {
    static const std::vector<KeyDef> ml_eval = {};
    static const std::vector<KeyDef> check_params = {
        FSPDE_MODEL_KEYS,
        {"regime", nullptr, "white, jump, global-white or global-jump"},
        {"csv", "0", "also write check_params.csv"},
        {"out", "", "output directory"},
    };
    static const std::vector<KeyDef> kernel_norms = {
        FSPDE_MODEL_KEYS,
        {"kind", "Y", "Z, Y, Zstar or GradY"},
        {"times", nullptr, "comma-separated times"},
        {"L", "", "lattice half width; default from the largest time"},
        {"M", "1024", "points per axis"},
        {"resolution_tol", "1e-6", "Nyquist-to-peak limit, 0 disables"},
        {"plot", "0", "also write a plot script"},
        {"out", "", "output directory"},
    };
    static const std::vector<KeyDef> verify_isometry = {
        {"d", "1", "dimension"},
        {"L", "1", "lattice half width"},
        {"M", "16", "points per axis"},
        {"steps", "16", "time steps"},
        {"horizon", "1", "final time"},
        {"replicas", "10000", "independent sheets"},
        {"seed", "0", "base seed"},
        {"out", "", "output directory"},
    };
    static const std::vector<KeyDef> simulate = {
        FSPDE_MODEL_KEYS,
        {"L", "20", "lattice half width"},
        {"M", "128", "points per axis"},
        {"horizon", "1", "final time"},
        {"steps", "64", "time steps"},
        {"truncation", "inf", "L^p truncation radius n"},
        {"kappa", "0", "weight of the Picard norm"},
        {"max_picard", "50", "Picard iteration cap"},
        {"tol", "1e-10", "Picard stopping tolerance"},
        {"regime", "jump", "white, jump or both"},
        {"rate", "1", "jump rate per unit time and volume"},
        {"mark", "point", "point, exponential or two_point"},
        {"mark_a", "1", "mark value or mean"},
        {"mark_b", "-1", "second mark value"},
        {"mark_prob", "0.5", "probability of mark_a"},
        {"f", "0", "reaction polynomial coefficients c0,c1,..."},
        {"burgers", "0", "coefficient b of the flux q_j = b z^2 / 2"},
        {"sigma_const", "0", "Gaussian amplitude, constant part"},
        {"sigma_lin", "0", "Gaussian amplitude, linear part"},
        {"h_const", "0", "jump amplitude, constant part (times the mark)"},
        {"h_lin", "0", "jump amplitude, linear part (times the mark)"},
        {"lipschitz_global", "0", "skip truncation"},
        {"allow_inadmissible", "0", "run despite a failed admissibility check"},
        {"u0", "bump", "bump, cos, const or zero"},
        {"u0_amp", "1", "u0 amplitude"},
        {"u0_width", "1", "u0 width (bump) or wavenumber (cos)"},
        {"u1", "zero", "initial velocity for beta > 1, same shapes"},
        {"u1_amp", "0", "u1 amplitude"},
        {"u1_width", "1", "u1 width"},
        {"ensemble", "1", "number of independent paths"},
        {"seed", "0", "base seed"},
        {"snapshots", "0", "write binary field snapshots"},
        {"plot", "0", "also write a plot script"},
        {"out", "", "output directory"},
    };
    switch (sub) {
        case Subcommand::ml_eval: return ml_eval;
        case Subcommand::check_params: return check_params;
        case Subcommand::kernel_norms: return kernel_norms;
        case Subcommand::verify_isometry: return verify_isometry;
        case Subcommand::simulate: return simulate;
    }
    return ml_eval;
}

#undef FSPDE_MODEL_KEYS

[[noreturn]] void usage(const std::string& msg) { throw Error(Errc::usage, msg); }

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "inf") return std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        usage("'" + key + "' expects a number, got '" + text + "'");
    }
    return v;
}

long long parse_int(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        usage("'" + key + "' expects an integer, got '" + text + "'");
    }
    return v;
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
    if (out.empty()) usage("'" + key + "' needs at least one value");
    return out;
}

double num(const RunConfig& c, const char* key) { return parse_double(key, c.get(key)); }

long long integer(const RunConfig& c, const char* key, long long lo) {
    const long long v = parse_int(key, c.get(key));
    if (v < lo) usage("'" + std::string(key) + "' must be >= " + std::to_string(lo));
    return v;
}

bool flag(const RunConfig& c, const char* key) {
    const std::string& v = c.get(key);
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    usage("'" + std::string(key) + "' expects 0 or 1, got '" + v + "'");
}

ModelParams model(const RunConfig& c) {
    ModelParams m;
    m.alpha = num(c, "alpha");
    m.beta = num(c, "beta");
    m.gamma = num(c, "gamma");
    m.nu = num(c, "nu");
    m.dim = static_cast<int>(integer(c, "d", 1));
    m.p = num(c, "p");
    validate(m);
    return m;
}

std::filesystem::path prepare_output(const RunConfig& c) {
    std::filesystem::path dir(c.output_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const auto probe = dir / ".fspde_probe";
    std::ofstream test(probe);
    if (ec || !test) usage("output directory '" + c.output_dir + "' is not writable");
    test.close();
    std::filesystem::remove(probe, ec);

    std::ofstream prov(dir / "provenance.txt");
    prov << "# fspde " << to_string(c.subcommand) << "\n";
    for (const auto& [key, s] : c.settings) {
        prov << key << "=" << s.value << "  # " << s.source;
        if (s.file_value) prov << "; file had " << *s.file_value;
        prov << "\n";
    }
    for (std::size_t i = 0; i < c.positional.size(); ++i) {
        prov << "arg" << i << "=" << c.positional[i] << "\n";
    }
    return dir;
}

// ---------------------------------------------------------------- ml-eval

int run_ml_eval(const RunConfig& c, std::ostream& out) {
    if (c.positional.size() != 3) usage("ml-eval takes exactly three arguments: a b z");
    const double a = parse_double("a", c.positional[0]);
    const double b = parse_double("b", c.positional[1]);
    const double z = parse_double("z", c.positional[2]);
    out << fmt(ml::ml_eval({a, b}, z)) << "\n";
    return kExitOk;
}

// ----------------------------------------------------------- check-params

int run_check_params(const RunConfig& c, std::ostream& out) {
    const ModelParams m = model(c);
    const std::string& name = c.get("regime");
    AdmissibilityReport r;
    if (name == "white") r = check_white_noise(m);
    else if (name == "jump") r = check_pure_jump(m);
    else if (name == "global-white") r = check_global(m, Regime::white_noise);
    else if (name == "global-jump") r = check_global(m, Regime::pure_jump);
    else usage("'regime' must be white, jump, global-white or global-jump, got '" + name + "'");

    out << format_report(r);
    if (flag(c, "csv")) {
        const auto dir = prepare_output(c);
        std::ofstream csv(dir / "check_params.csv");
        csv << "regime,alpha,beta,gamma,nu,d,p,lhs,rhs,margin,satisfied\n";
        csv << to_string(r.regime) << "," << fmt(m.alpha) << "," << fmt(m.beta) << ","
            << fmt(m.gamma) << "," << fmt(m.nu) << "," << m.dim << "," << fmt(m.p) << ","
            << fmt(r.lhs) << "," << fmt(r.rhs) << "," << fmt(r.margin) << ","
            << (r.satisfied ? 1 : 0) << "\n";
    }
    return r.satisfied ? kExitOk : kExitInadmissible;
}

// ----------------------------------------------------------- kernel-norms

KernelKind parse_kind(const std::string& s) {
    if (s == "Z") return KernelKind::Z;
    if (s == "Y") return KernelKind::Y;
    if (s == "Zstar") return KernelKind::Zstar;
    if (s == "GradY") return KernelKind::GradY;
    usage("'kind' must be Z, Y, Zstar or GradY, got '" + s + "'");
}

// t-exponent of int |kernel|^p dx from the self-similar form of each symbol.
double closed_form_exponent(const ModelParams& m, KernelKind kind) {
    const double spread = (m.beta * m.dim / m.alpha) * (1.0 - m.p);
    switch (kind) {
        case KernelKind::Y: return scaling_exponent(m, m.p, ScalingKind::kernel);
        case KernelKind::GradY: return scaling_exponent(m, m.p, ScalingKind::gradient);
        case KernelKind::Z: return m.p * (std::ceil(m.beta) - 1.0) + spread;
        case KernelKind::Zstar: return spread;
    }
    return 0.0;
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

void write_plot(const std::filesystem::path& path, const std::string& csv, const std::string& x,
                const std::string& y, bool loglog) {
    std::ofstream py(path);
    py << "import csv\n"
       << "import matplotlib.pyplot as plt\n\n"
       << "rows = list(csv.DictReader(open('" << csv << "')))\n"
       << "x = [float(r['" << x << "']) for r in rows]\n"
       << "y = [float(r['" << y << "']) for r in rows]\n"
       << (loglog ? "plt.loglog(x, y, 'o-')\n" : "plt.plot(x, y)\n")
       << "plt.xlabel('" << x << "')\n"
       << "plt.ylabel('" << y << "')\n"
       << "plt.savefig('" << csv.substr(0, csv.find('.')) << ".png', dpi=150)\n";
}

int run_kernel_norms(const RunConfig& c) {
    const ModelParams m = model(c);
    const KernelKind kind = parse_kind(c.get("kind"));
    std::vector<double> times = parse_list("times", c.get("times"));
    for (double t : times) {
        if (!(t > 0.0)) usage("'times' must all be > 0");
    }
    if (times.size() < 2) usage("'times' needs at least two values for a slope");
    LatticeSpec lat;
    lat.points = static_cast<std::size_t>(integer(c, "M", 8));
    lat.half_width = c.get("L").empty()
                         ? default_half_width(m, *std::max_element(times.begin(), times.end()))
                         : num(c, "L");
    validate(lat);
    BuildOptions opts;
    opts.resolution_tol = num(c, "resolution_tol");

    std::vector<double> norms(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        const KernelGrid g = kind == KernelKind::GradY ? build_gradient(m, lat, times[i], 0, opts)
                                                       : build_kernel(m, lat, kind, times[i], opts);
        norms[i] = lp_norm(g, m.p);
    }
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < times.size(); ++i) {
        lx.push_back(std::log(times[i]));
        ly.push_back(std::log(norms[i]));
    }
    const double slope = ls_slope(lx, ly);
    const double expo = closed_form_exponent(m, kind);
    const double err = std::abs(expo) < 1e-2 ? std::abs(slope - expo)
                                             : std::abs(slope - expo) / std::abs(expo);

    const auto dir = prepare_output(c);
    std::ofstream csv(dir / "kernel_norms.csv");
    csv << "t,lp_norm,fitted_slope,closed_form_exponent,rel_error\n";
    for (std::size_t i = 0; i < times.size(); ++i) {
        csv << fmt(times[i]) << "," << fmt(norms[i]) << "," << fmt(slope) << "," << fmt(expo)
            << "," << fmt(err) << "\n";
    }
    if (flag(c, "plot")) write_plot(dir / "kernel_norms.py", "kernel_norms.csv", "t", "lp_norm", true);
    return kExitOk;
}

// -------------------------------------------------------- verify-isometry

int run_verify_isometry(const RunConfig& c, std::ostream& out) {
    TimeGrid grid;
    grid.dim = static_cast<int>(integer(c, "d", 1));
    grid.steps = static_cast<std::size_t>(integer(c, "steps", 1));
    grid.lattice.half_width = num(c, "L");
    grid.lattice.points = static_cast<std::size_t>(integer(c, "M", 8));
    grid.dt = num(c, "horizon") / static_cast<double>(grid.steps);
    validate(grid);
    const auto replicas = static_cast<std::size_t>(integer(c, "replicas", 2));

    const std::size_t cells = grid.cells();
    const double L = grid.lattice.half_width;
    std::vector<std::vector<double>> phi(3, std::vector<double>(grid.steps * cells));
    std::vector<double> x(static_cast<std::size_t>(grid.dim));
    for (std::size_t k = 0; k < grid.steps; ++k) {
        const double t = (static_cast<double>(k) + 0.5) * grid.dt;
        for (std::size_t j = 0; j < cells; ++j) {
            cell_coordinates(grid.lattice, grid.dim, j, x.data());
            double r2 = 0.0;
            for (double v : x) r2 += v * v;
            const std::size_t i = k * cells + j;
            phi[0][i] = 1.0;
            phi[1][i] = std::exp(-r2 / (L * L)) * (1.0 + t);
            phi[2][i] = std::sin(3.14159265358979323846 * x[0] / L) * std::cos(6.283185307179586 * t);
        }
    }
    const char* names[3] = {"constant", "bump", "wave"};

    std::vector<double> samples(3 * replicas);
    detail::parallel_for(replicas, [&](std::size_t r) {
        const GaussianSheet sheet = sample_gaussian(grid, c.seed, r);
        for (std::size_t f = 0; f < 3; ++f) samples[f * replicas + r] = integrate_gaussian(phi[f], sheet);
    });

    const auto dir = prepare_output(c);
    std::ofstream csv(dir / "isometry.csv");
    csv << "integrand,replicas,mean,variance,exact,ratio,pass\n";
    bool all = true;
    for (std::size_t f = 0; f < 3; ++f) {
        const double* s = &samples[f * replicas];
        double mean = 0.0;
        for (std::size_t r = 0; r < replicas; ++r) mean += s[r];
        mean /= static_cast<double>(replicas);
        double var = 0.0;
        for (std::size_t r = 0; r < replicas; ++r) var += (s[r] - mean) * (s[r] - mean);
        var /= static_cast<double>(replicas - 1);
        const double exact = isometry_variance(phi[f], grid);
        const double ratio = var / exact;
        const bool pass = ratio >= 0.95 && ratio <= 1.05;
        all = all && pass;
        csv << names[f] << "," << replicas << "," << fmt(mean) << "," << fmt(var) << ","
            << fmt(exact) << "," << fmt(ratio) << "," << (pass ? 1 : 0) << "\n";
        out << names[f] << ": variance ratio " << fmt(ratio) << (pass ? " ok" : " FAIL") << "\n";
    }
    return all ? kExitOk : kExitNumerical;
}

// --------------------------------------------------------------- simulate

std::vector<double> initial_field(const RunConfig& c, const LatticeSpec& lat, int dim,
                                  const char* shape_key, const char* amp_key,
                                  const char* width_key) {
    const std::string& shape = c.get(shape_key);
    const double amp = num(c, amp_key);
    const double width = num(c, width_key);
    std::vector<double> u(lat.cells(dim));
    std::vector<double> x(static_cast<std::size_t>(dim));
    for (std::size_t j = 0; j < u.size(); ++j) {
        cell_coordinates(lat, dim, j, x.data());
        double v = 0.0;
        if (shape == "bump") {
            double r2 = 0.0;
            for (double xi : x) r2 += xi * xi;
            v = amp * std::exp(-r2 / (2.0 * width * width));
        } else if (shape == "cos") {
            v = amp;
            for (double xi : x) v *= std::cos(width * xi);
        } else if (shape == "const") {
            v = amp;
        } else if (shape != "zero") {
            usage("'" + std::string(shape_key) + "' must be bump, cos, const or zero");
        }
        u[j] = v;
    }
    return u;
}

NonlinearitySpec nonlinearity(const RunConfig& c, int dim) {
    NonlinearitySpec spec;
    const std::vector<double> poly = parse_list("f", c.get("f"));
    if (std::any_of(poly.begin(), poly.end(), [](double v) { return v != 0.0; })) {
        spec.f = [poly](double, const double*, double z) {
            double acc = 0.0;
            for (auto it = poly.rbegin(); it != poly.rend(); ++it) acc = acc * z + *it;
            return acc;
        };
    }
    const double b = num(c, "burgers");
    if (b != 0.0) {
        for (int a = 0; a < dim; ++a) {
            spec.q.push_back([b](double, const double*, double z) { return 0.5 * b * z * z; });
        }
    }
    const double s0 = num(c, "sigma_const"), s1 = num(c, "sigma_lin");
    if (s0 != 0.0 || s1 != 0.0) {
        spec.sigma = [s0, s1](double, const double*, double z) { return s0 + s1 * z; };
    }
    const double h0 = num(c, "h_const"), h1 = num(c, "h_lin");
    if (h0 != 0.0 || h1 != 0.0) {
        spec.h = [h0, h1](double, const double*, double z, double xi) { return (h0 + h1 * z) * xi; };
    }
    spec.lipschitz_global = flag(c, "lipschitz_global");
    return spec;
}

NoiseRegime parse_regime(const std::string& s) {
    if (s == "white") return NoiseRegime::white;
    if (s == "jump") return NoiseRegime::jump;
    if (s == "both") return NoiseRegime::both;
    usage("'regime' must be white, jump or both, got '" + s + "'");
}

MarkDistribution parse_marks(const RunConfig& c) {
    MarkDistribution d;
    const std::string& kind = c.get("mark");
    if (kind == "point") d.kind = MarkKind::point;
    else if (kind == "exponential") d.kind = MarkKind::exponential;
    else if (kind == "two_point") d.kind = MarkKind::two_point;
    else usage("'mark' must be point, exponential or two_point, got '" + kind + "'");
    d.a = num(c, "mark_a");
    d.b = num(c, "mark_b");
    d.prob = num(c, "mark_prob");
    if (!(d.prob >= 0.0 && d.prob <= 1.0)) usage("'mark_prob' must lie in [0, 1]");
    return d;
}

void write_snapshot(const std::filesystem::path& path, const FieldPath& field) {
    std::ofstream bin(path, std::ios::binary);
    const std::uint32_t ndims = static_cast<std::uint32_t>(field.params.dim + 1);
    bin.write(reinterpret_cast<const char*>(&ndims), sizeof ndims);
    std::vector<std::uint64_t> dims{field.rows()};
    for (int a = 0; a < field.params.dim; ++a) dims.push_back(field.lattice.points);
    bin.write(reinterpret_cast<const char*>(dims.data()),
              static_cast<std::streamsize>(dims.size() * sizeof(std::uint64_t)));
    const std::uint32_t dtype = 1;  // float64, little endian
    bin.write(reinterpret_cast<const char*>(&dtype), sizeof dtype);
    bin.write(reinterpret_cast<const char*>(field.values.data()),
              static_cast<std::streamsize>(field.values.size() * sizeof(double)));
}

int run_simulate(const RunConfig& c, std::ostream& out) {
    SolverConfig cfg;
    cfg.params = model(c);
    cfg.lattice.half_width = num(c, "L");
    cfg.lattice.points = static_cast<std::size_t>(integer(c, "M", 8));
    cfg.horizon = num(c, "horizon");
    cfg.time_steps = static_cast<std::size_t>(integer(c, "steps", 1));
    cfg.truncation_level = num(c, "truncation");
    cfg.kappa = num(c, "kappa");
    cfg.max_picard = static_cast<std::size_t>(integer(c, "max_picard", 1));
    cfg.tol = num(c, "tol");
    cfg.seed = c.seed;
    cfg.regime = parse_regime(c.get("regime"));
    cfg.jumps.total_rate = num(c, "rate");
    cfg.jumps.marks = parse_marks(c);
    cfg.allow_inadmissible = flag(c, "allow_inadmissible");
    validate(cfg);
    const NonlinearitySpec spec = nonlinearity(c, cfg.params.dim);
    const auto u0 = initial_field(c, cfg.lattice, cfg.params.dim, "u0", "u0_amp", "u0_width");
    const auto u1 = initial_field(c, cfg.lattice, cfg.params.dim, "u1", "u1_amp", "u1_width");
    const auto members = static_cast<std::size_t>(integer(c, "ensemble", 1));
    const bool snapshots = flag(c, "snapshots");

    // Refuse before touching the output directory.
    for (const auto& r : admissibility(cfg, spec.lipschitz_global)) {
        if (!r.satisfied && !cfg.allow_inadmissible) {
            throw Error(Errc::inadmissible_params, "\n" + format_report(r));
        }
    }

    const auto dir = prepare_output(c);
    std::ofstream runs(dir / "runs.csv");
    runs << "run,tau_n,tau_hit,iterations,converged,last_delta\n";
    const std::size_t rows = cfg.time_steps + 1;
    std::vector<double> sum(rows, 0.0), sum2(rows, 0.0);
    const double p = cfg.params.p;
    const double level = cfg.truncation_level;

    for (std::size_t m = 0; m < members; ++m) {
        cfg.path = m;
        const SolveResult res = solve(cfg, spec, u0, &u1);
        const FieldPath& path = res.path;
        char name[64];
        std::snprintf(name, sizeof name, "run_%04zu.csv", m);
        std::ofstream csv(dir / name);
        csv << "t,lp_norm,exceeds_n,before_tau\n";
        for (std::size_t k = 0; k < rows; ++k) {
            const double t = static_cast<double>(k) * path.dt;
            const double norm = path.lp_per_time[k];
            csv << fmt(t) << "," << fmt(norm) << "," << (norm >= level ? 1 : 0) << ","
                << (!res.tau_hit || t < res.tau_n ? 1 : 0) << "\n";
            const double np = std::pow(norm, p);
            sum[k] += np;
            sum2[k] += np * np;
        }
        runs << m << "," << fmt(res.tau_n) << "," << (res.tau_hit ? 1 : 0) << "," << res.iterations
             << "," << (res.converged ? 1 : 0) << ","
             << fmt(res.picard_deltas.empty() ? 0.0 : res.picard_deltas.back()) << "\n";
        if (snapshots) {
            std::snprintf(name, sizeof name, "field_%04zu.bin", m);
            write_snapshot(dir / name, path);
        }
        out << "run " << m << ": " << res.iterations << " Picard iterations, tau_n = "
            << fmt(res.tau_n) << (res.tau_hit ? "" : " (not hit)") << "\n";
    }

    std::ofstream ens(dir / "ensemble.csv");
    ens << "t,mean_norm_p,stderr\n";
    const double n = static_cast<double>(members);
    for (std::size_t k = 0; k < rows; ++k) {
        const double mean = sum[k] / n;
        const double var = members > 1 ? std::max(0.0, (sum2[k] - n * mean * mean) / (n - 1.0)) : 0.0;
        ens << fmt(static_cast<double>(k) * cfg.dt()) << "," << fmt(mean) << ","
            << fmt(std::sqrt(var / n)) << "\n";
    }
    if (flag(c, "plot")) write_plot(dir / "ensemble.py", "ensemble.csv", "t", "mean_norm_p", false);
    return kExitOk;
}

}  // namespace

const char* to_string(Subcommand sub) {
    switch (sub) {
        case Subcommand::ml_eval: return "ml-eval";
        case Subcommand::check_params: return "check-params";
        case Subcommand::kernel_norms: return "kernel-norms";
        case Subcommand::verify_isometry: return "verify-isometry";
        case Subcommand::simulate: return "simulate";
    }
    return "?";
}

const std::string& RunConfig::get(const std::string& key) const {
    const auto it = settings.find(key);
    if (it == settings.end()) usage("missing required key '" + key + "'");
    return it->second.value;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            usage("config line " + std::to_string(number) + " is not key=value: '" + line + "'");
        }
        out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return out;
}

RunConfig parse_config(const std::vector<std::string>& args,
                       const std::optional<std::string>& file_text) {
    const std::pair<const char*, Subcommand> subs[] = {
        {"ml-eval", Subcommand::ml_eval},
        {"check-params", Subcommand::check_params},
        {"kernel-norms", Subcommand::kernel_norms},
        {"verify-isometry", Subcommand::verify_isometry},
        {"simulate", Subcommand::simulate},
    };

    CLI::App app{"Fractional stochastic PDE toolkit", "fspde"};
    app.require_subcommand(1);
    std::map<std::string, std::map<std::string, std::string>> flags;
    std::map<std::string, std::string> config_path;
    std::vector<std::string> positional;
    for (const auto& [name, sub] : subs) {
        CLI::App* sc = app.add_subcommand(name);
        if (sub == Subcommand::ml_eval) {
            sc->add_option("args", positional, "a b z: Mittag-Leffler parameters and argument")
                ->expected(3);
            continue;
        }
        sc->add_option("--config", config_path[name], "flat key=value file");
        for (const auto& k : keys_for(sub)) {
            sc->add_option(std::string("--") + k.name, flags[name][k.name], k.help);
        }
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    RunConfig cfg;
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        cfg.help = app.help();
        for (CLI::App* sc : app.get_subcommands()) cfg.help = sc->help();
        return cfg;
    } catch (const CLI::ParseError& e) {
        usage(e.what());
    }

    CLI::App* chosen = app.get_subcommands().front();
    const std::string name = chosen->get_name();
    for (const auto& [n, sub] : subs) {
        if (name == n) cfg.subcommand = sub;
    }
    cfg.positional = positional;

    std::map<std::string, std::string> file;
    if (file_text) {
        file = parse_key_values(*file_text);
    } else if (!config_path[name].empty()) {
        std::ifstream in(config_path[name]);
        if (!in) usage("cannot read config file '" + config_path[name] + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        file = parse_key_values(ss.str());
    }

    const auto& defs = keys_for(cfg.subcommand);
    for (const auto& [key, value] : file) {
        const bool known = std::any_of(defs.begin(), defs.end(),
                                       [&](const KeyDef& k) { return key == k.name; });
        if (!known) usage("unknown key '" + key + "' for " + name);
    }
    for (const auto& k : defs) {
        const auto* opt = chosen->get_option(std::string("--") + k.name);
        const auto f = file.find(k.name);
        Setting s;
        if (opt->count() > 0) {
            s.value = flags[name][k.name];
            s.source = "flag";
            if (f != file.end()) s.file_value = f->second;
        } else if (f != file.end()) {
            s.value = f->second;
            s.source = "file";
        } else if (k.fallback != nullptr) {
            s.value = k.fallback;
            s.source = "default";
        } else {
            usage("missing required key '" + std::string(k.name) + "' (--" + k.name +
                  " or in the config file)");
        }
        cfg.settings[k.name] = s;
    }

    if (cfg.has("seed")) {
        const long long s = parse_int("seed", cfg.get("seed"));
        if (s < 0) usage("'seed' must be >= 0");
        cfg.seed = static_cast<std::uint64_t>(s);
    }
    if (cfg.has("out") && !cfg.get("out").empty()) {
        cfg.output_dir = cfg.get("out");
    } else if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') {
        cfg.output_dir = env;
    } else {
        cfg.output_dir = "fspde_out";
    }
    return cfg;
}

int run(const RunConfig& config, std::ostream& out, std::ostream& err) {
    if (!config.help.empty()) {
        out << config.help;
        return kExitOk;
    }
    try {
        switch (config.subcommand) {
            case Subcommand::ml_eval: return run_ml_eval(config, out);
            case Subcommand::check_params: return run_check_params(config, out);
            case Subcommand::kernel_norms: return run_kernel_norms(config);
            case Subcommand::verify_isometry: return run_verify_isometry(config, out);
            case Subcommand::simulate: return run_simulate(config, out);
        }
    } catch (const Error& e) {
        err << "fspde: " << e.what() << "\n";
        switch (e.code()) {
            case Errc::usage:
            case Errc::domain:
            case Errc::u1_missing:
                return kExitUsage;
            case Errc::inadmissible_params: return kExitInadmissible;
            default: return kExitNumerical;
        }
    } catch (const std::exception& e) {
        err << "fspde: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitUsage;
}

int main(int argc, char** argv) {
    RunConfig cfg;
    try {
        cfg = parse_config(std::vector<std::string>(argv + 1, argv + argc));
    } catch (const Error& e) {
        std::cerr << "fspde: " << e.what() << "\n";
        return kExitUsage;
    }
    return run(cfg, std::cout, std::cerr);
}

}  // namespace fspde::cli
