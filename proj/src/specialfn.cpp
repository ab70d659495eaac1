#include "fspde/specialfn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "fspde/error.hpp"

namespace fspde::ml {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kSeriesRadius = 10.0;
constexpr double kAsymptoticStart = 50.0;
// Largest sum of |terms| tolerated before the alternating series is
// considered too cancellation-prone for 1e-10 absolute accuracy.
constexpr double kCancellationBudget = 1e2;
constexpr double kPoleTol = 1e-8;

using cplx = std::complex<double>;

void validate(MLParams params) {
    if (!(params.a > 0.0) || !(params.b > 0.0) || !std::isfinite(params.a) ||
        !std::isfinite(params.b)) {
        throw Error(Errc::domain, "Mittag-Leffler parameters must satisfy a > 0, b > 0");
    }
}

bool near_pole(double x) {
    if (x > kPoleTol) {
        return false;
    }
    return std::abs(x - std::round(x)) <= kPoleTol;
}

// log|1/Gamma(x)| and its sign; the caller has already excluded poles.
std::pair<double, double> log_rgamma(double x) {
    int sign = 1;
    const double lg = boost::math::lgamma(x, &sign);
    return {-lg, static_cast<double>(sign)};
}

struct SeriesResult {
    double value = 0.0;
    bool usable = true;
};

SeriesResult sum_series(MLParams p, double z) {
    if (z == 0.0) {
        return {rgamma(p.b), true};
    }
    const double logz = std::log(std::abs(z));
    const double peak_k = std::pow(std::abs(z), 1.0 / p.a) / p.a;
    double sum = 0.0;
    double comp = 0.0;
    double abs_sum = 0.0;
    for (int k = 0; k < 100000; ++k) {
        const double arg = p.a * k + p.b;
        double term = 0.0;
        if (!near_pole(arg)) {
            const auto [lr, sg] = log_rgamma(arg);
            const double lt = k * logz + lr;
            if (lt > 709.0) {
                if (z > 0.0) {
                    throw Error(Errc::overflow, "Mittag-Leffler series overflows");
                }
                return {0.0, false};
            }
            term = sg * std::exp(lt) * ((z < 0.0 && (k & 1)) ? -1.0 : 1.0);
        }
        const double t = sum + term;
        comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
        sum = t;
        abs_sum += std::abs(term);
        if (z < 0.0 && abs_sum > kCancellationBudget) {
            return {0.0, false};
        }
        if (k > peak_k + 2 && std::abs(term) <= 1e-16 * std::abs(sum + comp)) {
            break;
        }
    }
    return {sum + comp, true};
}

// Angles (in (-pi, pi] measured on the principal sheet) of the poles of
// s^{a-b} / (s^a - z), i.e. the roots of s^a = z.
std::vector<double> pole_angles(double a, double z) {
    const double psi = z > 0.0 ? 0.0 : kPi;
    std::vector<double> out;
    for (int m = -64; m <= 64; ++m) {
        const double theta = (psi + 2.0 * kPi * m) / a;
        if (std::abs(theta) < 2.0 * kPi) {
            out.push_back(theta);
        }
    }
    return out;
}

cplx residue(double a, double b, double rho, double theta) {
    const cplx s = std::polar(std::pow(rho, 1.0 / a), theta);
    return std::pow(s, 1.0 - b) * std::exp(s) / a;
}

// Sum of pole residues with |theta| < phi.
double residue_sum(double a, double b, double z, double phi) {
    const double rho = std::abs(z);
    const double radius = std::pow(rho, 1.0 / a);
    cplx sum = 0.0;
    for (double theta : pole_angles(a, z)) {
        if (std::abs(theta) < phi) {
            if (radius * std::cos(theta) > 700.0) {
                throw Error(Errc::overflow, "Mittag-Leffler value exceeds double range");
            }
            sum += residue(a, b, rho, theta);
        }
    }
    return sum.real();
}

// Pick the ray angle of the Hankel contour so it keeps clear of the poles.
double choose_ray_angle(double a, double z) {
    const auto poles = pole_angles(a, z);
    double best_phi = kPi;
    double best_gap = -1.0;
    for (int i = 0; i <= 40; ++i) {
        const double phi = kPi * (0.6 + 0.4 * i / 40.0);
        double gap = std::numeric_limits<double>::infinity();
        for (double theta : poles) {
            gap = std::min(gap, std::abs(std::abs(theta) - phi));
        }
        // Prefer phi = pi (non-oscillatory integrand) unless a pole is close.
        if (i == 40 && gap >= 0.2 * kPi) {
            return kPi;
        }
        if (gap > best_gap) {
            best_gap = gap;
            best_phi = phi;
        }
    }
    return best_phi;
}

struct GaussLegendre {
    std::vector<double> nodes;
    std::vector<double> weights;
};

GaussLegendre make_gauss_legendre(int n) {
    GaussLegendre gl;
    gl.nodes.resize(n);
    gl.weights.resize(n);
    for (int i = 0; i < n; ++i) {
        double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            const double dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) {
                break;
            }
        }
        double p0 = 1.0;
        double p1 = x;
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        const double dp = n * (x * p1 - p0) / (x * x - 1.0);
        gl.nodes[i] = x;
        gl.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return gl;
}

const GaussLegendre& gl20() {
    static const GaussLegendre gl = make_gauss_legendre(20);
    return gl;
}

// (1/pi) Im int_0^inf e^s s^{a-b} / (s^a - z) e^{i phi} dr,  s = r e^{i phi}.
// Requires b < a + 1 so the r^{a-b} endpoint singularity is integrable. The
// substitution r = u^q with q = 1/(a-b+1) removes the leading singularity;
// geometric panels towards u = 0 absorb the remaining fractional powers.
double hankel_integral(double a, double b, double z, double phi) {
    const double q = 1.0 / (a - b + 1.0);
    const cplx ray = std::polar(1.0, phi);
    const cplx ray_ab = std::polar(1.0, phi * (a - b));
    const cplx ray_a = std::polar(1.0, phi * a);
    const double decay = -std::cos(phi);

    // Integrand in u after r = u^q: dr = q u^{q-1} du and r^{a-b} dr = q du.
    auto integrand = [&](double u) {
        if (u <= 0.0) {
            return 0.0;
        }
        const double r = std::pow(u, q);
        const cplx s = r * ray;
        const cplx denom = std::pow(r, a) * ray_a - z;
        const cplx val = std::exp(s) * ray_ab * ray / denom * q;
        return val.imag();
    };

    // Truncate where e^{-r cos(phi)} has dropped below 1e-18 of its start.
    const double r_max = 42.0 / std::max(decay, 0.25);
    const double u_max = std::pow(r_max, 1.0 / q);

    std::vector<double> breaks;
    breaks.push_back(0.0);
    // Geometric grading in u towards zero.
    const double u_one = std::min(1.0, u_max);
    for (int i = 30; i >= 1; i -= 2) {
        breaks.push_back(u_one * std::ldexp(1.0, -i));
    }
    breaks.push_back(u_one);
    // Panels in r growing geometrically beyond r = 1.
    if (u_max > 1.0) {
        double r = 1.0;
        while (r < r_max) {
            r = std::min(r_max, std::max(r * 1.5, r + 1.0));
            breaks.push_back(std::pow(r, 1.0 / q));
        }
    }
    // Extra refinement near the closest pole projected on the ray.
    const double pole_r = std::pow(std::abs(z), 1.0 / a);
    if (pole_r < r_max) {
        for (double f : {0.7, 0.85, 0.95, 1.05, 1.15, 1.3}) {
            const double r = pole_r * f;
            if (r > 1.0 && r < r_max) {
                breaks.push_back(std::pow(r, 1.0 / q));
            }
        }
        std::sort(breaks.begin(), breaks.end());
    }

    const auto& gl = gl20();
    double sum = 0.0;
    double comp = 0.0;
    for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
        const double lo = breaks[i];
        const double hi = breaks[i + 1];
        if (hi <= lo) {
            continue;
        }
        const double mid = 0.5 * (lo + hi);
        const double half = 0.5 * (hi - lo);
        double panel = 0.0;
        for (std::size_t j = 0; j < gl.nodes.size(); ++j) {
            panel += gl.weights[j] * integrand(mid + half * gl.nodes[j]);
        }
        panel *= half;
        const double t = sum + panel;
        comp += std::abs(sum) >= std::abs(panel) ? (sum - t) + panel : (panel - t) + sum;
        sum = t;
    }
    return (sum + comp) / kPi;
}

double contour_eval(double a, double b, double z) {
    if (z == 0.0) {
        return rgamma(b);
    }
    if (b > a + 0.5) {
        // E_{a,b}(z) = (E_{a,b-a}(z) - 1/Gamma(b-a)) / z. Also used just below
        // b = a + 1, where the endpoint substitution would need q >> 1.
        return (contour_eval(a, b - a, z) - rgamma(b - a)) / z;
    }
    const double phi = choose_ray_angle(a, z);
    return hankel_integral(a, b, z, phi) + residue_sum(a, b, z, phi);
}

struct AsymptoticResult {
    double value = 0.0;
    double error_estimate = std::numeric_limits<double>::infinity();
};

// E_{a,b}(-x) ~ residues - sum_{k>=1} (-x)^{-k} / Gamma(b - a k),
// truncated at the smallest term.
bool has_closed_form(double a, double b) {
    return a == 1.0 && b == std::round(b) && b <= 3.0;
}

AsymptoticResult asymptotic_eval(double a, double b, double z) {
    if (has_closed_form(a, b)) {
        // Every algebraic coefficient past k = b - 1 vanishes, so the value is
        // z^{1-b} (e^z - sum_{k<b-1} z^k / k!) and exponentially small parts
        // matter: E_{1,1}(z) = e^z.
        const int n = static_cast<int>(b);
        double poly = 0.0;
        double term = 1.0;
        for (int k = 0; k < n - 1; ++k) {
            poly += term;
            term *= z / (k + 1);
        }
        return {std::pow(z, 1.0 - b) * (std::exp(z) - poly), 0.0};
    }
    const double x = -z;
    const double logx = std::log(x);
    double sum = 0.0;
    double last = std::numeric_limits<double>::infinity();
    double err = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 400; ++k) {
        const double arg = b - a * k;
        if (near_pole(arg)) {
            continue;
        }
        const auto [lr, sg] = log_rgamma(arg);
        const double mag = std::exp(-k * logx + lr);
        if (mag > last) {
            err = last;
            break;
        }
        // -(-x)^{-k} = (-1)^{k+1} x^{-k}
        sum += ((k & 1) ? 1.0 : -1.0) * sg * mag;
        last = mag;
        if (mag <= 1e-18 * std::abs(sum)) {
            err = mag;
            break;
        }
    }
    AsymptoticResult res;
    res.value = sum + residue_sum(a, b, z, kPi);
    res.error_estimate = err;
    return res;
}

}  // namespace

double rgamma(double x) {
    if (near_pole(x)) {
        return 0.0;
    }
    if (x > 0.0 && x < 170.0) {
        return 1.0 / boost::math::tgamma(x);
    }
    const auto [lr, sg] = log_rgamma(x);
    return sg * std::exp(lr);
}

Regime ml_regime(MLParams params, double z) {
    validate(params);
    if (std::abs(z) <= kSeriesRadius) {
        if (z >= 0.0 || sum_series(params, z).usable) {
            return Regime::series;
        }
    }
    if (z < 0.0 && has_closed_form(params.a, params.b)) {
        return Regime::asymptotic;
    }
    if (z <= -kAsymptoticStart) {
        const auto asym = asymptotic_eval(params.a, params.b, z);
        if (asym.error_estimate <= 1e-13 * std::abs(asym.value)) {
            return Regime::asymptotic;
        }
    }
    return Regime::contour;
}

double ml_eval_with(MLParams params, double z, Regime regime) {
    validate(params);
    if (!std::isfinite(z)) {
        throw Error(Errc::domain, "Mittag-Leffler argument must be finite");
    }
    switch (regime) {
        case Regime::series: {
            const auto res = sum_series(params, z);
            if (!res.usable) {
                throw Error(Errc::domain, "series regime unusable at this argument");
            }
            return res.value;
        }
        case Regime::asymptotic:
            if (z >= 0.0) {
                throw Error(Errc::domain, "asymptotic regime needs z < 0");
            }
            return asymptotic_eval(params.a, params.b, z).value;
        case Regime::contour:
            return contour_eval(params.a, params.b, z);
    }
    return 0.0;
}

double ml_eval(MLParams params, double z) {
    validate(params);
    if (!std::isfinite(z)) {
        throw Error(Errc::domain, "Mittag-Leffler argument must be finite");
    }
    if (std::abs(z) <= kSeriesRadius) {
        const auto res = sum_series(params, z);
        if (res.usable) {
            return res.value;
        }
    }
    if (z < 0.0 && has_closed_form(params.a, params.b)) {
        return asymptotic_eval(params.a, params.b, z).value;
    }
    if (z <= -kAsymptoticStart) {
        const auto asym = asymptotic_eval(params.a, params.b, z);
        if (asym.error_estimate <= 1e-13 * std::abs(asym.value)) {
            return asym.value;
        }
    }
    const double v = contour_eval(params.a, params.b, z);
    if (!std::isfinite(v)) {
        throw Error(Errc::overflow, "Mittag-Leffler value exceeds double range");
    }
    return v;
}

MittagLefflerCurve::MittagLefflerCurve(MLParams params, double x_max)
    : params_(params), x_max_(x_max) {
    validate(params);
    if (!(x_max >= 0.0) || !std::isfinite(x_max)) {
        throw Error(Errc::domain, "curve range must be finite and non-negative");
    }
    // The closed form is already cheap and keeps relative accuracy in the
    // exponentially small tail, so only that case skips tabulation.
    x_tabulated_ = x_max;
    if (has_closed_form(params.a, params.b)) {
        x_tabulated_ = std::min(x_max, kSeriesRadius);
    }

    // Oscillation rate of the slowest-decaying pole residue, used to keep
    // panels shorter than a fraction of its period while it is significant.
    const double theta = kPi / params.a;
    const bool has_residue = theta < kPi;
    auto max_width = [&](double x) {
        double w = std::max(0.25, 0.15 * x);
        if (has_residue && x > 0.0) {
            const double radius = std::pow(x, 1.0 / params.a);
            if (radius * std::cos(theta) > -40.0) {
                const double rate = radius / (params.a * x) * std::abs(std::sin(theta));
                if (rate > 0.0) {
                    w = std::min(w, 1.5 / rate);
                }
            }
        }
        return w;
    };
    breaks_.push_back(0.0);
    while (breaks_.back() < x_tabulated_) {
        const double lo = breaks_.back();
        breaks_.push_back(std::min(x_tabulated_, lo + max_width(lo)));
    }

    const std::size_t panels = breaks_.size() - 1;
    coeffs_.assign(panels * kNodes, 0.0);
    std::array<double, kNodes> values{};
    for (std::size_t i = 0; i < panels; ++i) {
        const double mid = 0.5 * (breaks_[i] + breaks_[i + 1]);
        const double half = 0.5 * (breaks_[i + 1] - breaks_[i]);
        for (int j = 0; j < kNodes; ++j) {
            const double node = std::cos(kPi * (j + 0.5) / kNodes);
            values[j] = ml_eval(params, -(mid + half * node));
        }
        for (int k = 0; k < kNodes; ++k) {
            double c = 0.0;
            for (int j = 0; j < kNodes; ++j) {
                c += values[j] * std::cos(kPi * k * (j + 0.5) / kNodes);
            }
            coeffs_[i * kNodes + k] = c * (k == 0 ? 1.0 : 2.0) / kNodes;
        }
    }
}

double MittagLefflerCurve::operator()(double x) const {
    if (!(x >= 0.0) || x >= x_tabulated_) {
        return ml_eval(params_, -x);
    }
    const auto it = std::upper_bound(breaks_.begin(), breaks_.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - breaks_.begin()) - 1;
    const double mid = 0.5 * (breaks_[i] + breaks_[i + 1]);
    const double half = 0.5 * (breaks_[i + 1] - breaks_[i]);
    const double u = (x - mid) / half;
    const double* c = &coeffs_[i * kNodes];
    // Clenshaw recurrence.
    double b1 = 0.0;
    double b2 = 0.0;
    for (int k = kNodes - 1; k >= 1; --k) {
        const double b0 = 2.0 * u * b1 - b2 + c[k];
        b2 = b1;
        b1 = b0;
    }
    return u * b1 - b2 + c[0];
}

double ml_series_oracle(MLParams params, double z, std::size_t n_terms) {
    validate(params);
    if (n_terms < 1) {
        throw Error(Errc::domain, "n_terms must be >= 1");
    }
    double sum = 0.0;
    double comp = 0.0;
    for (std::size_t k = 0; k < n_terms; ++k) {
        const double arg = params.a * static_cast<double>(k) + params.b;
        const double zk = std::pow(z, static_cast<double>(k));
        if (!std::isfinite(zk)) {
            throw Error(Errc::overflow, "series term z^k overflows");
        }
        double term = 0.0;
        if (arg < 171.0) {
            term = zk / std::tgamma(arg);
        } else if (zk != 0.0) {
            // z^k / Gamma(arg) with Gamma out of range: combine in log space.
            term = std::copysign(std::exp(std::log(std::abs(zk)) - std::lgamma(arg)), zk);
        }
        if (!std::isfinite(term)) {
            throw Error(Errc::overflow, "series term overflows");
        }
        const double t = sum + term;
        comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
        sum = t;
    }
    return sum + comp;
}

}  // namespace fspde::ml
