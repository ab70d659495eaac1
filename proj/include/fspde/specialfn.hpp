#pragma once

#include <cstddef>
#include <vector>

namespace fspde::ml {

/// Parameters (a, b) of the two-parameter Mittag-Leffler function
/// E_{a,b}(z) = sum_k z^k / Gamma(a k + b). Both must be positive.
struct MLParams {
    double a = 1.0;
    double b = 1.0;
};

/// Evaluation strategy used internally by ml_eval.
enum class Regime {
    series,      ///< truncated Taylor series, |z| small
    contour,     ///< Gauss-Legendre quadrature of the Laplace inversion integral
    asymptotic,  ///< algebraic expansion plus pole residues, z very negative
};

/// E_{a,b}(z) for real z. Absolute error <= 1e-10 for |z| <= 50 and relative
/// error <= 1e-8 for z < -50. Throws Error{domain} for a <= 0 or b <= 0 and
/// Error{overflow} when the value is not representable.
double ml_eval(MLParams params, double z);

/// The regime ml_eval picks for (params, z).
Regime ml_regime(MLParams params, double z);

/// Forces one evaluation route. Used to test agreement across regime
/// boundaries; asymptotic is only meaningful for z < 0.
double ml_eval_with(MLParams params, double z, Regime regime);

/// Partial sum of the defining series over k < n_terms, accumulated with
/// Neumaier compensation. A reference oracle for small |z|; does not share
/// code with ml_eval.
double ml_series_oracle(MLParams params, double z, std::size_t n_terms);

/// 1 / Gamma(x), exactly zero within 1e-8 of a pole.
double rgamma(double x);

/// x -> E_{a,b}(-x) on [0, x_max] for bulk evaluation. Between the series
/// region and the point where the asymptotic expansion becomes accurate the
/// curve is tabulated once as piecewise Chebyshev interpolants of ml_eval,
/// which makes each lookup cost a few hundred nanoseconds. Agrees with
/// ml_eval to ~1e-13. Immutable after construction, so one instance can be
/// shared read-only between threads.
class MittagLefflerCurve {
public:
    MittagLefflerCurve(MLParams params, double x_max);

    double operator()(double x) const;

    MLParams params() const { return params_; }
    double x_max() const { return x_max_; }

private:
    static constexpr int kNodes = 16;

    MLParams params_;
    double x_max_;
    double x_tabulated_;  // table covers [0, x_tabulated_)
    std::vector<double> breaks_;
    std::vector<double> coeffs_;  // kNodes Chebyshev coefficients per panel
};

}  // namespace fspde::ml
