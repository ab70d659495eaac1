#include "fspde/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <stdexcept>

namespace fspde {
namespace {

// FFTW's planner is not re-entrant; execution with new arrays is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

constexpr unsigned kPlanFlags = FFTW_ESTIMATE | FFTW_UNALIGNED;

fftw_complex* as_fftw(cplx* p) { return reinterpret_cast<fftw_complex*>(p); }

// Complex 1-D plans of power-of-two length, shared process-wide.
struct Plan1D {
    fftw_plan fwd;
    fftw_plan bwd;
};

const Plan1D& plan_1d(std::size_t n) {
    static std::map<std::size_t, Plan1D> cache;
    std::lock_guard<std::mutex> lock(planner_mutex());
    auto it = cache.find(n);
    if (it == cache.end()) {
        std::vector<cplx> a(n), b(n);
        Plan1D p;
        p.fwd = fftw_plan_dft_1d(static_cast<int>(n), as_fftw(a.data()), as_fftw(b.data()),
                                 FFTW_FORWARD, kPlanFlags);
        p.bwd = fftw_plan_dft_1d(static_cast<int>(n), as_fftw(a.data()), as_fftw(b.data()),
                                 FFTW_BACKWARD, kPlanFlags);
        it = cache.emplace(n, p).first;
    }
    return it->second;
}

constexpr std::size_t kDirectBlock = 64;

struct Convolver {
    const double* w;
    const std::function<cplx(std::size_t, cplx)>& emit;
    std::vector<cplx> c;
    std::vector<cplx> s;
    // Transformed kernel prefix w[0..len) zero-padded to fft size, per size.
    std::map<std::size_t, std::vector<cplx>> kernel_cache;

    const std::vector<cplx>& kernel_hat(std::size_t len, std::size_t size) {
        auto it = kernel_cache.find(size);
        if (it != kernel_cache.end()) {
            return it->second;
        }
        std::vector<cplx> in(size, 0.0), out(size);
        for (std::size_t q = 1; q < len; ++q) {
            in[q] = w[q];
        }
        fftw_execute_dft(plan_1d(size).fwd, as_fftw(in.data()), as_fftw(out.data()));
        return kernel_cache.emplace(size, std::move(out)).first->second;
    }

    void run(std::size_t l, std::size_t r) {
        if (r - l <= kDirectBlock) {
            for (std::size_t k = l; k < r; ++k) {
                cplx acc = c[k];
                for (std::size_t j = l; j < k; ++j) {
                    acc += w[k - j] * s[j];
                }
                c[k] = acc;
                s[k] = emit(k, acc);
            }
            return;
        }
        const std::size_t mid = l + (r - l) / 2;
        run(l, mid);

        // Contributions of s[l, mid) to c[mid, r); lags run over [1, r - l).
        const std::size_t span = r - l;
        std::size_t size = 1;
        while (size < 2 * span) {
            size <<= 1;
        }
        const auto& what = kernel_hat(span, size);
        std::vector<cplx> in(size, 0.0), out(size);
        for (std::size_t j = l; j < mid; ++j) {
            in[j - l] = s[j];
        }
        const Plan1D& plan = plan_1d(size);
        fftw_execute_dft(plan.fwd, as_fftw(in.data()), as_fftw(out.data()));
        for (std::size_t i = 0; i < size; ++i) {
            out[i] *= what[i];
        }
        fftw_execute_dft(plan.bwd, as_fftw(out.data()), as_fftw(in.data()));
        const double scale = 1.0 / static_cast<double>(size);
        for (std::size_t k = mid; k < r; ++k) {
            c[k] += in[k - l] * scale;
        }

        run(mid, r);
    }
};

}  // namespace

RealFFT::RealFFT(int dim, std::size_t m) : dim_(dim), m_(m) {
    if (dim < 1 || dim > 3 || m < 2) {
        throw std::invalid_argument("RealFFT: unsupported shape");
    }
    int n[3];
    real_size_ = 1;
    for (int i = 0; i < dim; ++i) {
        n[i] = static_cast<int>(m);
        real_size_ *= m;
    }
    complex_size_ = real_size_ / m * (m / 2 + 1);
    std::vector<double> r(real_size_);
    std::vector<cplx> c(complex_size_);
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan_fwd_ = fftw_plan_dft_r2c(dim, n, r.data(), as_fftw(c.data()), kPlanFlags);
    plan_bwd_ = fftw_plan_dft_c2r(dim, n, as_fftw(c.data()), r.data(), kPlanFlags);
}

RealFFT::~RealFFT() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
    fftw_destroy_plan(static_cast<fftw_plan>(plan_bwd_));
}

void RealFFT::forward(const double* in, cplx* out) const {
    // r2c leaves its input intact; the cast only satisfies the C signature.
    fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_fwd_), const_cast<double*>(in),
                         as_fftw(out));
}

void RealFFT::backward(const cplx* in, double* out) const {
    // Multi-dimensional c2r overwrites its input.
    std::vector<cplx> scratch(in, in + complex_size_);
    fftw_execute_dft_c2r(static_cast<fftw_plan>(plan_bwd_), as_fftw(scratch.data()), out);
}

std::vector<long> half_spectrum_wavenumbers(int dim, std::size_t m) {
    const std::size_t half = m / 2 + 1;
    std::size_t count = half;
    for (int i = 1; i < dim; ++i) {
        count *= m;
    }
    std::vector<long> out(count * static_cast<std::size_t>(dim));
    for (std::size_t idx = 0; idx < count; ++idx) {
        std::size_t rest = idx;
        long* kv = &out[idx * static_cast<std::size_t>(dim)];
        kv[dim - 1] = static_cast<long>(rest % half);
        rest /= half;
        for (int i = dim - 2; i >= 0; --i) {
            kv[i] = wavenumber(rest % m, m);
            rest /= m;
        }
    }
    return out;
}

void causal_convolve(const double* w, std::size_t n,
                     const std::function<cplx(std::size_t, cplx)>& emit) {
    if (n == 0) {
        return;
    }
    Convolver conv{w, emit, std::vector<cplx>(n, 0.0), std::vector<cplx>(n, 0.0), {}};
    conv.run(0, n);
}

}  // namespace fspde
