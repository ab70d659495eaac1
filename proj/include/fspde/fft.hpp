#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

namespace fspde {

using cplx = std::complex<double>;

// Real <-> half-complex transforms on an M^dim periodic lattice, row-major,
// last axis fastest. Neither direction is normalized. The complex side has
// M^(dim-1) * (M/2 + 1) entries. Plans are created once under a lock and
// executed with the new-array interface, so a single instance may be used
// from several threads at once.
class RealFFT {
public:
    RealFFT(int dim, std::size_t m);
    ~RealFFT();
    RealFFT(const RealFFT&) = delete;
    RealFFT& operator=(const RealFFT&) = delete;

    int dim() const { return dim_; }
    std::size_t m() const { return m_; }
    std::size_t real_size() const { return real_size_; }
    std::size_t complex_size() const { return complex_size_; }

    void forward(const double* in, cplx* out) const;
    // `in` is left untouched.
    void backward(const cplx* in, double* out) const;

private:
    int dim_;
    std::size_t m_;
    std::size_t real_size_;
    std::size_t complex_size_;
    void* plan_fwd_ = nullptr;
    void* plan_bwd_ = nullptr;
};

// Signed wavenumber of FFT index k on an axis of length m.
inline long wavenumber(std::size_t k, std::size_t m) {
    return k < m / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(m);
}

// Integer wavevector of every entry on the half-complex side, in the same
// order as RealFFT's complex output; dim entries per mode.
std::vector<long> half_spectrum_wavenumbers(int dim, std::size_t m);

// Online causal convolution c[k] = sum_{j<k} w[k-j] * s[j], k in [0, n),
// where w holds n entries and w[0] is unused. Once c[k] is complete,
// emit(k, c[k]) is called and must return s[k]; this serves both an explicit
// sweep (s known in advance) and implicit time stepping (s[k] solved from
// c[k]).
//
// Blocked divide and conquer: direct sums inside small blocks, FFT products
// between them. Every contribution to c[k] comes from inputs with a smaller
// index and the summation order is fixed by n alone, so changing s[j] cannot
// alter c[k] for k <= j by even one bit.
void causal_convolve(const double* w, std::size_t n,
                     const std::function<cplx(std::size_t, cplx)>& emit);

}  // namespace fspde
