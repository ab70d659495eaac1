#pragma once

// Shared plumbing for the Fourier-space solvers; not installed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <thread>
#include <vector>

#include "fspde/fft.hpp"
#include "fspde/kernel.hpp"

namespace fspde::detail {

// Static split of [0, n) over the hardware threads. Each index is handled
// by exactly one thread, so results do not depend on the thread count.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = std::min<std::size_t>(hw, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

// Half-spectrum bookkeeping for one lattice. Modes with equal |k|^2 share a
// shell, and radial symbols are computed once per shell.
struct Spectral {
    int dim;
    std::size_t m;
    double dk;
    RealFFT fft;
    std::vector<long> waves;          // dim entries per mode
    std::vector<std::size_t> shell;   // shell of each mode
    std::vector<double> shell_xi;     // |xi| of each shell

    Spectral(int d, const LatticeSpec& lattice)
        : dim(d), m(lattice.points), dk(3.14159265358979323846 / lattice.half_width),
          fft(d, lattice.points), waves(half_spectrum_wavenumbers(d, lattice.points)) {
        std::map<long, std::size_t> index;
        shell.resize(modes());
        for (std::size_t i = 0; i < modes(); ++i) {
            long k2 = 0;
            for (int a = 0; a < dim; ++a) {
                const long k = waves[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(a)];
                k2 += k * k;
            }
            auto [it, fresh] = index.emplace(k2, shell_xi.size());
            if (fresh) {
                shell_xi.push_back(dk * std::sqrt(static_cast<double>(k2)));
            }
            shell[i] = it->second;
        }
    }

    std::size_t modes() const { return fft.complex_size(); }
    std::size_t cells() const { return fft.real_size(); }
    double xi_component(std::size_t mode, int axis) const {
        return dk * static_cast<double>(waves[mode * static_cast<std::size_t>(dim) +
                                             static_cast<std::size_t>(axis)]);
    }
    bool on_nyquist(std::size_t mode, int axis) const {
        const long k =
            waves[mode * static_cast<std::size_t>(dim) + static_cast<std::size_t>(axis)];
        return k == static_cast<long>(m / 2) || k == -static_cast<long>(m / 2);
    }

    void forward(const double* x, cplx* out) const { fft.forward(x, out); }

    // Inverse including the 1/M^d normalization.
    void backward(const cplx* in, double* out) const {
        fft.backward(in, out);
        const double scale = 1.0 / static_cast<double>(cells());
        for (std::size_t i = 0; i < cells(); ++i) out[i] *= scale;
    }

    double max_xi() const {
        double v = 0.0;
        for (double x : shell_xi) v = std::max(v, x);
        return v;
    }
};

}  // namespace fspde::detail
