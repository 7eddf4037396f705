#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace phvc::fft {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

namespace detail {

struct Plan {
    std::size_t n = 0;
    std::vector<std::size_t> bitrev;
    std::vector<double> cos_tab; // cos(2*pi*j/n), j < n/2
    std::vector<double> sin_tab;

    explicit Plan(std::size_t size) : n(size), bitrev(size), cos_tab(size / 2), sin_tab(size / 2) {
        std::size_t log2n = 0;
        while ((std::size_t(1) << log2n) < n) ++log2n;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t r = 0;
            for (std::size_t b = 0; b < log2n; ++b)
                if (i & (std::size_t(1) << b)) r |= std::size_t(1) << (log2n - 1 - b);
            bitrev[i] = r;
        }
        const double two_pi = 6.283185307179586476925287;
        for (std::size_t j = 0; j < n / 2; ++j) {
            cos_tab[j] = std::cos(two_pi * double(j) / double(n));
            sin_tab[j] = std::sin(two_pi * double(j) / double(n));
        }
    }
};

inline const Plan& plan_for(std::size_t n) {
    static thread_local std::unordered_map<std::size_t, std::unique_ptr<Plan>> cache;
    auto it = cache.find(n);
    if (it == cache.end()) it = cache.emplace(n, std::make_unique<Plan>(n)).first;
    return *it->second;
}

} // namespace detail

// In-place complex FFT, radix-2. Forward: X[k] = sum_j x[j] e^{-2*pi*i*jk/n}.
// Inverse direction uses e^{+...} and applies NO 1/n scale; callers scale.
inline void transform(double* re, double* im, std::size_t n, bool inverse) {
    if (n == 1) return;
    if (!is_pow2(n)) throw std::invalid_argument("fft: size must be a power of two");
    const detail::Plan& plan = detail::plan_for(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t j = plan.bitrev[i];
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len >> 1;
        const std::size_t stride = n / len;
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t j = 0; j < half; ++j) {
                const double wr = plan.cos_tab[j * stride];
                const double wi = inverse ? plan.sin_tab[j * stride] : -plan.sin_tab[j * stride];
                const std::size_t a = start + j;
                const std::size_t b = a + half;
                const double tr = re[b] * wr - im[b] * wi;
                const double ti = re[b] * wi + im[b] * wr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
            }
        }
    }
}

// Real input -> one-sided spectrum, bins 0..n/2 (length n/2+1).
inline void rfft(const double* x, std::size_t n, double* out_re, double* out_im) {
    std::vector<double> re(x, x + n), im(n, 0.0);
    transform(re.data(), im.data(), n, false);
    for (std::size_t f = 0; f <= n / 2; ++f) {
        out_re[f] = re[f];
        out_im[f] = im[f];
    }
}

// One-sided spectrum -> real signal of length n. Imaginary parts of bins 0
// and n/2 are ignored (Hermitian symmetry forces them real).
inline void irfft(const double* sre, const double* sim, std::size_t n, double* out) {
    std::vector<double> re(n), im(n);
    re[0] = sre[0];
    im[0] = 0.0;
    re[n / 2] = sre[n / 2];
    im[n / 2] = 0.0;
    for (std::size_t f = 1; f < n / 2; ++f) {
        re[f] = sre[f];
        im[f] = sim[f];
        re[n - f] = sre[f];
        im[n - f] = -sim[f];
    }
    transform(re.data(), im.data(), n, true);
    const double inv_n = 1.0 / double(n);
    for (std::size_t j = 0; j < n; ++j) out[j] = re[j] * inv_n;
}

// Adjoint of irfft as a linear map from one-sided (re, im) pairs to the
// time signal: given d = dL/dx, returns dL/d(sre, sim). Interior bins pick
// up the Hermitian doubling; bins 0 and n/2 have zero imaginary gradient.
inline void irfft_adjoint(const double* d, std::size_t n, double* dre, double* dim) {
    std::vector<double> re(d, d + n), im(n, 0.0);
    transform(re.data(), im.data(), n, false);
    const double inv_n = 1.0 / double(n);
    dre[0] = re[0] * inv_n;
    dim[0] = 0.0;
    dre[n / 2] = re[n / 2] * inv_n;
    dim[n / 2] = 0.0;
    for (std::size_t f = 1; f < n / 2; ++f) {
        dre[f] = 2.0 * re[f] * inv_n;
        dim[f] = 2.0 * im[f] * inv_n;
    }
}

// Adjoint of rfft restricted to the one-sided output: given dL/d(sre, sim)
// over bins 0..n/2, returns dL/dx (length n).
inline void rfft_adjoint(const double* dre, const double* dim, std::size_t n, double* out) {
    std::vector<double> re(n, 0.0), im(n, 0.0);
    for (std::size_t f = 0; f <= n / 2; ++f) {
        re[f] = dre[f];
        im[f] = dim[f];
    }
    transform(re.data(), im.data(), n, true); // unscaled e^{+i} sum
    for (std::size_t j = 0; j < n; ++j) out[j] = re[j];
}

} // namespace phvc::fft
