#pragma once

// Reference evaluations in 100-decimal-digit binary floating point
// (332-bit mantissa). Everything here is written from the defining
// formulas, independently of the library code paths.

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cstddef>
#include <cstdint>
#include <vector>

namespace oracle {

using Big = boost::multiprecision::cpp_bin_float_100;

static_assert(std::numeric_limits<Big>::digits >= 256);

/// L_n^a(z) by the forward three-term recurrence
/// (k+1) L_{k+1} = (2k+1+a-z) L_k - (k+a) L_{k-1}.
inline Big laguerre_recurrence(std::size_t n, const Big& a, const Big& z) {
    Big prev = 1;
    if (n == 0) return prev;
    Big cur = 1 + a - z;
    for (std::size_t k = 1; k < n; ++k) {
        const Big kk = static_cast<double>(k);
        Big next = ((2 * kk + 1 + a - z) * cur - (kk + a) * prev) / (kk + 1);
        prev = cur;
        cur = next;
    }
    return cur;
}

/// L_n^a(z) = sum_k binom(n+a, n-k) (-z)^k / k!, with the generalized
/// binomial built as a running product.
inline Big laguerre_explicit(std::size_t n, const Big& a, const Big& z) {
    // term_k = binom(n+a, n-k) (-z)^k / k!
    // binom(n+a, n) = prod_{j=1..n} (a+j)/j
    Big binom = 1;
    for (std::size_t j = 1; j <= n; ++j) binom *= (a + static_cast<double>(j)) / static_cast<double>(j);
    Big term = binom;
    Big sum = term;
    for (std::size_t k = 0; k < n; ++k) {
        // binom(n+a, n-k-1) / binom(n+a, n-k) = (n-k) / (a+k+1)
        const Big kk = static_cast<double>(k);
        term *= (Big(static_cast<double>(n)) - kk) / (a + kk + 1) * (-z) / (kk + 1);
        sum += term;
    }
    return sum;
}

/// Photon-number PMF of `modes` equal thermal modes with per-mode mean
/// `nbar`, one of them displaced by |alpha|^2 = `alpha_sq`, built as the
/// convolution of the displaced single-mode law with the negative binomial
/// law of the remaining modes-1 thermal modes.
inline std::vector<Big> displaced_multithermal_pmf(const Big& nbar, const Big& alpha_sq,
                                                   std::uint64_t modes, std::size_t n_max) {
    using boost::multiprecision::exp;
    using boost::multiprecision::pow;
    const Big q = nbar / (1 + nbar);

    // Displaced single mode: nbar^n / (1+nbar)^(n+1) e^{-a2/(1+nbar)} L_n(-a2/(nbar(1+nbar))).
    const Big z = -alpha_sq / (nbar * (1 + nbar));
    const Big pref = exp(-alpha_sq / (1 + nbar)) / (1 + nbar);
    std::vector<Big> single(n_max + 1);
    for (std::size_t n = 0; n <= n_max; ++n) {
        single[n] = pref * pow(q, static_cast<int>(n)) * laguerre_explicit(n, Big(0), z);
    }
    if (modes == 1) return single;

    // Negative binomial with r = modes-1: C(k+r-1, k) q^k (1-q)^r.
    const Big r = static_cast<double>(modes - 1);
    std::vector<Big> nb(n_max + 1);
    nb[0] = pow(1 - q, r);
    for (std::size_t k = 1; k <= n_max; ++k) {
        const Big kk = static_cast<double>(k);
        nb[k] = nb[k - 1] * (kk + r - 1) / kk * q;
    }

    std::vector<Big> out(n_max + 1, Big(0));
    for (std::size_t n = 0; n <= n_max; ++n) {
        for (std::size_t k = 0; k <= n; ++k) out[n] += single[k] * nb[n - k];
    }
    return out;
}

/// sum_n (1-eta)^n rho_n.
inline Big off_probability_series(const std::vector<Big>& rho, const Big& eta) {
    Big sum = 0;
    Big w = 1;
    for (const auto& p : rho) {
        sum += w * p;
        w *= 1 - eta;
    }
    return sum;
}

}  // namespace oracle
