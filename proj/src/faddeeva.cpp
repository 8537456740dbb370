#include "iontrap/faddeeva.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace iontrap {

namespace {

constexpr int kTerms = 64;

struct WeidemanTable {
    double l = 0.0;
    std::array<double, kTerms> a{};  // a[j] multiplies Z^j

    WeidemanTable() {
        constexpr int m = 2 * kTerms;
        l = std::sqrt(kTerms / std::numbers::sqrt2);
        // f_k on k = -M..M-1, even in k and zero at k = -M.
        std::array<double, m> f{};
        for (int k = 1; k < m; ++k) {
            const double t = l * std::tan(0.5 * k * std::numbers::pi / m);
            f[k] = std::exp(-t * t) * (l * l + t * t);
        }
        const double f0 = l * l;
        for (int j = 1; j <= kTerms; ++j) {
            double s = f0;
            for (int k = 1; k < m; ++k) s += 2.0 * f[k] * std::cos(std::numbers::pi * j * k / m);
            // k = -M term vanishes.
            a[j - 1] = s / (2.0 * m);
        }
    }
};

const WeidemanTable& table() {
    static const WeidemanTable t;
    return t;
}

std::complex<double> upper(std::complex<double> z) {
    const auto& t = table();
    const std::complex<double> i(0.0, 1.0);
    const std::complex<double> den = t.l - i * z;
    const std::complex<double> zz = (t.l + i * z) / den;
    std::complex<double> p = 0.0;
    for (int j = kTerms - 1; j >= 0; --j) p = p * zz + t.a[j];
    return 2.0 * p / (den * den) + 1.0 / (std::sqrt(std::numbers::pi) * den);
}

}  // namespace

std::complex<double> faddeeva(std::complex<double> z) {
    if (z.imag() >= 0.0) return upper(z);
    return 2.0 * std::exp(-z * z) - upper(-z);
}

}  // namespace iontrap
