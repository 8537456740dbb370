#pragma once

#include <complex>

namespace iontrap {

/// Faddeeva function w(z) = exp(-z^2) erfc(-iz), computed with Weideman's
/// rational expansion (64 terms) in the upper half plane and the reflection
/// w(z) = 2 exp(-z^2) - w(-z) below it.
std::complex<double> faddeeva(std::complex<double> z);

}  // namespace iontrap
