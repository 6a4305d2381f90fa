#pragma once

#include "kslab/grid.hpp"

namespace kslab {

/// Centered orthonormal 2D Fourier transform. DC lands at (height/2, width/2)
/// and total energy is preserved, so image-domain and k-space L2 norms agree.
/// Input must be image-domain; the result is tagged k-space.
ComplexGrid fft2c(const ComplexGrid& g);

/// Exact inverse of fft2c (k-space in, image out).
ComplexGrid ifft2c(const ComplexGrid& g);

/// Split a k-space grid into modulus and unit-phase parts. Entries with
/// modulus <= phase_floor get phase 0.
SpectralPair spectral_decompose(const ComplexGrid& y);

/// Elementwise real components of an image-domain grid.
RealGrid real_part(const ComplexGrid& g);

/// Elementwise modulus.
RealGrid magnitude(const ComplexGrid& g);

/// Index of the mirrored frequency under the centered layout (conjugate
/// symmetry partner of index i along an axis of length n).
inline int mirror_index(int i, int n) {
    int c = n / 2;
    return ((2 * c - i) % n + n) % n;
}

} // namespace kslab
