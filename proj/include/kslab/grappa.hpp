#pragma once

#include <cstdint>
#include <vector>

#include "kslab/grid.hpp"
#include "kslab/mask.hpp"

namespace kslab {

/// Interpolation kernel support. Missing phase-encode columns are filled from
/// `source_lines` acquired neighbor columns (spaced by the acceleration
/// factor) and `taps` rows along the frequency-encode axis.
struct KernelGeometry {
    int source_lines = 4; // even
    int taps = 5;         // odd
    int accel = 2;        // uniform undersampling factor R
    int coils = 1;

    void validate() const {
        if (source_lines <= 0 || source_lines % 2 != 0)
            throw ConfigError("KernelGeometry: source_lines must be positive and even");
        if (taps <= 0 || taps % 2 == 0)
            throw ConfigError("KernelGeometry: taps must be positive and odd");
        if (accel < 2) throw ConfigError("KernelGeometry: accel must be >= 2");
        if (coils < 1) throw ConfigError("KernelGeometry: coils must be >= 1");
    }

    int features() const { return coils * source_lines * taps; }

    /// Column offset of source line l relative to a missing column whose
    /// distance from the acquired column below is `offset` (1..accel-1).
    int source_col_delta(int l, int offset) const {
        return (l - (source_lines / 2 - 1)) * accel - offset;
    }
    /// Row offset of tap t.
    int tap_row_delta(int t) const { return t - taps / 2; }
};

/// Estimated interpolation weights. weights[offset-1][target_coil] is one row
/// of geometry.features() complex coefficients ordered (source_coil,
/// source_line, tap) row-major.
struct GrappaKernel {
    KernelGeometry geometry;
    std::vector<std::vector<std::vector<cplx>>> weights;
    double fit_residual = 0.0; // relative LS residual on the calibration data

    const std::vector<cplx>& row(int offset, int coil) const {
        return weights[offset - 1][coil];
    }
};

/// Coil images/spectra with shared dims and domain.
struct CoilStack {
    std::vector<ComplexGrid> coils;

    int height() const { return coils.at(0).height; }
    int width() const { return coils.at(0).width; }
    Domain domain() const { return coils.at(0).domain; }
    int count() const { return static_cast<int>(coils.size()); }

    void validate() const {
        if (coils.empty()) throw ShapeError("CoilStack: empty");
        for (const auto& c : coils)
            if (!c.same_shape(coils[0]) || c.domain != coils[0].domain)
                throw ShapeError("CoilStack: inhomogeneous coils");
    }
};

/// Fit kernel weights by least squares over every sliding window fully inside
/// the calibration block. `ridge` scales a Tikhonov term normalized by the
/// mean diagonal of the normal matrix.
GrappaKernel estimate_kernel(const CoilStack& acs, const KernelGeometry& geom, double ridge);

/// Fill the missing columns of uniformly undersampled k-space. Sampled
/// entries pass through untouched; out-of-range sources read as zero.
CoilStack apply_kernel(const CoilStack& y_u, const Mask& m, const GrappaKernel& k);

/// Full reconstruction: estimate on the mask's ACS, fill, inverse transform
/// per coil, combine (root sum of squares for multi-coil; the single-coil
/// image keeps its phase).
ComplexGrid grappa_reconstruct(const CoilStack& y_u, const Mask& m,
                               const KernelGeometry& geom, double ridge);

/// Synthetic k-space whose missing-offset columns are exactly a known kernel's
/// combination of their sources, plus that kernel. Serves as the correctness
/// oracle for estimation and filling.
struct LinearDataOracle {
    CoilStack full;
    GrappaKernel truth;
};
LinearDataOracle make_linear_data(int height, int width, const KernelGeometry& geom, uint64_t seed);

/// True when the mask samples whole columns forming a uniform grid of step
/// geom.accel outside the ACS (the layout apply_kernel requires).
bool admits_uniform_grappa(const Mask& m, const KernelGeometry& geom);

/// Uniform column mask: every accel-th column plus a centered ACS block.
Mask uniform_column_mask(int height, int width, int accel, int acs_cols);

/// Smallest aligned ACS width giving a 2x-overdetermined calibration fit for
/// every missing-line offset at the given grid height.
int min_acs_cols(const KernelGeometry& geom, int height);

} // namespace kslab
