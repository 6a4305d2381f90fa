#pragma once

#include <cstdint>
#include <vector>

#include "kslab/grid.hpp"

namespace kslab {

enum class MaskPattern { Gauss1D, Gauss2D, Poisson2D };

const char* pattern_name(MaskPattern p);
MaskPattern pattern_from_name(const std::string& s);

/// Centered fully-sampled calibration block.
struct AcsRegion {
    int rows = 0;
    int cols = 0;

    int row0(int height) const { return (height - rows) / 2; }
    int col0(int width) const { return (width - cols) / 2; }
    bool contains(int r, int c, int height, int width) const {
        return r >= row0(height) && r < row0(height) + rows &&
               c >= col0(width) && c < col0(width) + cols;
    }
};

/// Binary sampling pattern. keep[r*width+c] == 1 means the k-space point is
/// acquired. Gauss1D masks sample whole columns (phase-encode lines).
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> keep;
    AcsRegion acs;
    MaskPattern pattern = MaskPattern::Gauss1D;
    uint64_t seed = 0;
    double target_fraction = 1.0;

    bool sampled(int r, int c) const { return keep[static_cast<size_t>(r) * width + c] != 0; }
    size_t count() const;
    /// True when column c is sampled in every row.
    bool column_sampled(int c) const;
};

struct AcquisitionNoise {
    double sigma = 0.0; // std per real/imag component
    uint64_t seed = 0;
};

/// Generate a variable-density mask. target_fraction is the retained share of
/// k-space; acs_fraction sizes the centered calibration block (Gauss1D: share
/// of columns, full height; 2D patterns: share of each axis). The ACS is
/// forced on first and the remaining budget is drawn by a Gaussian density
/// centered at DC.
Mask gen_mask(MaskPattern pattern, int height, int width, double target_fraction,
              double acs_fraction, uint64_t seed);

/// Default ACS sizing: 8% of phase-encode lines, at least 8.
double default_acs_fraction(int width);

/// Apply the acquisition model: mask ⊙ (y + complex Gaussian noise).
ComplexGrid undersample(const ComplexGrid& y, const Mask& m, const AcquisitionNoise& noise);

/// Share of retained entries.
double retention_fraction(const Mask& m);

} // namespace kslab
