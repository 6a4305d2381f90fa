#pragma once

#include "kslab/grid.hpp"

namespace kslab {

struct MetricConfig {
    double peak = 255.0;
    int ssim_window = 11;    // odd
    double ssim_sigma = 1.5; // Gaussian window std
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Sentinel returned for identical inputs so aggregates stay finite.
inline constexpr double psnr_cap_db = 120.0;

/// 20*log10(peak / rms error), capped at psnr_cap_db. Inputs are expected on
/// the [0, peak] scale already.
double psnr(const RealGrid& x, const RealGrid& y, const MetricConfig& cfg = {});

/// Mean Gaussian-windowed structural similarity over all fully interior
/// windows. Returns 1.0 exactly for identical inputs.
double ssim(const RealGrid& x, const RealGrid& y, const MetricConfig& cfg = {});

/// Affine map derived from the reference grid's min/max, applied to both
/// grids, so compared methods share one [0, peak] scale.
struct ScaledPair {
    RealGrid reference;
    RealGrid test;
};
ScaledPair rescale_to_peak(const RealGrid& reference, const RealGrid& test, double peak = 255.0);

} // namespace kslab
