#pragma once

#include <cstdint>
#include <vector>

#include "kslab/grid.hpp"

namespace kslab {

enum class PhantomKind { Ellipses, Blobs };

const char* phantom_kind_name(PhantomKind k);
PhantomKind phantom_kind_from_name(const std::string& s);

struct PhantomSpec {
    PhantomKind kind = PhantomKind::Ellipses;
    int height = 64;
    int width = 64;
    int count = 1;
    uint64_t seed = 0;
    double jitter = 0.15; // relative perturbation of shape parameters

    void validate() const {
        if (height % 8 != 0 || width % 8 != 0)
            throw ConfigError("PhantomSpec: dims must be divisible by 8");
        if (count < 1) throw ConfigError("PhantomSpec: count must be >= 1");
    }
};

/// Deterministic synthetic images in [0, 1]. Ellipses: nested-ellipse head
/// phantoms with seeded parameter jitter. Blobs: sums of 5-15 Gaussian bumps.
std::vector<RealGrid> make_phantoms(const PhantomSpec& spec);

/// Fully sampled k-space of a real image.
ComplexGrid to_kspace(const RealGrid& x);

} // namespace kslab
