#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "kslab/errors.hpp"

namespace kslab {

using cplx = std::complex<double>;

/// Which side of the Fourier transform a grid lives on.
enum class Domain { Image, KSpace };

inline const char* domain_name(Domain d) { return d == Domain::Image ? "image" : "kspace"; }

/// 2D complex grid, row-major, height = rows (frequency encode),
/// width = columns (phase encode).
class ComplexGrid {
public:
    int height = 0;
    int width = 0;
    Domain domain = Domain::Image;
    std::vector<cplx> data;

    ComplexGrid() = default;
    ComplexGrid(int h, int w, Domain d)
        : height(h), width(w), domain(d), data(static_cast<size_t>(h) * w) {
        if (h <= 0 || w <= 0) throw ShapeError("ComplexGrid: dims must be positive");
    }
    ComplexGrid(int h, int w, Domain d, std::vector<cplx> values)
        : height(h), width(w), domain(d), data(std::move(values)) {
        if (h <= 0 || w <= 0) throw ShapeError("ComplexGrid: dims must be positive");
        if (data.size() != static_cast<size_t>(h) * w)
            throw ShapeError("ComplexGrid: data length does not match dims");
    }

    cplx& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
    const cplx& at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }
    size_t size() const { return data.size(); }

    bool same_shape(const ComplexGrid& o) const { return height == o.height && width == o.width; }
};

/// 2D real grid with the same layout as ComplexGrid.
class RealGrid {
public:
    int height = 0;
    int width = 0;
    std::vector<double> data;

    RealGrid() = default;
    RealGrid(int h, int w, double fill = 0.0)
        : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {
        if (h <= 0 || w <= 0) throw ShapeError("RealGrid: dims must be positive");
    }
    RealGrid(int h, int w, std::vector<double> values)
        : height(h), width(w), data(std::move(values)) {
        if (h <= 0 || w <= 0) throw ShapeError("RealGrid: dims must be positive");
        if (data.size() != static_cast<size_t>(h) * w)
            throw ShapeError("RealGrid: data length does not match dims");
    }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
    const double& at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }
    size_t size() const { return data.size(); }

    bool same_shape(const RealGrid& o) const { return height == o.height && width == o.width; }
};

/// Polar split of a k-space grid: entrywise modulus and unit phasor.
/// Phase entries are exactly 0 where the modulus falls below phase_floor.
struct SpectralPair {
    RealGrid magnitude;
    ComplexGrid phase; // unit modulus or 0, domain KSpace
};

/// Modulus threshold below which a spectral entry is treated as empty.
inline constexpr double phase_floor = 1e-12;

inline void require_same_shape(const RealGrid& a, const RealGrid& b, const char* where) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(where) + ": shape mismatch");
}

inline void require_same_shape(const ComplexGrid& a, const ComplexGrid& b, const char* where) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(where) + ": shape mismatch");
}

/// Embed a real image into the complex plane (imaginary part 0).
inline ComplexGrid embed(const RealGrid& x, Domain d = Domain::Image) {
    ComplexGrid g(x.height, x.width, d);
    for (size_t i = 0; i < x.data.size(); ++i) g.data[i] = cplx(x.data[i], 0.0);
    return g;
}

} // namespace kslab
