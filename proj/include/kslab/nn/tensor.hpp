#pragma once

#include <vector>

#include "kslab/errors.hpp"
#include "kslab/grid.hpp"

namespace kslab::nn {

/// Dense real activation tensor, [batch, channels, height, width] row-major.
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<size_t>(n_) * c_ * h_ * w_, 0.0) {
        if (n_ <= 0 || c_ <= 0 || h_ <= 0 || w_ <= 0)
            throw ShapeError("Tensor: dims must be positive");
    }

    size_t size() const { return v.size(); }
    size_t index(int in, int ic, int iy, int ix) const {
        return ((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix;
    }
    double& at(int in, int ic, int iy, int ix) { return v[index(in, ic, iy, ix)]; }
    double at(int in, int ic, int iy, int ix) const { return v[index(in, ic, iy, ix)]; }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
};

/// Wrap a real grid as a 1x1xHxW tensor.
Tensor from_grid(const RealGrid& g);

/// First channel of the first batch item as a grid.
RealGrid to_grid(const Tensor& t);

} // namespace kslab::nn
