#pragma once

#include <cmath>

#include "kslab/grid.hpp"
#include "kslab/rng.hpp"

namespace kslab::test {

inline ComplexGrid random_grid(int h, int w, Domain d, uint64_t seed) {
    ComplexGrid g(h, w, d);
    Rng rng(seed);
    for (auto& v : g.data) v = rng.next_cnormal(1.0);
    return g;
}

inline RealGrid random_real(int h, int w, uint64_t seed, double lo = 0.0, double hi = 1.0) {
    RealGrid g(h, w);
    Rng rng(seed);
    for (auto& v : g.data) v = lo + (hi - lo) * rng.next_double();
    return g;
}

inline double max_abs_diff(const ComplexGrid& a, const ComplexGrid& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

inline double max_abs_diff(const RealGrid& a, const RealGrid& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

inline double energy(const ComplexGrid& g) {
    double s = 0.0;
    for (const auto& v : g.data) s += std::norm(v);
    return s;
}

} // namespace kslab::test
