#include "kslab/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "kslab/fft.hpp"
#include "kslab/rng.hpp"

namespace kslab {

const char* phantom_kind_name(PhantomKind k) {
    return k == PhantomKind::Ellipses ? "ellipses" : "blobs";
}

PhantomKind phantom_kind_from_name(const std::string& s) {
    if (s == "ellipses") return PhantomKind::Ellipses;
    if (s == "blobs") return PhantomKind::Blobs;
    throw ConfigError("unknown phantom kind: " + s);
}

namespace {

struct Ellipse {
    double intensity, ax, ay, cx, cy, angle;
};

// classic head-phantom layout: skull shell, brain, two dark ventricles and a
// handful of small bright/dark structures
const Ellipse base_ellipses[] = {
    {1.00, 0.69, 0.92, 0.0, 0.0, 0.0},
    {-0.70, 0.6624, 0.874, 0.0, -0.0184, 0.0},
    {-0.20, 0.11, 0.31, 0.22, 0.0, -0.3142},
    {-0.20, 0.16, 0.41, -0.22, 0.0, 0.3142},
    {0.15, 0.21, 0.25, 0.0, 0.35, 0.0},
    {0.15, 0.046, 0.046, 0.0, 0.1, 0.0},
    {0.15, 0.046, 0.046, 0.0, -0.1, 0.0},
    {0.15, 0.046, 0.023, -0.08, -0.605, 0.0},
    {0.15, 0.023, 0.023, 0.0, -0.606, 0.0},
    {0.15, 0.023, 0.046, 0.06, -0.605, 0.0},
};

RealGrid render_ellipses(int h, int w, Rng& rng, double jitter) {
    RealGrid img(h, w);
    std::array<Ellipse, std::size(base_ellipses)> es;
    for (size_t i = 0; i < es.size(); ++i) {
        const Ellipse& b = base_ellipses[i];
        auto wobble = [&](double v, double rel) { return v * (1.0 + rel * (2.0 * rng.next_double() - 1.0)); };
        es[i] = Ellipse{wobble(b.intensity, jitter),
                        wobble(b.ax, jitter), wobble(b.ay, jitter),
                        b.cx + 0.05 * jitter * (2.0 * rng.next_double() - 1.0),
                        b.cy + 0.05 * jitter * (2.0 * rng.next_double() - 1.0),
                        b.angle + 0.2 * jitter * (2.0 * rng.next_double() - 1.0)};
    }
    for (int r = 0; r < h; ++r) {
        double y = 2.0 * (r + 0.5) / h - 1.0;
        for (int c = 0; c < w; ++c) {
            double x = 2.0 * (c + 0.5) / w - 1.0;
            double v = 0.0;
            for (const Ellipse& e : es) {
                double ca = std::cos(e.angle), sa = std::sin(e.angle);
                double xr = (ca * (x - e.cx) + sa * (y - e.cy)) / e.ax;
                double yr = (-sa * (x - e.cx) + ca * (y - e.cy)) / e.ay;
                if (xr * xr + yr * yr <= 1.0) v += e.intensity;
            }
            img.at(r, c) = v;
        }
    }
    auto [mn, mx] = std::minmax_element(img.data.begin(), img.data.end());
    double lo = *mn, hi = *mx;
    double scale = hi > lo ? 1.0 / (hi - lo) : 1.0;
    for (double& v : img.data) v = (v - lo) * scale;
    return img;
}

RealGrid render_blobs(int h, int w, Rng& rng) {
    RealGrid img(h, w);
    int nblobs = 5 + static_cast<int>(rng.next_below(11)); // 5..15
    for (int b = 0; b < nblobs; ++b) {
        double cy = rng.next_double() * h;
        double cx = rng.next_double() * w;
        double sy = (0.05 + 0.15 * rng.next_double()) * h;
        double sx = (0.05 + 0.15 * rng.next_double()) * w;
        double amp = 0.3 + 0.7 * rng.next_double();
        for (int r = 0; r < h; ++r) {
            double dy = (r - cy) / sy;
            for (int c = 0; c < w; ++c) {
                double dx = (c - cx) / sx;
                img.at(r, c) += amp * std::exp(-0.5 * (dy * dy + dx * dx));
            }
        }
    }
    auto [mn, mx] = std::minmax_element(img.data.begin(), img.data.end());
    double lo = *mn, hi = *mx;
    double scale = hi > lo ? 1.0 / (hi - lo) : 1.0;
    for (double& v : img.data) v = (v - lo) * scale;
    return img;
}

} // namespace

std::vector<RealGrid> make_phantoms(const PhantomSpec& spec) {
    spec.validate();
    std::vector<RealGrid> out;
    out.reserve(spec.count);
    for (int i = 0; i < spec.count; ++i) {
        Rng rng(Rng::substream(spec.seed, static_cast<uint64_t>(i)));
        out.push_back(spec.kind == PhantomKind::Ellipses
                          ? render_ellipses(spec.height, spec.width, rng, spec.jitter)
                          : render_blobs(spec.height, spec.width, rng));
    }
    return out;
}

ComplexGrid to_kspace(const RealGrid& x) {
    return fft2c(embed(x));
}

} // namespace kslab
