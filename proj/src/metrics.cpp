#include "kslab/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace kslab {

double psnr(const RealGrid& x, const RealGrid& y, const MetricConfig& cfg) {
    require_same_shape(x, y, "psnr");
    double mse = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i) {
        double d = x.data[i] - y.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(x.data.size());
    if (mse <= 0.0) return psnr_cap_db;
    double db = 20.0 * std::log10(cfg.peak / std::sqrt(mse));
    return std::min(db, psnr_cap_db);
}

namespace {

std::vector<double> gaussian_window(int n, double sigma) {
    std::vector<double> w(n);
    double sum = 0.0;
    int half = n / 2;
    for (int i = 0; i < n; ++i) {
        double d = i - half;
        w[i] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

// separable Gaussian filter, valid region only (output is (h-n+1) x (w-n+1))
RealGrid filter_valid(const RealGrid& x, const std::vector<double>& win) {
    const int n = static_cast<int>(win.size());
    const int oh = x.height - n + 1, ow = x.width - n + 1;
    RealGrid rows(oh, x.width);
    for (int r = 0; r < oh; ++r)
        for (int c = 0; c < x.width; ++c) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) acc += win[k] * x.at(r + k, c);
            rows.at(r, c) = acc;
        }
    RealGrid out(oh, ow);
    for (int r = 0; r < oh; ++r)
        for (int c = 0; c < ow; ++c) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) acc += win[k] * rows.at(r, c + k);
            out.at(r, c) = acc;
        }
    return out;
}

RealGrid hadamard(const RealGrid& a, const RealGrid& b) {
    RealGrid out(a.height, a.width);
    for (size_t i = 0; i < a.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
    return out;
}

} // namespace

double ssim(const RealGrid& x, const RealGrid& y, const MetricConfig& cfg) {
    require_same_shape(x, y, "ssim");
    if (cfg.ssim_window < 3 || cfg.ssim_window % 2 == 0)
        throw ConfigError("ssim: window must be odd and >= 3");
    if (x.height < cfg.ssim_window || x.width < cfg.ssim_window)
        throw ShapeError("ssim: grid smaller than the window");

    const double c1 = (cfg.k1 * cfg.peak) * (cfg.k1 * cfg.peak);
    const double c2 = (cfg.k2 * cfg.peak) * (cfg.k2 * cfg.peak);
    auto win = gaussian_window(cfg.ssim_window, cfg.ssim_sigma);

    RealGrid mu_x = filter_valid(x, win);
    RealGrid mu_y = filter_valid(y, win);
    RealGrid xx = filter_valid(hadamard(x, x), win);
    RealGrid yy = filter_valid(hadamard(y, y), win);
    RealGrid xy = filter_valid(hadamard(x, y), win);

    double acc = 0.0;
    for (size_t i = 0; i < mu_x.data.size(); ++i) {
        double mx = mu_x.data[i], my = mu_y.data[i];
        double vx = xx.data[i] - mx * mx;
        double vy = yy.data[i] - my * my;
        double cov = xy.data[i] - mx * my;
        double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
        double den = (mx * mx + my * my + c1) * (vx + vy + c2);
        acc += num / den;
    }
    return acc / static_cast<double>(mu_x.data.size());
}

ScaledPair rescale_to_peak(const RealGrid& reference, const RealGrid& test, double peak) {
    require_same_shape(reference, test, "rescale_to_peak");
    auto [mn_it, mx_it] = std::minmax_element(reference.data.begin(), reference.data.end());
    double lo = *mn_it, hi = *mx_it;
    double scale = hi > lo ? peak / (hi - lo) : 1.0;
    ScaledPair out{RealGrid(reference.height, reference.width),
                   RealGrid(test.height, test.width)};
    for (size_t i = 0; i < reference.data.size(); ++i) {
        out.reference.data[i] = (reference.data[i] - lo) * scale;
        out.test.data[i] = (test.data[i] - lo) * scale;
    }
    return out;
}

} // namespace kslab
