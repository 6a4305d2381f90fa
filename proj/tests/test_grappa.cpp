#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "helpers.hpp"
#include "kslab/fft.hpp"
#include "kslab/grappa.hpp"
#include "kslab/io.hpp"
#include "kslab/metrics.hpp"
#include "kslab/phantom.hpp"

using namespace kslab;
using namespace kslab::test;

namespace {

CoilStack undersample_stack(const CoilStack& full, const Mask& m) {
    CoilStack out = full;
    for (auto& coil : out.coils)
        for (int r = 0; r < m.height; ++r)
            for (int c = 0; c < m.width; ++c)
                if (!m.sampled(r, c)) coil.at(r, c) = cplx(0.0, 0.0);
    return out;
}

CoilStack central_acs(const CoilStack& full, int acs_cols, int accel) {
    const int h = full.height(), w = full.width();
    int c0 = (w - acs_cols) / 2;
    int shift = ((0 - c0) % accel + accel) % accel; // acquired comb sits at phase 0
    c0 += shift;
    int cols = acs_cols - shift;
    CoilStack out;
    for (const auto& coil : full.coils) {
        ComplexGrid block(h, cols, Domain::KSpace);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < cols; ++c) block.at(r, c) = coil.at(r, c0 + c);
        out.coils.push_back(std::move(block));
    }
    return out;
}

double kernel_max_err(const GrappaKernel& a, const GrappaKernel& b) {
    double m = 0.0;
    for (size_t o = 0; o < a.weights.size(); ++o)
        for (size_t ct = 0; ct < a.weights[o].size(); ++ct)
            for (size_t f = 0; f < a.weights[o][ct].size(); ++f)
                m = std::max(m, std::abs(a.weights[o][ct][f] - b.weights[o][ct][f]));
    return m;
}

double stack_nrmse(const CoilStack& a, const CoilStack& b) {
    double num = 0.0, den = 0.0;
    for (int ci = 0; ci < a.count(); ++ci)
        for (size_t i = 0; i < a.coils[ci].data.size(); ++i) {
            num += std::norm(a.coils[ci].data[i] - b.coils[ci].data[i]);
            den += std::norm(b.coils[ci].data[i]);
        }
    return std::sqrt(num / den);
}

} // namespace

TEST_CASE("make_linear_data is self consistent and deterministic") {
    KernelGeometry geom;
    auto oracle = make_linear_data(64, 64, geom, 5);
    Mask m = uniform_column_mask(64, 64, 2, 16);
    CoilStack y_u = undersample_stack(oracle.full, m);
    CoilStack filled = apply_kernel(y_u, m, oracle.truth);
    CHECK(stack_nrmse(filled, oracle.full) < 1e-12);

    auto again = make_linear_data(64, 64, geom, 5);
    CHECK(again.full.coils[0].data == oracle.full.coils[0].data);
}

TEST_CASE("estimate_kernel recovers the generating weights") {
    for (int coils : {1, 2}) {
        KernelGeometry geom;
        geom.coils = coils;
        auto oracle = make_linear_data(64, 64, geom, 11 + coils);
        CoilStack acs = central_acs(oracle.full, 16, geom.accel);
        GrappaKernel fit = estimate_kernel(acs, geom, 1e-9);
        CHECK(kernel_max_err(fit, oracle.truth) < 1e-8);
        // the exact model leaves no residual when the ridge bias is removed
        CHECK(estimate_kernel(acs, geom, 0.0).fit_residual < 1e-10);
    }
}

TEST_CASE("estimation rejects degenerate calibration data") {
    KernelGeometry geom;
    CoilStack zeros;
    zeros.coils.emplace_back(64, 16, Domain::KSpace);
    CHECK_THROWS_AS(estimate_kernel(zeros, geom, 0.0), SingularFitError);
}

TEST_CASE("estimation rejects an ACS that is too small") {
    KernelGeometry geom;
    CoilStack tiny;
    tiny.coils.push_back(random_grid(8, 8, Domain::KSpace, 3));
    CHECK_THROWS_AS(estimate_kernel(tiny, geom, 1e-6), AcsTooSmallError);
}

TEST_CASE("fit residual is non-decreasing in the ridge") {
    KernelGeometry geom;
    CoilStack acs;
    acs.coils.push_back(random_grid(64, 16, Domain::KSpace, 8));
    double prev = -1.0;
    for (double ridge : {0.0, 1e-6, 1e-3, 1e-1}) {
        double res = estimate_kernel(acs, geom, ridge).fit_residual;
        CHECK(res >= prev);
        prev = res;
    }
}

TEST_CASE("apply_kernel fills the oracle data exactly and never touches samples") {
    KernelGeometry geom;
    auto oracle = make_linear_data(64, 64, geom, 23);
    Mask m = uniform_column_mask(64, 64, 2, 16);
    CoilStack y_u = undersample_stack(oracle.full, m);
    CoilStack filled = apply_kernel(y_u, m, oracle.truth);
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c)
            if (m.sampled(r, c))
                CHECK(filled.coils[0].at(r, c) == y_u.coils[0].at(r, c));
    CHECK(stack_nrmse(filled, oracle.full) < 1e-6);
}

TEST_CASE("apply_kernel with a fully sampled mask is the identity") {
    KernelGeometry geom;
    auto oracle = make_linear_data(32, 32, geom, 2);
    Mask ones = gen_mask(MaskPattern::Gauss1D, 32, 32, 1.0, 0.25, 0);
    CoilStack out = apply_kernel(oracle.full, ones, oracle.truth);
    CHECK(stack_nrmse(out, oracle.full) == 0.0);
}

TEST_CASE("apply_kernel is linear in the data and maps zero to zero") {
    KernelGeometry geom;
    auto oracle = make_linear_data(32, 32, geom, 77);
    Mask m = uniform_column_mask(32, 32, 2, 12);

    CoilStack zero;
    zero.coils.emplace_back(32, 32, Domain::KSpace);
    CoilStack zf = apply_kernel(zero, m, oracle.truth);
    for (const auto& v : zf.coils[0].data) CHECK(std::abs(v) == 0.0);

    CoilStack y1, y2;
    y1.coils.push_back(random_grid(32, 32, Domain::KSpace, 91));
    y2.coils.push_back(random_grid(32, 32, Domain::KSpace, 92));
    cplx a(0.3, 1.2), b(-0.8, 0.1);
    CoilStack combo;
    combo.coils.emplace_back(32, 32, Domain::KSpace);
    for (size_t i = 0; i < combo.coils[0].data.size(); ++i)
        combo.coils[0].data[i] = a * y1.coils[0].data[i] + b * y2.coils[0].data[i];
    CoilStack f_combo = apply_kernel(combo, m, oracle.truth);
    CoilStack f1 = apply_kernel(y1, m, oracle.truth);
    CoilStack f2 = apply_kernel(y2, m, oracle.truth);
    double max_err = 0.0;
    for (size_t i = 0; i < f_combo.coils[0].data.size(); ++i)
        max_err = std::max(max_err,
                           std::abs(f_combo.coils[0].data[i] -
                                    (a * f1.coils[0].data[i] + b * f2.coils[0].data[i])));
    CHECK(max_err < 1e-10);
}

TEST_CASE("apply_kernel rejects non-uniform masks") {
    KernelGeometry geom;
    auto oracle = make_linear_data(32, 32, geom, 4);
    Mask bad = gen_mask(MaskPattern::Gauss2D, 32, 32, 0.4, 0.1, 3);
    CHECK_THROWS_AS(apply_kernel(oracle.full, bad, oracle.truth), GeometryError);
}

TEST_CASE("grappa_reconstruct hits the oracle at better than 100 dB") {
    for (int coils : {1, 2}) {
        KernelGeometry geom;
        geom.coils = coils;
        auto oracle = make_linear_data(64, 64, geom, 31 + coils);
        Mask m = uniform_column_mask(64, 64, 2, 16);
        CoilStack y_u = undersample_stack(oracle.full, m);
        ComplexGrid recon = grappa_reconstruct(y_u, m, geom, 1e-9);

        // reference combine of the fully sampled stack
        RealGrid truth(64, 64);
        if (coils == 1) {
            truth = magnitude(ifft2c(oracle.full.coils[0]));
        } else {
            std::vector<ComplexGrid> imgs;
            for (const auto& coil : oracle.full.coils) imgs.push_back(ifft2c(coil));
            for (size_t i = 0; i < truth.data.size(); ++i) {
                double s = 0.0;
                for (const auto& img : imgs) s += std::norm(img.data[i]);
                truth.data[i] = std::sqrt(s);
            }
        }
        RealGrid got = magnitude(recon);
        ScaledPair sp = rescale_to_peak(truth, got, 255.0);
        CHECK(psnr(sp.reference, sp.test) > 100.0);
    }
}

TEST_CASE("grappa_reconstruct on fully sampled data reproduces the image") {
    PhantomSpec spec{PhantomKind::Ellipses, 64, 64, 1, 3, 0.15};
    RealGrid x = make_phantoms(spec)[0];
    ComplexGrid y = to_kspace(x);
    Mask ones = gen_mask(MaskPattern::Gauss1D, 64, 64, 1.0, 0.25, 0);
    ComplexGrid recon = grappa_reconstruct(CoilStack{{y}}, ones, KernelGeometry{}, 1e-6);
    CHECK(max_abs_diff(real_part(recon), x) < 1e-10);
}

TEST_CASE("grappa beats zero fill on a phantom at R=2") {
    PhantomSpec spec{PhantomKind::Ellipses, 64, 64, 1, 21, 0.15};
    RealGrid x = make_phantoms(spec)[0];
    ComplexGrid y = to_kspace(x);
    Mask m = uniform_column_mask(64, 64, 2, 16);
    ComplexGrid y_u = undersample(y, m, {});

    ComplexGrid grappa_img = grappa_reconstruct(CoilStack{{y_u}}, m, KernelGeometry{}, 1e-6);
    RealGrid zf = magnitude(ifft2c(y_u));
    RealGrid gr = magnitude(grappa_img);

    ScaledPair sp_g = rescale_to_peak(x, gr, 255.0);
    ScaledPair sp_z = rescale_to_peak(x, zf, 255.0);
    CHECK(psnr(sp_g.reference, sp_g.test) > psnr(sp_z.reference, sp_z.test));
}

TEST_CASE("kernel checkpoints roundtrip") {
    KernelGeometry geom;
    geom.coils = 2;
    auto oracle = make_linear_data(64, 64, geom, 55);
    CoilStack acs = central_acs(oracle.full, 20, geom.accel);
    GrappaKernel k = estimate_kernel(acs, geom, 1e-8);
    save_kernel(k, "test_kernel");
    GrappaKernel back = load_kernel("test_kernel");
    CHECK(back.geometry.coils == 2);
    CHECK(back.fit_residual == doctest::Approx(k.fit_residual));
    CHECK(kernel_max_err(back, k) < 1e-6); // float32 storage
    std::remove("test_kernel.json");
    std::remove("test_kernel.bin");
}
