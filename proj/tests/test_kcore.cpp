#include "doctest.h"

#include <cstdio>

#include "helpers.hpp"
#include "kslab/fft.hpp"
#include "kslab/io.hpp"

using namespace kslab;
using namespace kslab::test;

TEST_CASE("fft2c of a constant image is a single DC coefficient at the center") {
    ComplexGrid g(4, 4, Domain::Image);
    for (auto& v : g.data) v = 1.0;
    ComplexGrid y = fft2c(g);
    CHECK(y.domain == Domain::KSpace);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            if (r == 2 && c == 2)
                CHECK(std::abs(y.at(r, c) - cplx(4.0, 0.0)) < 1e-12);
            else
                CHECK(std::abs(y.at(r, c)) < 1e-12);
        }
}

TEST_CASE("ifft2c of a centered unit coefficient is a constant image") {
    ComplexGrid y(8, 8, Domain::KSpace);
    y.at(4, 4) = 1.0;
    ComplexGrid x = ifft2c(y);
    for (const auto& v : x.data) CHECK(std::abs(v - cplx(0.125, 0.0)) < 1e-12);
}

TEST_CASE("fft roundtrips at double precision") {
    ComplexGrid g = random_grid(64, 64, Domain::Image, 42);
    CHECK(max_abs_diff(ifft2c(fft2c(g)), g) < 1e-12);

    ComplexGrid y = random_grid(64, 64, Domain::KSpace, 43);
    CHECK(max_abs_diff(fft2c(ifft2c(y)), y) < 1e-12);
}

TEST_CASE("fft preserves energy") {
    ComplexGrid g = random_grid(32, 32, Domain::Image, 7);
    double e_img = energy(g);
    double e_spec = energy(fft2c(g));
    CHECK(std::abs(e_spec - e_img) / e_img < 1e-10);
}

TEST_CASE("fft is linear") {
    ComplexGrid g1 = random_grid(16, 16, Domain::Image, 1);
    ComplexGrid g2 = random_grid(16, 16, Domain::Image, 2);
    cplx a(0.7, -0.3), b(-1.1, 0.4);
    ComplexGrid combo(16, 16, Domain::Image);
    for (size_t i = 0; i < combo.data.size(); ++i)
        combo.data[i] = a * g1.data[i] + b * g2.data[i];
    ComplexGrid lhs = fft2c(combo);
    ComplexGrid f1 = fft2c(g1), f2 = fft2c(g2);
    double max_err = 0.0;
    for (size_t i = 0; i < lhs.data.size(); ++i)
        max_err = std::max(max_err, std::abs(lhs.data[i] - (a * f1.data[i] + b * f2.data[i])));
    CHECK(max_err < 1e-10);
}

TEST_CASE("ifft2c of zeros is zero") {
    ComplexGrid y(16, 16, Domain::KSpace);
    ComplexGrid x = ifft2c(y);
    for (const auto& v : x.data) CHECK(std::abs(v) == 0.0);
}

TEST_CASE("domain tags are enforced") {
    ComplexGrid img(8, 8, Domain::Image);
    ComplexGrid ksp(8, 8, Domain::KSpace);
    CHECK_THROWS_AS(fft2c(ksp), DomainError);
    CHECK_THROWS_AS(ifft2c(img), DomainError);
    CHECK_THROWS_AS(real_part(ksp), DomainError);
}

TEST_CASE("spectral_decompose splits modulus and unit phase") {
    ComplexGrid y(2, 2, Domain::KSpace);
    y.at(0, 0) = cplx(3.0, 4.0);
    y.at(0, 1) = cplx(0.0, 0.0);
    y.at(1, 0) = cplx(-2.0, 0.0);
    y.at(1, 1) = cplx(0.0, -5.0);
    SpectralPair p = spectral_decompose(y);
    CHECK(p.magnitude.at(0, 0) == doctest::Approx(5.0));
    CHECK(std::abs(p.phase.at(0, 0) - cplx(0.6, 0.8)) < 1e-12);
    CHECK(p.magnitude.at(0, 1) == 0.0);
    CHECK(p.phase.at(0, 1) == cplx(0.0, 0.0));
}

TEST_CASE("spectral pair recomposes the source grid") {
    ComplexGrid y = random_grid(32, 32, Domain::KSpace, 11);
    SpectralPair p = spectral_decompose(y);
    double max_rel = 0.0;
    for (size_t i = 0; i < y.data.size(); ++i) {
        double mag = std::abs(p.phase.data[i]);
        CHECK((std::abs(mag - 1.0) < 1e-6 || mag == 0.0));
        cplx back = p.magnitude.data[i] * p.phase.data[i];
        max_rel = std::max(max_rel, std::abs(back - y.data[i]) / std::abs(y.data[i]));
    }
    CHECK(max_rel < 1e-6);
}

TEST_CASE("real_part extracts the real plane") {
    ComplexGrid g(2, 2, Domain::Image);
    g.at(0, 0) = cplx(1.0, 2.0);
    g.at(0, 1) = cplx(0.0, -3.0);
    RealGrid r = real_part(g);
    CHECK(r.at(0, 0) == 1.0);
    CHECK(r.at(0, 1) == 0.0);

    RealGrid x = random_real(16, 16, 5);
    RealGrid back = real_part(ifft2c(fft2c(embed(x))));
    CHECK(max_abs_diff(back, x) < 1e-10);
}

TEST_CASE("cgrid files roundtrip through the float32 boundary") {
    ComplexGrid g = random_grid(12, 20, Domain::KSpace, 99);
    std::string path = "test_grid.cgrid";
    save_cgrid(g, path);
    ComplexGrid back = load_cgrid(path);
    CHECK(back.height == 12);
    CHECK(back.width == 20);
    CHECK(back.domain == Domain::KSpace);
    CHECK(max_abs_diff(back, g) < 1e-6);
    std::remove(path.c_str());
    std::remove((path + ".json").c_str());
}

TEST_CASE("loading a missing cgrid names the path") {
    CHECK_THROWS_WITH_AS(load_cgrid("no_such_file.cgrid"),
                         doctest::Contains("no_such_file.cgrid"), IoError);
}
