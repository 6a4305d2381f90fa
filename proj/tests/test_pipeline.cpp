#include "doctest.h"

#include <cstdlib>

#include "helpers.hpp"
#include "kslab/fft.hpp"
#include "kslab/pipeline.hpp"

using namespace kslab;
using namespace kslab::test;

namespace {

RealGrid test_phantom(int n, uint64_t seed) {
    PhantomSpec spec{PhantomKind::Blobs, n, n, 1, seed, 0.15};
    return make_phantoms(spec)[0];
}

} // namespace

TEST_CASE("zero fill on fully sampled data reproduces the image") {
    RealGrid x = test_phantom(32, 1);
    ComplexGrid y = to_kspace(x);
    ReconResult r = zero_fill_recon(y);
    CHECK(r.method == ReconMethod::ZeroFill);
    CHECK(max_abs_diff(r.image, x) < 1e-10);

    ComplexGrid zeros(16, 16, Domain::KSpace);
    CHECK(max_abs_diff(zero_fill_recon(zeros).image, RealGrid(16, 16)) == 0.0);

    ComplexGrid img(16, 16, Domain::Image);
    CHECK_THROWS_AS(zero_fill_recon(img), DomainError);
}

TEST_CASE("undersampling strictly hurts the zero-fill PSNR") {
    RealGrid x = test_phantom(64, 2);
    ComplexGrid y = to_kspace(x);
    Mask m = gen_mask(MaskPattern::Gauss1D, 64, 64, 0.30, 0.125, 3);
    ComplexGrid y_u = undersample(y, m, {});

    MetricConfig mc;
    ScaledPair full = rescale_to_peak(x, zero_fill_recon(y).image, mc.peak);
    ScaledPair part = rescale_to_peak(x, zero_fill_recon(y_u).image, mc.peak);
    CHECK(psnr(part.reference, part.test) < psnr(full.reference, full.test));
}

TEST_CASE("kspace_correct pins observed entries bit-exactly") {
    RealGrid xg_real = test_phantom(32, 4);
    ComplexGrid x_g = embed(xg_real);
    ComplexGrid gen = embed(test_phantom(32, 5));
    Mask m = gen_mask(MaskPattern::Gauss2D, 32, 32, 0.4, 0.1, 6);

    ComplexGrid corrected = kspace_correct(gen, x_g, m);
    ComplexGrid yx = fft2c(x_g);
    ComplexGrid yg = fft2c(gen);
    for (size_t i = 0; i < corrected.data.size(); ++i) {
        if (m.keep[i])
            CHECK(corrected.data[i] == yx.data[i]);
        else
            CHECK(corrected.data[i] == yg.data[i]);
    }
}

TEST_CASE("kspace_correct identity and full-mask cases") {
    RealGrid xg_real = test_phantom(32, 7);
    ComplexGrid x_g = embed(xg_real);
    Mask m = gen_mask(MaskPattern::Gauss1D, 32, 32, 0.4, 0.2, 8);

    ComplexGrid self = kspace_correct(x_g, x_g, m);
    CHECK(max_abs_diff(self, fft2c(x_g)) == 0.0);
    // reconstructed image equals the input image
    CHECK(max_abs_diff(real_part(ifft2c(self)), xg_real) < 1e-12);
    // type contract: the stored spectrum matches the magnitude image respectrum
    RealGrid mag = magnitude(ifft2c(self));
    CHECK(max_abs_diff(fft2c(embed(mag)), self) < 1e-6);

    Mask ones = gen_mask(MaskPattern::Gauss1D, 32, 32, 1.0, 0.2, 0);
    ComplexGrid gen = embed(test_phantom(32, 9));
    CHECK(max_abs_diff(kspace_correct(gen, x_g, ones), fft2c(x_g)) == 0.0);

    ComplexGrid small(16, 16, Domain::Image);
    CHECK_THROWS_AS(kspace_correct(small, x_g, m), ShapeError);
}

TEST_CASE("kspace_correct is idempotent under re-correction") {
    ComplexGrid x_g = embed(test_phantom(32, 10));
    ComplexGrid gen = embed(test_phantom(32, 11));
    Mask m = gen_mask(MaskPattern::Gauss1D, 32, 32, 0.3, 0.1, 12);

    ComplexGrid once = kspace_correct(gen, x_g, m);
    ComplexGrid again = kspace_correct(ifft2c(once), x_g, m);
    for (size_t i = 0; i < once.data.size(); ++i)
        if (m.keep[i]) CHECK(again.data[i] == once.data[i]);
    CHECK(max_abs_diff(again, once) < 1e-12);
}

TEST_CASE("net_recon honors the correction contract with an untrained generator") {
    RealGrid x = test_phantom(32, 13);
    ComplexGrid y = to_kspace(x);
    Mask m = gen_mask(MaskPattern::Gauss1D, 32, 32, 0.4, 0.25, 14);
    ComplexGrid y_u = undersample(y, m, {});

    nn::RemUNetConfig cfg;
    cfg.base_width = 4;
    cfg.remnant_widths = {4, 6, 8};
    ModelBundle b = ModelBundle::create(cfg, 99);

    KernelGeometry geom;
    ReconResult plain = net_recon(y_u, m, b.gen, b.gen_params, false, geom, 1e-6);
    ReconResult corrected = net_recon(y_u, m, b.gen, b.gen_params, true, geom, 1e-6);
    CHECK(plain.method == ReconMethod::Net);
    CHECK(corrected.method == ReconMethod::NetCorrected);

    ComplexGrid ref = observed_reference(y_u, m, geom, 1e-6);
    for (size_t i = 0; i < corrected.kspace.data.size(); ++i) {
        if (m.keep[i]) {
            CHECK(corrected.kspace.data[i] == ref.data[i]); // exact data fidelity
        } else {
            CHECK(corrected.kspace.data[i] == plain.kspace.data[i]);
        }
    }
}

TEST_CASE("net_recon falls back to zero fill on non-uniform masks") {
    RealGrid x = test_phantom(32, 15);
    ComplexGrid y_u = undersample(to_kspace(x), gen_mask(MaskPattern::Gauss2D, 32, 32, 0.4, 0.1, 16),
                                  {});
    Mask m = gen_mask(MaskPattern::Gauss2D, 32, 32, 0.4, 0.1, 16);

    nn::RemUNetConfig cfg;
    cfg.base_width = 4;
    cfg.remnant_widths = {4, 6, 8};
    ModelBundle b = ModelBundle::create(cfg, 1);
    ReconResult r = net_recon(y_u, m, b.gen, b.gen_params, true, KernelGeometry{}, 1e-6);
    CHECK(r.grappa_fallback);
}

namespace {

TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.lr = 1e-4;
    cfg.mask = MaskSpec{MaskPattern::Gauss1D, 0.4, 0.25, 5};
    cfg.seed = 7;
    cfg.generator.base_width = 4;
    cfg.generator.remnant_widths = {4, 6, 8};
    return cfg;
}

std::vector<RealGrid> tiny_dataset(int count) {
    PhantomSpec spec{PhantomKind::Blobs, 32, 32, count, 3, 0.15};
    return make_phantoms(spec);
}

} // namespace

TEST_CASE("training with lr 0 leaves the optimized parameters unchanged") {
    TrainConfig cfg = tiny_train_config();
    cfg.epochs = 1;
    cfg.lr = 0.0;
    ModelBundle fresh = ModelBundle::create(cfg.generator, cfg.seed);
    TrainResult res = train(tiny_dataset(2), cfg);
    CHECK(res.history.size() == 1);
    // batch-norm running stats move with every forward pass; every trainable
    // entry must be bit identical
    auto check_trainable = [](const nn::ParamStore& got, const nn::ParamStore& want) {
        for (const auto& e : got.manifest()) {
            if (!e.trainable) continue;
            for (size_t i = e.offset; i < e.offset + e.count; ++i)
                if (got.values[i] != want.values[i]) return false;
        }
        return true;
    };
    CHECK(check_trainable(res.model.gen_params, fresh.gen_params));
    CHECK(check_trainable(res.model.disc_params, fresh.disc_params));
    CHECK(res.model.gen_params.step == 2); // one step per sample
}

TEST_CASE("training is bit deterministic for a fixed seed") {
    TrainConfig cfg = tiny_train_config();
    TrainResult a = train(tiny_dataset(3), cfg);
    TrainResult b = train(tiny_dataset(3), cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (size_t e = 0; e < a.history.size(); ++e)
        CHECK(a.history[e].to_json_line() == b.history[e].to_json_line());
    CHECK(a.model.gen_params.values == b.model.gen_params.values);
    CHECK(a.model.disc_params.values == b.model.disc_params.values);
}

TEST_CASE("training rejects bad inputs") {
    TrainConfig cfg = tiny_train_config();
    CHECK_THROWS_AS(train({}, cfg), ConfigError);
    std::vector<RealGrid> odd{RealGrid(24, 24)};
    CHECK_THROWS_AS(train(odd, cfg), ConfigError);
}

TEST_CASE("evaluate emits per-image rows whose means match the aggregates") {
    TrainConfig cfg = tiny_train_config();
    cfg.epochs = 1;
    std::vector<RealGrid> data = tiny_dataset(3);
    TrainResult res = train(data, cfg);

    EvalTable table = evaluate(data, res.mask, res.model.gen, res.model.gen_params,
                               cfg.grappa_geom, cfg.grappa_ridge);
    CHECK(table.rows.size() == 12); // 3 images x 4 methods
    for (const auto& agg : table.aggregates) {
        double mean = 0.0;
        int n = 0;
        for (const auto& row : table.rows)
            if (row.method == agg.method) {
                mean += row.psnr_db;
                ++n;
            }
        CHECK(n == 3);
        CHECK(std::abs(agg.psnr_mean - mean / n) < 1e-10);
    }
}

TEST_CASE("evaluation is independent of the thread cap") {
    TrainConfig cfg = tiny_train_config();
    cfg.epochs = 1;
    std::vector<RealGrid> data = tiny_dataset(4);
    TrainResult res = train(data, cfg);

    setenv("KSPACE_LAB_THREADS", "1", 1);
    EvalTable serial = evaluate(data, res.mask, res.model.gen, res.model.gen_params,
                                cfg.grappa_geom, cfg.grappa_ridge);
    setenv("KSPACE_LAB_THREADS", "2", 1);
    EvalTable parallel = evaluate(data, res.mask, res.model.gen, res.model.gen_params,
                                  cfg.grappa_geom, cfg.grappa_ridge);
    unsetenv("KSPACE_LAB_THREADS");
    REQUIRE(serial.rows.size() == parallel.rows.size());
    for (size_t i = 0; i < serial.rows.size(); ++i)
        CHECK(serial.rows[i].to_json_line() == parallel.rows[i].to_json_line());
}

TEST_CASE("zero-fill PSNR improves with the sampling fraction on average") {
    RealGrid x = test_phantom(64, 20);
    ComplexGrid y = to_kspace(x);
    MetricConfig mc;
    double prev = -1.0;
    for (double fraction : {0.15, 0.3, 0.6}) {
        double mean = 0.0;
        for (uint64_t seed = 0; seed < 10; ++seed) {
            Mask m = gen_mask(MaskPattern::Gauss1D, 64, 64, fraction, 0.1, seed);
            ScaledPair sp = rescale_to_peak(x, zero_fill_recon(undersample(y, m, {})).image,
                                            mc.peak);
            mean += psnr(sp.reference, sp.test);
        }
        mean /= 10.0;
        CHECK(mean > prev);
        prev = mean;
    }
}

TEST_CASE("train config json roundtrip") {
    TrainConfig cfg = tiny_train_config();
    cfg.weights.alpha = 12.0;
    cfg.noise_sigma = 0.05;
    TrainConfig back = TrainConfig::from_json(cfg.to_json());
    CHECK(back.epochs == cfg.epochs);
    CHECK(back.weights.alpha == 12.0);
    CHECK(back.mask.fraction == cfg.mask.fraction);
    CHECK(back.noise_sigma == 0.05);
    CHECK(back.generator.base_width == 4);
    CHECK(back.seed == cfg.seed);
}
