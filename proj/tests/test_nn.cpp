#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "helpers.hpp"
#include "kslab/io.hpp"
#include "kslab/nn/models.hpp"

using namespace kslab;
using namespace kslab::nn;
using namespace kslab::test;

namespace {

Tensor random_tensor(int n, int c, int h, int w, uint64_t seed) {
    Tensor t(n, c, h, w);
    Rng rng(seed);
    for (double& v : t.v) v = rng.next_normal();
    return t;
}

Tensor probe_like(const Tensor& t, uint64_t seed) {
    Tensor p = t;
    Rng rng(seed);
    for (double& v : p.v) v = rng.next_normal();
    return p;
}

// linear probe loss sum(t . f(x)); immune to the scale/shift invariances of
// normalization layers that make quadratic probes degenerate
double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) s += a.v[i] * b.v[i];
    return s;
}

double rel_err(double got, double want) {
    // below this both sides are finite-difference quantization noise (true
    // zero gradients, e.g. a conv bias feeding a batch norm)
    if (std::max(std::abs(got), std::abs(want)) < 1e-6) return 0.0;
    double denom = std::max({std::abs(got), std::abs(want), 1e-8});
    return std::abs(got - want) / denom;
}

// move trainable parameters to a generic point: zero-initialized biases and
// betas can pin activations exactly onto the leaky-ReLU kink
void jitter_params(ParamStore& store, uint64_t seed) {
    Rng rng(seed);
    for (const auto& e : store.manifest()) {
        if (!e.trainable) continue;
        for (size_t i = e.offset; i < e.offset + e.count; ++i)
            store.values[i] += 0.05 * rng.next_normal();
    }
}

// central differences over a parameter slot
template <class F>
double fd_param(ParamStore& store, size_t idx, F value, double h = 1e-6) {
    double keep = store.values[idx];
    store.values[idx] = keep + h;
    double up = value();
    store.values[idx] = keep - h;
    double dn = value();
    store.values[idx] = keep;
    return (up - dn) / (2.0 * h);
}

} // namespace

TEST_CASE("tensor and grid conversions") {
    RealGrid g = random_real(4, 6, 3);
    Tensor t = from_grid(g);
    CHECK(t.n == 1);
    CHECK(t.c == 1);
    CHECK(t.h == 4);
    CHECK(t.w == 6);
    CHECK(max_abs_diff(to_grid(t), g) == 0.0);
    CHECK_THROWS_AS(Tensor(0, 1, 2, 2), ShapeError);
}

TEST_CASE("conv2d forward/backward against central differences") {
    ParamStore store;
    Rng rng(5);
    Conv2d conv = Conv2d::create(store, "c", 2, 3, 3, 2, 1, rng);
    jitter_params(store, 700);
    Tensor x = random_tensor(1, 2, 8, 8, 6);

    Conv2dCache cache;
    Tensor out = conv.forward(store, x, &cache);
    CHECK(out.c == 3);
    CHECK(out.h == 4);
    CHECK(out.w == 4);
    Tensor t = probe_like(out, 100);
    auto value = [&]() { return dot(t, conv.forward(store, x, nullptr)); };
    std::vector<double> grads(store.total(), 0.0);
    Tensor gx = conv.backward(store, cache, t, grads);

    for (size_t i = 0; i < store.total(); ++i)
        CHECK(rel_err(grads[i], fd_param(store, i, value)) < 1e-4);

    for (size_t i = 0; i < x.v.size(); i += 7) {
        double keep = x.v[i];
        x.v[i] = keep + 1e-6;
        double up = value();
        x.v[i] = keep - 1e-6;
        double dn = value();
        x.v[i] = keep;
        CHECK(rel_err(gx.v[i], (up - dn) / 2e-6) < 1e-4);
    }
}

TEST_CASE("conv_transpose2d doubles the spatial dims and matches differences") {
    ParamStore store;
    Rng rng(7);
    ConvT2d deconv = ConvT2d::create(store, "d", 2, 3, 4, 2, 1, rng);
    jitter_params(store, 701);
    Tensor x = random_tensor(1, 2, 4, 4, 8);

    ConvT2dCache cache;
    Tensor out = deconv.forward(store, x, &cache);
    CHECK(out.h == 8);
    CHECK(out.w == 8);
    Tensor t = probe_like(out, 101);
    auto value = [&]() { return dot(t, deconv.forward(store, x, nullptr)); };
    std::vector<double> grads(store.total(), 0.0);
    Tensor gx = deconv.backward(store, cache, t, grads);

    for (size_t i = 0; i < store.total(); ++i)
        CHECK(rel_err(grads[i], fd_param(store, i, value)) < 1e-4);
    for (size_t i = 0; i < x.v.size(); i += 5) {
        double keep = x.v[i];
        x.v[i] = keep + 1e-6;
        double up = value();
        x.v[i] = keep - 1e-6;
        double dn = value();
        x.v[i] = keep;
        CHECK(rel_err(gx.v[i], (up - dn) / 2e-6) < 1e-4);
    }
}

TEST_CASE("batchnorm training mode statistics and gradients") {
    ParamStore store;
    BatchNorm bn = BatchNorm::create(store, "bn", 3);
    Tensor x = random_tensor(1, 3, 6, 6, 9);

    BnCache cache;
    Tensor out = bn.forward(store, x, true, &cache);
    // batch stats give a zero-mean unit-variance (up to eps) normalized map
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0;
        for (int y = 0; y < 6; ++y)
            for (int xx = 0; xx < 6; ++xx) mean += out.at(0, c, y, xx);
        CHECK(std::abs(mean / 36.0) < 1e-12);
    }

    Tensor t = probe_like(out, 102);
    auto value = [&]() { return dot(t, bn.forward(store, x, true, nullptr)); };
    std::vector<double> grads(store.total(), 0.0);
    Tensor gx = bn.backward(store, cache, t, grads);
    for (size_t i = 0; i < 6; ++i) // gamma and beta entries
        CHECK(rel_err(grads[i], fd_param(store, i, value)) < 1e-4);
    for (size_t i = 0; i < x.v.size(); i += 11) {
        double keep = x.v[i];
        x.v[i] = keep + 1e-6;
        double up = value();
        x.v[i] = keep - 1e-6;
        double dn = value();
        x.v[i] = keep;
        CHECK(rel_err(gx.v[i], (up - dn) / 2e-6) < 1e-4);
    }
}

TEST_CASE("batchnorm inference uses running averages and never produces NaN") {
    ParamStore store;
    BatchNorm bn = BatchNorm::create(store, "bn", 1);
    Tensor x = random_tensor(1, 1, 4, 4, 10);
    for (int i = 0; i < 5; ++i) bn.forward(store, x, true, nullptr);
    Tensor out = bn.forward(store, x, false, nullptr);
    for (double v : out.v) CHECK(std::isfinite(v));

    Tensor zeros(1, 1, 4, 4);
    Tensor z_out = bn.forward(store, zeros, true, nullptr);
    for (double v : z_out.v) CHECK(std::isfinite(v));
}

TEST_CASE("pointwise ops differentiate correctly") {
    Tensor x = random_tensor(1, 2, 5, 5, 11);

    LeakyCache lc;
    Tensor ly = leaky_relu_forward(x, 0.2, &lc);
    Tensor lg = leaky_relu_backward(lc, 0.2, ly);
    for (size_t i = 0; i < x.v.size(); ++i)
        CHECK(lg.v[i] == doctest::Approx(ly.v[i] * (x.v[i] >= 0.0 ? 1.0 : 0.2)));

    TanhCache tc;
    Tensor ty = tanh_forward(x, &tc);
    for (double v : ty.v) {
        CHECK(v > -1.0);
        CHECK(v < 1.0);
    }
    Tensor ones(1, 2, 5, 5);
    for (double& v : ones.v) v = 1.0;
    Tensor tg = tanh_backward(tc, ones);
    for (size_t i = 0; i < x.v.size(); ++i)
        CHECK(tg.v[i] == doctest::Approx(1.0 - ty.v[i] * ty.v[i]));

    GapCache gc;
    Tensor gy = global_avg_pool_forward(x, &gc);
    CHECK(gy.h == 1);
    CHECK(gy.w == 1);
    double mean0 = 0.0;
    for (int y = 0; y < 5; ++y)
        for (int xx = 0; xx < 5; ++xx) mean0 += x.at(0, 0, y, xx);
    CHECK(gy.at(0, 0, 0, 0) == doctest::Approx(mean0 / 25.0));
}

TEST_CASE("remnant block with zero convolutions returns the normalized input") {
    ParamStore store;
    Rng rng(13);
    RemnantBlock block = RemnantBlock::create(store, "rem", {8, 16, 32}, rng);
    // zero every conv weight and bias; batch-norm gammas stay 1
    for (const auto& e : store.manifest())
        if (e.name.find("conv") != std::string::npos || e.name.find("proj") != std::string::npos)
            for (size_t i = e.offset; i < e.offset + e.count; ++i) store.values[i] = 0.0;

    Tensor x = random_tensor(1, 1, 8, 8, 14);
    RemnantBlock::Cache cache;
    Tensor residue = block.forward(store, x, true, &cache);
    CHECK(residue.h == 8);
    CHECK(residue.w == 8);

    Tensor xn = block.bn_in.forward(store, x, true, nullptr);
    for (size_t i = 0; i < residue.v.size(); ++i)
        CHECK(residue.v[i] == doctest::Approx(xn.v[i]).epsilon(1e-12));

    Tensor two_ch = random_tensor(1, 2, 8, 8, 15);
    CHECK_THROWS_AS(block.forward(store, two_ch, true, nullptr), ShapeError);
}

TEST_CASE("remnant block gradients match central differences") {
    ParamStore store;
    Rng rng(16);
    RemnantBlock block = RemnantBlock::create(store, "rem", {4, 6, 8}, rng);
    jitter_params(store, 702);
    Tensor x = random_tensor(1, 1, 8, 8, 17);

    RemnantBlock::Cache cache;
    Tensor residue = block.forward(store, x, true, &cache);
    Tensor t = probe_like(residue, 103);
    auto value = [&]() { return dot(t, block.forward(store, x, true, nullptr)); };
    std::vector<double> grads(store.total(), 0.0);
    Tensor gx = block.backward(store, cache, t, grads);

    for (size_t i = 0; i < store.total(); i += 3) {
        if (!store.manifest().empty()) {
            // running stats are not differentiated; skip them
            bool skip = false;
            for (const auto& e : store.manifest())
                if (i >= e.offset && i < e.offset + e.count && !e.trainable) skip = true;
            if (skip) continue;
        }
        CHECK(rel_err(grads[i], fd_param(store, i, value)) < 1e-4);
    }
    for (size_t i = 0; i < x.v.size(); i += 6) {
        double keep = x.v[i];
        x.v[i] = keep + 1e-6;
        double up = value();
        x.v[i] = keep - 1e-6;
        double dn = value();
        x.v[i] = keep;
        CHECK(rel_err(gx.v[i], (up - dn) / 2e-6) < 1e-4);
    }
}

TEST_CASE("generator keeps shape, bounds output, rejects bad dims") {
    RemUNetConfig cfg; // 3 levels
    ParamStore store;
    Rng rng = init_rng(3);
    Generator gen = Generator::create(cfg, store, rng);

    Tensor x = random_tensor(1, 1, 64, 64, 18);
    Tensor out = gen.forward(store, x, true, nullptr);
    CHECK(out.n == 1);
    CHECK(out.c == 1);
    CHECK(out.h == 64);
    CHECK(out.w == 64);
    for (double v : out.v) {
        CHECK(v > -1.0);
        CHECK(v < 1.0);
    }

    Tensor bad = random_tensor(1, 1, 20, 20, 19);
    CHECK_THROWS_AS(gen.forward(store, bad, true, nullptr), ShapeError);
}

TEST_CASE("generator parameter gradients match central differences on probes") {
    RemUNetConfig cfg;
    cfg.base_width = 4;
    cfg.remnant_widths = {4, 6, 8};
    ParamStore store;
    Rng rng = init_rng(4);
    Generator gen = Generator::create(cfg, store, rng);
    jitter_params(store, 703);
    Tensor x = random_tensor(1, 1, 16, 16, 20);

    Generator::Cache cache;
    Tensor out = gen.forward(store, x, true, &cache);
    Tensor t = probe_like(out, 104);
    auto value = [&]() { return dot(t, gen.forward(store, x, true, nullptr)); };
    std::vector<double> grads(store.total(), 0.0);
    Tensor gx = gen.backward(store, cache, t, grads);

    Rng pick(21);
    int checked = 0;
    while (checked < 10) {
        size_t i = pick.next_below(store.total());
        bool trainable = true;
        for (const auto& e : store.manifest())
            if (i >= e.offset && i < e.offset + e.count) trainable = e.trainable;
        if (!trainable) continue;
        CHECK(rel_err(grads[i], fd_param(store, i, value)) < 1e-3);
        ++checked;
    }
    for (size_t i = 0; i < x.v.size(); i += 29) {
        double keep = x.v[i];
        x.v[i] = keep + 1e-6;
        double up = value();
        x.v[i] = keep - 1e-6;
        double dn = value();
        x.v[i] = keep;
        CHECK(rel_err(gx.v[i], (up - dn) / 2e-6) < 1e-3);
    }
}

TEST_CASE("discriminator score range, neutral head, gradient probes") {
    ParamStore store;
    Rng rng = init_rng(5);
    Discriminator disc = Discriminator::create(store, rng);
    Tensor x = random_tensor(1, 1, 16, 16, 22);

    double score = disc.forward(store, x, true, nullptr);
    CHECK(score > 0.0);
    CHECK(score < 1.0);

    // zeroed affine head pins the score at one half
    ParamStore store2;
    Rng rng2 = init_rng(6);
    Discriminator disc2 = Discriminator::create(store2, rng2);
    const auto& head_w = store2.entry("disc.head.w");
    const auto& head_b = store2.entry("disc.head.b");
    for (size_t i = head_w.offset; i < head_w.offset + head_w.count; ++i) store2.values[i] = 0.0;
    for (size_t i = head_b.offset; i < head_b.offset + head_b.count; ++i) store2.values[i] = 0.0;
    CHECK(disc2.forward(store2, x, true, nullptr) == doctest::Approx(0.5));

    Tensor bad = random_tensor(1, 1, 24, 24, 23);
    CHECK_THROWS_AS(disc.forward(store, bad, true, nullptr), ShapeError);

    jitter_params(store, 704);
    auto value = [&]() { return disc.forward(store, x, true, nullptr); };
    Discriminator::Cache cache;
    disc.forward(store, x, true, &cache);
    std::vector<double> grads(store.total(), 0.0);
    disc.backward(store, cache, 1.0, grads);
    Rng pick(24);
    int checked = 0;
    while (checked < 10) {
        size_t i = pick.next_below(store.total());
        bool trainable = true;
        for (const auto& e : store.manifest())
            if (i >= e.offset && i < e.offset + e.count) trainable = e.trainable;
        if (!trainable) continue;
        CHECK(rel_err(grads[i], fd_param(store, i, value)) < 1e-3);
        ++checked;
    }
}

TEST_CASE("adam single step matches the scalar closed form") {
    ParamStore store;
    store.add("p", {2});
    store.values = {0.0, 0.0};
    AdamConfig cfg{0.01, 0.9, 0.999, 1e-8};
    std::vector<double> g{0.3, -1.7};
    adam_step(store, g, cfg);
    // first step from zero moments: update = -lr * g / (|g| + eps)
    CHECK(store.values[0] == doctest::Approx(-0.01 * 0.3 / (0.3 + 1e-8)).epsilon(1e-12));
    CHECK(store.values[1] == doctest::Approx(0.01 * 1.7 / (1.7 + 1e-8)).epsilon(1e-12));
    CHECK(store.step == 1);
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
    ParamStore store;
    store.add("p", {4});
    store.values = {1.0, -2.0, 3.0, 0.5};
    auto before = store.values;
    adam_step(store, {0.0, 0.0, 0.0, 0.0}, {1e-3, 0.9, 0.999, 1e-8});
    CHECK(store.values == before);
    CHECK(store.step == 1);
}

TEST_CASE("adam is deterministic and rejects bad gradient lengths") {
    auto run = []() {
        ParamStore s;
        s.add("p", {3});
        s.values = {0.1, 0.2, 0.3};
        for (int i = 0; i < 5; ++i) adam_step(s, {0.01, -0.02, 0.03}, {1e-2, 0.9, 0.999, 1e-8});
        return s.values;
    };
    CHECK(run() == run());

    ParamStore s;
    s.add("p", {3});
    CHECK_THROWS_AS(adam_step(s, {1.0}, {}), ShapeError);
}

TEST_CASE("seeded initialization is bit identical") {
    RemUNetConfig cfg;
    ParamStore a, b;
    Rng ra = init_rng(42), rb = init_rng(42);
    Generator::create(cfg, a, ra);
    Generator::create(cfg, b, rb);
    CHECK(a.values == b.values);

    ParamStore c;
    Rng rc = init_rng(43);
    Generator::create(cfg, c, rc);
    CHECK(a.values != c.values);
}

TEST_CASE("model checkpoints roundtrip through float32") {
    RemUNetConfig cfg;
    cfg.base_width = 4;
    cfg.remnant_widths = {4, 6, 8};
    ParamStore store;
    Rng rng = init_rng(7);
    Generator::create(cfg, store, rng);
    store.step = 17;
    save_params(store, {{"levels", cfg.levels}}, "test_ckpt");

    ParamStore loaded;
    Rng rng2 = init_rng(8); // different init, then overwritten by the load
    Generator::create(cfg, loaded, rng2);
    nlohmann::json config = load_params(loaded, "test_ckpt");
    CHECK(config.at("levels").get<int>() == 3);
    CHECK(loaded.step == 17);
    double max_err = 0.0;
    for (size_t i = 0; i < store.values.size(); ++i)
        max_err = std::max(max_err, std::abs(loaded.values[i] - store.values[i]));
    CHECK(max_err < 1e-6);
    std::remove("test_ckpt.json");
    std::remove("test_ckpt.bin");
}
