#include "kslab/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "kslab/fft.hpp"
#include "kslab/io.hpp"

namespace kslab {

const char* recon_method_name(ReconMethod m) {
    switch (m) {
        case ReconMethod::ZeroFill: return "zerofill";
        case ReconMethod::Grappa: return "grappa";
        case ReconMethod::Net: return "net";
        case ReconMethod::NetCorrected: return "net_corrected";
    }
    return "zerofill";
}

ReconResult zero_fill_recon(const ComplexGrid& y_u) {
    if (y_u.domain != Domain::KSpace)
        throw DomainError("zero_fill_recon: expected k-space input");
    ReconResult r;
    r.image = magnitude(ifft2c(y_u));
    r.kspace = y_u;
    r.method = ReconMethod::ZeroFill;
    return r;
}

ReconResult grappa_recon(const CoilStack& y_u, const Mask& m, const KernelGeometry& geom,
                         double ridge) {
    ReconResult r;
    ComplexGrid img = grappa_reconstruct(y_u, m, geom, ridge);
    r.image = magnitude(img);
    r.kspace = fft2c(embed(r.image));
    r.method = ReconMethod::Grappa;
    return r;
}

ComplexGrid kspace_correct(const ComplexGrid& gen_img, const ComplexGrid& x_g, const Mask& m) {
    require_same_shape(gen_img, x_g, "kspace_correct");
    if (gen_img.height != m.height || gen_img.width != m.width)
        throw ShapeError("kspace_correct: mask shape mismatch");
    ComplexGrid yg = fft2c(gen_img);
    ComplexGrid yx = fft2c(x_g);
    ComplexGrid out(yg.height, yg.width, Domain::KSpace);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = m.keep[i] ? yx.data[i] : yg.data[i];
    return out;
}

Mask MaskSpec::build(int height, int width) const {
    double acs = acs_fraction < 0.0 ? default_acs_fraction(width) : acs_fraction;
    return gen_mask(pattern, height, width, fraction, acs, seed);
}

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1) throw ConfigError("TrainConfig: counts must be positive");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("TrainConfig: bad learning rate");
    weights.validate();
    generator.validate();
}

nlohmann::json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"batch_size", batch_size},
            {"lr", lr},
            {"beta1", beta1},
            {"beta2", beta2},
            {"adam_eps", adam_eps},
            {"weights", weights_to_json(weights)},
            {"mask",
             {{"pattern", pattern_name(mask.pattern)},
              {"fraction", mask.fraction},
              {"acs_fraction", mask.acs_fraction},
              {"seed", mask.seed}}},
            {"noise_sigma", noise_sigma},
            {"seed", seed},
            {"kernel_refresh_epochs", kernel_refresh_epochs},
            {"generator",
             {{"levels", generator.levels},
              {"base_width", generator.base_width},
              {"remnant_widths", generator.remnant_widths},
              {"leaky_slope", generator.leaky_slope}}},
            {"adversarial", adversarial == AdversarialMode::Log ? "log" : "critic"},
            {"grappa",
             {{"source_lines", grappa_geom.source_lines},
              {"taps", grappa_geom.taps},
              {"accel", grappa_geom.accel},
              {"coils", grappa_geom.coils},
              {"ridge", grappa_ridge}}}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    if (j.contains("weights")) c.weights = weights_from_json(j.at("weights"));
    if (j.contains("mask")) {
        const auto& m = j.at("mask");
        c.mask.pattern = pattern_from_name(m.value("pattern", std::string("gauss1d")));
        c.mask.fraction = m.value("fraction", c.mask.fraction);
        c.mask.acs_fraction = m.value("acs_fraction", c.mask.acs_fraction);
        c.mask.seed = m.value("seed", c.mask.seed);
    }
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.seed = j.value("seed", c.seed);
    c.kernel_refresh_epochs = j.value("kernel_refresh_epochs", c.kernel_refresh_epochs);
    if (j.contains("generator")) {
        const auto& g = j.at("generator");
        c.generator.levels = g.value("levels", c.generator.levels);
        c.generator.base_width = g.value("base_width", c.generator.base_width);
        if (g.contains("remnant_widths")) {
            auto rw = g.at("remnant_widths").get<std::vector<int>>();
            if (rw.size() != 3) throw ConfigError("TrainConfig: remnant_widths needs 3 entries");
            c.generator.remnant_widths = {rw[0], rw[1], rw[2]};
        }
        c.generator.leaky_slope = g.value("leaky_slope", c.generator.leaky_slope);
    }
    if (j.value("adversarial", std::string("log")) == "critic")
        c.adversarial = AdversarialMode::Critic;
    if (j.contains("grappa")) {
        const auto& g = j.at("grappa");
        c.grappa_geom.source_lines = g.value("source_lines", c.grappa_geom.source_lines);
        c.grappa_geom.taps = g.value("taps", c.grappa_geom.taps);
        c.grappa_geom.accel = g.value("accel", c.grappa_geom.accel);
        c.grappa_geom.coils = g.value("coils", c.grappa_geom.coils);
        c.grappa_ridge = g.value("ridge", c.grappa_ridge);
    }
    c.validate();
    return c;
}

ModelBundle ModelBundle::create(const nn::RemUNetConfig& cfg, uint64_t seed) {
    ModelBundle b;
    b.cfg = cfg;
    Rng grng(Rng::substream(seed, 0x67656e));
    Rng drng(Rng::substream(seed, 0x64697363));
    b.gen = nn::Generator::create(cfg, b.gen_params, grng);
    b.disc = nn::Discriminator::create(b.disc_params, drng);
    return b;
}

namespace {

RealGrid to_unit_range(const RealGrid& x) { // [0,1] -> [-1,1]
    RealGrid out = x;
    for (double& v : out.data) v = 2.0 * v - 1.0;
    return out;
}

RealGrid from_unit_range(const RealGrid& x) { // [-1,1] -> [0,1]
    RealGrid out = x;
    for (double& v : out.data) v = 0.5 * (v + 1.0);
    return out;
}

/// Generator input: GRAPPA image when the mask allows it, zero fill otherwise.
ComplexGrid generator_input(const ComplexGrid& y_u, const Mask& m, const KernelGeometry& geom,
                            double ridge, bool* fallback) {
    if (admits_uniform_grappa(m, geom)) {
        if (fallback) *fallback = false;
        return grappa_reconstruct(CoilStack{{y_u}}, m, geom, ridge);
    }
    if (fallback) *fallback = true;
    return ifft2c(y_u);
}

} // namespace

ComplexGrid observed_reference(const ComplexGrid& y_u, const Mask& m,
                               const KernelGeometry& geom, double ridge) {
    return fft2c(generator_input(y_u, m, geom, ridge, nullptr));
}

ReconResult net_recon(const ComplexGrid& y_u, const Mask& m, const nn::Generator& gen,
                      nn::ParamStore& params, bool correct, const KernelGeometry& geom,
                      double ridge) {
    if (y_u.domain != Domain::KSpace)
        throw DomainError("net_recon: expected k-space input");
    ReconResult r;
    ComplexGrid x_g = generator_input(y_u, m, geom, ridge, &r.grappa_fallback);

    nn::Tensor in = nn::from_grid(to_unit_range(real_part(x_g)));
    nn::Tensor out = gen.forward(params, in, /*training=*/false, nullptr);
    RealGrid gen_img = from_unit_range(nn::to_grid(out));

    if (correct) {
        r.kspace = kspace_correct(embed(gen_img), x_g, m);
        r.image = magnitude(ifft2c(r.kspace));
        r.method = ReconMethod::NetCorrected;
    } else {
        r.image = gen_img;
        r.kspace = fft2c(embed(gen_img));
        r.method = ReconMethod::Net;
    }
    return r;
}

namespace {

LossReport mean_report(const std::vector<LossReport>& reports) {
    LossReport m;
    if (reports.empty()) return m;
    for (const auto& r : reports) {
        m.imse += r.imse;
        m.fmag += r.fmag;
        m.fphase += r.fphase;
        m.grappa_s += r.grappa_s;
        m.grappa_k += r.grappa_k;
        m.perceptual += r.perceptual;
        m.adversarial += r.adversarial;
        m.total += r.total;
    }
    double inv = 1.0 / static_cast<double>(reports.size());
    m.imse *= inv;
    m.fmag *= inv;
    m.fphase *= inv;
    m.grappa_s *= inv;
    m.grappa_k *= inv;
    m.perceptual *= inv;
    m.adversarial *= inv;
    m.total *= inv;
    return m;
}

} // namespace

TrainResult train(const std::vector<RealGrid>& dataset, const TrainConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw ConfigError("train: dataset is empty");
    const int h = dataset[0].height, w = dataset[0].width;
    const int div = std::max(1 << cfg.generator.levels, 16);
    if (h % div != 0 || w % div != 0)
        throw ConfigError("train: image dims must be divisible by 2^levels and 16");
    for (const auto& x : dataset)
        if (x.height != h || x.width != w) throw ShapeError("train: inhomogeneous dataset");

    TrainResult result;
    result.mask = cfg.mask.build(h, w);
    result.model = ModelBundle::create(cfg.generator, cfg.seed);
    ModelBundle& model = result.model;

    // GRAPPA consistency terms use a dedicated uniform submask carrying the
    // training mask's ACS width (widened to the smallest block that still
    // fits the kernel); the kernel is refreshed at the configured cadence and
    // held constant inside each gradient.
    KernelGeometry loss_geom = cfg.grappa_geom;
    loss_geom.accel = 2;
    loss_geom.coils = 1;
    int acs_cols = std::min(std::max(result.mask.acs.cols, min_acs_cols(loss_geom, h)), w);
    GrappaLossConfig gl;
    gl.submask = uniform_column_mask(h, w, 2, acs_cols);
    gl.noise = AcquisitionNoise{cfg.noise_sigma, Rng::substream(cfg.seed, 0x677261)};

    PerceptualExtractor perceptual; // fixed default seed: a frozen extractor

    const int n = static_cast<int>(dataset.size());
    std::vector<ComplexGrid> y_t(n), y_u;
    y_u.reserve(n);
    std::vector<nn::Tensor> gen_in(n);
    std::vector<nn::Tensor> real_in(n);
    for (int i = 0; i < n; ++i) {
        y_t[i] = to_kspace(dataset[i]);
        AcquisitionNoise nz{cfg.noise_sigma, Rng::substream(cfg.seed, 0x616371 + i)};
        y_u.push_back(undersample(y_t[i], result.mask, nz));
        ComplexGrid x_g = generator_input(y_u[i], result.mask, cfg.grappa_geom,
                                          cfg.grappa_ridge, nullptr);
        gen_in[i] = nn::from_grid(to_unit_range(real_part(x_g)));
        real_in[i] = nn::from_grid(to_unit_range(dataset[i]));
    }

    nn::AdamConfig g_adam{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
    nn::AdamConfig d_adam{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
    std::vector<double> g_grads(model.gen_params.total());
    std::vector<double> d_grads(model.disc_params.total());

    Rng shuffle_rng(Rng::substream(cfg.seed, 0x736875));
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (epoch % std::max(cfg.kernel_refresh_epochs, 1) == 0) {
            const Mask& sm = gl.submask;
            int r0 = sm.acs.row0(h), c0 = sm.acs.col0(w);
            int phase = (w / 2) % 2; // comb phase of uniform_column_mask
            int shift = ((phase - c0) % 2 + 2) % 2;
            ComplexGrid block(sm.acs.rows, sm.acs.cols - shift, Domain::KSpace);
            for (int r = 0; r < block.height; ++r)
                for (int c = 0; c < block.width; ++c)
                    block.at(r, c) = y_t[order[0]].at(r0 + r, c0 + shift + c);
            gl.kernel = estimate_kernel(CoilStack{{std::move(block)}}, loss_geom,
                                        cfg.grappa_ridge);
        }

        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.next_below(i)]);

        std::vector<LossReport> epoch_reports;
        epoch_reports.reserve(n);
        for (int idx : order) {
            const RealGrid& x_t = dataset[idx];

            nn::Generator::Cache gcache;
            nn::Tensor xhat_n = model.gen.forward(model.gen_params, gen_in[idx], true, &gcache);
            RealGrid xhat = from_unit_range(nn::to_grid(xhat_n));

            // discriminator ascends log D(real) + log(1 - D(fake))
            std::fill(d_grads.begin(), d_grads.end(), 0.0);
            nn::Discriminator::Cache dc_real, dc_fake;
            double d_real = model.disc.forward(model.disc_params, real_in[idx], true, &dc_real);
            double d_fake = model.disc.forward(model.disc_params, xhat_n, true, &dc_fake);
            double dr = std::clamp(d_real, 1e-7, 1.0 - 1e-7);
            double df = std::clamp(d_fake, 1e-7, 1.0 - 1e-7);
            model.disc.backward(model.disc_params, dc_real, -1.0 / dr, d_grads);
            model.disc.backward(model.disc_params, dc_fake, 1.0 / (1.0 - df), d_grads);
            nn::adam_step(model.disc_params, d_grads, d_adam);

            // generator descends the composite loss against the updated critic
            nn::Discriminator::Cache dc_gen;
            double d_gen = model.disc.forward(model.disc_params, xhat_n, true, &dc_gen);
            AdversarialLoss adv = cfg.adversarial == AdversarialMode::Log
                                      ? loss_adversarial(d_gen)
                                      : loss_adversarial_critic(d_gen);
            std::fill(d_grads.begin(), d_grads.end(), 0.0); // scratch, discarded
            nn::Tensor g_adv = model.disc.backward(model.disc_params, dc_gen,
                                                   adv.grad_wrt_d_out, d_grads);
            std::fill(g_grads.begin(), g_grads.end(), 0.0);

            TotalLossInputs in;
            in.xhat = &xhat;
            in.xt = &x_t;
            in.yt = &y_t[idx];
            in.grappa = &gl;
            in.perceptual = &perceptual;
            in.d_out = d_gen;
            LossReport rep = total_loss(in, cfg.weights);
            rep.adversarial = adv.value;
            rep.total = cfg.weights.alpha * rep.imse + cfg.weights.beta * rep.fmag +
                        cfg.weights.gamma * rep.fphase + cfg.weights.delta * rep.grappa_s +
                        cfg.weights.zeta * rep.grappa_k + cfg.weights.kappa * rep.perceptual +
                        rep.adversarial;
            if (!std::isfinite(rep.total))
                throw DivergenceError("train: non-finite loss at epoch " +
                                      std::to_string(epoch + 1));

            // chain [0,1]-scale image grads to the tanh output, add the
            // adversarial path, backprop the generator
            nn::Tensor g_out = g_adv;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    g_out.at(0, 0, y, x) += 0.5 * rep.grad.at(y, x);
            model.gen.backward(model.gen_params, gcache, g_out, g_grads);
            nn::adam_step(model.gen_params, g_grads, g_adam);

            rep.grad = RealGrid();
            epoch_reports.push_back(std::move(rep));
        }
        result.history.push_back(mean_report(epoch_reports));
    }
    return result;
}

// ---------------------------------------------------------------------------
// evaluation

int thread_cap() {
    unsigned hw = std::thread::hardware_concurrency();
    int cap = hw == 0 ? 1 : static_cast<int>(hw);
    if (const char* env = std::getenv("KSPACE_LAB_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) cap = std::min(cap, v);
    }
    return std::max(cap, 1);
}

std::string EvalRow::to_json_line() const {
    nlohmann::json j{{"index", index},
                     {"method", recon_method_name(method)},
                     {"psnr", psnr_db},
                     {"ssim", ssim_val}};
    if (grappa_fallback) j["grappa_fallback"] = true;
    return j.dump();
}

std::string EvalAggregate::to_json_line() const {
    nlohmann::json j{{"method", recon_method_name(method)},
                     {"psnr_mean", psnr_mean},
                     {"psnr_std", psnr_std},
                     {"ssim_mean", ssim_mean},
                     {"ssim_std", ssim_std}};
    return j.dump();
}

EvalTable evaluate(const std::vector<RealGrid>& dataset, const Mask& m,
                   const nn::Generator& gen, nn::ParamStore& gen_params,
                   const KernelGeometry& geom, double ridge, double noise_sigma,
                   uint64_t noise_seed, const MetricConfig& mcfg) {
    const int n = static_cast<int>(dataset.size());
    const std::array<ReconMethod, 4> methods{ReconMethod::ZeroFill, ReconMethod::Grappa,
                                             ReconMethod::Net, ReconMethod::NetCorrected};
    EvalTable table;
    table.rows.assign(static_cast<size_t>(n) * methods.size(), EvalRow{});

    auto eval_one = [&](int i) {
        const RealGrid& x_t = dataset[i];
        ComplexGrid y_t = to_kspace(x_t);
        AcquisitionNoise nz{noise_sigma, Rng::substream(noise_seed, 0x65766c + i)};
        ComplexGrid y_u = undersample(y_t, m, nz);

        for (size_t mi = 0; mi < methods.size(); ++mi) {
            ReconResult r;
            switch (methods[mi]) {
                case ReconMethod::ZeroFill: r = zero_fill_recon(y_u); break;
                case ReconMethod::Grappa:
                    if (admits_uniform_grappa(m, geom)) {
                        r = grappa_recon(CoilStack{{y_u}}, m, geom, ridge);
                    } else {
                        r = zero_fill_recon(y_u);
                        r.method = ReconMethod::Grappa;
                        r.grappa_fallback = true;
                    }
                    break;
                case ReconMethod::Net:
                    r = net_recon(y_u, m, gen, gen_params, false, geom, ridge);
                    break;
                case ReconMethod::NetCorrected:
                    r = net_recon(y_u, m, gen, gen_params, true, geom, ridge);
                    break;
            }
            ScaledPair sp = rescale_to_peak(x_t, r.image, mcfg.peak);
            EvalRow row;
            row.index = i;
            row.method = methods[mi];
            row.psnr_db = psnr(sp.reference, sp.test, mcfg);
            row.ssim_val = ssim(sp.reference, sp.test, mcfg);
            row.grappa_fallback = r.grappa_fallback;
            table.rows[static_cast<size_t>(i) * methods.size() + mi] = row;
        }
    };

    int workers = std::min(thread_cap(), n);
    if (workers <= 1) {
        for (int i = 0; i < n; ++i) eval_one(i);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int t = 0; t < workers; ++t)
            pool.emplace_back([&, t]() {
                for (int i = t; i < n; i += workers) eval_one(i);
            });
        for (auto& th : pool) th.join();
    }

    for (ReconMethod method : methods) {
        EvalAggregate agg;
        agg.method = method;
        std::vector<double> ps, ss;
        for (const auto& row : table.rows)
            if (row.method == method) {
                ps.push_back(row.psnr_db);
                ss.push_back(row.ssim_val);
            }
        auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
            mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            sd = 0.0;
            for (double x : v) sd += (x - mean) * (x - mean);
            sd = v.size() > 1 ? std::sqrt(sd / static_cast<double>(v.size() - 1)) : 0.0;
        };
        if (!ps.empty()) {
            mean_std(ps, agg.psnr_mean, agg.psnr_std);
            mean_std(ss, agg.ssim_mean, agg.ssim_std);
        }
        table.aggregates.push_back(agg);
    }
    return table;
}

} // namespace kslab
