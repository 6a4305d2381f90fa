#include "kslab/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "kslab/fft.hpp"
#include "kslab/io.hpp"
#include "kslab/pipeline.hpp"

namespace kslab::cli {

namespace {

namespace fs = std::filesystem;

struct PhantomArgs {
    std::string kind = "ellipses";
    int size = 64, height = 0, width = 0, count = 1;
    uint64_t seed = 0;
    double jitter = 0.15;
    std::string out;
};

int cmd_phantom(const PhantomArgs& a) {
    PhantomSpec spec;
    spec.kind = phantom_kind_from_name(a.kind);
    spec.height = a.height > 0 ? a.height : a.size;
    spec.width = a.width > 0 ? a.width : a.size;
    spec.count = a.count;
    spec.seed = a.seed;
    spec.jitter = a.jitter;
    auto imgs = make_phantoms(spec);
    for (size_t i = 0; i < imgs.size(); ++i) {
        char idx[16];
        std::snprintf(idx, sizeof idx, "%03zu", i);
        std::string base = a.out + "_" + idx;
        save_cgrid(embed(imgs[i]), base + ".cgrid");
        save_pgm(imgs[i], base + ".pgm");
    }
    return 0;
}

struct MaskArgs {
    std::string pattern = "gauss1d";
    int size = 256, height = 0, width = 0;
    double fraction = 0.3;
    int acs = -1; // phase-encode columns; -1 picks the default sizing
    uint64_t seed = 0;
    std::string out;
};

int cmd_mask(const MaskArgs& a) {
    int h = a.height > 0 ? a.height : a.size;
    int w = a.width > 0 ? a.width : a.size;
    double acs_fraction = a.acs < 0 ? default_acs_fraction(w)
                                    : static_cast<double>(a.acs) / w;
    Mask m = gen_mask(pattern_from_name(a.pattern), h, w, a.fraction, acs_fraction, a.seed);
    save_mask(m, a.out);
    return 0;
}

struct UndersampleArgs {
    std::string in, mask, out;
    double noise_sigma = 0.0;
    uint64_t seed = 0;
};

int cmd_undersample(const UndersampleArgs& a) {
    ComplexGrid y = load_cgrid(a.in);
    if (y.domain != Domain::KSpace) y = fft2c(y);
    Mask m = load_mask(a.mask);
    save_cgrid(undersample(y, m, AcquisitionNoise{a.noise_sigma, a.seed}), a.out);
    return 0;
}

struct ReconArgs {
    std::string method = "zerofill";
    bool correct = false;
    bool verify_dc = false;
    std::string in, mask, ckpt, metrics_ref, diff, out, export_kspace;
    int source_lines = 4, taps = 5, accel = 2;
    double ridge = 1e-6;
};

ModelBundle load_generator_bundle(const std::string& ckpt_prefix) {
    nlohmann::json j = load_json_file(ckpt_prefix + "/generator.json");
    nn::RemUNetConfig cfg;
    const auto& jc = j.at("config");
    cfg.levels = jc.value("levels", cfg.levels);
    cfg.base_width = jc.value("base_width", cfg.base_width);
    if (jc.contains("remnant_widths")) {
        auto rw = jc.at("remnant_widths").get<std::vector<int>>();
        cfg.remnant_widths = {rw.at(0), rw.at(1), rw.at(2)};
    }
    cfg.leaky_slope = jc.value("leaky_slope", cfg.leaky_slope);
    ModelBundle b = ModelBundle::create(cfg, 0);
    load_params(b.gen_params, ckpt_prefix + "/generator");
    return b;
}

int cmd_recon(const ReconArgs& a) {
    ComplexGrid y = load_cgrid(a.in);
    if (y.domain != Domain::KSpace)
        throw DomainError("recon: input grid must be k-space (" + a.in + ")");
    Mask m = load_mask(a.mask);
    KernelGeometry geom{a.source_lines, a.taps, a.accel, 1};

    ReconResult r;
    if (a.method == "zerofill") {
        r = zero_fill_recon(y);
    } else if (a.method == "grappa") {
        r = grappa_recon(CoilStack{{y}}, m, geom, a.ridge);
    } else if (a.method == "net") {
        ModelBundle b = load_generator_bundle(a.ckpt);
        r = net_recon(y, m, b.gen, b.gen_params, a.correct, geom, a.ridge);
    } else {
        throw ConfigError("recon: unknown method " + a.method);
    }

    if (a.verify_dc) {
        if (r.method != ReconMethod::NetCorrected)
            throw ConfigError("recon: --verify-dc needs --method net --correct");
        ComplexGrid ref = observed_reference(y, m, geom, a.ridge);
        for (size_t i = 0; i < r.kspace.data.size(); ++i)
            if (m.keep[i] && r.kspace.data[i] != ref.data[i])
                throw DivergenceError("recon: observed-frequency residual is nonzero");
    }

    save_pgm(r.image, a.out);
    if (!a.export_kspace.empty()) save_cgrid(r.kspace, a.export_kspace);
    if (!a.metrics_ref.empty()) {
        RealGrid ref = real_part(load_cgrid(a.metrics_ref));
        MetricConfig mc;
        ScaledPair sp = rescale_to_peak(ref, r.image, mc.peak);
        nlohmann::json line{{"method", recon_method_name(r.method)},
                            {"psnr", psnr(sp.reference, sp.test, mc)},
                            {"ssim", ssim(sp.reference, sp.test, mc)}};
        if (r.grappa_fallback) line["grappa_fallback"] = true;
        std::cout << line.dump() << "\n";
        if (!a.diff.empty()) {
            RealGrid d(ref.height, ref.width);
            for (size_t i = 0; i < d.data.size(); ++i)
                d.data[i] = r.image.data[i] - ref.data[i];
            save_pgm_signed(d, a.diff);
        }
    }
    return 0;
}

struct TrainArgs {
    std::string config, out;
};

PhantomSpec dataset_from_json(const nlohmann::json& j) {
    PhantomSpec d;
    d.kind = phantom_kind_from_name(j.value("kind", std::string("blobs")));
    int size = j.value("size", 64);
    d.height = j.value("height", size);
    d.width = j.value("width", size);
    d.count = j.value("count", 1);
    d.seed = j.value("seed", uint64_t(0));
    d.jitter = j.value("jitter", d.jitter);
    return d;
}

int cmd_train(const TrainArgs& a) {
    nlohmann::json j = load_json_file(a.config);
    TrainConfig cfg = TrainConfig::from_json(j);
    PhantomSpec dspec = dataset_from_json(j.at("dataset"));
    int holdout = j.value("holdout", 0);

    std::vector<RealGrid> all = make_phantoms(dspec);
    if (holdout < 0 || holdout >= static_cast<int>(all.size()))
        throw ConfigError("train: holdout out of range");
    std::vector<RealGrid> training(all.begin(), all.end() - holdout);

    TrainResult res = train(training, cfg);

    fs::create_directories(a.out);
    nlohmann::json gen_cfg{{"levels", cfg.generator.levels},
                           {"base_width", cfg.generator.base_width},
                           {"remnant_widths", cfg.generator.remnant_widths},
                           {"leaky_slope", cfg.generator.leaky_slope}};
    save_params(res.model.gen_params, gen_cfg, a.out + "/generator");
    save_params(res.model.disc_params, nlohmann::json::object(), a.out + "/discriminator");
    save_mask(res.mask, a.out + "/mask.pgm");
    {
        std::ofstream hist(a.out + "/history.jsonl");
        if (!hist) throw IoError("cannot open for writing: " + a.out + "/history.jsonl");
        for (const auto& rep : res.history) hist << rep.to_json_line() << "\n";
    }
    {
        std::ofstream echo(a.out + "/config.json");
        echo << j.dump(2) << "\n";
    }
    return 0;
}

struct EvaluateArgs {
    std::string config, ckpt, out;
};

int cmd_evaluate(const EvaluateArgs& a) {
    nlohmann::json j = load_json_file(a.config);
    TrainConfig cfg = TrainConfig::from_json(j);
    PhantomSpec dspec = dataset_from_json(j.at("dataset"));
    int holdout = j.value("holdout", 0);

    std::vector<RealGrid> all = make_phantoms(dspec);
    std::vector<RealGrid> eval_set =
        holdout > 0 ? std::vector<RealGrid>(all.end() - holdout, all.end()) : all;

    ModelBundle b = load_generator_bundle(a.ckpt);
    Mask m = cfg.mask.build(eval_set[0].height, eval_set[0].width);
    EvalTable table = evaluate(eval_set, m, b.gen, b.gen_params, cfg.grappa_geom,
                               cfg.grappa_ridge, cfg.noise_sigma, cfg.seed);

    std::ofstream out;
    if (!a.out.empty()) {
        out.open(a.out);
        if (!out) throw IoError("cannot open for writing: " + a.out);
    }
    auto emit = [&](const std::string& line) {
        std::cout << line << "\n";
        if (out.is_open()) out << line << "\n";
    };
    for (const auto& row : table.rows) emit(row.to_json_line());
    for (const auto& agg : table.aggregates) emit(agg.to_json_line());
    return 0;
}

struct LossesArgs {
    std::string xhat, xt, weights, mask, perceptual_weights;
};

int cmd_losses(const LossesArgs& a) {
    RealGrid xhat = real_part(load_cgrid(a.xhat));
    RealGrid xt = real_part(load_cgrid(a.xt));
    LossWeights w = a.weights.empty() ? LossWeights{} : load_weights_file(a.weights);
    ComplexGrid yt = fft2c(embed(xt));
    PerceptualExtractor perceptual;
    if (!a.perceptual_weights.empty()) perceptual.load_weights_file(a.perceptual_weights);

    TotalLossInputs in;
    in.xhat = &xhat;
    in.xt = &xt;
    in.yt = &yt;
    in.perceptual = &perceptual;

    GrappaLossConfig gl;
    if (!a.mask.empty()) {
        Mask m = load_mask(a.mask);
        KernelGeometry geom;
        geom.coils = 1;
        int acs = std::min(std::max(m.acs.cols, min_acs_cols(geom, xt.height)), xt.width);
        gl.submask = uniform_column_mask(xt.height, xt.width, geom.accel, acs);
        int c0 = gl.submask.acs.col0(xt.width);
        int phase = (xt.width / 2) % geom.accel;
        int shift = ((phase - c0) % geom.accel + geom.accel) % geom.accel;
        ComplexGrid block(gl.submask.acs.rows, gl.submask.acs.cols - shift, Domain::KSpace);
        for (int r = 0; r < block.height; ++r)
            for (int c = 0; c < block.width; ++c)
                block.at(r, c) = yt.at(gl.submask.acs.row0(xt.height) + r, c0 + shift + c);
        gl.kernel = estimate_kernel(CoilStack{{std::move(block)}}, geom, 1e-6);
        in.grappa = &gl;
    }

    LossReport rep = total_loss(in, w);
    std::cout << rep.to_json_line() << "\n";
    return 0;
}

} // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"compressed-sensing + parallel-imaging reconstruction toolkit"};
    app.require_subcommand(1);

    PhantomArgs pa;
    auto* sp = app.add_subcommand("phantom", "generate synthetic phantoms");
    sp->add_option("--kind", pa.kind)->check(CLI::IsMember({"ellipses", "blobs"}));
    sp->add_option("--size", pa.size);
    sp->add_option("--height", pa.height);
    sp->add_option("--width", pa.width);
    sp->add_option("--count", pa.count);
    sp->add_option("--seed", pa.seed);
    sp->add_option("--jitter", pa.jitter);
    sp->add_option("-o,--out", pa.out)->required();

    MaskArgs ma;
    auto* sm = app.add_subcommand("mask", "generate a sampling mask");
    sm->add_option("--pattern", ma.pattern)
        ->check(CLI::IsMember({"gauss1d", "gauss2d", "poisson2d"}));
    sm->add_option("--size", ma.size);
    sm->add_option("--height", ma.height);
    sm->add_option("--width", ma.width);
    sm->add_option("--fraction", ma.fraction)->required();
    sm->add_option("--acs", ma.acs);
    sm->add_option("--seed", ma.seed);
    sm->add_option("-o,--out", ma.out)->required();

    UndersampleArgs ua;
    auto* su = app.add_subcommand("undersample", "apply a mask and noise to k-space");
    su->add_option("--in", ua.in)->required();
    su->add_option("--mask", ua.mask)->required();
    su->add_option("--noise-sigma", ua.noise_sigma);
    su->add_option("--seed", ua.seed);
    su->add_option("-o,--out", ua.out)->required();

    ReconArgs ra;
    auto* sr = app.add_subcommand("recon", "reconstruct an image from k-space");
    sr->add_option("--method", ra.method)->check(CLI::IsMember({"zerofill", "grappa", "net"}));
    sr->add_flag("--correct", ra.correct, "apply the k-space correction block");
    sr->add_flag("--verify-dc", ra.verify_dc, "fail unless observed frequencies are exact");
    sr->add_option("--in", ra.in)->required();
    sr->add_option("--mask", ra.mask)->required();
    sr->add_option("--ckpt", ra.ckpt);
    sr->add_option("--metrics", ra.metrics_ref, "reference cgrid for PSNR/SSIM");
    sr->add_option("--diff", ra.diff, "write a signed difference image here");
    sr->add_option("--export-kspace", ra.export_kspace);
    sr->add_option("--source-lines", ra.source_lines);
    sr->add_option("--taps", ra.taps);
    sr->add_option("--accel", ra.accel);
    sr->add_option("--ridge", ra.ridge);
    sr->add_option("-o,--out", ra.out)->required();

    TrainArgs ta;
    auto* st = app.add_subcommand("train", "train the adversarial reconstructor");
    st->add_option("--config", ta.config)->required();
    st->add_option("-o,--out", ta.out)->required();

    EvaluateArgs ea;
    auto* se = app.add_subcommand("evaluate", "evaluate all methods on a dataset");
    se->add_option("--config", ea.config)->required();
    se->add_option("--ckpt", ea.ckpt)->required();
    se->add_option("-o,--out", ea.out);

    LossesArgs la;
    auto* sl = app.add_subcommand("losses", "report the loss suite between two images");
    sl->add_option("--xhat", la.xhat)->required();
    sl->add_option("--xt", la.xt)->required();
    sl->add_option("--weights", la.weights);
    sl->add_option("--mask", la.mask, "enable the GRAPPA consistency terms");
    sl->add_option("--perceptual-weights", la.perceptual_weights,
                   "float32 blob replacing the frozen feature weights");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help
            std::cout << app.help();
            return 0;
        }
        std::cerr << e.what() << "\n";
        return 1;
    }

    try {
        if (sp->parsed()) return cmd_phantom(pa);
        if (sm->parsed()) return cmd_mask(ma);
        if (su->parsed()) return cmd_undersample(ua);
        if (sr->parsed()) return cmd_recon(ra);
        if (st->parsed()) return cmd_train(ta);
        if (se->parsed()) return cmd_evaluate(ea);
        if (sl->parsed()) return cmd_losses(la);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

} // namespace kslab::cli
