#include "kslab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "kslab/fft.hpp"

namespace kslab {

void LossWeights::validate() const {
    for (double v : {alpha, beta, gamma, delta, zeta, kappa})
        if (!(v >= 0.0) || !std::isfinite(v))
            throw ConfigError("LossWeights: weights must be finite and >= 0");
}

std::string LossReport::to_json_line() const {
    nlohmann::json j{{"imse", imse},           {"fmag", fmag},
                     {"fphase", fphase},       {"grappa_s", grappa_s},
                     {"grappa_k", grappa_k},   {"perceptual", perceptual},
                     {"adversarial", adversarial}, {"total", total}};
    return j.dump();
}

ValueGrad loss_imse(const RealGrid& xhat, const RealGrid& xt) {
    require_same_shape(xhat, xt, "loss_imse");
    ValueGrad out{0.0, RealGrid(xhat.height, xhat.width)};
    for (size_t i = 0; i < xhat.data.size(); ++i) {
        double d = xhat.data[i] - xt.data[i];
        out.value += 0.5 * d * d;
        out.grad.data[i] = d;
    }
    return out;
}

namespace {

/// Pull a real-image gradient back through the forward transform: for a loss
/// with spectral gradient G (d value / d Re + i * d value / d Im per entry),
/// the image gradient is Re(ifft2c(G)).
RealGrid spectral_to_image_grad(const ComplexGrid& g_spec) {
    return real_part(ifft2c(g_spec));
}

} // namespace

ValueGrad loss_fmag(const RealGrid& xhat, const RealGrid& xt) {
    require_same_shape(xhat, xt, "loss_fmag");
    ComplexGrid yh = fft2c(embed(xhat));
    ComplexGrid yt = fft2c(embed(xt));
    ComplexGrid g_spec(yh.height, yh.width, Domain::KSpace);
    double value = 0.0;
    for (size_t i = 0; i < yh.data.size(); ++i) {
        double mh = std::abs(yh.data[i]);
        double mt = std::abs(yt.data[i]);
        double d = mh - mt;
        value += 0.5 * d * d;
        g_spec.data[i] = mh > phase_floor ? d * (yh.data[i] / mh) : cplx(0.0, 0.0);
    }
    return {value, spectral_to_image_grad(g_spec)};
}

ValueGrad loss_fphase(const RealGrid& xhat, const RealGrid& xt) {
    require_same_shape(xhat, xt, "loss_fphase");
    ComplexGrid yh = fft2c(embed(xhat));
    ComplexGrid yt = fft2c(embed(xt));
    SpectralPair ph = spectral_decompose(yh);
    SpectralPair pt = spectral_decompose(yt);
    ComplexGrid g_spec(yh.height, yh.width, Domain::KSpace);
    double value = 0.0;
    for (size_t i = 0; i < yh.data.size(); ++i) {
        cplx d = ph.phase.data[i] - pt.phase.data[i];
        value += 0.5 * std::norm(d);
        double r = ph.magnitude.data[i];
        if (r > phase_floor) {
            // w = z/|z|:  G = d/r - z * Re(conj(d) z) / r^3
            const cplx& z = yh.data[i];
            double proj = (std::conj(d) * z).real();
            g_spec.data[i] = d / r - z * (proj / (r * r * r));
        }
    }
    return {value, spectral_to_image_grad(g_spec)};
}

namespace {

/// Adjoint of the kernel fill: identity on sampled columns plus the conjugate
/// scatter of every filled entry back onto its sources. Missing columns end
/// up zero, which also realizes the mask adjoint.
ComplexGrid adjoint_fill(const ComplexGrid& u, const Mask& m, const GrappaKernel& k, int phase) {
    const KernelGeometry& geom = k.geometry;
    const int h = u.height, w = u.width;
    ComplexGrid out(h, w, Domain::KSpace);
    std::vector<uint8_t> col_on(w, 0);
    for (int c = 0; c < w; ++c) col_on[c] = m.column_sampled(c) ? 1 : 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (col_on[c]) out.at(r, c) = u.at(r, c);

    for (int c = 0; c < w; ++c) {
        if (col_on[c]) continue;
        int offset = ((c - phase) % geom.accel + geom.accel) % geom.accel;
        if (offset == 0) continue;
        const std::vector<cplx>& wrow = k.row(offset, 0);
        for (int r = 0; r < h; ++r) {
            cplx g = u.at(r, c);
            if (g == cplx(0.0, 0.0)) continue;
            int f = 0;
            for (int l = 0; l < geom.source_lines; ++l) {
                int col = c + geom.source_col_delta(l, offset);
                if (col < 0 || col >= w) { f += geom.taps; continue; }
                for (int t = 0; t < geom.taps; ++t) {
                    int row = r + geom.tap_row_delta(t);
                    if (row >= 0 && row < h)
                        out.at(row, col) += std::conj(wrow[f]) * g;
                    ++f;
                }
            }
        }
    }
    return out;
}

int acquired_phase(const Mask& m, int accel) {
    const int c0 = m.acs.col0(m.width), c1 = c0 + m.acs.cols;
    for (int c = 0; c < m.width; ++c) {
        bool in_acs = c >= c0 && c < c1 && m.acs.rows == m.height;
        if (!in_acs && m.column_sampled(c)) return c % accel;
    }
    return 0;
}

} // namespace

GrappaLossResult loss_grappa(const RealGrid& xhat, const RealGrid& xt, const ComplexGrid& yt,
                             const GrappaLossConfig& cfg) {
    require_same_shape(xhat, xt, "loss_grappa");
    if (yt.height != xhat.height || yt.width != xhat.width)
        throw ShapeError("loss_grappa: spectrum shape mismatch");
    if (cfg.kernel.geometry.coils != 1)
        throw GeometryError("loss_grappa: single-coil kernel required");

    ComplexGrid y_gu = undersample(fft2c(embed(xhat)), cfg.submask, cfg.noise);
    CoilStack filled = apply_kernel(CoilStack{{y_gu}}, cfg.submask, cfg.kernel);
    const ComplexGrid& yg = filled.coils[0];
    ComplexGrid img = ifft2c(yg);

    GrappaLossResult out;
    ComplexGrid gk_spec(yt.height, yt.width, Domain::KSpace);
    for (size_t i = 0; i < yg.data.size(); ++i) {
        cplx d = yg.data[i] - yt.data[i];
        out.value_k += 0.5 * std::norm(d);
        gk_spec.data[i] = d;
    }
    RealGrid rho(xhat.height, xhat.width);
    for (size_t i = 0; i < rho.data.size(); ++i) {
        double d = img.data[i].real() - xt.data[i];
        out.value_s += 0.5 * d * d;
        rho.data[i] = d;
    }

    const int phase = acquired_phase(cfg.submask, cfg.kernel.geometry.accel);
    ComplexGrid gs_spec = fft2c(embed(rho));
    out.grad_s = spectral_to_image_grad(adjoint_fill(gs_spec, cfg.submask, cfg.kernel, phase));
    out.grad_k = spectral_to_image_grad(adjoint_fill(gk_spec, cfg.submask, cfg.kernel, phase));
    return out;
}

// ---------------------------------------------------------------------------
// perceptual proxy

PerceptualExtractor::PerceptualExtractor(uint64_t seed) {
    Rng rng(Rng::substream(seed, 0x70657263));
    conv_[0] = nn::Conv2d::create(store_, "stage0", 1, 8, 3, 2, 1, rng);
    conv_[1] = nn::Conv2d::create(store_, "stage1", 8, 16, 3, 2, 1, rng);
    conv_[2] = nn::Conv2d::create(store_, "stage2", 16, 32, 3, 2, 1, rng);
}

void PerceptualExtractor::load_weights(const std::vector<double>& values) {
    if (values.size() != store_.values.size())
        throw ShapeError("PerceptualExtractor: weight blob length mismatch");
    store_.values = values;
}

void PerceptualExtractor::load_weights_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path);
    auto bytes = static_cast<size_t>(f.tellg());
    if (bytes != store_.values.size() * sizeof(float))
        throw ShapeError("PerceptualExtractor: weight file size mismatch: " + path);
    std::vector<float> blob(store_.values.size());
    f.seekg(0);
    f.read(reinterpret_cast<char*>(blob.data()), static_cast<std::streamsize>(bytes));
    if (!f) throw IoError("read failed: " + path);
    for (size_t i = 0; i < blob.size(); ++i) store_.values[i] = blob[i];
}

std::array<nn::Tensor, 3> PerceptualExtractor::features(const RealGrid& x) const {
    if (x.height % 8 != 0 || x.width % 8 != 0)
        throw ShapeError("PerceptualExtractor: dims must be divisible by 8");
    std::array<nn::Tensor, 3> out;
    nn::Tensor cur = nn::from_grid(x);
    for (int i = 0; i < 3; ++i) {
        cur = conv_[i].forward(store_, cur, nullptr);
        cur = nn::leaky_relu_forward(cur, slope_, nullptr);
        out[i] = cur;
    }
    return out;
}

ValueGrad PerceptualExtractor::loss(const RealGrid& xhat, const RealGrid& xt) const {
    require_same_shape(xhat, xt, "loss_perceptual");
    if (xhat.height % 8 != 0 || xhat.width % 8 != 0)
        throw ShapeError("loss_perceptual: dims must be divisible by 8");

    std::array<nn::Conv2dCache, 3> cc;
    std::array<nn::LeakyCache, 3> lc;
    std::array<nn::Tensor, 3> fh, ft;
    nn::Tensor cur = nn::from_grid(xhat);
    for (int i = 0; i < 3; ++i) {
        cur = conv_[i].forward(store_, cur, &cc[i]);
        cur = nn::leaky_relu_forward(cur, slope_, &lc[i]);
        fh[i] = cur;
    }
    nn::Tensor tcur = nn::from_grid(xt);
    for (int i = 0; i < 3; ++i) {
        tcur = conv_[i].forward(store_, tcur, nullptr);
        tcur = nn::leaky_relu_forward(tcur, slope_, nullptr);
        ft[i] = tcur;
    }

    double value = 0.0;
    std::array<nn::Tensor, 3> diff;
    for (int i = 0; i < 3; ++i) {
        diff[i] = fh[i];
        for (size_t j = 0; j < diff[i].v.size(); ++j) {
            diff[i].v[j] -= ft[i].v[j];
            value += 0.5 * diff[i].v[j] * diff[i].v[j];
        }
    }

    std::vector<double> scratch(store_.total(), 0.0); // weights are frozen
    nn::Tensor g = diff[2];
    for (int i = 2; i >= 0; --i) {
        g = nn::leaky_relu_backward(lc[i], slope_, g);
        g = conv_[i].backward(store_, cc[i], g, scratch);
        if (i > 0)
            for (size_t j = 0; j < g.v.size(); ++j) g.v[j] += diff[i - 1].v[j];
    }
    return {value, nn::to_grid(g)};
}

AdversarialLoss loss_adversarial(double d_out) {
    double d = std::clamp(d_out, 1e-7, 1.0 - 1e-7);
    return {-std::log(d), -1.0 / d};
}

AdversarialLoss loss_adversarial_critic(double raw_score) {
    return {-raw_score, -1.0};
}

LossReport total_loss(const TotalLossInputs& in, const LossWeights& w) {
    w.validate();
    if (!in.xhat || !in.xt) throw ConfigError("total_loss: xhat and xt are required");
    const RealGrid& xhat = *in.xhat;
    const RealGrid& xt = *in.xt;

    LossReport rep;
    rep.grad = RealGrid(xhat.height, xhat.width);

    auto accumulate = [&rep](double weight, const RealGrid& g) {
        if (weight == 0.0) return;
        for (size_t i = 0; i < rep.grad.data.size(); ++i)
            rep.grad.data[i] += weight * g.data[i];
    };

    ValueGrad im = loss_imse(xhat, xt);
    rep.imse = im.value;
    accumulate(w.alpha, im.grad);

    ValueGrad fm = loss_fmag(xhat, xt);
    rep.fmag = fm.value;
    accumulate(w.beta, fm.grad);

    ValueGrad fp = loss_fphase(xhat, xt);
    rep.fphase = fp.value;
    accumulate(w.gamma, fp.grad);

    if (in.grappa) {
        if (!in.yt) throw ConfigError("total_loss: GRAPPA terms need the true spectrum");
        GrappaLossResult gr = loss_grappa(xhat, xt, *in.yt, *in.grappa);
        rep.grappa_s = gr.value_s;
        rep.grappa_k = gr.value_k;
        accumulate(w.delta, gr.grad_s);
        accumulate(w.zeta, gr.grad_k);
    }
    if (in.perceptual) {
        ValueGrad pc = in.perceptual->loss(xhat, xt);
        rep.perceptual = pc.value;
        accumulate(w.kappa, pc.grad);
    }

    AdversarialLoss adv = loss_adversarial(in.d_out);
    rep.adversarial = adv.value;
    if (in.adversarial_grad) accumulate(1.0, *in.adversarial_grad);

    rep.total = w.alpha * rep.imse + w.beta * rep.fmag + w.gamma * rep.fphase +
                w.delta * rep.grappa_s + w.zeta * rep.grappa_k + w.kappa * rep.perceptual +
                rep.adversarial;
    return rep;
}

} // namespace kslab
