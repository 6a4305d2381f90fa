#include "kslab/nn/ops.hpp"

#include <cmath>

namespace kslab::nn {

Tensor from_grid(const RealGrid& g) {
    Tensor t(1, 1, g.height, g.width);
    t.v = g.data;
    return t;
}

RealGrid to_grid(const Tensor& t) {
    RealGrid g(t.h, t.w);
    for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x) g.at(y, x) = t.at(0, 0, y, x);
    return g;
}

namespace {

void kaiming_fill(std::span<double> w, int fan_in, Rng& rng) {
    double std = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : w) v = rng.next_normal() * std;
}

} // namespace

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// Conv2d

Conv2d Conv2d::create(ParamStore& store, const std::string& name, int in_ch, int out_ch,
                      int k, int stride, int pad, Rng& rng) {
    Conv2d c{in_ch, out_ch, k, stride, pad, 0, 0};
    c.w_off = store.add(name + ".w", {out_ch, in_ch, k, k});
    c.b_off = store.add(name + ".b", {out_ch});
    kaiming_fill(store.view(c.w_off, static_cast<size_t>(out_ch) * in_ch * k * k),
                 in_ch * k * k, rng);
    return c;
}

Tensor Conv2d::forward(const ParamStore& store, const Tensor& x, Conv2dCache* cache) const {
    if (x.c != in_ch) throw ShapeError("Conv2d: channel mismatch");
    const int oh = out_dim(x.h), ow = out_dim(x.w);
    if (oh <= 0 || ow <= 0) throw ShapeError("Conv2d: input too small");
    Tensor out(x.n, out_ch, oh, ow);
    auto w = store.view(w_off, static_cast<size_t>(out_ch) * in_ch * k * k);
    auto b = store.view(b_off, out_ch);

    for (int n = 0; n < x.n; ++n)
        for (int oc = 0; oc < out_ch; ++oc) {
            const double* wc = &w[static_cast<size_t>(oc) * in_ch * k * k];
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = b[oc];
                    for (int ic = 0; ic < in_ch; ++ic) {
                        const double* wk = wc + static_cast<size_t>(ic) * k * k;
                        for (int ky = 0; ky < k; ++ky) {
                            int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= x.h) continue;
                            const double* row = &x.v[x.index(n, ic, iy, 0)];
                            for (int kx = 0; kx < k; ++kx) {
                                int ix = ox * stride + kx - pad;
                                if (ix >= 0 && ix < x.w) acc += wk[ky * k + kx] * row[ix];
                            }
                        }
                    }
                    out.at(n, oc, oy, ox) = acc;
                }
        }
    if (cache) cache->x = x;
    return out;
}

Tensor Conv2d::backward(const ParamStore& store, const Conv2dCache& cache, const Tensor& gout,
                        std::vector<double>& grads) const {
    const Tensor& x = cache.x;
    Tensor gx(x.n, x.c, x.h, x.w);
    auto w = store.view(w_off, static_cast<size_t>(out_ch) * in_ch * k * k);
    double* gw = grads.data() + w_off;
    double* gb = grads.data() + b_off;

    for (int n = 0; n < x.n; ++n)
        for (int oc = 0; oc < out_ch; ++oc) {
            const double* wc = &w[static_cast<size_t>(oc) * in_ch * k * k];
            double* gwc = gw + static_cast<size_t>(oc) * in_ch * k * k;
            for (int oy = 0; oy < gout.h; ++oy)
                for (int ox = 0; ox < gout.w; ++ox) {
                    double g = gout.at(n, oc, oy, ox);
                    gb[oc] += g;
                    for (int ic = 0; ic < in_ch; ++ic)
                        for (int ky = 0; ky < k; ++ky) {
                            int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= x.h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                int ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= x.w) continue;
                                size_t wi = (static_cast<size_t>(ic) * k + ky) * k + kx;
                                gwc[wi] += g * x.at(n, ic, iy, ix);
                                gx.at(n, ic, iy, ix) += g * wc[wi];
                            }
                        }
                }
        }
    return gx;
}

// ---------------------------------------------------------------------------
// ConvT2d

ConvT2d ConvT2d::create(ParamStore& store, const std::string& name, int in_ch, int out_ch,
                        int k, int stride, int pad, Rng& rng) {
    ConvT2d c{in_ch, out_ch, k, stride, pad, 0, 0};
    c.w_off = store.add(name + ".w", {in_ch, out_ch, k, k});
    c.b_off = store.add(name + ".b", {out_ch});
    kaiming_fill(store.view(c.w_off, static_cast<size_t>(in_ch) * out_ch * k * k),
                 in_ch * k * k, rng);
    return c;
}

Tensor ConvT2d::forward(const ParamStore& store, const Tensor& x, ConvT2dCache* cache) const {
    if (x.c != in_ch) throw ShapeError("ConvT2d: channel mismatch");
    const int oh = out_dim(x.h), ow = out_dim(x.w);
    if (oh <= 0 || ow <= 0) throw ShapeError("ConvT2d: input too small");
    Tensor out(x.n, out_ch, oh, ow);
    auto w = store.view(w_off, static_cast<size_t>(in_ch) * out_ch * k * k);
    auto b = store.view(b_off, out_ch);

    for (int n = 0; n < x.n; ++n) {
        for (int oc = 0; oc < out_ch; ++oc) {
            double* plane = &out.v[out.index(n, oc, 0, 0)];
            for (int i = 0; i < oh * ow; ++i) plane[i] = b[oc];
        }
        for (int ic = 0; ic < in_ch; ++ic)
            for (int iy = 0; iy < x.h; ++iy)
                for (int ix = 0; ix < x.w; ++ix) {
                    double xv = x.at(n, ic, iy, ix);
                    for (int oc = 0; oc < out_ch; ++oc) {
                        const double* wk = &w[(static_cast<size_t>(ic) * out_ch + oc) * k * k];
                        for (int ky = 0; ky < k; ++ky) {
                            int oy = iy * stride - pad + ky;
                            if (oy < 0 || oy >= oh) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                int ox = ix * stride - pad + kx;
                                if (ox >= 0 && ox < ow)
                                    out.at(n, oc, oy, ox) += wk[ky * k + kx] * xv;
                            }
                        }
                    }
                }
    }
    if (cache) cache->x = x;
    return out;
}

Tensor ConvT2d::backward(const ParamStore& store, const ConvT2dCache& cache, const Tensor& gout,
                         std::vector<double>& grads) const {
    const Tensor& x = cache.x;
    Tensor gx(x.n, x.c, x.h, x.w);
    auto w = store.view(w_off, static_cast<size_t>(in_ch) * out_ch * k * k);
    double* gw = grads.data() + w_off;
    double* gb = grads.data() + b_off;

    for (int n = 0; n < x.n; ++n) {
        for (int oc = 0; oc < out_ch; ++oc)
            for (int oy = 0; oy < gout.h; ++oy)
                for (int ox = 0; ox < gout.w; ++ox) gb[oc] += gout.at(n, oc, oy, ox);
        for (int ic = 0; ic < in_ch; ++ic)
            for (int iy = 0; iy < x.h; ++iy)
                for (int ix = 0; ix < x.w; ++ix) {
                    double xv = x.at(n, ic, iy, ix);
                    double acc = 0.0;
                    for (int oc = 0; oc < out_ch; ++oc) {
                        const double* wk = &w[(static_cast<size_t>(ic) * out_ch + oc) * k * k];
                        double* gwk = gw + (static_cast<size_t>(ic) * out_ch + oc) * k * k;
                        for (int ky = 0; ky < k; ++ky) {
                            int oy = iy * stride - pad + ky;
                            if (oy < 0 || oy >= gout.h) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                int ox = ix * stride - pad + kx;
                                if (ox < 0 || ox >= gout.w) continue;
                                double g = gout.at(n, oc, oy, ox);
                                acc += wk[ky * k + kx] * g;
                                gwk[ky * k + kx] += xv * g;
                            }
                        }
                    }
                    gx.at(n, ic, iy, ix) = acc;
                }
    }
    return gx;
}

// ---------------------------------------------------------------------------
// BatchNorm

BatchNorm BatchNorm::create(ParamStore& store, const std::string& name, int ch) {
    BatchNorm bn;
    bn.ch = ch;
    bn.gamma_off = store.add(name + ".gamma", {ch});
    bn.beta_off = store.add(name + ".beta", {ch});
    bn.rmean_off = store.add(name + ".running_mean", {ch}, /*trainable=*/false);
    bn.rvar_off = store.add(name + ".running_var", {ch}, /*trainable=*/false);
    for (double& g : store.view(bn.gamma_off, ch)) g = 1.0;
    for (double& v : store.view(bn.rvar_off, ch)) v = 1.0;
    return bn;
}

Tensor BatchNorm::forward(ParamStore& store, const Tensor& x, bool training, BnCache* cache) const {
    if (x.c != ch) throw ShapeError("BatchNorm: channel mismatch");
    Tensor out(x.n, x.c, x.h, x.w);
    Tensor xhat(x.n, x.c, x.h, x.w);
    std::vector<double> inv_std(ch);
    auto gamma = store.view(gamma_off, ch);
    auto beta = store.view(beta_off, ch);
    auto rmean = store.view(rmean_off, ch);
    auto rvar = store.view(rvar_off, ch);
    const double m = static_cast<double>(x.n) * x.h * x.w;

    for (int c = 0; c < ch; ++c) {
        double mean, var;
        if (training) {
            double s = 0.0;
            for (int n = 0; n < x.n; ++n)
                for (int y = 0; y < x.h; ++y)
                    for (int xx = 0; xx < x.w; ++xx) s += x.at(n, c, y, xx);
            mean = s / m;
            double sv = 0.0;
            for (int n = 0; n < x.n; ++n)
                for (int y = 0; y < x.h; ++y)
                    for (int xx = 0; xx < x.w; ++xx) {
                        double d = x.at(n, c, y, xx) - mean;
                        sv += d * d;
                    }
            var = sv / m;
            rmean[c] = momentum * rmean[c] + (1.0 - momentum) * mean;
            rvar[c] = momentum * rvar[c] + (1.0 - momentum) * var;
        } else {
            mean = rmean[c];
            var = rvar[c];
        }
        double is = 1.0 / std::sqrt(var + bn_eps);
        inv_std[c] = is;
        for (int n = 0; n < x.n; ++n)
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) {
                    double xh = (x.at(n, c, y, xx) - mean) * is;
                    xhat.at(n, c, y, xx) = xh;
                    out.at(n, c, y, xx) = gamma[c] * xh + beta[c];
                }
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
        cache->training = training;
    }
    return out;
}

Tensor BatchNorm::backward(const ParamStore& store, const BnCache& cache, const Tensor& gout,
                           std::vector<double>& grads) const {
    const Tensor& xhat = cache.xhat;
    Tensor gx(gout.n, gout.c, gout.h, gout.w);
    auto gamma = store.view(gamma_off, ch);
    double* ggamma = grads.data() + gamma_off;
    double* gbeta = grads.data() + beta_off;
    const double m = static_cast<double>(gout.n) * gout.h * gout.w;

    for (int c = 0; c < ch; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int n = 0; n < gout.n; ++n)
            for (int y = 0; y < gout.h; ++y)
                for (int xx = 0; xx < gout.w; ++xx) {
                    double g = gout.at(n, c, y, xx);
                    sum_g += g;
                    sum_gx += g * xhat.at(n, c, y, xx);
                }
        ggamma[c] += sum_gx;
        gbeta[c] += sum_g;
        if (cache.training) {
            for (int n = 0; n < gout.n; ++n)
                for (int y = 0; y < gout.h; ++y)
                    for (int xx = 0; xx < gout.w; ++xx) {
                        double g = gout.at(n, c, y, xx) * gamma[c];
                        double xh = xhat.at(n, c, y, xx);
                        gx.at(n, c, y, xx) =
                            cache.inv_std[c] *
                            (g - gamma[c] * (sum_g + xh * sum_gx) / m);
                    }
        } else {
            for (int n = 0; n < gout.n; ++n)
                for (int y = 0; y < gout.h; ++y)
                    for (int xx = 0; xx < gout.w; ++xx)
                        gx.at(n, c, y, xx) =
                            gout.at(n, c, y, xx) * gamma[c] * cache.inv_std[c];
        }
    }
    return gx;
}

// ---------------------------------------------------------------------------
// pointwise ops

Tensor leaky_relu_forward(const Tensor& x, double slope, LeakyCache* cache) {
    Tensor out = x;
    for (double& v : out.v) v = v >= 0.0 ? v : slope * v;
    if (cache) cache->x = x;
    return out;
}

Tensor leaky_relu_backward(const LeakyCache& cache, double slope, const Tensor& gout) {
    Tensor gx = gout;
    for (size_t i = 0; i < gx.v.size(); ++i)
        if (cache.x.v[i] < 0.0) gx.v[i] *= slope;
    return gx;
}

Tensor tanh_forward(const Tensor& x, TanhCache* cache) {
    Tensor out = x;
    for (double& v : out.v) v = std::tanh(v);
    if (cache) cache->y = out;
    return out;
}

Tensor tanh_backward(const TanhCache& cache, const Tensor& gout) {
    Tensor gx = gout;
    for (size_t i = 0; i < gx.v.size(); ++i)
        gx.v[i] *= 1.0 - cache.y.v[i] * cache.y.v[i];
    return gx;
}

Tensor global_avg_pool_forward(const Tensor& x, GapCache* cache) {
    Tensor out(x.n, x.c, 1, 1);
    const double inv = 1.0 / (static_cast<double>(x.h) * x.w);
    for (int n = 0; n < x.n; ++n)
        for (int c = 0; c < x.c; ++c) {
            double s = 0.0;
            for (int y = 0; y < x.h; ++y)
                for (int xx = 0; xx < x.w; ++xx) s += x.at(n, c, y, xx);
            out.at(n, c, 0, 0) = s * inv;
        }
    if (cache) { cache->h = x.h; cache->w = x.w; }
    return out;
}

Tensor global_avg_pool_backward(const GapCache& cache, const Tensor& gout) {
    Tensor gx(gout.n, gout.c, cache.h, cache.w);
    const double inv = 1.0 / (static_cast<double>(cache.h) * cache.w);
    for (int n = 0; n < gout.n; ++n)
        for (int c = 0; c < gout.c; ++c) {
            double g = gout.at(n, c, 0, 0) * inv;
            for (int y = 0; y < cache.h; ++y)
                for (int xx = 0; xx < cache.w; ++xx) gx.at(n, c, y, xx) = g;
        }
    return gx;
}

// ---------------------------------------------------------------------------
// Dense

Dense Dense::create(ParamStore& store, const std::string& name, int in_f, int out_f, Rng& rng) {
    Dense d{in_f, out_f, 0, 0};
    d.w_off = store.add(name + ".w", {out_f, in_f});
    d.b_off = store.add(name + ".b", {out_f});
    kaiming_fill(store.view(d.w_off, static_cast<size_t>(out_f) * in_f), in_f, rng);
    return d;
}

Tensor Dense::forward(const ParamStore& store, const Tensor& x, DenseCache* cache) const {
    const int f = x.c * x.h * x.w;
    if (f != in_f) throw ShapeError("Dense: feature count mismatch");
    Tensor out(x.n, out_f, 1, 1);
    auto w = store.view(w_off, static_cast<size_t>(out_f) * in_f);
    auto b = store.view(b_off, out_f);
    for (int n = 0; n < x.n; ++n)
        for (int o = 0; o < out_f; ++o) {
            double acc = b[o];
            const double* xi = &x.v[static_cast<size_t>(n) * f];
            const double* wi = &w[static_cast<size_t>(o) * in_f];
            for (int i = 0; i < in_f; ++i) acc += wi[i] * xi[i];
            out.at(n, o, 0, 0) = acc;
        }
    if (cache) cache->x = x;
    return out;
}

Tensor Dense::backward(const ParamStore& store, const DenseCache& cache, const Tensor& gout,
                       std::vector<double>& grads) const {
    const Tensor& x = cache.x;
    const int f = in_f;
    Tensor gx(x.n, x.c, x.h, x.w);
    auto w = store.view(w_off, static_cast<size_t>(out_f) * in_f);
    double* gw = grads.data() + w_off;
    double* gb = grads.data() + b_off;
    for (int n = 0; n < x.n; ++n)
        for (int o = 0; o < out_f; ++o) {
            double g = gout.at(n, o, 0, 0);
            gb[o] += g;
            const double* xi = &x.v[static_cast<size_t>(n) * f];
            double* gxi = &gx.v[static_cast<size_t>(n) * f];
            const double* wi = &w[static_cast<size_t>(o) * in_f];
            double* gwi = gw + static_cast<size_t>(o) * in_f;
            for (int i = 0; i < f; ++i) {
                gwi[i] += g * xi[i];
                gxi[i] += g * wi[i];
            }
        }
    return gx;
}

// ---------------------------------------------------------------------------
// shape utilities

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        throw ShapeError("concat_channels: spatial dims differ");
    Tensor out(a.n, a.c + b.c, a.h, a.w);
    for (int n = 0; n < a.n; ++n) {
        for (int c = 0; c < a.c; ++c)
            for (int y = 0; y < a.h; ++y)
                for (int x = 0; x < a.w; ++x) out.at(n, c, y, x) = a.at(n, c, y, x);
        for (int c = 0; c < b.c; ++c)
            for (int y = 0; y < a.h; ++y)
                for (int x = 0; x < a.w; ++x) out.at(n, a.c + c, y, x) = b.at(n, c, y, x);
    }
    return out;
}

void split_channels(const Tensor& g, int ca, Tensor& ga, Tensor& gb) {
    ga = Tensor(g.n, ca, g.h, g.w);
    gb = Tensor(g.n, g.c - ca, g.h, g.w);
    for (int n = 0; n < g.n; ++n) {
        for (int c = 0; c < ca; ++c)
            for (int y = 0; y < g.h; ++y)
                for (int x = 0; x < g.w; ++x) ga.at(n, c, y, x) = g.at(n, c, y, x);
        for (int c = ca; c < g.c; ++c)
            for (int y = 0; y < g.h; ++y)
                for (int x = 0; x < g.w; ++x) gb.at(n, c - ca, y, x) = g.at(n, c, y, x);
    }
}

Tensor add_broadcast(const Tensor& a, const Tensor& b) {
    if (b.c != 1 || a.n != b.n || a.h != b.h || a.w != b.w)
        throw ShapeError("add_broadcast: b must be single channel with matching dims");
    Tensor out = a;
    for (int n = 0; n < a.n; ++n)
        for (int c = 0; c < a.c; ++c)
            for (int y = 0; y < a.h; ++y)
                for (int x = 0; x < a.w; ++x) out.at(n, c, y, x) += b.at(n, 0, y, x);
    return out;
}

Tensor reduce_broadcast(const Tensor& gout) {
    Tensor gb(gout.n, 1, gout.h, gout.w);
    for (int n = 0; n < gout.n; ++n)
        for (int c = 0; c < gout.c; ++c)
            for (int y = 0; y < gout.h; ++y)
                for (int x = 0; x < gout.w; ++x) gb.at(n, 0, y, x) += gout.at(n, c, y, x);
    return gb;
}

} // namespace kslab::nn
