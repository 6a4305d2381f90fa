#include "kslab/nn/models.hpp"

namespace kslab::nn {

namespace {

Tensor add_tensors(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("add_tensors: shape mismatch");
    Tensor out = a;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// RemnantBlock

RemnantBlock RemnantBlock::create(ParamStore& store, const std::string& name,
                                  const std::array<int, 3>& widths, Rng& rng) {
    RemnantBlock b;
    b.bn_in = BatchNorm::create(store, name + ".bn_in", 1);
    b.conv1 = Conv2d::create(store, name + ".conv1", 1, widths[0], 3, 1, 1, rng);
    b.bn1 = BatchNorm::create(store, name + ".bn1", widths[0]);
    b.conv2 = Conv2d::create(store, name + ".conv2", widths[0], widths[1], 3, 1, 1, rng);
    b.bn2 = BatchNorm::create(store, name + ".bn2", widths[1]);
    b.conv3 = Conv2d::create(store, name + ".conv3", widths[1], widths[2], 3, 1, 1, rng);
    b.bn3 = BatchNorm::create(store, name + ".bn3", widths[2]);
    b.proj = Conv2d::create(store, name + ".proj", widths[2], 1, 1, 1, 0, rng);
    return b;
}

Tensor RemnantBlock::forward(ParamStore& store, const Tensor& x, bool training,
                             Cache* cache) const {
    if (x.c != 1) throw ShapeError("RemnantBlock: input must have one channel");
    Cache local;
    Cache* cc = cache ? cache : &local;
    Tensor xn = bn_in.forward(store, x, training, &cc->bn_in);
    Tensor s1 = bn1.forward(store, conv1.forward(store, xn, &cc->c1), training, &cc->b1);
    Tensor s2 = bn2.forward(store, conv2.forward(store, add_broadcast(s1, xn), &cc->c2),
                            training, &cc->b2);
    Tensor s3 = bn3.forward(store, conv3.forward(store, add_broadcast(s2, xn), &cc->c3),
                            training, &cc->b3);
    Tensor block_out = proj.forward(store, s3, &cc->cp);
    Tensor residue = xn;
    for (size_t i = 0; i < residue.v.size(); ++i) residue.v[i] -= block_out.v[i];
    return residue;
}

Tensor RemnantBlock::backward(const ParamStore& store, const Cache& cache,
                              const Tensor& g_residue, std::vector<double>& grads) const {
    // residue = xn - proj(s3)
    Tensor g_xn = g_residue;
    Tensor g_out = g_residue;
    for (double& v : g_out.v) v = -v;

    Tensor g_s3 = proj.backward(store, cache.cp, g_out, grads);
    Tensor g_in3 = conv3.backward(store, cache.c3, bn3.backward(store, cache.b3, g_s3, grads),
                                  grads);
    g_xn = add_tensors(g_xn, reduce_broadcast(g_in3));

    Tensor g_s2 = g_in3; // channel part of the broadcast add
    Tensor g_in2 = conv2.backward(store, cache.c2, bn2.backward(store, cache.b2, g_s2, grads),
                                  grads);
    g_xn = add_tensors(g_xn, reduce_broadcast(g_in2));

    Tensor g_s1 = g_in2;
    Tensor g_x1 = conv1.backward(store, cache.c1, bn1.backward(store, cache.b1, g_s1, grads),
                                 grads);
    g_xn = add_tensors(g_xn, g_x1);

    return bn_in.backward(store, cache.bn_in, g_xn, grads);
}

// ---------------------------------------------------------------------------
// Generator

Generator Generator::create(const RemUNetConfig& cfg, ParamStore& store, Rng& rng) {
    cfg.validate();
    Generator g;
    g.cfg = cfg;
    int in_ch = 1;
    for (int i = 0; i < cfg.levels; ++i) {
        int out_ch = cfg.encoder_width(i);
        g.enc.push_back(Conv2d::create(store, "enc" + std::to_string(i), in_ch, out_ch, 3, 2, 1, rng));
        g.enc_bn.push_back(BatchNorm::create(store, "enc" + std::to_string(i) + ".bn", out_ch));
        in_ch = out_ch;
    }
    g.bridge_proj = Conv2d::create(store, "bridge.proj", in_ch, 1, 1, 1, 0, rng);
    g.remnant = RemnantBlock::create(store, "remnant", cfg.remnant_widths, rng);

    int cur_ch = in_ch + 1; // bottom features plus the remnant residue
    for (int i = 0; i < cfg.levels; ++i) {
        bool last = i == cfg.levels - 1;
        int out_ch = last ? 1 : cfg.encoder_width(cfg.levels - 2 - i);
        g.dec.push_back(ConvT2d::create(store, "dec" + std::to_string(i), cur_ch, out_ch, 4, 2, 1, rng));
        if (!last) {
            g.dec_bn.push_back(BatchNorm::create(store, "dec" + std::to_string(i) + ".bn", out_ch));
            cur_ch = out_ch * 2; // concat with the matching encoder feature
        }
    }
    return g;
}

Tensor Generator::forward(ParamStore& store, const Tensor& x, bool training, Cache* cache) const {
    const int L = cfg.levels;
    if (x.c != 1) throw ShapeError("Generator: input must have one channel");
    if (x.h % (1 << L) != 0 || x.w % (1 << L) != 0)
        throw ShapeError("Generator: dims must be divisible by 2^levels");

    Cache local;
    Cache* cc = cache ? cache : &local;
    cc->enc_c.resize(L);
    cc->enc_b.resize(L);
    cc->enc_l.resize(L);
    cc->dec_c.resize(L);
    cc->dec_b.resize(L - 1);
    cc->dec_l.resize(L - 1);
    cc->enc_ch.clear();

    std::vector<Tensor> enc_out;
    Tensor cur = x;
    for (int i = 0; i < L; ++i) {
        cur = enc[i].forward(store, cur, &cc->enc_c[i]);
        cur = enc_bn[i].forward(store, cur, training, &cc->enc_b[i]);
        cur = leaky_relu_forward(cur, cfg.leaky_slope, &cc->enc_l[i]);
        enc_out.push_back(cur);
        cc->enc_ch.push_back(cur.c);
    }

    Tensor bridge_in = bridge_proj.forward(store, enc_out[L - 1], &cc->proj_c);
    Tensor residue = remnant.forward(store, bridge_in, training, &cc->rem);

    cur = concat_channels(enc_out[L - 1], residue);
    for (int i = 0; i < L; ++i) {
        cur = dec[i].forward(store, cur, &cc->dec_c[i]);
        if (i < L - 1) {
            cur = dec_bn[i].forward(store, cur, training, &cc->dec_b[i]);
            cur = leaky_relu_forward(cur, cfg.leaky_slope, &cc->dec_l[i]);
            cur = concat_channels(cur, enc_out[L - 2 - i]);
        }
    }
    return tanh_forward(cur, &cc->tanh);
}

Tensor Generator::backward(const ParamStore& store, const Cache& cache, const Tensor& gout,
                           std::vector<double>& grads) const {
    const int L = cfg.levels;
    std::vector<Tensor> g_enc(L); // accumulated skip gradients

    Tensor g = tanh_backward(cache.tanh, gout);
    for (int i = L - 1; i >= 0; --i) {
        if (i < L - 1) {
            Tensor g_act, g_skip;
            split_channels(g, dec[i].out_ch, g_act, g_skip);
            int skip_level = L - 2 - i;
            g_enc[skip_level] = g_enc[skip_level].size() == 0
                                    ? g_skip
                                    : add_tensors(g_enc[skip_level], g_skip);
            g = leaky_relu_backward(cache.dec_l[i], cfg.leaky_slope, g_act);
            g = dec_bn[i].backward(store, cache.dec_b[i], g, grads);
        }
        g = dec[i].backward(store, cache.dec_c[i], g, grads);
    }

    Tensor g_bottom, g_residue;
    split_channels(g, cache.enc_ch[L - 1], g_bottom, g_residue);
    g_enc[L - 1] = g_enc[L - 1].size() == 0 ? g_bottom : add_tensors(g_enc[L - 1], g_bottom);

    Tensor g_bridge_in = remnant.backward(store, cache.rem, g_residue, grads);
    g_enc[L - 1] = add_tensors(g_enc[L - 1],
                               bridge_proj.backward(store, cache.proj_c, g_bridge_in, grads));

    Tensor g_in = g_enc[L - 1];
    for (int i = L - 1; i >= 0; --i) {
        Tensor t = leaky_relu_backward(cache.enc_l[i], cfg.leaky_slope, g_in);
        t = enc_bn[i].backward(store, cache.enc_b[i], t, grads);
        t = enc[i].backward(store, cache.enc_c[i], t, grads);
        if (i > 0)
            g_in = g_enc[i - 1].size() == 0 ? t : add_tensors(t, g_enc[i - 1]);
        else
            g_in = t;
    }
    return g_in;
}

// ---------------------------------------------------------------------------
// Discriminator

Discriminator Discriminator::create(ParamStore& store, Rng& rng, std::array<int, 4> widths) {
    Discriminator d;
    int in_ch = 1;
    for (int i = 0; i < 4; ++i) {
        d.conv[i] = Conv2d::create(store, "disc" + std::to_string(i), in_ch, widths[i], 3, 2, 1, rng);
        d.bn[i] = BatchNorm::create(store, "disc" + std::to_string(i) + ".bn", widths[i]);
        in_ch = widths[i];
    }
    d.head = Dense::create(store, "disc.head", in_ch, 1, rng);
    return d;
}

double Discriminator::forward(ParamStore& store, const Tensor& x, bool training,
                              Cache* cache) const {
    if (x.c != 1) throw ShapeError("Discriminator: input must have one channel");
    if (x.h % 16 != 0 || x.w % 16 != 0)
        throw ShapeError("Discriminator: dims must be divisible by 16");
    Cache local;
    Cache* cc = cache ? cache : &local;
    Tensor cur = x;
    for (int i = 0; i < 4; ++i) {
        cur = conv[i].forward(store, cur, &cc->c[i]);
        cur = bn[i].forward(store, cur, training, &cc->b[i]);
        cur = leaky_relu_forward(cur, leaky_slope, &cc->l[i]);
    }
    cur = global_avg_pool_forward(cur, &cc->gap);
    cur = head.forward(store, cur, &cc->dense);
    double score = sigmoid(cur.at(0, 0, 0, 0));
    cc->score = score;
    return score;
}

Tensor Discriminator::backward(const ParamStore& store, const Cache& cache, double g_score,
                               std::vector<double>& grads) const {
    double s = cache.score;
    Tensor g(1, 1, 1, 1);
    g.at(0, 0, 0, 0) = g_score * s * (1.0 - s);
    Tensor cur = head.backward(store, cache.dense, g, grads);
    cur = global_avg_pool_backward(cache.gap, cur);
    for (int i = 3; i >= 0; --i) {
        cur = leaky_relu_backward(cache.l[i], leaky_slope, cur);
        cur = bn[i].backward(store, cache.b[i], cur, grads);
        cur = conv[i].backward(store, cache.c[i], cur, grads);
    }
    return cur;
}

} // namespace kslab::nn
