#pragma once

#include <array>
#include <vector>

#include "kslab/nn/ops.hpp"

namespace kslab::nn {

struct RemUNetConfig {
    int levels = 3;
    int base_width = 8;
    std::array<int, 3> remnant_widths{8, 16, 32}; // paper-scale: {64, 128, 256}
    double leaky_slope = 0.2;

    void validate() const {
        if (levels < 1) throw ConfigError("RemUNetConfig: levels must be >= 1");
        if (base_width < 1) throw ConfigError("RemUNetConfig: base_width must be >= 1");
        if (!(remnant_widths[0] < remnant_widths[1] && remnant_widths[1] < remnant_widths[2]))
            throw ConfigError("RemUNetConfig: remnant widths must increase");
    }
    int encoder_width(int level) const { return base_width << level; }
};

/// Bridge block: the batch-normalized input runs through three widening
/// conv+BN stages (the normalized input is broadcast-added to each stage
/// input), a 1x1 projection maps back to one channel, and the residue is
/// normalized input minus block output.
struct RemnantBlock {
    BatchNorm bn_in;
    Conv2d conv1, conv2, conv3, proj;
    BatchNorm bn1, bn2, bn3;

    struct Cache {
        BnCache bn_in, b1, b2, b3;
        Conv2dCache c1, c2, c3, cp;
    };

    static RemnantBlock create(ParamStore& store, const std::string& name,
                               const std::array<int, 3>& widths, Rng& rng);
    Tensor forward(ParamStore& store, const Tensor& x, bool training, Cache* cache) const;
    Tensor backward(const ParamStore& store, const Cache& cache, const Tensor& g_residue,
                    std::vector<double>& grads) const;
};

/// Encoder-decoder generator with the remnant bridge. Shape preserving; the
/// output activation is tanh. Input dims must be divisible by 2^levels.
struct Generator {
    RemUNetConfig cfg;
    std::vector<Conv2d> enc;
    std::vector<BatchNorm> enc_bn;
    Conv2d bridge_proj;
    RemnantBlock remnant;
    std::vector<ConvT2d> dec;
    std::vector<BatchNorm> dec_bn; // all but the output layer

    struct Cache {
        std::vector<Conv2dCache> enc_c;
        std::vector<BnCache> enc_b;
        std::vector<LeakyCache> enc_l;
        Conv2dCache proj_c;
        RemnantBlock::Cache rem;
        std::vector<ConvT2dCache> dec_c;
        std::vector<BnCache> dec_b;
        std::vector<LeakyCache> dec_l;
        TanhCache tanh;
        std::vector<int> enc_ch;
    };

    static Generator create(const RemUNetConfig& cfg, ParamStore& store, Rng& rng);
    Tensor forward(ParamStore& store, const Tensor& x, bool training, Cache* cache) const;
    Tensor backward(const ParamStore& store, const Cache& cache, const Tensor& gout,
                    std::vector<double>& grads) const;
};

/// Four stride-2 conv stages, global average, affine, sigmoid. Input dims
/// must be divisible by 16.
struct Discriminator {
    std::array<Conv2d, 4> conv;
    std::array<BatchNorm, 4> bn;
    Dense head;
    double leaky_slope = 0.2;

    struct Cache {
        std::array<Conv2dCache, 4> c;
        std::array<BnCache, 4> b;
        std::array<LeakyCache, 4> l;
        GapCache gap;
        DenseCache dense;
        double score = 0.0;
    };

    static Discriminator create(ParamStore& store, Rng& rng,
                                std::array<int, 4> widths = {8, 16, 32, 64});
    double forward(ParamStore& store, const Tensor& x, bool training, Cache* cache) const;
    /// g_score is d(loss)/d(score); parameter grads accumulate, input grad returned.
    Tensor backward(const ParamStore& store, const Cache& cache, double g_score,
                    std::vector<double>& grads) const;
};

/// Seeded Kaiming-style initialization stream for a model seed.
inline Rng init_rng(uint64_t seed) { return Rng(Rng::substream(seed, 0x6d6f64656c)); }

} // namespace kslab::nn
