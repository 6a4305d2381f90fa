#pragma once

#include <string>
#include <vector>

#include "kslab/nn/params.hpp"
#include "kslab/nn/tensor.hpp"
#include "kslab/rng.hpp"

namespace kslab::nn {

inline constexpr double bn_eps = 1e-5;

struct Conv2dCache { Tensor x; };
struct ConvT2dCache { Tensor x; };
struct BnCache {
    Tensor xhat;
    std::vector<double> inv_std;
    bool training = true;
};
struct LeakyCache { Tensor x; };
struct TanhCache { Tensor y; };
struct GapCache { int h = 0, w = 0; };
struct DenseCache { Tensor x; };

/// 2D convolution, zero padded. Weights [out_ch][in_ch][k][k].
struct Conv2d {
    int in_ch = 1, out_ch = 1, k = 3, stride = 1, pad = 1;
    size_t w_off = 0, b_off = 0;

    static Conv2d create(ParamStore& store, const std::string& name, int in_ch, int out_ch,
                         int k, int stride, int pad, Rng& rng);
    int out_dim(int in) const { return (in + 2 * pad - k) / stride + 1; }
    Tensor forward(const ParamStore& store, const Tensor& x, Conv2dCache* cache) const;
    Tensor backward(const ParamStore& store, const Conv2dCache& cache, const Tensor& gout,
                    std::vector<double>& grads) const;
};

/// Transposed 2D convolution (stride-2 upsampling with k=4, pad=1 doubles the
/// spatial dims exactly). Weights [in_ch][out_ch][k][k].
struct ConvT2d {
    int in_ch = 1, out_ch = 1, k = 4, stride = 2, pad = 1;
    size_t w_off = 0, b_off = 0;

    static ConvT2d create(ParamStore& store, const std::string& name, int in_ch, int out_ch,
                          int k, int stride, int pad, Rng& rng);
    int out_dim(int in) const { return (in - 1) * stride - 2 * pad + k; }
    Tensor forward(const ParamStore& store, const Tensor& x, ConvT2dCache* cache) const;
    Tensor backward(const ParamStore& store, const ConvT2dCache& cache, const Tensor& gout,
                    std::vector<double>& grads) const;
};

/// Per-channel batch normalization; batch statistics while training, running
/// averages (momentum 0.9) at inference.
struct BatchNorm {
    int ch = 1;
    size_t gamma_off = 0, beta_off = 0, rmean_off = 0, rvar_off = 0;
    double momentum = 0.9;

    static BatchNorm create(ParamStore& store, const std::string& name, int ch);
    Tensor forward(ParamStore& store, const Tensor& x, bool training, BnCache* cache) const;
    Tensor backward(const ParamStore& store, const BnCache& cache, const Tensor& gout,
                    std::vector<double>& grads) const;
};

Tensor leaky_relu_forward(const Tensor& x, double slope, LeakyCache* cache);
Tensor leaky_relu_backward(const LeakyCache& cache, double slope, const Tensor& gout);

Tensor tanh_forward(const Tensor& x, TanhCache* cache);
Tensor tanh_backward(const TanhCache& cache, const Tensor& gout);

Tensor global_avg_pool_forward(const Tensor& x, GapCache* cache);
Tensor global_avg_pool_backward(const GapCache& cache, const Tensor& gout);

/// Affine head on flattened [n, c*h*w] features. Weights [out][in].
struct Dense {
    int in_f = 1, out_f = 1;
    size_t w_off = 0, b_off = 0;

    static Dense create(ParamStore& store, const std::string& name, int in_f, int out_f, Rng& rng);
    Tensor forward(const ParamStore& store, const Tensor& x, DenseCache* cache) const;
    Tensor backward(const ParamStore& store, const DenseCache& cache, const Tensor& gout,
                    std::vector<double>& grads) const;
};

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& g, int ca, Tensor& ga, Tensor& gb);

/// a + b broadcast over channels (b has one channel).
Tensor add_broadcast(const Tensor& a, const Tensor& b);
/// Channel-sum of gout, the adjoint of the broadcast.
Tensor reduce_broadcast(const Tensor& gout);

double sigmoid(double x);

} // namespace kslab::nn
