#pragma once

#include <array>
#include <optional>
#include <string>

#include "kslab/grappa.hpp"
#include "kslab/grid.hpp"
#include "kslab/nn/ops.hpp"

namespace kslab {

/// Weights of the composite training objective. Defaults are the reference
/// operating point.
struct LossWeights {
    double alpha = 15.0;     // image MSE
    double beta = 0.1;       // spectral magnitude
    double gamma = 0.05;     // spectral phase
    double delta = 0.01;     // GRAPPA consistency, image domain
    double zeta = 0.00025;   // GRAPPA consistency, k-space domain
    double kappa = 1e-3;     // perceptual

    void validate() const;
};

struct LossReport {
    double imse = 0.0;
    double fmag = 0.0;
    double fphase = 0.0;
    double grappa_s = 0.0;
    double grappa_k = 0.0;
    double perceptual = 0.0;
    double adversarial = 0.0;
    double total = 0.0;
    RealGrid grad; // d total / d xhat

    std::string to_json_line() const;
};

struct ValueGrad {
    double value = 0.0;
    RealGrid grad;
};

/// 0.5 * sum (xhat - xt)^2 with gradient xhat - xt.
ValueGrad loss_imse(const RealGrid& xhat, const RealGrid& xt);

/// 0.5 * sum (|F xhat| - |F xt|)^2; blind to global phase flips.
ValueGrad loss_fmag(const RealGrid& xhat, const RealGrid& xt);

/// 0.5 * sum |unit(F xhat) - unit(F xt)|^2 over the unit-phase spectra.
ValueGrad loss_fphase(const RealGrid& xhat, const RealGrid& xt);

/// Fixed interpolation policy for the GRAPPA consistency terms: a uniform
/// column submask and a kernel held constant through the gradient.
struct GrappaLossConfig {
    Mask submask;
    GrappaKernel kernel;
    AcquisitionNoise noise;
};

struct GrappaLossResult {
    double value_s = 0.0;
    double value_k = 0.0;
    RealGrid grad_s;
    RealGrid grad_k;
};

/// Undersample the spectrum of xhat with the config's mask and noise, fill it
/// with the fixed kernel, and penalize the distance to the truth in both
/// domains. Gradients flow through the mask/fill/transform chain only.
GrappaLossResult loss_grappa(const RealGrid& xhat, const RealGrid& xt, const ComplexGrid& yt,
                             const GrappaLossConfig& cfg);

/// Frozen random three-stage feature pyramid standing in for a pretrained
/// perceptual network. Weights are drawn once from the seed and never change;
/// an external weights file can replace them via load().
class PerceptualExtractor {
public:
    explicit PerceptualExtractor(uint64_t seed = 17);

    ValueGrad loss(const RealGrid& xhat, const RealGrid& xt) const;

    /// Stage outputs for a single image (test hook).
    std::array<nn::Tensor, 3> features(const RealGrid& x) const;

    const nn::ParamStore& store() const { return store_; }
    void load_weights(const std::vector<double>& values);
    /// Replace the frozen weights with a float32 blob on disk (same layout as
    /// the internal manifest order).
    void load_weights_file(const std::string& path);

private:
    nn::ParamStore store_;
    std::array<nn::Conv2d, 3> conv_;
    double slope_ = 0.2;
};

/// -log(d_out); d_out clamped to [1e-7, 1 - 1e-7].
struct AdversarialLoss {
    double value = 0.0;
    double grad_wrt_d_out = 0.0;
};
AdversarialLoss loss_adversarial(double d_out);

/// Critic-style alternative (no sigmoid semantics): value = -raw_score.
AdversarialLoss loss_adversarial_critic(double raw_score);

struct TotalLossInputs {
    const RealGrid* xhat = nullptr;
    const RealGrid* xt = nullptr;
    const ComplexGrid* yt = nullptr;
    const GrappaLossConfig* grappa = nullptr;         // term is 0 when absent
    const PerceptualExtractor* perceptual = nullptr;  // term is 0 when absent
    double d_out = 0.5;
    const RealGrid* adversarial_grad = nullptr; // backpropagated by the caller
};

/// Weighted sum of all terms plus the adversarial value; the report gradient
/// combines the image-domain gradients and, when provided, the caller's
/// adversarial gradient.
LossReport total_loss(const TotalLossInputs& in, const LossWeights& w);

} // namespace kslab
