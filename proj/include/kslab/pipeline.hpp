#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "kslab/grappa.hpp"
#include "kslab/losses.hpp"
#include "kslab/mask.hpp"
#include "kslab/metrics.hpp"
#include "kslab/nn/models.hpp"
#include "kslab/phantom.hpp"

namespace kslab {

enum class ReconMethod { ZeroFill, Grappa, Net, NetCorrected };
const char* recon_method_name(ReconMethod m);

struct ReconResult {
    RealGrid image;
    ComplexGrid kspace;
    ReconMethod method = ReconMethod::ZeroFill;
    std::optional<double> psnr_db;
    std::optional<double> ssim_val;
    bool grappa_fallback = false; // generator input fell back to zero fill
};

/// Magnitude of the inverse transform of undersampled k-space.
ReconResult zero_fill_recon(const ComplexGrid& y_u);

/// GRAPPA fill + inverse transform + coil combine, as a ReconResult.
ReconResult grappa_recon(const CoilStack& y_u, const Mask& m, const KernelGeometry& geom,
                         double ridge);

/// Replace the generator's spectrum with the measured one at every sampled
/// point. Observed entries are copied bit-exactly from fft2c(x_g).
ComplexGrid kspace_correct(const ComplexGrid& gen_img, const ComplexGrid& x_g, const Mask& m);

struct MaskSpec {
    MaskPattern pattern = MaskPattern::Gauss1D;
    double fraction = 0.3;
    double acs_fraction = -1.0; // < 0: default sizing
    uint64_t seed = 0;

    Mask build(int height, int width) const;
};

enum class AdversarialMode { Log, Critic };

struct TrainConfig {
    int epochs = 30;
    int batch_size = 1;
    double lr = 1e-4;
    double beta1 = 0.9; // 0.5 is the alternative momentum setting
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    LossWeights weights;
    MaskSpec mask;
    double noise_sigma = 0.0;
    uint64_t seed = 0;
    int kernel_refresh_epochs = 1;
    nn::RemUNetConfig generator;
    AdversarialMode adversarial = AdversarialMode::Log;
    KernelGeometry grappa_geom;
    double grappa_ridge = 1e-6;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

/// Generator (and optionally discriminator) with its parameters; rebuilding
/// from a config is deterministic, so checkpoints reload by name/shape.
struct ModelBundle {
    nn::RemUNetConfig cfg;
    nn::Generator gen;
    nn::ParamStore gen_params;
    nn::Discriminator disc;
    nn::ParamStore disc_params;

    static ModelBundle create(const nn::RemUNetConfig& cfg, uint64_t seed);
};

/// Generator inference: GRAPPA-reconstructed input when the mask admits the
/// uniform path (zero-fill otherwise), network forward, optional k-space
/// correction.
ReconResult net_recon(const ComplexGrid& y_u, const Mask& m, const nn::Generator& gen,
                      nn::ParamStore& params, bool correct,
                      const KernelGeometry& geom = {}, double ridge = 1e-6);

/// Spectrum the correction block pins at observed points: fft2c of the
/// generator input image for this (y_u, mask) pair. Recomputing it is
/// bit-stable, which lets callers verify data consistency exactly.
ComplexGrid observed_reference(const ComplexGrid& y_u, const Mask& m,
                               const KernelGeometry& geom, double ridge);

struct TrainResult {
    ModelBundle model;
    std::vector<LossReport> history; // per-epoch means (grad omitted)
    Mask mask;
};

/// Alternating adversarial training with the composite loss. Deterministic
/// for a fixed config.
TrainResult train(const std::vector<RealGrid>& dataset, const TrainConfig& cfg);

struct EvalRow {
    int index = 0;
    ReconMethod method = ReconMethod::ZeroFill;
    double psnr_db = 0.0;
    double ssim_val = 0.0;
    bool grappa_fallback = false;
    std::string to_json_line() const;
};

struct EvalAggregate {
    ReconMethod method = ReconMethod::ZeroFill;
    double psnr_mean = 0.0, psnr_std = 0.0;
    double ssim_mean = 0.0, ssim_std = 0.0;
    std::string to_json_line() const;
};

struct EvalTable {
    std::vector<EvalRow> rows;
    std::vector<EvalAggregate> aggregates;
};

/// Per-image PSNR/SSIM for every method, parallel across images with
/// index-ordered assembly (KSPACE_LAB_THREADS caps the worker count).
EvalTable evaluate(const std::vector<RealGrid>& dataset, const Mask& m,
                   const nn::Generator& gen, nn::ParamStore& gen_params,
                   const KernelGeometry& geom, double ridge,
                   double noise_sigma = 0.0, uint64_t noise_seed = 0,
                   const MetricConfig& mcfg = {});

/// Worker cap from KSPACE_LAB_THREADS (default: hardware concurrency).
int thread_cap();

} // namespace kslab
