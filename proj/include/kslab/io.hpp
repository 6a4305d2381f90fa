#pragma once

#include <string>

#include "json.hpp"

#include "kslab/grappa.hpp"
#include "kslab/grid.hpp"
#include "kslab/losses.hpp"
#include "kslab/mask.hpp"
#include "kslab/nn/params.hpp"

namespace kslab {

/// CGRID v1: raw little-endian float32 pairs (re, im), row-major, with a JSON
/// sidecar at <path>.json carrying width/height/domain/dtype.
void save_cgrid(const ComplexGrid& g, const std::string& path);
ComplexGrid load_cgrid(const std::string& path);

/// 8-bit binary PGM preview after min-max scaling.
void save_pgm(const RealGrid& g, const std::string& path);
/// Symmetric scale around zero: -max|v| maps to 0, +max|v| to 255.
void save_pgm_signed(const RealGrid& g, const std::string& path);
RealGrid load_pgm(const std::string& path);

/// Mask file: PGM (255 = sampled) plus a JSON sidecar with pattern/ACS/seed.
void save_mask(const Mask& m, const std::string& path);
Mask load_mask(const std::string& path);

/// Kernel checkpoint: <path>.json metadata + <path>.bin complex float32 blob.
void save_kernel(const GrappaKernel& k, const std::string& path);
GrappaKernel load_kernel(const std::string& path);

/// Model checkpoint: <path>.json manifest {layers, step, config} +
/// <path>.bin float32 values in manifest order.
void save_params(const nn::ParamStore& store, const nlohmann::json& config,
                 const std::string& path);
nlohmann::json load_params(nn::ParamStore& store, const std::string& path);

LossWeights weights_from_json(const nlohmann::json& j);
nlohmann::json weights_to_json(const LossWeights& w);
LossWeights load_weights_file(const std::string& path);

nlohmann::json load_json_file(const std::string& path);

} // namespace kslab
