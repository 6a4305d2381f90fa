#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kslab/errors.hpp"

namespace kslab::nn {

struct ParamEntry {
    std::string name;
    std::vector<int> shape;
    size_t offset = 0;
    size_t count = 0;
    bool trainable = true; // batch-norm running stats are carried but not optimized
};

/// Flat model parameters plus Adam moments, addressed through an ordered
/// manifest. The manifest order doubles as the serialization order.
class ParamStore {
public:
    size_t add(const std::string& name, std::vector<int> shape, bool trainable = true);

    std::span<double> view(size_t offset, size_t count) {
        return {values.data() + offset, count};
    }
    std::span<const double> view(size_t offset, size_t count) const {
        return {values.data() + offset, count};
    }
    const ParamEntry& entry(const std::string& name) const;

    const std::vector<ParamEntry>& manifest() const { return manifest_; }
    size_t total() const { return values.size(); }

    std::vector<double> values;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    long step = 0;

private:
    std::vector<ParamEntry> manifest_;
};

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Standard bias-corrected Adam update over every trainable entry; increments
/// the step counter.
void adam_step(ParamStore& store, const std::vector<double>& grads, const AdamConfig& cfg);

} // namespace kslab::nn
