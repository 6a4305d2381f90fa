#include "kslab/nn/params.hpp"

#include <cmath>

namespace kslab::nn {

size_t ParamStore::add(const std::string& name, std::vector<int> shape, bool trainable) {
    size_t count = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("ParamStore::add: non-positive dim in " + name);
        count *= static_cast<size_t>(d);
    }
    ParamEntry e{name, std::move(shape), values.size(), count, trainable};
    manifest_.push_back(e);
    values.resize(values.size() + count, 0.0);
    adam_m.resize(values.size(), 0.0);
    adam_v.resize(values.size(), 0.0);
    return e.offset;
}

const ParamEntry& ParamStore::entry(const std::string& name) const {
    for (const auto& e : manifest_)
        if (e.name == name) return e;
    throw ConfigError("ParamStore: no entry named " + name);
}

void adam_step(ParamStore& store, const std::vector<double>& grads, const AdamConfig& cfg) {
    if (grads.size() != store.values.size())
        throw ShapeError("adam_step: gradient length does not match parameter count");
    store.step += 1;
    const double t = static_cast<double>(store.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (const auto& e : store.manifest()) {
        if (!e.trainable) continue;
        for (size_t i = e.offset; i < e.offset + e.count; ++i) {
            double g = grads[i];
            store.adam_m[i] = cfg.beta1 * store.adam_m[i] + (1.0 - cfg.beta1) * g;
            store.adam_v[i] = cfg.beta2 * store.adam_v[i] + (1.0 - cfg.beta2) * g * g;
            double mhat = store.adam_m[i] / bc1;
            double vhat = store.adam_v[i] / bc2;
            store.values[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

} // namespace kslab::nn
