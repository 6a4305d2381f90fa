#include "kslab/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace kslab {

namespace {

void write_file(const std::string& path, const void* data, size_t bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!f) throw IoError("write failed: " + path);
}

std::vector<char> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + path);
    auto size = f.tellg();
    std::vector<char> buf(static_cast<size_t>(size));
    f.seekg(0);
    f.read(buf.data(), size);
    if (!f) throw IoError("read failed: " + path);
    return buf;
}

void write_json(const std::string& path, const nlohmann::json& j) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << j.dump(2) << "\n";
}

std::vector<float> to_f32_pairs(const std::vector<cplx>& v) {
    std::vector<float> out(v.size() * 2);
    for (size_t i = 0; i < v.size(); ++i) {
        out[2 * i] = static_cast<float>(v[i].real());
        out[2 * i + 1] = static_cast<float>(v[i].imag());
    }
    return out;
}

std::vector<cplx> from_f32_pairs(const std::vector<char>& raw) {
    if (raw.size() % 8 != 0) throw IoError("complex blob length not a multiple of 8");
    const float* f = reinterpret_cast<const float*>(raw.data());
    size_t n = raw.size() / 8;
    std::vector<cplx> out(n);
    for (size_t i = 0; i < n; ++i) out[i] = cplx(f[2 * i], f[2 * i + 1]);
    return out;
}

} // namespace

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    nlohmann::json j;
    f >> j;
    return j;
}

void save_cgrid(const ComplexGrid& g, const std::string& path) {
    auto blob = to_f32_pairs(g.data);
    write_file(path, blob.data(), blob.size() * sizeof(float));
    write_json(path + ".json", {{"width", g.width},
                                {"height", g.height},
                                {"domain", domain_name(g.domain)},
                                {"dtype", "c64"}});
}

ComplexGrid load_cgrid(const std::string& path) {
    nlohmann::json j = load_json_file(path + ".json");
    int w = j.at("width").get<int>();
    int h = j.at("height").get<int>();
    std::string dom = j.at("domain").get<std::string>();
    if (j.at("dtype").get<std::string>() != "c64")
        throw IoError("unsupported cgrid dtype in " + path);
    auto data = from_f32_pairs(read_file(path));
    if (data.size() != static_cast<size_t>(w) * h)
        throw IoError("cgrid blob size does not match sidecar dims: " + path);
    Domain d = dom == "image" ? Domain::Image
               : dom == "kspace" ? Domain::KSpace
                                 : throw IoError("bad domain in " + path + ".json");
    return ComplexGrid(h, w, d, std::move(data));
}

namespace {

void save_pgm_bytes(const std::vector<uint8_t>& px, int h, int w, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "P5\n" << w << " " << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!f) throw IoError("write failed: " + path);
}

} // namespace

void save_pgm(const RealGrid& g, const std::string& path) {
    auto [mn, mx] = std::minmax_element(g.data.begin(), g.data.end());
    double lo = *mn, hi = *mx;
    double scale = hi > lo ? 255.0 / (hi - lo) : 0.0;
    std::vector<uint8_t> px(g.data.size());
    for (size_t i = 0; i < g.data.size(); ++i)
        px[i] = static_cast<uint8_t>(std::lround((g.data[i] - lo) * scale));
    save_pgm_bytes(px, g.height, g.width, path);
}

void save_pgm_signed(const RealGrid& g, const std::string& path) {
    double amp = 0.0;
    for (double v : g.data) amp = std::max(amp, std::abs(v));
    double scale = amp > 0.0 ? 127.5 / amp : 0.0;
    std::vector<uint8_t> px(g.data.size());
    for (size_t i = 0; i < g.data.size(); ++i)
        px[i] = static_cast<uint8_t>(std::clamp(std::lround(127.5 + g.data[i] * scale), 0L, 255L));
    save_pgm_bytes(px, g.height, g.width, path);
}

RealGrid load_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw IoError("not a binary PGM: " + path);
    auto next_int = [&f, &path]() {
        // skip whitespace and # comments
        int ch = f.get();
        while (ch == ' ' || ch == '\n' || ch == '\r' || ch == '\t' || ch == '#') {
            if (ch == '#')
                while (ch != '\n' && ch != EOF) ch = f.get();
            ch = f.get();
        }
        int v = 0;
        bool any = false;
        while (ch >= '0' && ch <= '9') {
            v = v * 10 + (ch - '0');
            any = true;
            ch = f.get();
        }
        if (!any) throw IoError("malformed PGM header: " + path);
        return v;
    };
    int w = next_int(), h = next_int(), maxval = next_int();
    if (maxval != 255) throw IoError("unsupported PGM maxval in " + path);
    std::vector<uint8_t> px(static_cast<size_t>(w) * h);
    f.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
    if (!f) throw IoError("truncated PGM: " + path);
    RealGrid g(h, w);
    for (size_t i = 0; i < px.size(); ++i) g.data[i] = px[i] / 255.0;
    return g;
}

void save_mask(const Mask& m, const std::string& path) {
    std::vector<uint8_t> px(m.keep.size());
    for (size_t i = 0; i < px.size(); ++i) px[i] = m.keep[i] ? 255 : 0;
    save_pgm_bytes(px, m.height, m.width, path);
    write_json(path + ".json", {{"pattern", pattern_name(m.pattern)},
                                {"acs_rows", m.acs.rows},
                                {"acs_cols", m.acs.cols},
                                {"seed", m.seed},
                                {"target_fraction", m.target_fraction}});
}

Mask load_mask(const std::string& path) {
    RealGrid g = load_pgm(path);
    nlohmann::json j = load_json_file(path + ".json");
    Mask m;
    m.height = g.height;
    m.width = g.width;
    m.keep.resize(g.data.size());
    for (size_t i = 0; i < g.data.size(); ++i) m.keep[i] = g.data[i] > 0.5 ? 1 : 0;
    m.pattern = pattern_from_name(j.at("pattern").get<std::string>());
    m.acs = AcsRegion{j.at("acs_rows").get<int>(), j.at("acs_cols").get<int>()};
    m.seed = j.at("seed").get<uint64_t>();
    m.target_fraction = j.at("target_fraction").get<double>();
    return m;
}

void save_kernel(const GrappaKernel& k, const std::string& path) {
    const KernelGeometry& g = k.geometry;
    std::vector<cplx> flat;
    for (const auto& per_offset : k.weights)
        for (const auto& row : per_offset) flat.insert(flat.end(), row.begin(), row.end());
    auto blob = to_f32_pairs(flat);
    write_file(path + ".bin", blob.data(), blob.size() * sizeof(float));
    write_json(path + ".json", {{"geometry",
                                 {{"source_lines", g.source_lines},
                                  {"taps", g.taps},
                                  {"accel", g.accel},
                                  {"coils", g.coils}}},
                                {"fit_residual", k.fit_residual}});
}

GrappaKernel load_kernel(const std::string& path) {
    nlohmann::json j = load_json_file(path + ".json");
    GrappaKernel k;
    const auto& jg = j.at("geometry");
    k.geometry.source_lines = jg.at("source_lines").get<int>();
    k.geometry.taps = jg.at("taps").get<int>();
    k.geometry.accel = jg.at("accel").get<int>();
    k.geometry.coils = jg.at("coils").get<int>();
    k.geometry.validate();
    k.fit_residual = j.at("fit_residual").get<double>();
    auto flat = from_f32_pairs(read_file(path + ".bin"));
    const size_t nfeat = static_cast<size_t>(k.geometry.features());
    const size_t rows = static_cast<size_t>(k.geometry.accel - 1) * k.geometry.coils;
    if (flat.size() != rows * nfeat) throw IoError("kernel blob size mismatch: " + path);
    size_t pos = 0;
    k.weights.assign(k.geometry.accel - 1, std::vector<std::vector<cplx>>(k.geometry.coils));
    for (auto& per_offset : k.weights)
        for (auto& row : per_offset) {
            row.assign(flat.begin() + pos, flat.begin() + pos + nfeat);
            pos += nfeat;
        }
    return k;
}

void save_params(const nn::ParamStore& store, const nlohmann::json& config,
                 const std::string& path) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& e : store.manifest())
        layers.push_back({{"name", e.name}, {"shape", e.shape}, {"trainable", e.trainable}});
    write_json(path + ".json",
               {{"layers", layers}, {"step", store.step}, {"config", config}});
    std::vector<float> blob(store.values.size());
    for (size_t i = 0; i < blob.size(); ++i) blob[i] = static_cast<float>(store.values[i]);
    write_file(path + ".bin", blob.data(), blob.size() * sizeof(float));
}

nlohmann::json load_params(nn::ParamStore& store, const std::string& path) {
    nlohmann::json j = load_json_file(path + ".json");
    const auto& layers = j.at("layers");
    if (layers.size() != store.manifest().size())
        throw IoError("checkpoint manifest length mismatch: " + path);
    for (size_t i = 0; i < layers.size(); ++i) {
        const auto& e = store.manifest()[i];
        if (layers[i].at("name").get<std::string>() != e.name ||
            layers[i].at("shape").get<std::vector<int>>() != e.shape)
            throw IoError("checkpoint manifest entry mismatch at " + e.name);
    }
    auto raw = read_file(path + ".bin");
    if (raw.size() != store.values.size() * sizeof(float))
        throw IoError("checkpoint blob size mismatch: " + path);
    const float* f = reinterpret_cast<const float*>(raw.data());
    for (size_t i = 0; i < store.values.size(); ++i) store.values[i] = f[i];
    store.step = j.at("step").get<long>();
    return j.at("config");
}

nlohmann::json weights_to_json(const LossWeights& w) {
    return {{"alpha", w.alpha}, {"beta", w.beta},   {"gamma", w.gamma},
            {"delta", w.delta}, {"zeta", w.zeta},   {"kappa", w.kappa}};
}

LossWeights weights_from_json(const nlohmann::json& j) {
    LossWeights w;
    w.alpha = j.value("alpha", w.alpha);
    w.beta = j.value("beta", w.beta);
    w.gamma = j.value("gamma", w.gamma);
    w.delta = j.value("delta", w.delta);
    w.zeta = j.value("zeta", w.zeta);
    w.kappa = j.value("kappa", w.kappa);
    w.validate();
    return w;
}

LossWeights load_weights_file(const std::string& path) {
    return weights_from_json(load_json_file(path));
}

} // namespace kslab
