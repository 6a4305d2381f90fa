#include "kslab/fft.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>
#include <tuple>
#include <vector>

namespace kslab {

namespace {

// FFTW planning is not thread-safe; execution through the new-array API is.
// Plans are cached per (h, w, sign) and created with FFTW_UNALIGNED so they
// can run on plain std::vector storage.
class PlanCache {
public:
    fftw_plan get(int h, int w, int sign) {
        std::lock_guard<std::mutex> lock(mu_);
        auto key = std::make_tuple(h, w, sign);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        // planned in place; execution below is in place too
        std::vector<cplx> probe(static_cast<size_t>(h) * w);
        fftw_plan p = fftw_plan_dft_2d(
            h, w,
            reinterpret_cast<fftw_complex*>(probe.data()),
            reinterpret_cast<fftw_complex*>(probe.data()),
            sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        plans_.emplace(key, p);
        return p;
    }

private:
    std::mutex mu_;
    std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

// out[(i + h/2) % h][(j + w/2) % w] = in[i][j]  (fftshift); the inverse shift
// uses the ceil-half offsets.
void shifted_copy(const std::vector<cplx>& in, std::vector<cplx>& out, int h, int w,
                  int dr, int dc, double scale) {
    for (int r = 0; r < h; ++r) {
        int rr = r + dr;
        if (rr >= h) rr -= h;
        const cplx* src = &in[static_cast<size_t>(r) * w];
        cplx* dst = &out[static_cast<size_t>(rr) * w];
        for (int c = 0; c < w; ++c) {
            int cc = c + dc;
            if (cc >= w) cc -= w;
            dst[cc] = src[c] * scale;
        }
    }
}

ComplexGrid transform(const ComplexGrid& g, int sign, Domain out_domain) {
    const int h = g.height, w = g.width;
    std::vector<cplx> buf_in(g.size());
    std::vector<cplx> buf_out(g.size());
    // ifftshift in, transform, fftshift out; 1/sqrt(MN) keeps it orthonormal
    shifted_copy(g.data, buf_in, h, w, (h + 1) / 2, (w + 1) / 2, 1.0);
    fftw_plan p = plan_cache().get(h, w, sign);
    fftw_execute_dft(p,
                     reinterpret_cast<fftw_complex*>(buf_in.data()),
                     reinterpret_cast<fftw_complex*>(buf_in.data()));
    double scale = 1.0 / std::sqrt(static_cast<double>(h) * w);
    shifted_copy(buf_in, buf_out, h, w, h / 2, w / 2, scale);
    return ComplexGrid(h, w, out_domain, std::move(buf_out));
}

} // namespace

ComplexGrid fft2c(const ComplexGrid& g) {
    if (g.domain != Domain::Image)
        throw DomainError("fft2c: expected image-domain input");
    return transform(g, FFTW_FORWARD, Domain::KSpace);
}

ComplexGrid ifft2c(const ComplexGrid& g) {
    if (g.domain != Domain::KSpace)
        throw DomainError("ifft2c: expected k-space input");
    return transform(g, FFTW_BACKWARD, Domain::Image);
}

SpectralPair spectral_decompose(const ComplexGrid& y) {
    SpectralPair out{RealGrid(y.height, y.width), ComplexGrid(y.height, y.width, Domain::KSpace)};
    for (size_t i = 0; i < y.data.size(); ++i) {
        double m = std::abs(y.data[i]);
        out.magnitude.data[i] = m;
        out.phase.data[i] = m > phase_floor ? y.data[i] / m : cplx(0.0, 0.0);
    }
    return out;
}

RealGrid real_part(const ComplexGrid& g) {
    if (g.domain != Domain::Image)
        throw DomainError("real_part: expected image-domain input");
    RealGrid out(g.height, g.width);
    for (size_t i = 0; i < g.data.size(); ++i) out.data[i] = g.data[i].real();
    return out;
}

RealGrid magnitude(const ComplexGrid& g) {
    RealGrid out(g.height, g.width);
    for (size_t i = 0; i < g.data.size(); ++i) out.data[i] = std::abs(g.data[i]);
    return out;
}

} // namespace kslab
