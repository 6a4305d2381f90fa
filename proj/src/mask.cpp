#include "kslab/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kslab/rng.hpp"

namespace kslab {

const char* pattern_name(MaskPattern p) {
    switch (p) {
        case MaskPattern::Gauss1D: return "gauss1d";
        case MaskPattern::Gauss2D: return "gauss2d";
        case MaskPattern::Poisson2D: return "poisson2d";
    }
    return "gauss1d";
}

MaskPattern pattern_from_name(const std::string& s) {
    if (s == "gauss1d") return MaskPattern::Gauss1D;
    if (s == "gauss2d") return MaskPattern::Gauss2D;
    if (s == "poisson2d") return MaskPattern::Poisson2D;
    throw ConfigError("unknown mask pattern: " + s);
}

size_t Mask::count() const {
    return static_cast<size_t>(std::count(keep.begin(), keep.end(), uint8_t(1)));
}

bool Mask::column_sampled(int c) const {
    for (int r = 0; r < height; ++r)
        if (!sampled(r, c)) return false;
    return true;
}

double default_acs_fraction(int width) {
    int cols = std::max(8, static_cast<int>(std::lround(0.08 * width)));
    return static_cast<double>(cols) / width;
}

namespace {

constexpr double kDensitySigmaScale = 0.15; // of the grid extent

int rounded(double x) { return static_cast<int>(std::lround(x)); }

double center_weight(double d2_scaled) { return std::exp(-0.5 * d2_scaled); }

/// Exact-count weighted draw without replacement: systematic positions over
/// the cumulative weight, duplicates resolved by advancing to the next
/// unselected candidate. Returns indices into `weights`.
std::vector<int> systematic_pick(const std::vector<double>& weights, int k, Rng& rng) {
    const int n = static_cast<int>(weights.size());
    std::vector<int> picked;
    if (k <= 0) return picked;
    picked.reserve(k);
    std::vector<uint8_t> taken(n, 0);
    double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (total <= 0.0) {
        for (int i = 0; i < k; ++i) { picked.push_back(i); taken[i] = 1; }
        return picked;
    }
    double u0 = rng.next_double();
    int cursor = 0;
    double cum = weights.empty() ? 0.0 : weights[0];
    for (int j = 0; j < k; ++j) {
        double pos = (u0 + j) / k * total;
        while (cursor + 1 < n && cum < pos) {
            ++cursor;
            cum += weights[cursor];
        }
        int idx = cursor;
        while (taken[idx]) idx = (idx + 1) % n;
        taken[idx] = 1;
        picked.push_back(idx);
    }
    return picked;
}

Mask make_base(MaskPattern pattern, int h, int w, double f, uint64_t seed) {
    Mask m;
    m.height = h;
    m.width = w;
    m.keep.assign(static_cast<size_t>(h) * w, 0);
    m.pattern = pattern;
    m.seed = seed;
    m.target_fraction = f;
    return m;
}

void fill_gauss1d(Mask& m, double f, int acs_cols, Rng& rng) {
    const int w = m.width, h = m.height;
    const int budget_cols = rounded(f * w);
    if (acs_cols > budget_cols)
        throw BudgetError("gen_mask: ACS columns exceed the sampling budget");
    m.acs = AcsRegion{h, acs_cols};
    const int c0 = m.acs.col0(w);

    std::vector<int> candidates;
    std::vector<double> weights;
    const double sigma = kDensitySigmaScale * w;
    const double dc_col = w / 2;
    for (int c = 0; c < w; ++c) {
        if (c >= c0 && c < c0 + acs_cols) continue;
        double d = (c - dc_col) / sigma;
        candidates.push_back(c);
        weights.push_back(center_weight(d * d));
    }
    std::vector<uint8_t> col_on(w, 0);
    for (int c = c0; c < c0 + acs_cols; ++c) col_on[c] = 1;
    for (int idx : systematic_pick(weights, budget_cols - acs_cols, rng))
        col_on[candidates[idx]] = 1;

    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (col_on[c]) m.keep[static_cast<size_t>(r) * w + c] = 1;
}

void fill_gauss2d(Mask& m, double f, int acs_rows, int acs_cols, Rng& rng) {
    const int w = m.width, h = m.height;
    const long total = static_cast<long>(h) * w;
    const long budget = rounded(f * total);
    m.acs = AcsRegion{acs_rows, acs_cols};
    const int r0 = m.acs.row0(h), c0 = m.acs.col0(w);
    const long acs_count = static_cast<long>(acs_rows) * acs_cols;
    if (acs_count > budget)
        throw BudgetError("gen_mask: ACS block exceeds the sampling budget");

    for (int r = r0; r < r0 + acs_rows; ++r)
        for (int c = c0; c < c0 + acs_cols; ++c)
            m.keep[static_cast<size_t>(r) * w + c] = 1;

    std::vector<int> candidates;
    std::vector<double> weights;
    candidates.reserve(total - acs_count);
    weights.reserve(total - acs_count);
    const double sr = kDensitySigmaScale * h, sc = kDensitySigmaScale * w;
    for (int r = 0; r < h; ++r) {
        double dr = (r - h / 2) / sr;
        for (int c = 0; c < w; ++c) {
            if (m.acs.contains(r, c, h, w)) continue;
            double dc = (c - w / 2) / sc;
            candidates.push_back(r * w + c);
            weights.push_back(center_weight(dr * dr + dc * dc));
        }
    }
    for (int idx : systematic_pick(weights, static_cast<int>(budget - acs_count), rng))
        m.keep[candidates[idx]] = 1;
}

struct DartField {
    int h, w;
    double sr, sc;
    double r0;

    double density(int r, int c) const {
        double dr = (r - h / 2) / sr;
        double dc = (c - w / 2) / sc;
        return center_weight(dr * dr + dc * dc);
    }
    double radius(int r, int c) const {
        return r0 / std::sqrt(std::clamp(density(r, c), 0.01, 1.0));
    }
};

/// Dart throwing over a seeded permutation of the free cells; a dart lands if
/// it keeps at least the average of the two local radii from every earlier
/// dart. Bucketed by r0-sized cells to keep the neighbor scan local.
std::vector<int> throw_darts(const DartField& field, const std::vector<int>& order) {
    const int w = field.w;
    const double cell = std::max(field.r0, 1.0);
    const int bw = static_cast<int>(field.w / cell) + 1;
    const int bh = static_cast<int>(field.h / cell) + 1;
    std::vector<std::vector<int>> buckets(static_cast<size_t>(bw) * bh);
    std::vector<int> accepted;

    for (int idx : order) {
        int r = idx / w, c = idx % w;
        double rad = field.radius(r, c);
        int br = static_cast<int>(r / cell), bc = static_cast<int>(c / cell);
        // worst partner radius is 10*r0 (density clamp), so the scan is bounded
        int reach = static_cast<int>((rad + 10.0 * field.r0) * 0.5 / cell) + 1;
        bool ok = true;
        for (int by = std::max(0, br - reach); ok && by <= std::min(bh - 1, br + reach); ++by) {
            for (int bx = std::max(0, bc - reach); ok && bx <= std::min(bw - 1, bc + reach); ++bx) {
                for (int q : buckets[static_cast<size_t>(by) * bw + bx]) {
                    int qr = q / w, qc = q % w;
                    double need = 0.5 * (rad + field.radius(qr, qc));
                    double dy = qr - r, dx = qc - c;
                    if (dy * dy + dx * dx < need * need) { ok = false; break; }
                }
            }
        }
        if (ok) {
            accepted.push_back(idx);
            buckets[static_cast<size_t>(br) * bw + bc].push_back(idx);
        }
    }
    return accepted;
}

void fill_poisson2d(Mask& m, double f, int acs_rows, int acs_cols, Rng& rng) {
    const int w = m.width, h = m.height;
    const long total = static_cast<long>(h) * w;
    const long budget = rounded(f * total);
    m.acs = AcsRegion{acs_rows, acs_cols};
    const long acs_count = static_cast<long>(acs_rows) * acs_cols;
    if (acs_count > budget)
        throw BudgetError("gen_mask: ACS block exceeds the sampling budget");

    for (int r = m.acs.row0(h); r < m.acs.row0(h) + acs_rows; ++r)
        for (int c = m.acs.col0(w); c < m.acs.col0(w) + acs_cols; ++c)
            m.keep[static_cast<size_t>(r) * w + c] = 1;

    std::vector<int> free_cells;
    free_cells.reserve(total - acs_count);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (!m.acs.contains(r, c, h, w)) free_cells.push_back(r * w + c);

    // seeded permutation shared by all calibration rounds
    std::vector<int> order = free_cells;
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.next_below(i)]);

    const long darts_needed = budget - acs_count;
    DartField field{h, w, kDensitySigmaScale * h, kDensitySigmaScale * w, 1.0};
    field.r0 = 0.6 * std::sqrt(static_cast<double>(total) / std::max<long>(budget, 1));
    std::vector<int> darts;
    for (int iter = 0; iter < 8; ++iter) {
        darts = throw_darts(field, order);
        long n = static_cast<long>(darts.size());
        if (darts_needed <= 0 || std::llabs(n - darts_needed) <= darts_needed / 100) break;
        double ratio = static_cast<double>(n) / std::max<long>(darts_needed, 1);
        field.r0 *= std::clamp(std::sqrt(ratio), 0.25, 4.0);
    }

    auto dist2_center = [&](int idx) {
        double dr = idx / w - h / 2, dc = idx % w - w / 2;
        return dr * dr + dc * dc;
    };
    if (static_cast<long>(darts.size()) > darts_needed) {
        // trim the outermost darts first so the density bias survives
        std::sort(darts.begin(), darts.end(), [&](int a, int b) {
            double da = dist2_center(a), db = dist2_center(b);
            return da != db ? da < db : a < b;
        });
        darts.resize(darts_needed);
    } else if (static_cast<long>(darts.size()) < darts_needed) {
        std::vector<uint8_t> used(static_cast<size_t>(total), 0);
        for (int d : darts) used[d] = 1;
        std::vector<int> rest;
        for (int idx : order)
            if (!used[idx]) rest.push_back(idx);
        std::sort(rest.begin(), rest.end(), [&](int a, int b) {
            double da = dist2_center(a), db = dist2_center(b);
            return da != db ? da < db : a < b;
        });
        long missing = darts_needed - static_cast<long>(darts.size());
        darts.insert(darts.end(), rest.begin(), rest.begin() + std::min<long>(missing, rest.size()));
    }
    for (int idx : darts) m.keep[idx] = 1;
}

} // namespace

Mask gen_mask(MaskPattern pattern, int height, int width, double target_fraction,
              double acs_fraction, uint64_t seed) {
    if (height < 8 || width < 8)
        throw ConfigError("gen_mask: grid dims must be >= 8");
    if (!(target_fraction > 0.0 && target_fraction <= 1.0))
        throw ConfigError("gen_mask: target_fraction must be in (0, 1]");
    if (acs_fraction < 0.0 || acs_fraction > target_fraction)
        throw BudgetError("gen_mask: acs_fraction must lie in [0, target_fraction]");

    Mask m = make_base(pattern, height, width, target_fraction, seed);
    Rng rng(Rng::substream(seed, static_cast<uint64_t>(pattern)));
    switch (pattern) {
        case MaskPattern::Gauss1D:
            fill_gauss1d(m, target_fraction, rounded(acs_fraction * width), rng);
            break;
        case MaskPattern::Gauss2D:
            fill_gauss2d(m, target_fraction, rounded(acs_fraction * height),
                         rounded(acs_fraction * width), rng);
            break;
        case MaskPattern::Poisson2D:
            fill_poisson2d(m, target_fraction, rounded(acs_fraction * height),
                           rounded(acs_fraction * width), rng);
            break;
    }
    return m;
}

ComplexGrid undersample(const ComplexGrid& y, const Mask& m, const AcquisitionNoise& noise) {
    if (y.height != m.height || y.width != m.width)
        throw ShapeError("undersample: grid and mask shapes differ");
    ComplexGrid out(y.height, y.width, y.domain);
    Rng rng(noise.seed);
    for (size_t i = 0; i < y.data.size(); ++i) {
        cplx n = rng.next_cnormal(noise.sigma);
        out.data[i] = m.keep[i] ? y.data[i] + n : cplx(0.0, 0.0);
    }
    return out;
}

double retention_fraction(const Mask& m) {
    return static_cast<double>(m.count()) / (static_cast<double>(m.height) * m.width);
}

} // namespace kslab
