#include "kslab/grappa.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "kslab/fft.hpp"
#include "kslab/rng.hpp"

namespace kslab {

namespace {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;

/// Calibration treats local column 0 as an acquired-phase column: for each
/// missing-line offset the targets are the columns at that offset and the
/// sources sit on the acquired comb. Equations come from every window whose
/// taps and source columns stay inside the block.
struct CalibSystem {
    MatrixXcd features;              // equations x features
    std::vector<VectorXcd> targets;  // one rhs per coil
};

CalibSystem collect_equations(const CoilStack& acs, const KernelGeometry& geom, int offset) {
    const int h = acs.height(), w = acs.width();
    const int nfeat = geom.features();

    int dmin = 0, dmax = 0;
    for (int l = 0; l < geom.source_lines; ++l) {
        int d = geom.source_col_delta(l, offset);
        dmin = std::min(dmin, d);
        dmax = std::max(dmax, d);
    }
    const int half_taps = geom.taps / 2;

    std::vector<int> target_cols;
    for (int c = offset; c < w; c += geom.accel)
        if (c + dmin >= 0 && c + dmax < w) target_cols.push_back(c);
    const int nrows = h - geom.taps + 1;
    const long neq = static_cast<long>(nrows) * target_cols.size();
    if (neq < 2L * nfeat)
        throw AcsTooSmallError("estimate_kernel: ACS furnishes too few fit equations");

    CalibSystem sys;
    sys.features.resize(neq, nfeat);
    sys.targets.assign(geom.coils, VectorXcd(neq));
    long eq = 0;
    for (int r = half_taps; r < h - half_taps; ++r) {
        for (int c : target_cols) {
            int f = 0;
            for (int cs = 0; cs < geom.coils; ++cs)
                for (int l = 0; l < geom.source_lines; ++l) {
                    int col = c + geom.source_col_delta(l, offset);
                    for (int t = 0; t < geom.taps; ++t)
                        sys.features(eq, f++) = acs.coils[cs].at(r + geom.tap_row_delta(t), col);
                }
            for (int ct = 0; ct < geom.coils; ++ct)
                sys.targets[ct](eq) = acs.coils[ct].at(r, c);
            ++eq;
        }
    }
    return sys;
}

} // namespace

GrappaKernel estimate_kernel(const CoilStack& acs, const KernelGeometry& geom, double ridge) {
    geom.validate();
    acs.validate();
    if (acs.count() != geom.coils)
        throw GeometryError("estimate_kernel: coil count does not match geometry");
    if (ridge < 0.0) throw ConfigError("estimate_kernel: ridge must be >= 0");

    GrappaKernel kernel;
    kernel.geometry = geom;
    kernel.weights.assign(geom.accel - 1,
                          std::vector<std::vector<cplx>>(geom.coils));

    double res_sq = 0.0, ref_sq = 0.0;
    for (int offset = 1; offset < geom.accel; ++offset) {
        CalibSystem sys = collect_equations(acs, geom, offset);
        MatrixXcd normal = sys.features.adjoint() * sys.features;
        double lam = ridge * normal.real().diagonal().mean();
        for (int i = 0; i < normal.rows(); ++i) normal(i, i) += lam;
        if (lam <= 0.0 && !Eigen::FullPivLU<MatrixXcd>(normal).isInvertible())
            throw SingularFitError("estimate_kernel: singular normal equations");
        Eigen::PartialPivLU<MatrixXcd> lu(normal);

        for (int ct = 0; ct < geom.coils; ++ct) {
            VectorXcd rhs = sys.features.adjoint() * sys.targets[ct];
            VectorXcd w = lu.solve(rhs);
            if (!w.allFinite())
                throw SingularFitError("estimate_kernel: singular normal equations");
            double back_err = (normal * w - rhs).norm();
            if (back_err > 1e-6 * (rhs.norm() + 1.0))
                throw SingularFitError("estimate_kernel: normal equations not solvable");
            res_sq += (sys.features * w - sys.targets[ct]).squaredNorm();
            ref_sq += sys.targets[ct].squaredNorm();
            kernel.weights[offset - 1][ct].assign(w.data(), w.data() + w.size());
        }
    }
    kernel.fit_residual = ref_sq > 0.0 ? std::sqrt(res_sq / ref_sq) : 0.0;
    return kernel;
}

namespace {

struct UniformLayout {
    int phase = 0;        // residue of acquired columns mod accel
    bool any_missing = false;
};

bool column_structured(const Mask& m) {
    for (int c = 0; c < m.width; ++c) {
        bool first = m.sampled(0, c);
        for (int r = 1; r < m.height; ++r)
            if (m.sampled(r, c) != first) return false;
    }
    return true;
}

bool find_uniform_layout(const Mask& m, int accel, UniformLayout& out) {
    if (!column_structured(m)) return false;
    std::vector<uint8_t> col_on(m.width, 0);
    for (int c = 0; c < m.width; ++c) col_on[c] = m.column_sampled(c) ? 1 : 0;
    out.any_missing = std::find(col_on.begin(), col_on.end(), uint8_t(0)) != col_on.end();
    if (!out.any_missing) return true; // nothing to fill

    const int c0 = m.acs.col0(m.width), c1 = c0 + m.acs.cols;
    int phase = -1;
    for (int c = 0; c < m.width; ++c) {
        if (!col_on[c]) continue;
        if (c >= c0 && c < c1 && m.acs.rows == m.height) continue;
        int p = c % accel;
        if (phase < 0) phase = p;
        else if (p != phase) return false;
    }
    if (phase < 0) return false; // nothing acquired outside the ACS
    // the comb must be complete
    for (int c = phase; c < m.width; c += accel)
        if (!col_on[c]) return false;
    out.phase = phase;
    return true;
}

CoilStack extract_aligned_acs(const CoilStack& y, const Mask& m, int accel, int phase) {
    const int h = y.height(), w = y.width();
    int r0 = m.acs.row0(h), rows = m.acs.rows;
    int c0 = m.acs.col0(w), cols = m.acs.cols;
    int shift = ((phase - c0) % accel + accel) % accel;
    c0 += shift;
    cols -= shift;
    if (rows <= 0 || cols <= 0)
        throw AcsTooSmallError("grappa: mask has no usable ACS block");
    CoilStack out;
    for (const auto& coil : y.coils) {
        ComplexGrid block(rows, cols, Domain::KSpace);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                block.at(r, c) = coil.at(r0 + r, c0 + c);
        out.coils.push_back(std::move(block));
    }
    return out;
}

} // namespace

bool admits_uniform_grappa(const Mask& m, const KernelGeometry& geom) {
    UniformLayout layout;
    if (!find_uniform_layout(m, geom.accel, layout)) return false;
    if (!layout.any_missing) return true;
    if (m.acs.rows != m.height || m.acs.cols <= 0) return false;
    // enough aligned calibration columns for the fit
    int dspan = (geom.source_lines - 1) * geom.accel;
    int usable_cols = m.acs.cols - ((layout.phase - m.acs.col0(m.width)) % geom.accel + geom.accel) % geom.accel;
    int targets = std::max(0, (usable_cols - dspan - 1) / geom.accel);
    long neq = static_cast<long>(std::max(0, m.height - geom.taps + 1)) * targets;
    return neq >= 2L * geom.features();
}

CoilStack apply_kernel(const CoilStack& y_u, const Mask& m, const GrappaKernel& k) {
    const KernelGeometry& geom = k.geometry;
    geom.validate();
    y_u.validate();
    if (y_u.domain() != Domain::KSpace)
        throw DomainError("apply_kernel: expected k-space input");
    if (y_u.count() != geom.coils)
        throw GeometryError("apply_kernel: coil count does not match kernel");
    if (y_u.height() != m.height || y_u.width() != m.width)
        throw GeometryError("apply_kernel: mask and data shapes differ");

    UniformLayout layout;
    if (!find_uniform_layout(m, geom.accel, layout))
        throw GeometryError("apply_kernel: mask is not uniform in phase encode");
    CoilStack out = y_u;
    if (!layout.any_missing) return out;

    const int h = m.height, w = m.width;
    std::vector<uint8_t> col_on(w, 0);
    for (int c = 0; c < w; ++c) col_on[c] = m.column_sampled(c) ? 1 : 0;

    for (int c = 0; c < w; ++c) {
        if (col_on[c]) continue;
        int offset = ((c - layout.phase) % geom.accel + geom.accel) % geom.accel;
        if (offset == 0)
            throw GeometryError("apply_kernel: acquired-phase column is missing");
        for (int ct = 0; ct < geom.coils; ++ct) {
            const std::vector<cplx>& wrow = k.row(offset, ct);
            for (int r = 0; r < h; ++r) {
                cplx acc(0.0, 0.0);
                int f = 0;
                for (int cs = 0; cs < geom.coils; ++cs) {
                    const ComplexGrid& src = y_u.coils[cs];
                    for (int l = 0; l < geom.source_lines; ++l) {
                        int col = c + geom.source_col_delta(l, offset);
                        if (col < 0 || col >= w) { f += geom.taps; continue; }
                        for (int t = 0; t < geom.taps; ++t) {
                            int row = r + geom.tap_row_delta(t);
                            if (row >= 0 && row < h)
                                acc += wrow[f] * src.at(row, col);
                            ++f;
                        }
                    }
                }
                out.coils[ct].at(r, c) = acc;
            }
        }
    }
    return out;
}

ComplexGrid grappa_reconstruct(const CoilStack& y_u, const Mask& m,
                               const KernelGeometry& geom, double ridge) {
    UniformLayout layout;
    if (!find_uniform_layout(m, geom.accel, layout))
        throw GeometryError("grappa_reconstruct: mask is not uniform in phase encode");

    CoilStack filled = y_u;
    if (layout.any_missing) {
        CoilStack acs = extract_aligned_acs(y_u, m, geom.accel, layout.phase);
        GrappaKernel kernel = estimate_kernel(acs, geom, ridge);
        filled = apply_kernel(y_u, m, kernel);
    }

    std::vector<ComplexGrid> images;
    images.reserve(filled.count());
    for (const auto& coil : filled.coils) images.push_back(ifft2c(coil));
    if (images.size() == 1) return images[0];

    ComplexGrid combined(images[0].height, images[0].width, Domain::Image);
    for (size_t i = 0; i < combined.data.size(); ++i) {
        double s = 0.0;
        for (const auto& img : images) s += std::norm(img.data[i]);
        combined.data[i] = cplx(std::sqrt(s), 0.0);
    }
    return combined;
}

LinearDataOracle make_linear_data(int height, int width, const KernelGeometry& geom,
                                  uint64_t seed) {
    geom.validate();
    LinearDataOracle out;
    out.truth.geometry = geom;
    out.truth.fit_residual = 0.0;
    out.truth.weights.assign(geom.accel - 1,
                             std::vector<std::vector<cplx>>(geom.coils));

    Rng rng(seed);
    const double wscale = 1.0 / std::sqrt(static_cast<double>(geom.features()));
    for (int offset = 1; offset < geom.accel; ++offset)
        for (int ct = 0; ct < geom.coils; ++ct) {
            auto& row = out.truth.weights[offset - 1][ct];
            row.resize(geom.features());
            for (auto& v : row) v = rng.next_cnormal(wscale);
        }

    for (int ci = 0; ci < geom.coils; ++ci)
        out.full.coils.emplace_back(height, width, Domain::KSpace);
    // acquired comb at phase 0: independent complex Gaussians
    for (int ci = 0; ci < geom.coils; ++ci)
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; c += geom.accel)
                out.full.coils[ci].at(r, c) = rng.next_cnormal(1.0);
    // every other column is exactly the kernel combination of its sources
    for (int c = 0; c < width; ++c) {
        int offset = c % geom.accel;
        if (offset == 0) continue;
        for (int ct = 0; ct < geom.coils; ++ct) {
            const auto& wrow = out.truth.weights[offset - 1][ct];
            for (int r = 0; r < height; ++r) {
                cplx acc(0.0, 0.0);
                int f = 0;
                for (int cs = 0; cs < geom.coils; ++cs)
                    for (int l = 0; l < geom.source_lines; ++l) {
                        int col = c + geom.source_col_delta(l, offset);
                        if (col < 0 || col >= width) { f += geom.taps; continue; }
                        for (int t = 0; t < geom.taps; ++t) {
                            int row = r + geom.tap_row_delta(t);
                            if (row >= 0 && row < height)
                                acc += wrow[f] * out.full.coils[cs].at(row, col);
                            ++f;
                        }
                    }
                out.full.coils[ct].at(r, c) = acc;
            }
        }
    }
    return out;
}

int min_acs_cols(const KernelGeometry& geom, int height) {
    const long rows = std::max(0, height - geom.taps + 1);
    if (rows == 0) return 1 << 20; // no height for any fit
    for (int cols = 1; cols <= 1 << 16; ++cols) {
        // comb alignment can shave up to accel-1 leading columns off the block
        int usable = cols - (geom.accel - 1);
        bool ok = usable > 0;
        for (int offset = 1; offset < geom.accel && ok; ++offset) {
            int dmin = 0, dmax = 0;
            for (int l = 0; l < geom.source_lines; ++l) {
                int d = geom.source_col_delta(l, offset);
                dmin = std::min(dmin, d);
                dmax = std::max(dmax, d);
            }
            long targets = 0;
            for (int c = offset; c < usable; c += geom.accel)
                if (c + dmin >= 0 && c + dmax < usable) ++targets;
            if (targets * rows < 2L * geom.features()) ok = false;
        }
        if (ok) return cols;
    }
    return 1 << 20;
}

Mask uniform_column_mask(int height, int width, int accel, int acs_cols) {
    if (accel < 2) throw ConfigError("uniform_column_mask: accel must be >= 2");
    Mask m;
    m.height = height;
    m.width = width;
    m.keep.assign(static_cast<size_t>(height) * width, 0);
    m.pattern = MaskPattern::Gauss1D;
    m.acs = AcsRegion{height, acs_cols};
    int phase = (width / 2) % accel; // keep the DC column on the comb
    const int c0 = m.acs.col0(width);
    for (int c = 0; c < width; ++c) {
        bool on = (c % accel == phase) || (c >= c0 && c < c0 + acs_cols);
        if (on)
            for (int r = 0; r < height; ++r)
                m.keep[static_cast<size_t>(r) * width + c] = 1;
    }
    m.target_fraction = retention_fraction(m);
    return m;
}

} // namespace kslab
