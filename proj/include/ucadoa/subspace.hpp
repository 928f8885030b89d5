// SPDX-License-Identifier: Apache-2.0
//
// ucadoa - wideband 2D direction-of-arrival estimation for uniform circular arrays
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software distributed
// under the License is distributed on an "AS IS" BASIS, WITHOUT WARRANTIES OR
// CONDITIONS OF ANY KIND, either express or implied. See the License for the
// specific language governing permissions and limitations under the License.

#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "array.hpp"
#include "common.hpp"

namespace ucadoa {

// R = scale * Y * Y^H, symmetrized so downstream eigensolvers never see
// rounding skew.
inline CMat sample_covariance(const CMat& snapshots, double scale) {
    CMat R = scale * (snapshots * snapshots.adjoint());
    return 0.5 * (R + R.adjoint().eval());
}

struct EigResult {
    Vec values;   // descending
    CMat vectors; // columns match values
};

// Eigendecomposition of a Hermitian matrix, eigenvalues descending. Inputs
// further than 1e-10 (Frobenius, relative) from Hermitian are rejected.
inline EigResult hermitian_eig(const CMat& R) {
    if (R.rows() != R.cols() || R.rows() < 1) throw std::invalid_argument("hermitian_eig: need a square matrix");
    double scale = R.norm();
    if ((R - R.adjoint().eval()).norm() > 1e-10 * std::max(1.0, scale))
        throw degenerate_covariance_error("hermitian_eig: matrix is not Hermitian");
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (R + R.adjoint().eval()));
    if (es.info() != Eigen::Success) throw degenerate_covariance_error("hermitian_eig: decomposition failed");
    const Eigen::Index M = R.rows();
    EigResult out;
    out.values.resize(M);
    out.vectors.resize(M, M);
    for (Eigen::Index i = 0; i < M; ++i) {
        out.values[i] = es.eigenvalues()[M - 1 - i];
        out.vectors.col(i) = es.eigenvectors().col(M - 1 - i);
    }
    return out;
}

// Picks the source count as the k in [1, M-1] maximizing the eigenvalue gap
// ratio lambda_k / lambda_{k+1}. Denominators are floored at 1e-12 times the
// largest eigenvalue so a numerically zero tail cannot produce inf/NaN; ties
// resolve to the smaller k.
inline int estimate_source_count(const Vec& descending_eigenvalues) {
    const int M = static_cast<int>(descending_eigenvalues.size());
    if (M < 2) throw std::invalid_argument("estimate_source_count: need at least two eigenvalues");
    double top = descending_eigenvalues[0];
    if (!(top > 0.0)) throw degenerate_covariance_error("estimate_source_count: no positive eigenvalue");
    const double floor_val = 1e-12 * top;
    int best_k = 1;
    double best_ratio = -1.0;
    for (int k = 1; k <= M - 1; ++k) {
        double num = descending_eigenvalues[k - 1];
        double den = std::max(descending_eigenvalues[k], floor_val);
        double ratio = num / den;
        if (ratio > best_ratio) {
            best_ratio = ratio;
            best_k = k;
        }
    }
    return best_k;
}

// Columns of the eigenvector matrix past the first n_sources: the estimated
// noise subspace.
inline CMat noise_subspace(const EigResult& eig, int n_sources) {
    const Eigen::Index M = eig.vectors.rows();
    if (n_sources < 1 || n_sources >= M) throw std::invalid_argument("noise_subspace: source count out of range");
    return eig.vectors.rightCols(M - n_sources);
}

// Rectangular patch of directions. Elevation bounds are clipped to [0, 90];
// the azimuth side starts at phi_lo_deg (wrapped) and extends phi_span_deg
// counterclockwise, a span of 360 or more meaning the full circle. A region
// may carry the estimate it was grown around; sampling then includes that
// center's row and column so the estimate itself stays in every search grid.
struct AngularRegion {
    double theta_lo_deg = 0.0, theta_hi_deg = 90.0;
    double phi_lo_deg = 0.0, phi_span_deg = 360.0;
    // Sample the global 0-anchored lattice restricted to the interval instead
    // of re-anchoring at the lower bound. Region values are then bitwise equal
    // to the full-range scan at coinciding points, so a search shrunk to the
    // region agrees exactly with a full-range search whose peak lies inside.
    bool lattice_aligned = false;
    bool has_center = false;
    DoA center;

    static AngularRegion full_range() { return AngularRegion{}; }

    static AngularRegion around(const DoA& center, double radius_theta_deg, double radius_phi_deg) {
        if (radius_theta_deg < 0.0 || radius_phi_deg < 0.0)
            throw std::invalid_argument("AngularRegion: radii must be nonnegative");
        AngularRegion r;
        r.theta_lo_deg = std::max(0.0, center.elevation_deg - radius_theta_deg);
        r.theta_hi_deg = std::min(90.0, center.elevation_deg + radius_theta_deg);
        if (radius_phi_deg >= 180.0) {
            r.phi_lo_deg = 0.0;
            r.phi_span_deg = 360.0;
        } else {
            r.phi_lo_deg = wrap_360(center.azimuth_deg - radius_phi_deg);
            r.phi_span_deg = 2.0 * radius_phi_deg;
        }
        r.has_center = true;
        r.center = center;
        return r;
    }

    bool full_circle() const { return phi_span_deg >= 360.0; }
    bool is_full_range() const {
        return !has_center && theta_lo_deg == 0.0 && theta_hi_deg == 90.0 && full_circle();
    }
};

namespace detail {

// Values lo + k*step for k = 0.. while staying within extent (inclusive for
// bounded axes), deduplicated against an optional inserted offset. The 1e-9
// slack absorbs accumulated decimal-step rounding.
inline std::vector<double> bounded_axis(double lo, double extent, double step, bool insert, double insert_value) {
    if (!(step > 0.0)) throw std::invalid_argument("axis sampling: step must be positive");
    int n = static_cast<int>(std::floor((extent + 1e-9) / step)) + 1;
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(n) + 1);
    for (int k = 0; k < n; ++k) v.push_back(lo + k * step);
    if (insert) {
        double x = std::min(std::max(insert_value, lo), lo + extent);
        auto it = std::lower_bound(v.begin(), v.end(), x);
        bool dup = (it != v.end() && std::fabs(*it - x) < 1e-9) ||
                   (it != v.begin() && std::fabs(*(it - 1) - x) < 1e-9);
        if (!dup) v.insert(it, x);
    }
    return v;
}

}  // namespace detail

// Sampled axes of one region. phi_deg keeps lattice order (counterclockwise
// from the region's start), values wrapped into [0, 360). For a full circle
// the lattice is anchored at 0 regardless of where the region started, which
// makes grids from different full-circle regions coincide. The decomposition
// into a uniform lattice plus inserted extras is kept alongside because the
// focusing accumulator exploits full-circle lattices analytically.
struct RegionAxes {
    std::vector<double> theta_deg;
    std::vector<double> phi_deg;
    bool phi_full_circle = false;
    double phi_lattice_start_deg = 0.0;
    double phi_lattice_step_deg = 0.0;
    int phi_lattice_count = 0;
    std::vector<double> phi_extra_deg;  // off-lattice inserted values (region center)
};

namespace detail {

// Global-lattice indices k with lo <= k*step <= hi (1e-9 slack both ends).
inline std::pair<long, long> lattice_window(double lo, double hi, double step) {
    const long k_lo = static_cast<long>(std::ceil(lo / step - 1e-9));
    const long k_hi = static_cast<long>(std::floor(hi / step + 1e-9));
    return {k_lo, k_hi};
}

}  // namespace detail

inline RegionAxes region_axes(const AngularRegion& region, double step_theta_deg, double step_phi_deg) {
    if (region.theta_lo_deg < 0.0 || region.theta_hi_deg > 90.0 || region.theta_lo_deg > region.theta_hi_deg)
        throw std::invalid_argument("region_axes: malformed elevation interval");
    if (region.phi_span_deg < 0.0) throw std::invalid_argument("region_axes: negative azimuth span");
    if (!(step_theta_deg > 0.0) || !(step_phi_deg > 0.0))
        throw std::invalid_argument("region_axes: step must be positive");

    RegionAxes ax;
    if (region.lattice_aligned) {
        auto [k_lo, k_hi] = detail::lattice_window(region.theta_lo_deg, region.theta_hi_deg, step_theta_deg);
        k_lo = std::max(k_lo, 0L);
        k_hi = std::min(k_hi, static_cast<long>(std::floor(90.0 / step_theta_deg + 1e-9)));
        if (k_lo > k_hi) {
            // No lattice row inside: degrade to the center (or bound) alone.
            ax.theta_deg.push_back(region.has_center ? region.center.elevation_deg
                                                     : region.theta_lo_deg);
        } else {
            for (long k = k_lo; k <= k_hi; ++k)
                ax.theta_deg.push_back(static_cast<double>(k) * step_theta_deg);
        }
    } else {
        ax.theta_deg = detail::bounded_axis(region.theta_lo_deg, region.theta_hi_deg - region.theta_lo_deg,
                                            step_theta_deg, region.has_center, region.center.elevation_deg);
    }

    ax.phi_full_circle = region.full_circle();
    if (region.lattice_aligned && !ax.phi_full_circle) {
        const long wheel = static_cast<long>(std::floor((360.0 - 1e-9) / step_phi_deg)) + 1;
        const double lo = wrap_360(region.phi_lo_deg);
        auto [m_lo, m_hi] = detail::lattice_window(lo, lo + region.phi_span_deg, step_phi_deg);
        if (m_lo > m_hi) {
            ax.phi_deg.push_back(region.has_center ? wrap_360(region.center.azimuth_deg) : lo);
        } else {
            ax.phi_deg.reserve(static_cast<std::size_t>(m_hi - m_lo + 1));
            for (long m = m_lo; m <= m_hi; ++m)
                ax.phi_deg.push_back(static_cast<double>(m % wheel) * step_phi_deg);
        }
        ax.phi_lattice_start_deg = ax.phi_deg.front();
        ax.phi_lattice_step_deg = step_phi_deg;
        ax.phi_lattice_count = static_cast<int>(ax.phi_deg.size());
        return ax;
    }
    if (ax.phi_full_circle) {
        int n = static_cast<int>(std::floor((360.0 - 1e-9) / step_phi_deg)) + 1;
        ax.phi_lattice_start_deg = 0.0;
        ax.phi_lattice_step_deg = step_phi_deg;
        ax.phi_lattice_count = n;
        ax.phi_deg.reserve(static_cast<std::size_t>(n) + 1);
        for (int k = 0; k < n; ++k) ax.phi_deg.push_back(k * step_phi_deg);
        if (region.has_center && !region.lattice_aligned) {
            double x = wrap_360(region.center.azimuth_deg);
            auto it = std::lower_bound(ax.phi_deg.begin(), ax.phi_deg.end(), x);
            bool dup = (it != ax.phi_deg.end() && std::fabs(*it - x) < 1e-9) ||
                       (it != ax.phi_deg.begin() && std::fabs(*(it - 1) - x) < 1e-9) ||
                       (x < 1e-9) || (x > 360.0 - 1e-9);
            if (!dup) {
                ax.phi_deg.insert(it, x);
                ax.phi_extra_deg.push_back(x);
            }
        }
    } else {
        // Work in offsets from the start so wrapping cannot reorder values.
        double center_off = 0.0;
        if (region.has_center) {
            center_off = wrap_360(region.center.azimuth_deg - region.phi_lo_deg);
            if (center_off > region.phi_span_deg) center_off = region.phi_span_deg;
        }
        std::vector<double> offs = detail::bounded_axis(0.0, region.phi_span_deg, step_phi_deg,
                                                        region.has_center, center_off);
        ax.phi_lattice_start_deg = wrap_360(region.phi_lo_deg);
        ax.phi_lattice_step_deg = step_phi_deg;
        ax.phi_lattice_count = static_cast<int>(offs.size());
        ax.phi_deg.reserve(offs.size());
        for (double o : offs) ax.phi_deg.push_back(wrap_360(region.phi_lo_deg + o));
    }
    return ax;
}

struct GridSpec {
    std::vector<AngularRegion> regions;
    double step_theta_deg = 0.2;
    double step_phi_deg = 0.2;
};

struct RegionGrid {
    RegionAxes axes;
    Mat values;  // rows follow axes.theta_deg, columns axes.phi_deg
};

struct SpectrumGrid {
    std::vector<RegionGrid> grids;
};

namespace detail {

// Spatial-spectrum denominator terms that do not depend on the direction.
struct SpectrumKernel {
    int M;
    double kappa;
    std::vector<double> cos_beta, sin_beta;
    std::vector<cdouble> g_upper;  // G(m, m') for m < m', row-major
    double g_diag;                 // sum of the real diagonal of G

    SpectrumKernel(const ArrayGeometry& geom, double f_hz, const CMat& G)
        : M(geom.element_count), kappa(wavenumber_radius(geom, f_hz)) {
        cos_beta.resize(static_cast<std::size_t>(M));
        sin_beta.resize(static_cast<std::size_t>(M));
        for (int m = 0; m < M; ++m) {
            cos_beta[static_cast<std::size_t>(m)] = std::cos(geom.element_angle(m));
            sin_beta[static_cast<std::size_t>(m)] = std::sin(geom.element_angle(m));
        }
        g_diag = 0.0;
        for (int m = 0; m < M; ++m) g_diag += G(m, m).real();
        for (int m = 0; m < M; ++m)
            for (int mp = m + 1; mp < M; ++mp) g_upper.push_back(G(m, mp));
    }

    // 1 / (a^H G a); a tiny or negative denominator (orthogonal beyond noise
    // precision) clamps to 1e30 rather than overflowing.
    double value(const cdouble* a) const {
        double acc = g_diag;
        const cdouble* g = g_upper.data();
        for (int m = 0; m < M; ++m)
            for (int mp = m + 1; mp < M; ++mp) {
                cdouble t = std::conj(a[m]) * a[mp] * (*g++);
                acc += 2.0 * t.real();
            }
        return acc < 1e-30 ? 1e30 : 1.0 / acc;
    }

    void steer(double theta_deg, double phi_deg, cdouble* a) const {
        double st = std::sin(deg2rad(theta_deg));
        double cp = std::cos(deg2rad(phi_deg)), sp = std::sin(deg2rad(phi_deg));
        for (int m = 0; m < M; ++m) {
            double u = st * (cos_beta[static_cast<std::size_t>(m)] * cp +
                             sin_beta[static_cast<std::size_t>(m)] * sp);
            a[m] = std::polar(1.0, kappa * u);
        }
    }
};

// Steering phasors for a full-range lattice, built once per (geometry,
// frequency, step) and shared: benchmark searches sweep the same grid every
// iteration of every trial, and the trig to rebuild it dominates everything
// else. Grids past the size cap are evaluated directly instead.
struct FullGridTable {
    RegionAxes axes;
    std::vector<cdouble> phasors;  // point-major, M entries per point
};

inline std::shared_ptr<const FullGridTable> full_grid_table(const ArrayGeometry& geom, double f_hz,
                                                            double step_theta_deg, double step_phi_deg) {
    struct Key {
        int M;
        std::uint64_t r, c, f, vt, vp;
        bool operator<(const Key& o) const {
            return std::tie(M, r, c, f, vt, vp) < std::tie(o.M, o.r, o.c, o.f, o.vt, o.vp);
        }
    };
    static std::mutex mu;
    static std::map<Key, std::shared_ptr<const FullGridTable>> cache;

    Key key{geom.element_count,         std::bit_cast<std::uint64_t>(geom.radius_m),
            std::bit_cast<std::uint64_t>(geom.light_speed), std::bit_cast<std::uint64_t>(f_hz),
            std::bit_cast<std::uint64_t>(step_theta_deg),   std::bit_cast<std::uint64_t>(step_phi_deg)};

    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    RegionAxes ax = region_axes(AngularRegion::full_range(), step_theta_deg, step_phi_deg);
    std::size_t points = ax.theta_deg.size() * ax.phi_deg.size();
    if (points > 2'000'000) return nullptr;  // keep memory bounded; caller evaluates directly

    auto table = std::make_shared<FullGridTable>();
    table->axes = ax;
    table->phasors.resize(points * static_cast<std::size_t>(geom.element_count));
    CMat dummy = CMat::Zero(geom.element_count, geom.element_count);
    SpectrumKernel kern(geom, f_hz, dummy);
    std::size_t at = 0;
    for (double th : ax.theta_deg)
        for (double ph : ax.phi_deg) {
            kern.steer(th, ph, &table->phasors[at]);
            at += static_cast<std::size_t>(geom.element_count);
        }
    cache[key] = table;
    return table;
}

}  // namespace detail

// Subspace spatial spectrum over the requested regions at one frequency.
// noise_subspace must have orthonormal columns (checked); the value at each
// grid point is 1 / ||En^H a||^2 up to the clamp described in the kernel.
inline SpectrumGrid music_spectrum(const ArrayGeometry& geom, double f_hz, const CMat& noise_subspace,
                                   const GridSpec& spec) {
    const int M = geom.element_count;
    if (noise_subspace.rows() != M || noise_subspace.cols() < 1 || noise_subspace.cols() > M)
        throw std::invalid_argument("music_spectrum: noise subspace shape mismatch");
    if ((noise_subspace.adjoint() * noise_subspace - CMat::Identity(noise_subspace.cols(), noise_subspace.cols()))
            .cwiseAbs()
            .maxCoeff() > 1e-8)
        throw std::invalid_argument("music_spectrum: noise subspace columns are not orthonormal");
    if (spec.regions.empty()) throw std::invalid_argument("music_spectrum: no regions");
    if (M > 64) throw std::invalid_argument("music_spectrum: element count above supported limit");

    CMat G = noise_subspace * noise_subspace.adjoint();
    detail::SpectrumKernel kern(geom, f_hz, G);

    SpectrumGrid out;
    out.grids.reserve(spec.regions.size());
    for (const AngularRegion& region : spec.regions) {
        RegionGrid grid;
        std::shared_ptr<const detail::FullGridTable> table;
        if (region.is_full_range())
            table = detail::full_grid_table(geom, f_hz, spec.step_theta_deg, spec.step_phi_deg);
        if (table) {
            grid.axes = table->axes;
            const Eigen::Index nt = static_cast<Eigen::Index>(grid.axes.theta_deg.size());
            const Eigen::Index np = static_cast<Eigen::Index>(grid.axes.phi_deg.size());
            grid.values.resize(nt, np);
            const cdouble* p = table->phasors.data();
            for (Eigen::Index r = 0; r < nt; ++r)
                for (Eigen::Index c = 0; c < np; ++c) {
                    grid.values(r, c) = kern.value(p);
                    p += M;
                }
        } else {
            grid.axes = region_axes(region, spec.step_theta_deg, spec.step_phi_deg);
            const Eigen::Index nt = static_cast<Eigen::Index>(grid.axes.theta_deg.size());
            const Eigen::Index np = static_cast<Eigen::Index>(grid.axes.phi_deg.size());
            grid.values.resize(nt, np);
            cdouble a[64];
            for (Eigen::Index r = 0; r < nt; ++r)
                for (Eigen::Index c = 0; c < np; ++c) {
                    kern.steer(grid.axes.theta_deg[static_cast<std::size_t>(r)],
                               grid.axes.phi_deg[static_cast<std::size_t>(c)], a);
                    grid.values(r, c) = kern.value(a);
                }
        }
        out.grids.push_back(std::move(grid));
    }
    return out;
}

// Local maxima of the spectrum, best first, up to `count` directions.
//
// A cell is a peak candidate when no 8-neighbor exceeds it (azimuth wraps on
// full-circle grids). Flat plateaus keep only their first cell in row-major
// (grid, row, column) order. If fewer peaks than requested exist, the
// remaining slots are filled by the best non-candidate cells, so a plateau
// still contributes exactly one direction. Exact duplicates across regions
// (within 1e-9 degrees on both axes) collapse into their best-ranked copy.
inline std::vector<DoA> find_peaks(const SpectrumGrid& spectrum, int count) {
    if (count < 1) throw std::invalid_argument("find_peaks: count must be positive");

    struct Cell {
        double value;
        int grid, row, col;
        bool candidate = false, suppressed = false;
    };
    std::vector<Cell> cells;
    for (int gi = 0; gi < static_cast<int>(spectrum.grids.size()); ++gi) {
        const RegionGrid& g = spectrum.grids[static_cast<std::size_t>(gi)];
        const int nt = static_cast<int>(g.axes.theta_deg.size());
        const int np = static_cast<int>(g.axes.phi_deg.size());
        auto neighbor_cols = [&](int c, int* out) {
            int n = 0;
            if (c > 0) out[n++] = c - 1;
            else if (g.axes.phi_full_circle && np > 1) out[n++] = np - 1;
            out[n++] = c;
            if (c + 1 < np) out[n++] = c + 1;
            else if (g.axes.phi_full_circle && np > 1) out[n++] = 0;
            return n;
        };
        for (int r = 0; r < nt; ++r)
            for (int c = 0; c < np; ++c) {
                double v = g.values(r, c);
                bool cand = true;
                int cols[3];
                int ncols = neighbor_cols(c, cols);
                for (int dr = -1; dr <= 1 && cand; ++dr) {
                    int rr = r + dr;
                    if (rr < 0 || rr >= nt) continue;
                    for (int k = 0; k < ncols; ++k) {
                        if (rr == r && cols[k] == c) continue;
                        if (g.values(rr, cols[k]) > v) {
                            cand = false;
                            break;
                        }
                    }
                }
                cells.push_back(Cell{v, gi, r, c, cand, false});
            }
    }

    // Plateau suppression: a candidate neighboring an equal-valued candidate
    // that precedes it in row-major order yields to that cell. Chained
    // equality walks back to the plateau's first cell.
    std::size_t idx = 0;
    std::vector<std::size_t> grid_base;
    for (const RegionGrid& g : spectrum.grids) {
        grid_base.push_back(idx);
        idx += g.axes.theta_deg.size() * g.axes.phi_deg.size();
    }
    auto cell_at = [&](int gi, int r, int c) -> Cell& {
        const RegionGrid& g = spectrum.grids[static_cast<std::size_t>(gi)];
        return cells[grid_base[static_cast<std::size_t>(gi)] +
                     static_cast<std::size_t>(r) * g.axes.phi_deg.size() + static_cast<std::size_t>(c)];
    };
    for (Cell& cell : cells) {
        if (!cell.candidate) continue;
        const RegionGrid& g = spectrum.grids[static_cast<std::size_t>(cell.grid)];
        const int nt = static_cast<int>(g.axes.theta_deg.size());
        const int np = static_cast<int>(g.axes.phi_deg.size());
        for (int dr = -1; dr <= 1 && !cell.suppressed; ++dr) {
            int rr = cell.row + dr;
            if (rr < 0 || rr >= nt) continue;
            for (int dc = -1; dc <= 1; ++dc) {
                int cc = cell.col + dc;
                if (g.axes.phi_full_circle && np > 1) cc = (cc + np) % np;
                if (cc < 0 || cc >= np || (rr == cell.row && cc == cell.col)) continue;
                const Cell& nb = cell_at(cell.grid, rr, cc);
                bool precedes = rr < cell.row || (rr == cell.row && cc < cell.col);
                if (nb.candidate && precedes && nb.value == cell.value) {
                    cell.suppressed = true;
                    break;
                }
            }
        }
    }

    auto better = [](const Cell& a, const Cell& b) {
        if (a.value != b.value) return a.value > b.value;
        return std::tie(a.grid, a.row, a.col) < std::tie(b.grid, b.row, b.col);
    };
    std::vector<const Cell*> peaks, filler;
    for (const Cell& c : cells) {
        if (c.candidate && !c.suppressed) peaks.push_back(&c);
        else if (!c.candidate) filler.push_back(&c);
    }
    std::sort(peaks.begin(), peaks.end(), [&](const Cell* a, const Cell* b) { return better(*a, *b); });
    std::sort(filler.begin(), filler.end(), [&](const Cell* a, const Cell* b) { return better(*a, *b); });

    std::vector<DoA> out;
    auto try_add = [&](const Cell* c) {
        const RegionGrid& g = spectrum.grids[static_cast<std::size_t>(c->grid)];
        DoA d(g.axes.theta_deg[static_cast<std::size_t>(c->row)], g.axes.phi_deg[static_cast<std::size_t>(c->col)]);
        for (const DoA& prev : out)
            if (std::fabs(prev.elevation_deg - d.elevation_deg) < 1e-9 &&
                azimuth_distance(prev.azimuth_deg, d.azimuth_deg) < 1e-9)
                return;
        out.push_back(d);
    };
    for (const Cell* c : peaks) {
        if (static_cast<int>(out.size()) == count) break;
        try_add(c);
    }
    for (const Cell* c : filler) {
        if (static_cast<int>(out.size()) == count) break;
        try_add(c);
    }
    return out;
}

}  // namespace ucadoa
