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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "array.hpp"
#include "common.hpp"
#include "focusing.hpp"
#include "metrics.hpp"
#include "signal.hpp"
#include "subspace.hpp"

namespace ucadoa {

struct RipfParams {
    int max_iterations = 15;       // I
    double bias = 3.0;             // b, must exceed 1
    double avg_err_theta_deg = 3.0; // expected pre-estimate elevation error
    double avg_err_phi_deg = 3.0;   // expected pre-estimate azimuth error
    double step_theta_deg = 0.2;    // v_theta
    double step_phi_deg = 0.2;      // v_phi

    void validate() const {
        if (max_iterations < 1) throw std::invalid_argument("RipfParams: need at least one iteration");
        if (!(bias > 1.0)) throw std::invalid_argument("RipfParams: bias must exceed 1");
        if (!(step_theta_deg > 0.0) || !(step_phi_deg > 0.0))
            throw std::invalid_argument("RipfParams: search steps must be positive");
        if (avg_err_theta_deg < 0.0 || avg_err_phi_deg < 0.0)
            throw std::invalid_argument("RipfParams: average errors must be nonnegative");
    }
};

// Per-source search window: a clipped elevation interval crossed with a
// wrapped azimuth arc, remembering the estimate it was grown from.
struct RobustnessRegion {
    double theta_lo_deg = 0.0, theta_hi_deg = 90.0;
    double phi_lo_deg = 0.0, phi_span_deg = 360.0;
    double radius_theta_deg = 0.0, radius_phi_deg = 0.0;
    DoA center;
};

// One iteration of any CSM run. focus_set holds the bins whose focused
// spectra entered the covariance, ascending; regions is empty for variants
// that focus on discrete angles only.
struct EstimatorState {
    int iteration = 0;
    std::vector<DoA> estimates;
    int source_count = 0;
    double delta_bar_deg = 0.0;
    double d_delta = 1.0;
    std::vector<int> focus_set;
    std::vector<RobustnessRegion> regions;
    double flops_estimate = 0.0;
    std::vector<std::string> warnings;
};

struct EstimationResult {
    std::vector<DoA> estimates;
    std::vector<EstimatorState> trace;
};

// Average angular movement between consecutive estimate sets, degrees. Equal
// counts are aligned greedily and averaged; unequal counts fall back to the
// mean over current estimates of the distance to the closest previous one.
// Both branches halve the summed elevation-plus-azimuth distance.
inline double delta_bar(std::span<const DoA> prev, std::span<const DoA> curr) {
    if (prev.empty() || curr.empty()) throw std::invalid_argument("delta_bar: empty estimate list");
    if (prev.size() == curr.size()) {
        const auto pairs = greedy_nearest_pairs(prev, curr);
        double sum = 0.0;
        for (const auto& [pi, ci] : pairs)
            sum += doa_separation(prev[static_cast<std::size_t>(pi)],
                                  curr[static_cast<std::size_t>(ci)]);
        return sum / (2.0 * static_cast<double>(prev.size()));
    }
    double sum = 0.0;
    for (const DoA& c : curr) {
        double best = std::numeric_limits<double>::infinity();
        for (const DoA& p : prev) best = std::min(best, doa_separation(p, c));
        sum += best;
    }
    return sum / (2.0 * static_cast<double>(curr.size()));
}

// Number of bins to add after the given iteration: the movement-scaled share
// of the budget, never more than what remains unselected.
inline int frequency_increment(const EstimatorState& state, int fft_size, const RipfParams& params) {
    if (state.iteration < 1) throw std::invalid_argument("frequency_increment: state before first iteration");
    if (fft_size < static_cast<int>(state.focus_set.size()))
        throw std::invalid_argument("frequency_increment: more selected bins than exist");
    const double mu = static_cast<double>(fft_size) / static_cast<double>(params.max_iterations) +
                      (params.avg_err_theta_deg + params.avg_err_phi_deg) / 2.0;
    const double want = std::ceil(mu * state.d_delta);
    const double room = static_cast<double>(fft_size - static_cast<int>(state.focus_set.size()));
    return static_cast<int>(std::min(want, room));
}

// Search radii for the next estimate refinement. The bias couples the two
// axes: elevations near zenith widen the azimuth window and vice versa, and
// both shrink with 1/iteration and with the previous movement.
inline std::pair<double, double> robustness_radii(const DoA& estimate, int iteration,
                                                  double d_delta_prev, const RipfParams& params) {
    if (iteration < 1) throw std::invalid_argument("robustness_radii: iteration must be positive");
    if (d_delta_prev < 0.0) throw std::invalid_argument("robustness_radii: negative movement");
    const double theta = deg2rad(estimate.elevation_deg);
    const double scale = d_delta_prev / static_cast<double>(iteration);
    return {params.avg_err_theta_deg * (params.bias - std::cos(theta)) * scale,
            params.avg_err_phi_deg * (params.bias - std::sin(theta)) * scale};
}

inline RobustnessRegion robustness_region(const DoA& estimate, std::pair<double, double> radii) {
    const auto [rt, rp] = radii;
    if (rt < 0.0 || rp < 0.0) throw std::invalid_argument("robustness_region: radii must be nonnegative");
    RobustnessRegion r;
    r.center = estimate;
    r.radius_theta_deg = rt;
    r.radius_phi_deg = rp;
    r.theta_lo_deg = std::max(0.0, estimate.elevation_deg - rt);
    r.theta_hi_deg = std::min(estimate.elevation_deg + rt, 90.0);
    if (rp >= 180.0) {
        r.phi_lo_deg = 0.0;
        r.phi_span_deg = 360.0;
    } else {
        r.phi_lo_deg = wrap_360(estimate.azimuth_deg - rp);
        r.phi_span_deg = 2.0 * rp;
    }
    return r;
}

namespace detail {

inline AngularRegion to_angular(const RobustnessRegion& r, bool with_center) {
    AngularRegion a;
    a.theta_lo_deg = r.theta_lo_deg;
    a.theta_hi_deg = r.theta_hi_deg;
    a.phi_lo_deg = r.phi_lo_deg;
    a.phi_span_deg = r.phi_span_deg;
    a.has_center = with_center;
    a.center = r.center;
    return a;
}

// Exact-duplicate removal on sampled angle pairs, first occurrence kept.
inline std::vector<DoA> region_lattice_points(std::span<const RobustnessRegion> regions,
                                              double v_theta, double v_phi, bool with_center) {
    std::set<std::pair<double, double>> seen;
    std::vector<DoA> out;
    for (const RobustnessRegion& r : regions) {
        const RegionAxes ax = region_axes(to_angular(r, with_center), v_theta, v_phi);
        for (double th : ax.theta_deg)
            for (double ph : ax.phi_deg)
                if (seen.insert({th, ph}).second) out.push_back(DoA(th, ph));
    }
    return out;
}

} // namespace detail

// Union of the per-region sample lattices with exact duplicates removed,
// first-occurrence order. Region centers are kept in the lattice so repeated
// refinements can reproduce an estimate exactly.
inline std::vector<DoA> sample_focusing_angles(std::span<const RobustnessRegion> regions,
                                               double v_theta_deg, double v_phi_deg) {
    if (!(v_theta_deg > 0.0) || !(v_phi_deg > 0.0))
        throw std::invalid_argument("sample_focusing_angles: steps must be positive");
    return detail::region_lattice_points(regions, v_theta_deg, v_phi_deg, true);
}

namespace detail {

inline bool same_interval(const RobustnessRegion& a, const RobustnessRegion& b) {
    return a.theta_lo_deg == b.theta_lo_deg && a.theta_hi_deg == b.theta_hi_deg &&
           a.phi_lo_deg == b.phi_lo_deg && a.phi_span_deg == b.phi_span_deg;
}

inline bool same_center(const RobustnessRegion& a, const RobustnessRegion& b) {
    return a.center.elevation_deg == b.center.elevation_deg &&
           a.center.azimuth_deg == b.center.azimuth_deg;
}

inline bool arcs_intersect(double lo1, double span1, double lo2, double span2) {
    if (span1 >= 360.0 || span2 >= 360.0) return true;
    return wrap_360(lo2 - lo1) <= span1 || wrap_360(lo1 - lo2) <= span2;
}

inline bool regions_intersect(const RobustnessRegion& a, const RobustnessRegion& b) {
    return a.theta_lo_deg <= b.theta_hi_deg && b.theta_lo_deg <= a.theta_hi_deg &&
           arcs_intersect(a.phi_lo_deg, a.phi_span_deg, b.phi_lo_deg, b.phi_span_deg);
}

// Turns search regions into focusing directions while preserving the
// exact-duplicate-removal semantics of sample_focusing_angles. Identical
// regions collapse to one; full-circle lattices (which always coincide) are
// merged into a single multi-row structure so the analytic accumulator sees
// them once; remaining geometric overlaps between small regions fall back to
// the explicit deduplicated point list. Overlapping regions too large to
// enumerate are kept structured and the duplication is reported.
inline FocusingAngles plan_focusing_angles(std::span<const RobustnessRegion> regions,
                                           double v_theta, double v_phi, bool with_center,
                                           std::vector<std::string>& warnings) {
    std::vector<RobustnessRegion> uniq;
    for (const RobustnessRegion& r : regions) {
        bool dup = false;
        for (const RobustnessRegion& u : uniq)
            if (same_interval(u, r) && (!with_center || same_center(u, r))) dup = true;
        if (!dup) uniq.push_back(r);
    }

    FocusingAngles fa;
    std::vector<RegionAxes> partial;
    RegionAxes merged_full;    // shared full-circle lattice, union of theta rows
    bool have_full = false;
    std::set<std::pair<double, double>> extra_seen;

    for (const RobustnessRegion& r : uniq) {
        RegionAxes ax = region_axes(to_angular(r, with_center), v_theta, v_phi);
        if (ax.phi_full_circle) {
            // Extra (off-lattice) columns apply only to this region's rows, so
            // they leave as points; the lattice itself is shared by all
            // full-circle regions and merges into one row union.
            for (double th : ax.theta_deg)
                for (double ph : ax.phi_extra_deg)
                    if (extra_seen.insert({th, ph}).second) fa.points.push_back(DoA(th, ph));
            if (!have_full) {
                merged_full = ax;
                merged_full.phi_extra_deg.clear();
                merged_full.phi_deg.clear();
                for (int k = 0; k < merged_full.phi_lattice_count; ++k)
                    merged_full.phi_deg.push_back(k * merged_full.phi_lattice_step_deg);
                have_full = true;
            } else {
                std::vector<double> rows;
                rows.reserve(merged_full.theta_deg.size() + ax.theta_deg.size());
                std::merge(merged_full.theta_deg.begin(), merged_full.theta_deg.end(),
                           ax.theta_deg.begin(), ax.theta_deg.end(), std::back_inserter(rows));
                rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
                merged_full.theta_deg = std::move(rows);
            }
        } else {
            partial.push_back(std::move(ax));
        }
    }

    // Geometric overlap among partial-arc regions can only create exact
    // duplicates when their lattices line up; enumerate when affordable.
    bool overlap = false;
    for (std::size_t i = 0; i < uniq.size(); ++i)
        for (std::size_t j = i + 1; j < uniq.size(); ++j)
            if (uniq[i].phi_span_deg < 360.0 && uniq[j].phi_span_deg < 360.0 &&
                regions_intersect(uniq[i], uniq[j]))
                overlap = true;

    if (overlap) {
        std::size_t points = 0;
        for (const RegionAxes& ax : partial) points += ax.theta_deg.size() * ax.phi_deg.size();
        if (points <= 300000) {
            std::vector<RobustnessRegion> arcs;
            for (const RobustnessRegion& r : uniq)
                if (r.phi_span_deg < 360.0) arcs.push_back(r);
            std::vector<DoA> pts = region_lattice_points(arcs, v_theta, v_phi, with_center);
            for (const DoA& p : pts)
                if (extra_seen.insert({p.elevation_deg, p.azimuth_deg}).second) fa.points.push_back(p);
            partial.clear();
        } else {
            warnings.push_back("overlapping focusing regions too large to deduplicate; "
                               "shared angles counted per region");
        }
    }

    if (have_full) fa.regions.push_back(std::move(merged_full));
    for (RegionAxes& ax : partial) fa.regions.push_back(std::move(ax));
    return fa;
}

inline std::vector<DoA> dedup_points(std::span<const DoA> pts) {
    std::vector<DoA> out;
    for (const DoA& p : pts) {
        bool dup = false;
        for (const DoA& q : out)
            if (q.elevation_deg == p.elevation_deg && q.azimuth_deg == p.azimuth_deg) dup = true;
        if (!dup) out.push_back(p);
    }
    return out;
}

// The four corner offsets (+-dt, +-dp) around an estimate, clipped in
// elevation and wrapped in azimuth.
inline void append_corner_angles(std::vector<DoA>& out, const DoA& est, double dt, double dp) {
    for (int st : {+1, -1})
        for (int sp : {+1, -1})
            out.push_back(DoA(std::clamp(est.elevation_deg + st * dt, 0.0, 90.0),
                              wrap_360(est.azimuth_deg + sp * dp)));
}

// Sine-domain shrinking window used by the two interval benchmarks: the
// elevation interval maps a +-q band around sin(theta) back through arcsin,
// and the azimuth radius is the full circle shrunk by the same power law.
inline RobustnessRegion sin_domain_region(const DoA& est, int iteration, double i_sat_theta,
                                          double i_sat_phi) {
    const double it = static_cast<double>(iteration);
    const double eff_t = std::min(it, i_sat_theta);
    const double eff_p = std::min(it, i_sat_phi);
    const double qt = 1.0 / (2.0 * eff_t * eff_t);
    const double s = std::sin(deg2rad(est.elevation_deg));
    RobustnessRegion r;
    r.center = est;
    r.theta_lo_deg = std::max(0.0, rad2deg(std::asin(std::max(0.0, s - qt))));
    r.theta_hi_deg = std::min(90.0, rad2deg(std::asin(std::min(1.0, s + qt))));
    r.radius_theta_deg = 0.5 * (r.theta_hi_deg - r.theta_lo_deg);
    const double rp = 360.0 / (2.0 * eff_p * eff_p);
    r.radius_phi_deg = std::min(rp, 180.0);
    if (rp >= 180.0) {
        r.phi_lo_deg = 0.0;
        r.phi_span_deg = 360.0;
    } else {
        r.phi_lo_deg = wrap_360(est.azimuth_deg - rp);
        r.phi_span_deg = 2.0 * rp;
    }
    return r;
}

// Previous estimates that found no nearby peak keep their place when the peak
// search comes up short.
inline void fill_from_previous(std::vector<DoA>& peaks, std::span<const DoA> prev, int want) {
    const auto pairs = greedy_nearest_pairs(prev, peaks);
    std::vector<char> used(prev.size(), 0);
    for (const auto& [pi, ei] : pairs) used[static_cast<std::size_t>(pi)] = 1;
    for (std::size_t i = 0; i < prev.size() && static_cast<int>(peaks.size()) < want; ++i)
        if (!used[i]) peaks.push_back(prev[i]);
}

// Shared iteration scaffolding for all CSM variants. The incremental variant
// grows its bin set at random and searches only inside the robustness
// regions; every benchmark focuses all bins and scans the full range, they
// differ solely in how focusing directions follow the current estimates.
inline EstimationResult run_csm(const NarrowbandStack& stack, std::span<const DoA> pre,
                                const ArrayGeometry& geom, Method method,
                                const RipfParams& params, RandomStream& rng) {
    params.validate();
    if (pre.empty()) throw std::invalid_argument("estimator: no pre-estimates");
    const int z = static_cast<int>(stack.bins.size());
    if (z < 1 || stack.frequencies.size() != stack.bins.size())
        throw std::invalid_argument("estimator: malformed narrowband stack");
    const double f0 = stack.center_frequency;
    const bool incremental = (method == Method::ripf);
    const int max_iter = (method == Method::ccsm1) ? 1 : params.max_iterations;
    const double vt = params.step_theta_deg;
    const double vp = params.step_phi_deg;

    Beamwidths bw{};
    if (method == Method::se_csm) bw = quiescent_beamwidths(geom, f0);
    // i_s = 2 v / 1 deg: iterations at which the shrink law saturates.
    const double i_sat_theta = 2.0 * vt;
    const double i_sat_phi = 2.0 * vp;

    const GridSpec full_grid{{AngularRegion::full_range()}, vt, vp};
    const double grid_theta = 90.0 / vt + 1.0;
    const double grid_phi = 360.0 / vp;

    std::vector<DoA> prev(pre.begin(), pre.end());
    int prev_count = static_cast<int>(prev.size());
    double d_prev = 1.0;
    std::vector<int> focus;
    std::vector<int> pool;
    if (incremental) {
        pool.resize(static_cast<std::size_t>(z));
        std::iota(pool.begin(), pool.end(), 0);
    } else {
        focus.resize(static_cast<std::size_t>(z));
        std::iota(focus.begin(), focus.end(), 0);
    }

    EstimationResult out;
    for (int iter = 1; iter <= max_iter; ++iter) {
        EstimatorState st;
        st.iteration = iter;

        if (incremental) {
            const int want = (iter == 1) ? 1 : frequency_increment(out.trace.back(), z, params);
            for (int n = 0; n < want && !pool.empty(); ++n) {
                const std::size_t j = rng.uniform_int(pool.size());
                const int bin = pool[static_cast<std::size_t>(j)];
                pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
                focus.insert(std::upper_bound(focus.begin(), focus.end(), bin), bin);
            }
        }

        FocusingAngles angles;
        switch (method) {
        case Method::ripf:
            for (const DoA& e : prev)
                st.regions.push_back(robustness_region(e, robustness_radii(e, iter, d_prev, params)));
            angles = plan_focusing_angles(st.regions, vt, vp, true, st.warnings);
            break;
        case Method::ccsm1:
        case Method::ccsm:
            angles.points = dedup_points(prev);
            break;
        case Method::se_csm: {
            std::vector<DoA> pts(prev.begin(), prev.end());
            const double frac = (iter == 1) ? 0.25 : 0.125;
            for (const DoA& e : prev)
                append_corner_angles(pts, e, frac * bw.elevation_deg, frac * bw.azimuth_deg);
            angles.points = dedup_points(pts);
            break;
        }
        case Method::r_csm:
            for (const DoA& e : prev)
                st.regions.push_back(sin_domain_region(e, iter, std::numeric_limits<double>::infinity(),
                                                       std::numeric_limits<double>::infinity()));
            angles = plan_focusing_angles(st.regions, vt, vp, false, st.warnings);
            break;
        case Method::i2d_csm:
            for (const DoA& e : prev)
                st.regions.push_back(sin_domain_region(e, iter, i_sat_theta, i_sat_phi));
            angles = plan_focusing_angles(st.regions, vt, vp, false, st.warnings);
            break;
        }

        std::vector<double> freqs;
        freqs.reserve(focus.size());
        for (int b : focus) freqs.push_back(stack.frequencies[static_cast<std::size_t>(b)]);
        const std::vector<CMat> products = focusing_products(geom, f0, freqs, angles);

        std::vector<int> used;
        std::vector<CMat> mats;
        used.reserve(focus.size());
        mats.reserve(focus.size());
        for (std::size_t k = 0; k < focus.size(); ++k) {
            try {
                mats.push_back(rss_focusing_from_product(products[k]));
                used.push_back(focus[k]);
            } catch (const degenerate_focusing_error&) {
                st.warnings.push_back("bin " + std::to_string(focus[k]) +
                                      ": degenerate focusing product, bin dropped");
            }
        }
        if (used.empty()) throw degenerate_focusing_error("estimator: every selected bin degenerate");
        if (used.size() != focus.size()) focus = used; // dropped bins never return

        const CMat cov = focused_covariance(stack, used, mats);
        const EigResult eig = hermitian_eig(cov);
        const int n_hat = estimate_source_count(eig.values);
        const CMat noise = noise_subspace(eig, n_hat);

        SpectrumGrid spectrum;
        if (incremental) {
            // The shrunk search must agree with a full-range scan wherever the
            // peak falls inside the regions, so sample the global lattice
            // restricted to each region rather than region-anchored offsets.
            GridSpec gs;
            gs.step_theta_deg = vt;
            gs.step_phi_deg = vp;
            gs.regions.reserve(st.regions.size());
            for (const RobustnessRegion& r : st.regions) {
                AngularRegion a = to_angular(r, true);
                a.lattice_aligned = true;
                gs.regions.push_back(a);
            }
            spectrum = music_spectrum(geom, f0, noise, gs);
        } else {
            spectrum = music_spectrum(geom, f0, noise, full_grid);
        }

        std::vector<DoA> peaks = find_peaks(spectrum, n_hat);
        if (static_cast<int>(peaks.size()) < n_hat) fill_from_previous(peaks, prev, n_hat);

        const double delta = delta_bar(prev, peaks);

        FlopsState fs;
        fs.z_bins = static_cast<double>(used.size());
        fs.elements = static_cast<double>(geom.element_count);
        fs.snapshots = static_cast<double>(stack.snapshots);
        fs.source_count = static_cast<double>(prev_count);
        fs.v_theta_deg = vt;
        fs.v_phi_deg = vp;
        fs.grid_theta = grid_theta;
        fs.grid_phi = grid_phi;
        for (const RobustnessRegion& r : st.regions)
            fs.radii.emplace_back(r.radius_theta_deg, r.radius_phi_deg);

        st.estimates = peaks;
        st.source_count = n_hat;
        st.delta_bar_deg = delta;
        st.d_delta = delta; // movement in units of one degree
        st.focus_set = focus;
        st.flops_estimate = flops_estimate(method, fs);
        const bool converged = (delta == 0.0 && n_hat == prev_count);
        out.trace.push_back(std::move(st));

        prev = std::move(peaks);
        prev_count = n_hat;
        d_prev = delta;
        if (converged) break;
    }
    out.estimates = prev;
    return out;
}

} // namespace detail

// Incremental-bin, shrinking-window CSM estimator. Iteration 1 focuses one
// uniformly random bin; each later iteration adds frequency_increment bins
// drawn uniformly without replacement. Terminates once the estimates stop
// moving and the detected source count is stable, or at max_iterations.
inline EstimationResult ripf_csm(const NarrowbandStack& stack, std::span<const DoA> pre_estimates,
                                 const ArrayGeometry& geom, const RipfParams& params,
                                 RandomStream& rng) {
    return detail::run_csm(stack, pre_estimates, geom, Method::ripf, params, rng);
}

// Reference CSM pipelines: all bins focused every iteration and the spectrum
// scanned over the full range. The variants differ in their focusing angles:
// the current estimates alone, estimates plus beamwidth-fraction corners, or
// sine-domain shrinking intervals.
inline EstimationResult benchmark_csm(const NarrowbandStack& stack, std::span<const DoA> pre_estimates,
                                      const ArrayGeometry& geom, Method variant,
                                      const RipfParams& params, RandomStream& rng) {
    if (variant == Method::ripf)
        throw std::invalid_argument("benchmark_csm: the incremental variant has its own entry point");
    return detail::run_csm(stack, pre_estimates, geom, variant, params, rng);
}

} // namespace ucadoa
