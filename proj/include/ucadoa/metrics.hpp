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
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "array.hpp"
#include "common.hpp"

namespace ucadoa {

enum class Method {
    ripf,
    ccsm1,
    ccsm,
    se_csm,
    r_csm,
    i2d_csm,
};

inline const char* method_name(Method m) {
    switch (m) {
    case Method::ripf: return "ripf";
    case Method::ccsm1: return "c-csm-1";
    case Method::ccsm: return "c-csm";
    case Method::se_csm: return "se-csm";
    case Method::r_csm: return "r-csm";
    case Method::i2d_csm: return "i-2d-csm";
    }
    throw std::invalid_argument("method_name: unknown method");
}

inline Method parse_method(const std::string& name) {
    for (Method m : {Method::ripf, Method::ccsm1, Method::ccsm, Method::se_csm,
                     Method::r_csm, Method::i2d_csm}) {
        if (name == method_name(m)) return m;
    }
    throw std::invalid_argument("parse_method: unknown method '" + name + "'");
}

struct TrialOutcome {
    std::vector<DoA> truth;
    std::vector<DoA> estimates;
    double wall_time_s = 0.0;
    double flops_estimate = 0.0;
    int iterations_used = 1;
};

// Angular separation used for pairing and thresholding: elevation difference
// plus wrapped azimuth difference, both in degrees.
inline double doa_separation(const DoA& a, const DoA& b) {
    return std::abs(a.elevation_deg - b.elevation_deg) +
           azimuth_distance(a.azimuth_deg, b.azimuth_deg);
}

// Greedy nearest-neighbor matching between two unordered angle lists:
// repeatedly bind the globally closest unmatched (truth, estimate) pair.
// Ties resolve to the smaller truth index, then the smaller estimate index,
// so the matching is deterministic.
inline std::vector<std::pair<int, int>> greedy_nearest_pairs(std::span<const DoA> truth,
                                                             std::span<const DoA> estimates) {
    const int nt = static_cast<int>(truth.size());
    const int ne = static_cast<int>(estimates.size());
    std::vector<std::pair<int, int>> pairs;
    std::vector<char> t_used(static_cast<std::size_t>(nt), 0);
    std::vector<char> e_used(static_cast<std::size_t>(ne), 0);
    const int rounds = std::min(nt, ne);
    pairs.reserve(static_cast<std::size_t>(rounds));
    for (int round = 0; round < rounds; ++round) {
        double best = std::numeric_limits<double>::infinity();
        int bt = -1;
        int be = -1;
        for (int t = 0; t < nt; ++t) {
            if (t_used[static_cast<std::size_t>(t)]) continue;
            for (int e = 0; e < ne; ++e) {
                if (e_used[static_cast<std::size_t>(e)]) continue;
                const double d = doa_separation(truth[static_cast<std::size_t>(t)],
                                                estimates[static_cast<std::size_t>(e)]);
                if (d < best) {
                    best = d;
                    bt = t;
                    be = e;
                }
            }
        }
        t_used[static_cast<std::size_t>(bt)] = 1;
        e_used[static_cast<std::size_t>(be)] = 1;
        pairs.emplace_back(bt, be);
    }
    return pairs;
}

namespace detail {

// Worst pairing error: elevation spans at most 90 degrees, wrapped azimuth at
// most 180. A truth left without an estimate is charged this maximum.
inline constexpr double kMissElevationDeg = 90.0;
inline constexpr double kMissAzimuthDeg = 180.0;

inline void check_trials(std::span<const TrialOutcome> trials) {
    if (trials.empty()) throw std::invalid_argument("metrics: no trials");
    for (const TrialOutcome& t : trials) {
        if (t.truth.empty()) throw std::invalid_argument("metrics: trial without truth angles");
        if (t.estimates.empty()) throw std::invalid_argument("metrics: trial without estimates");
    }
}

} // namespace detail

// Pooled root-mean-square error over trials and sources, in degrees. Estimates
// are matched to truths greedily per trial; truths left unmatched contribute
// the maximum pairing distance.
inline double rmse(std::span<const TrialOutcome> trials) {
    detail::check_trials(trials);
    double sum = 0.0;
    std::size_t terms = 0;
    for (const TrialOutcome& t : trials) {
        const auto pairs = greedy_nearest_pairs(t.truth, t.estimates);
        std::vector<char> matched(t.truth.size(), 0);
        for (const auto& [ti, ei] : pairs) {
            matched[static_cast<std::size_t>(ti)] = 1;
            const DoA& a = t.truth[static_cast<std::size_t>(ti)];
            const DoA& b = t.estimates[static_cast<std::size_t>(ei)];
            const double dt = a.elevation_deg - b.elevation_deg;
            const double dp = azimuth_distance(a.azimuth_deg, b.azimuth_deg);
            sum += dt * dt + dp * dp;
        }
        for (std::size_t n = 0; n < t.truth.size(); ++n) {
            if (!matched[n])
                sum += detail::kMissElevationDeg * detail::kMissElevationDeg +
                       detail::kMissAzimuthDeg * detail::kMissAzimuthDeg;
        }
        terms += t.truth.size();
    }
    return std::sqrt(sum / static_cast<double>(terms));
}

// Successful detection probability: the fraction of (trial, source) pairs
// whose matched estimate lies within v_theta + v_phi of the truth in the
// doa_separation metric. Unmatched truths count as failures.
inline double sdp(std::span<const TrialOutcome> trials, double v_theta_deg, double v_phi_deg) {
    detail::check_trials(trials);
    if (v_theta_deg <= 0.0 || v_phi_deg <= 0.0)
        throw std::invalid_argument("sdp: steps must be positive");
    const double threshold = v_theta_deg + v_phi_deg;
    std::size_t hits = 0;
    std::size_t terms = 0;
    for (const TrialOutcome& t : trials) {
        const auto pairs = greedy_nearest_pairs(t.truth, t.estimates);
        for (const auto& [ti, ei] : pairs) {
            const double d = doa_separation(t.truth[static_cast<std::size_t>(ti)],
                                            t.estimates[static_cast<std::size_t>(ei)]);
            if (d <= threshold + 1e-12) ++hits;
        }
        terms += t.truth.size();
    }
    return static_cast<double>(hits) / static_cast<double>(terms);
}

// Per-iteration inputs of the leading-order cost model. z_bins is the number
// of focused bins this iteration (the selected subset for the incremental
// estimator, all Z otherwise). radii holds one (elevation, azimuth) radius
// pair per search region; grid_theta/grid_phi describe the full-range
// spectrum lattice used by the benchmark variants.
struct FlopsState {
    double z_bins = 0.0;
    double elements = 0.0;
    double snapshots = 0.0;
    double source_count = 0.0;
    std::vector<std::pair<double, double>> radii;
    double v_theta_deg = 0.2;
    double v_phi_deg = 0.2;
    double grid_theta = 0.0;
    double grid_phi = 0.0;
};

// Leading-order FLOP count of one iteration. Big-O constants are taken as 1,
// so only comparisons between methods are meaningful.
inline double flops_estimate(Method method, const FlopsState& s) {
    if (s.z_bins <= 0.0 || s.elements <= 0.0 || s.snapshots <= 0.0)
        throw std::invalid_argument("flops_estimate: parameters must be positive");
    if (s.v_theta_deg <= 0.0 || s.v_phi_deg <= 0.0)
        throw std::invalid_argument("flops_estimate: steps must be positive");
    const double m = s.elements;
    double radii_sum = 0.0;
    for (const auto& [rt, rp] : s.radii) radii_sum += rt * rp;
    double focus_term = 0.0;
    switch (method) {
    case Method::ccsm1:
    case Method::ccsm:
        focus_term = 4.0 * s.source_count;
        break;
    case Method::se_csm:
        focus_term = 20.0 * s.source_count;
        break;
    case Method::ripf:
    case Method::r_csm:
    case Method::i2d_csm:
        focus_term = 16.0 * radii_sum / (s.v_theta_deg * s.v_phi_deg);
        break;
    }
    double total = 2.0 * s.z_bins * m * m * (m + 8.0 * s.snapshots + focus_term);
    if (method != Method::ripf) total += 8.0 * m * m * s.grid_theta * s.grid_phi;
    return total;
}

struct ComplexityAdvantageParams {
    double elements = 5.0;
    double fft_size = 32.0;
    double snapshots = 0.0;
    double source_count = 1.0;
    double avg_err_theta_deg = 3.0;
    double avg_err_phi_deg = 3.0;
    double bias = 3.0;
    double v_theta_deg = 0.2;
    double v_phi_deg = 0.2;
    double grid_theta = 451.0;
    double grid_phi = 1800.0;
    double max_iterations = 15.0;
    double convergence_iterations = 5.0;
};

struct ComplexityAdvantageResult {
    bool satisfied = false;
    double margin = 0.0; // (rhs - lhs) / rhs
    double lhs = 0.0;
    double rhs = 0.0;
};

// Single-iteration complexity advantage of the incremental estimator over the
// plain conventional pipeline. The selected-bin count is replaced by its
// high-probability upper bound and the radii sum by its 99th-percentile bound
// under the exponential decrement model; the predicate then compares the two
// cost expressions directly.
inline ComplexityAdvantageResult complexity_advantage_check(const ComplexityAdvantageParams& p) {
    if (p.convergence_iterations < 1.0)
        throw std::invalid_argument(
            "complexity_advantage_check: convergence iteration count must be >= 1");
    if (p.max_iterations < 1.0 || p.fft_size < 2.0 || p.snapshots < 1.0)
        throw std::invalid_argument("complexity_advantage_check: invalid parameters");
    if (p.v_theta_deg <= 0.0 || p.v_phi_deg <= 0.0)
        throw std::invalid_argument("complexity_advantage_check: steps must be positive");
    const double d_sum = p.avg_err_theta_deg + p.avg_err_phi_deg; // d_theta + d_phi
    const double ic = p.convergence_iterations;
    const double big_i = p.max_iterations;
    const double z = p.fft_size;
    const double z_in_bound = 1.0 + d_sum * (d_sum * big_i + 2.0 * z) / (4.0 * ic * big_i);
    const double decrement = std::log(100.0) / (2.0 * ic);
    const double radii_bound = decrement * decrement * p.source_count * p.avg_err_theta_deg *
                               p.avg_err_phi_deg * d_sum * d_sum * p.bias * (p.bias - 1.0);
    ComplexityAdvantageResult r;
    r.lhs = z_in_bound * (p.elements + 8.0 * p.snapshots +
                          16.0 * radii_bound / (p.v_theta_deg * p.v_phi_deg));
    r.rhs = z * (p.elements + 4.0 * p.source_count + 8.0 * p.snapshots) +
            4.0 * p.grid_theta * p.grid_phi;
    r.satisfied = r.lhs < r.rhs;
    r.margin = (r.rhs - r.lhs) / r.rhs;
    return r;
}

} // namespace ucadoa
