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

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ucadoa/array.hpp"
#include "ucadoa/common.hpp"
#include "ucadoa/signal.hpp"

namespace ucadoa {

// Deterministic description of an estimation problem for bound evaluation:
// which sources radiate which per-bin spectra from which directions, observed
// at which bin frequencies against how much noise. noise_variance is the
// time-domain sample power, so every DFT-domain snapshot element carries
// Z * noise_variance of it (unnormalized Z-point transform).
struct CrbScenario {
    ArrayGeometry geometry;
    std::vector<DoA> doas;
    std::vector<CMat> source_spectra;  // Z matrices of N x K_f: bin -> (source, snapshot)
    double noise_variance = 1.0;
    std::vector<double> frequencies;   // hertz, one per bin

    explicit CrbScenario(ArrayGeometry g) : geometry(std::move(g)) {}

    int source_count() const { return static_cast<int>(doas.size()); }
    int bin_count() const { return static_cast<int>(frequencies.size()); }
    int snapshot_count() const {
        return source_spectra.empty() ? 0 : static_cast<int>(source_spectra.front().cols());
    }

    void validate() const {
        const int n = source_count();
        if (n < 1) throw std::invalid_argument("CrbScenario: need at least one source");
        if (n >= geometry.element_count)
            throw std::invalid_argument("CrbScenario: more sources than the array can resolve");
        if (frequencies.empty()) throw std::invalid_argument("CrbScenario: no bin frequencies");
        if (source_spectra.size() != frequencies.size())
            throw std::invalid_argument("CrbScenario: one spectra matrix per bin required");
        const int k = snapshot_count();
        if (k < 1) throw std::invalid_argument("CrbScenario: need at least one snapshot");
        for (const CMat& s : source_spectra)
            if (s.rows() != n || s.cols() != k)
                throw std::invalid_argument("CrbScenario: spectra matrix shape mismatch");
        for (double f : frequencies)
            if (!(f > 0.0)) throw std::invalid_argument("CrbScenario: frequencies must be positive");
        if (!(noise_variance > 0.0))
            throw std::invalid_argument("CrbScenario: noise variance must be positive");
    }
};

// The bound evaluated against the same clean spectra the simulator emits for
// this configuration, so it is directly comparable to simulated errors.
inline CrbScenario make_crb_scenario(const ArrayGeometry& g, const ScenarioConfig& cfg) {
    cfg.validate(g);
    CrbScenario scn(g);
    scn.doas = cfg.path_doas;
    scn.source_spectra = clean_source_spectra(cfg, cfg.snapshot_count());
    scn.noise_variance = cfg.noise_variance();
    scn.frequencies.reserve(static_cast<std::size_t>(cfg.fft_size));
    for (int z = 1; z <= cfg.fft_size; ++z)
        scn.frequencies.push_back(bin_frequency(z, cfg.fft_size, cfg.sample_rate, cfg.center_frequency));
    return scn;
}

// Complete information matrix over the parameter vector
//   [ sigma^2,
//     per (bin z, snapshot k): Re s_1..Re s_N, Im s_1..Im s_N,
//     theta_1..theta_N, phi_1..phi_N ]
// with z outer and k inner in the middle run. Angle rows are per radian.
struct FisherMatrix {
    Mat matrix;
    int source_count = 0;
    int snapshot_count = 0;
    int bin_count = 0;

    int doa_offset() const { return 1 + 2 * source_count * snapshot_count * bin_count; }
};

struct CrbResult {
    Mat doa_block;                         // 2N x 2N, degrees^2
    std::vector<double> per_angle_bounds;  // diagonal, theta_1..N then phi_1..N
};

namespace detail {

// Steering matrix and derivative columns [d/dtheta_1.., d/dphi_1..] at one bin.
inline void crb_manifold(const CrbScenario& scn, double f_hz, CMat& a, CMat& d) {
    const int m = scn.geometry.element_count;
    const int n = scn.source_count();
    a.resize(m, n);
    d.resize(m, 2 * n);
    for (int j = 0; j < n; ++j) {
        a.col(j) = steering_vector(scn.geometry, f_hz, scn.doas[static_cast<std::size_t>(j)]);
        const SteeringDerivatives sd =
            steering_derivatives(scn.geometry, f_hz, scn.doas[static_cast<std::size_t>(j)]);
        d.col(j) = sd.d_elevation;
        d.col(n + j) = sd.d_azimuth;
    }
}

// (Z sigma^2 / 2) * J^{-1}, radians^2 -> degrees^2. J is the bracketed
// information sum; a singular J means the directions are not separable.
inline CrbResult invert_information(const Mat& j, double z_sigma2) {
    Eigen::SelfAdjointEigenSolver<Mat> es(j);
    if (es.info() != Eigen::Success)
        throw unidentifiable_scenario_error("direction information sum failed to decompose");
    const Vec& ev = es.eigenvalues();
    const double top = ev[ev.size() - 1];
    if (!(top > 0.0) || ev[0] <= 1e-12 * top)
        throw unidentifiable_scenario_error("direction information sum is singular");
    const Mat inv =
        es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
    const double to_deg2 = (180.0 / pi) * (180.0 / pi);
    CrbResult out;
    out.doa_block = (0.5 * z_sigma2 * to_deg2) * inv;
    out.per_angle_bounds.assign(out.doa_block.diagonal().begin(), out.doa_block.diagonal().end());
    return out;
}

// I - Q Q^H with Q an orthonormal basis of the steering column space. A rank
// deficient steering matrix (coincident sources) has no Gram inverse, so the
// projector and the bound built on it are undefined.
inline CMat noise_projector(const CMat& a) {
    const Eigen::ColPivHouseholderQR<CMat> qr(a);
    if (qr.rank() < a.cols())
        throw unidentifiable_scenario_error("steering matrix is rank deficient");
    const CMat q = qr.householderQ() * CMat::Identity(a.rows(), a.cols());
    return CMat::Identity(a.rows(), a.rows()) - q * q.adjoint();
}

}  // namespace detail

// Joint log-density of the stacked DFT-domain observations under the
// scenario's signal model, evaluated at the scenario parameters.
inline double log_likelihood(const CrbScenario& scn, const NarrowbandStack& observations) {
    scn.validate();
    const int m = scn.geometry.element_count;
    const int n = scn.source_count();
    const int k_f = scn.snapshot_count();
    const int z_bins = scn.bin_count();
    if (static_cast<int>(observations.bins.size()) != z_bins)
        throw std::invalid_argument("log_likelihood: bin count mismatch");
    const double zs2 = static_cast<double>(z_bins) * scn.noise_variance;

    double quad = 0.0;
    CMat a(m, n), d;
    for (int z = 0; z < z_bins; ++z) {
        const CMat& x = observations.bins[static_cast<std::size_t>(z)];
        if (x.rows() != m || x.cols() != k_f)
            throw std::invalid_argument("log_likelihood: observation shape mismatch");
        for (int j = 0; j < n; ++j)
            a.col(j) = steering_vector(scn.geometry, scn.frequencies[static_cast<std::size_t>(z)],
                                       scn.doas[static_cast<std::size_t>(j)]);
        quad += (x - a * scn.source_spectra[static_cast<std::size_t>(z)]).squaredNorm();
    }
    return -static_cast<double>(k_f) * m * z_bins * std::log(pi * zs2) - quad / zs2;
}

inline FisherMatrix fisher_matrix(const CrbScenario& scn) {
    scn.validate();
    const int m = scn.geometry.element_count;
    const int n = scn.source_count();
    const int k_f = scn.snapshot_count();
    const int z_bins = scn.bin_count();
    const int dim = 1 + 2 * n * k_f * z_bins + 2 * n;
    const double sigma2 = scn.noise_variance;
    const double c = 2.0 / (static_cast<double>(z_bins) * sigma2);
    const int doa0 = 1 + 2 * n * k_f * z_bins;

    FisherMatrix out;
    out.source_count = n;
    out.snapshot_count = k_f;
    out.bin_count = z_bins;
    out.matrix = Mat::Zero(dim, dim);
    Mat& f = out.matrix;
    f(0, 0) = static_cast<double>(k_f) * m * z_bins / (sigma2 * sigma2);

    Mat gamma = Mat::Zero(2 * n, 2 * n);
    CMat a, d;
    for (int z = 0; z < z_bins; ++z) {
        detail::crb_manifold(scn, scn.frequencies[static_cast<std::size_t>(z)], a, d);
        const CMat cc = c * (a.adjoint() * a);   // shared by every snapshot of this bin
        const CMat ad = a.adjoint() * d;
        const CMat dd = d.adjoint() * d;
        const CMat& s = scn.source_spectra[static_cast<std::size_t>(z)];
        for (int k = 0; k < k_f; ++k) {
            const int base = 1 + 2 * n * (z * k_f + k);
            f.block(base, base, n, n) = cc.real();
            f.block(base, base + n, n, n) = -cc.imag();
            f.block(base + n, base, n, n) = cc.imag();
            f.block(base + n, base + n, n, n) = cc.real();

            CVec xi(2 * n);
            xi.head(n) = s.col(k);
            xi.tail(n) = s.col(k);
            const CMat g = c * ad * xi.asDiagonal();  // N x 2N
            f.block(base, doa0, n, 2 * n) = g.real();
            f.block(base + n, doa0, n, 2 * n) = g.imag();
            f.block(doa0, base, 2 * n, n) = g.real().transpose();
            f.block(doa0, base + n, 2 * n, n) = g.imag().transpose();

            gamma += c * (xi.conjugate().asDiagonal() * dd * xi.asDiagonal()).real();
        }
    }
    f.block(doa0, doa0, 2 * n, 2 * n) = gamma;
    return out;
}

// Direction-only bound: the bracketed sum projects each derivative column off
// the steering column space, which is exactly the Schur complement of the
// signal-parameter block of the full information matrix.
inline CrbResult crb_closed_form(const CrbScenario& scn) {
    scn.validate();
    const int n = scn.source_count();
    const int k_f = scn.snapshot_count();
    const int z_bins = scn.bin_count();

    Mat j = Mat::Zero(2 * n, 2 * n);
    CMat a, d;
    for (int z = 0; z < z_bins; ++z) {
        detail::crb_manifold(scn, scn.frequencies[static_cast<std::size_t>(z)], a, d);
        const CMat p = detail::noise_projector(a);
        const CMat& s = scn.source_spectra[static_cast<std::size_t>(z)];
        for (int k = 0; k < k_f; ++k) {
            CVec xi(2 * n);
            xi.head(n) = s.col(k);
            xi.tail(n) = s.col(k);
            const CMat b = d * xi.asDiagonal();
            j += (b.adjoint() * p * b).real();
        }
    }
    return detail::invert_information(j, static_cast<double>(z_bins) * scn.noise_variance);
}

// Same bound through the source-correlation Hadamard product; the projected
// derivative Gram matrix is formed once per bin and scaled per snapshot.
inline CrbResult crb_hadamard_form(const CrbScenario& scn) {
    scn.validate();
    const int n = scn.source_count();
    const int k_f = scn.snapshot_count();
    const int z_bins = scn.bin_count();

    Mat j = Mat::Zero(2 * n, 2 * n);
    CMat a, d;
    for (int z = 0; z < z_bins; ++z) {
        detail::crb_manifold(scn, scn.frequencies[static_cast<std::size_t>(z)], a, d);
        const CMat e = d.adjoint() * detail::noise_projector(a) * d;
        const CMat& s = scn.source_spectra[static_cast<std::size_t>(z)];
        for (int k = 0; k < k_f; ++k) {
            CVec xi(2 * n);
            xi.head(n) = s.col(k);
            xi.tail(n) = s.col(k);
            const CMat r2s = xi.conjugate() * xi.transpose();
            j += e.cwiseProduct(r2s).real();
        }
    }
    return detail::invert_information(j, static_cast<double>(z_bins) * scn.noise_variance);
}

// Aggregate bound across V scenario groups sharing one source count:
// sqrt(sum of doa_block traces / (V * N)), in degrees.
inline double rmse_crb(std::span<const CrbResult> results, int source_count) {
    if (results.empty()) throw std::invalid_argument("rmse_crb: need at least one result");
    if (source_count < 1) throw std::invalid_argument("rmse_crb: source count must be positive");
    double sum = 0.0;
    for (const CrbResult& r : results) sum += r.doa_block.trace();
    return std::sqrt(sum / (static_cast<double>(results.size()) * source_count));
}

} // namespace ucadoa
