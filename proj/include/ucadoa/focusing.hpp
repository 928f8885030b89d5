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

#include <span>
#include <vector>

#include "signal.hpp"
#include "subspace.hpp"

namespace ucadoa {

// Unitary matrix B minimizing ||A_ref - B A|| in the Frobenius sense, given
// the cross product P = A A_ref^H: with P = U S V^H the minimizer is V U^H.
// An (almost) all-zero product carries no alignment information and is
// rejected. A Hermitian product (same manifold on both sides) is solved in
// its eigenbasis instead: that keeps the answer exactly the identity for the
// PSD case however rank-deficient the product is, where a generic SVD would
// pair the null singular subspaces arbitrarily.
inline CMat rss_focusing_from_product(const CMat& product) {
    const Eigen::Index M = product.rows();
    if (M != product.cols() || M < 1)
        throw std::invalid_argument("rss_focusing_from_product: need a square product");

    if ((product - product.adjoint().eval()).norm() <= 1e-12 * std::max(1.0, product.norm())) {
        Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (product + product.adjoint().eval()));
        if (!(es.eigenvalues().cwiseAbs().maxCoeff() > 1e-12))
            throw degenerate_focusing_error("rss_focusing_from_product: focusing product is numerically zero");
        // Optimal B is +1 on nonnegative eigendirections, -1 on negative ones.
        CMat B = CMat::Identity(M, M);
        for (Eigen::Index i = 0; i < M; ++i)
            if (es.eigenvalues()[i] < -1e-12)
                B -= 2.0 * es.eigenvectors().col(i) * es.eigenvectors().col(i).adjoint();
        return B;
    }

    Eigen::JacobiSVD<CMat> svd(product, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (!(svd.singularValues()(0) > 1e-12))
        throw degenerate_focusing_error("rss_focusing_from_product: focusing product is numerically zero");
    return svd.matrixV() * svd.matrixU().adjoint();
}

// Focusing matrix aligning the manifold at one frequency onto the reference
// frequency's manifold over a common set of directions: columns of a_freq and
// a_ref are steering vectors of the same directions at the two frequencies.
inline CMat rss_focusing_matrix(const CMat& a_freq, const CMat& a_ref) {
    if (a_freq.rows() != a_ref.rows() || a_freq.cols() != a_ref.cols() || a_freq.cols() < 1)
        throw std::invalid_argument("rss_focusing_matrix: manifold shapes differ");
    return rss_focusing_from_product(a_freq * a_ref.adjoint());
}

// Directions over which focusing products are accumulated: either an explicit
// list of points or structured per-region axes (rows of constant elevation
// crossed with an azimuth lattice plus optional extra columns).
struct FocusingAngles {
    std::vector<DoA> points;
    std::vector<RegionAxes> regions;
};

namespace detail {

// True when the azimuth lattice closes the full circle exactly, so the sum
// over it of exp(j x cos(phi - chi)) collapses to L * J0(x): closure makes
// every other Bessel order in the expansion vanish, and with at least 64
// lattice points the first surviving order J_L is far below double epsilon
// for any |x| this geometry can produce.
inline bool collapses_to_bessel(const RegionAxes& ax) {
    return ax.phi_full_circle && ax.phi_lattice_count >= 64 &&
           std::fabs(ax.phi_lattice_count * ax.phi_lattice_step_deg - 360.0) < 1e-9;
}

}  // namespace detail

// Accumulated cross products S_z = sum_over_directions a(f_z) a(f_ref)^H for
// each requested frequency. Structured full-circle lattices are folded
// analytically through J0 (see collapses_to_bessel); everything else is
// summed directly.
inline std::vector<CMat> focusing_products(const ArrayGeometry& g, double f_ref,
                                           std::span<const double> frequencies,
                                           const FocusingAngles& angles) {
    const int M = g.element_count;
    if (M > 64) throw std::invalid_argument("focusing_products: element count above supported limit");
    const std::size_t nz = frequencies.size();
    if (nz == 0) throw std::invalid_argument("focusing_products: no frequencies");
    if (angles.points.empty() && angles.regions.empty())
        throw std::invalid_argument("focusing_products: no directions");

    std::vector<CMat> out(nz, CMat::Zero(M, M));
    const double kappa_ref = detail::wavenumber_radius(g, f_ref);
    std::vector<double> kappa(nz);
    for (std::size_t z = 0; z < nz; ++z) {
        if (!(frequencies[z] > 0.0)) throw std::invalid_argument("focusing_products: nonpositive frequency");
        kappa[z] = detail::wavenumber_radius(g, frequencies[z]);
    }

    double cos_beta[64], sin_beta[64];
    for (int m = 0; m < M; ++m) {
        cos_beta[m] = std::cos(g.element_angle(m));
        sin_beta[m] = std::sin(g.element_angle(m));
    }

    // Direct accumulation of one direction into every frequency's product.
    cdouble a_ref[64], a_z[64];
    auto add_point = [&](double theta_deg, double phi_deg) {
        double st = std::sin(deg2rad(theta_deg));
        double cp = std::cos(deg2rad(phi_deg)), sp = std::sin(deg2rad(phi_deg));
        double u[64];
        for (int m = 0; m < M; ++m) u[m] = st * (cos_beta[m] * cp + sin_beta[m] * sp);
        for (int m = 0; m < M; ++m) a_ref[m] = std::polar(1.0, kappa_ref * u[m]);
        for (std::size_t z = 0; z < nz; ++z) {
            for (int m = 0; m < M; ++m) a_z[m] = std::polar(1.0, kappa[z] * u[m]);
            CMat& S = out[z];
            for (int m = 0; m < M; ++m)
                for (int mp = 0; mp < M; ++mp) S(m, mp) += a_z[m] * std::conj(a_ref[mp]);
        }
    };

    for (const DoA& p : angles.points) add_point(p.elevation_deg, p.azimuth_deg);

    for (const RegionAxes& ax : angles.regions) {
        if (detail::collapses_to_bessel(ax)) {
            const double L = static_cast<double>(ax.phi_lattice_count);
            for (std::size_t z = 0; z < nz; ++z) {
                CMat& S = out[z];
                for (double th : ax.theta_deg) {
                    double st = std::sin(deg2rad(th));
                    for (int m = 0; m < M; ++m)
                        for (int mp = 0; mp < M; ++mp) {
                            // rho e^{j chi} = kappa_z e^{j beta_m} - kappa_ref e^{j beta_mp}
                            double re = kappa[z] * cos_beta[m] - kappa_ref * cos_beta[mp];
                            double im = kappa[z] * sin_beta[m] - kappa_ref * sin_beta[mp];
                            double rho = std::hypot(re, im);
                            S(m, mp) += L * std::cyl_bessel_j(0.0, std::fabs(st) * rho);
                        }
                }
            }
            for (double th : ax.theta_deg)
                for (double ph : ax.phi_extra_deg) add_point(th, ph);
        } else {
            for (double th : ax.theta_deg)
                for (double ph : ax.phi_deg) add_point(th, ph);
        }
    }
    return out;
}

// Focused narrowband covariance: R = (1 / (K_f Z^2)) * sum_z B_z X_z X_z^H B_z^H
// over the selected bins. The 1/Z^2 undoes the unnormalized segment DFT gain
// regardless of how many bins were selected, so bin subsets stay on one scale.
inline CMat focused_covariance(const NarrowbandStack& stack, std::span<const int> bins,
                               std::span<const CMat> focusing) {
    if (bins.size() != focusing.size() || bins.empty())
        throw std::invalid_argument("focused_covariance: bins and focusing matrices must pair up");
    const int Z = static_cast<int>(stack.bins.size());
    const int M = Z > 0 ? static_cast<int>(stack.bins[0].rows()) : 0;
    if (Z == 0 || M == 0) throw std::invalid_argument("focused_covariance: empty stack");
    CMat R = CMat::Zero(M, M);
    for (std::size_t i = 0; i < bins.size(); ++i) {
        int z = bins[i];
        if (z < 0 || z >= Z) throw std::invalid_argument("focused_covariance: bin index out of range");
        if (focusing[i].rows() != M || focusing[i].cols() != M)
            throw std::invalid_argument("focused_covariance: focusing matrix shape mismatch");
        CMat Y = focusing[i] * stack.bins[static_cast<std::size_t>(z)];
        R += Y * Y.adjoint();
    }
    R /= static_cast<double>(stack.snapshots) * static_cast<double>(Z) * static_cast<double>(Z);
    return 0.5 * (R + R.adjoint().eval());
}

}  // namespace ucadoa
