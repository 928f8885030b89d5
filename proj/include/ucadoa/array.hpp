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

#include "common.hpp"

namespace ucadoa {

// Direction of arrival. Elevation is measured from the array plane's zenith
// axis boresight convention used throughout: 0 deg points along the z axis,
// 90 deg lies in the array plane. Azimuth is counterclockwise from the x axis
// and is stored wrapped into [0, 360).
struct DoA {
    double elevation_deg = 0.0;
    double azimuth_deg = 0.0;

    DoA() = default;
    DoA(double elevation, double azimuth) {
        // Allow a hair of numeric overshoot from upstream trig, then clamp.
        if (!(elevation >= -1e-9 && elevation <= 90.0 + 1e-9))
            throw std::invalid_argument("DoA: elevation must lie in [0, 90] degrees");
        elevation_deg = std::min(std::max(elevation, 0.0), 90.0);
        azimuth_deg = wrap_360(azimuth);
    }
};

// Largest admissible ring radius: a quarter of the shortest wavelength of
// interest divided by sin(pi/M), which keeps adjacent elements within half
// that wavelength of each other and the manifold free of grating ambiguities
// over the band.
inline double max_radius(int element_count, double f_max, double c = default_light_speed) {
    if (element_count < 3) throw std::invalid_argument("max_radius: need at least 3 elements");
    if (!(f_max > 0.0) || !(c > 0.0)) throw std::invalid_argument("max_radius: f_max and c must be positive");
    return c / f_max / (4.0 * std::sin(pi / element_count));
}

// Uniform circular array: element m sits at angle 2*pi*m/M on a ring of the
// given radius in the z = 0 plane. Phase reference is the ring center.
struct ArrayGeometry {
    int element_count = 0;
    double radius_m = 0.0;
    double light_speed = default_light_speed;

    ArrayGeometry(int elements, double radius, double f_max_check, double c = default_light_speed)
        : element_count(elements), radius_m(radius), light_speed(c) {
        if (elements < 3) throw std::invalid_argument("ArrayGeometry: need at least 3 elements");
        if (!(radius > 0.0)) throw std::invalid_argument("ArrayGeometry: radius must be positive");
        if (!(c > 0.0)) throw std::invalid_argument("ArrayGeometry: light speed must be positive");
        double r_max = max_radius(elements, f_max_check, c);
        if (radius > r_max * (1.0 + 1e-12))
            throw std::invalid_argument("ArrayGeometry: radius exceeds the ambiguity-free limit for f_max");
    }

    double element_angle(int m) const { return 2.0 * pi * m / element_count; }

    // Convenience factory: the largest ambiguity-free ring for a band edge.
    static ArrayGeometry max_for(int elements, double f_max, double c = default_light_speed) {
        return ArrayGeometry(elements, max_radius(elements, f_max, c), f_max, c);
    }
};

namespace detail {

// Direction factor u_m = sin(theta) * cos(beta_m - phi), the projection of a
// unit arrival direction onto element m's position divided by the radius.
inline void direction_factors(const ArrayGeometry& g, double theta_rad, double phi_rad, double* u) {
    double st = std::sin(theta_rad);
    double cp = std::cos(phi_rad), sp = std::sin(phi_rad);
    for (int m = 0; m < g.element_count; ++m) {
        double beta = g.element_angle(m);
        u[m] = st * (std::cos(beta) * cp + std::sin(beta) * sp);
    }
}

inline double wavenumber_radius(const ArrayGeometry& g, double f_hz) {
    return 2.0 * pi * g.radius_m * f_hz / g.light_speed;
}

}  // namespace detail

// Steering vector at frequency f: entry m is exp(j * kappa * u_m) with
// kappa = 2*pi*r*f/c. The center-referenced phase makes the vector reduce to
// all ones at zenith for every frequency.
inline CVec steering_vector(const ArrayGeometry& g, double f_hz, const DoA& doa) {
    if (!(f_hz > 0.0)) throw std::invalid_argument("steering_vector: frequency must be positive");
    const int M = g.element_count;
    double u[64];
    if (M > 64) throw std::invalid_argument("steering_vector: element count above supported limit");
    detail::direction_factors(g, deg2rad(doa.elevation_deg), deg2rad(doa.azimuth_deg), u);
    double kappa = detail::wavenumber_radius(g, f_hz);
    CVec a(M);
    for (int m = 0; m < M; ++m) a[m] = std::polar(1.0, kappa * u[m]);
    return a;
}

// Manifold matrix: one steering column per direction.
inline CMat manifold_matrix(const ArrayGeometry& g, double f_hz, std::span<const DoA> doas) {
    CMat A(g.element_count, static_cast<Eigen::Index>(doas.size()));
    for (std::size_t n = 0; n < doas.size(); ++n) A.col(static_cast<Eigen::Index>(n)) = steering_vector(g, f_hz, doas[n]);
    return A;
}

struct SteeringDerivatives {
    CVec d_elevation;  // per radian of elevation
    CVec d_azimuth;    // per radian of azimuth
};

// Analytic derivatives of the steering vector with respect to the two angles,
// in radians. Entry m of d_elevation is j*kappa*cos(theta)*cos(beta_m - phi)
// times the steering entry; d_azimuth is j*kappa*sin(theta)*sin(beta_m - phi)
// times it.
inline SteeringDerivatives steering_derivatives(const ArrayGeometry& g, double f_hz, const DoA& doa) {
    if (!(f_hz > 0.0)) throw std::invalid_argument("steering_derivatives: frequency must be positive");
    const int M = g.element_count;
    double theta = deg2rad(doa.elevation_deg), phi = deg2rad(doa.azimuth_deg);
    double kappa = detail::wavenumber_radius(g, f_hz);
    double st = std::sin(theta), ct = std::cos(theta);
    SteeringDerivatives d;
    d.d_elevation.resize(M);
    d.d_azimuth.resize(M);
    for (int m = 0; m < M; ++m) {
        double beta = g.element_angle(m);
        double cbp = std::cos(beta - phi), sbp = std::sin(beta - phi);
        cdouble a = std::polar(1.0, kappa * st * cbp);
        d.d_elevation[m] = cdouble(0.0, kappa * ct * cbp) * a;
        d.d_azimuth[m] = cdouble(0.0, kappa * st * sbp) * a;
    }
    return d;
}

struct Beamwidths {
    double elevation_deg = 0.0;  // full 3 dB width of the zenith beam, x-z plane cut
    double azimuth_deg = 0.0;    // same, y-z plane cut
};

// 3 dB beamwidths of the quiescent (uniformly weighted, zenith-steered)
// pattern at the given frequency. The pattern P(theta, phi) =
// |sum_m exp(j kappa sin(theta) cos(beta_m - phi))|^2 peaks at theta = 0 with
// value M^2; each principal-plane cut is scanned in 0.01 deg steps until the
// power first falls to half the peak, and the width is twice that angle.
inline Beamwidths quiescent_beamwidths(const ArrayGeometry& g, double f_hz) {
    if (!(f_hz > 0.0)) throw std::invalid_argument("quiescent_beamwidths: frequency must be positive");
    const int M = g.element_count;
    const double half_power = 0.5 * M * M;
    auto cut_width = [&](double phi_cut_deg) {
        for (int k = 1; k <= 9000; ++k) {
            double theta = 0.01 * k;
            CVec a = steering_vector(g, f_hz, DoA(theta, phi_cut_deg));
            cdouble s = a.sum();
            if (std::norm(s) <= half_power) return 2.0 * theta;
        }
        throw degenerate_pattern_error("quiescent_beamwidths: no 3 dB drop inside the visible region");
    };
    Beamwidths bw;
    bw.elevation_deg = cut_width(0.0);
    bw.azimuth_deg = cut_width(90.0);
    return bw;
}

}  // namespace ucadoa
