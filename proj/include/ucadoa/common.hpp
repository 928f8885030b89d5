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
#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ucadoa {

using cdouble = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

constexpr double pi = 3.141592653589793238462643383279502884;

// Free-space propagation speed used when a caller does not supply one.
constexpr double default_light_speed = 2.99792458e8;

// Thrown when a spatial covariance matrix cannot support subspace processing
// (non-Hermitian input, or no strictly positive eigenvalue).
struct degenerate_covariance_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when a focusing product is numerically rank-deficient so no
// meaningful unitary alignment exists.
struct degenerate_focusing_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when a scenario cannot be estimated at all, e.g. at least as many
// propagation paths as array elements.
struct unidentifiable_scenario_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown when an array power pattern has no 3 dB drop inside the visible
// region, so a beamwidth is undefined.
struct degenerate_pattern_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown by the harness configuration loader on malformed input.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double deg2rad(double deg) { return deg * (pi / 180.0); }
inline double rad2deg(double rad) { return rad * (180.0 / pi); }

// Wraps an azimuth into [0, 360).
inline double wrap_360(double deg) {
    double w = std::fmod(deg, 360.0);
    if (w < 0.0) w += 360.0;
    if (w >= 360.0) w = 0.0;  // fmod can round back up to the modulus
    return w;
}

// Shortest angular distance between two azimuths, in [0, 180].
inline double azimuth_distance(double a_deg, double b_deg) {
    double d = std::fabs(wrap_360(a_deg) - wrap_360(b_deg));
    return std::min(d, 360.0 - d);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Order-sensitive combination of a seed with a stream tag. Used to derive
// independent child streams; collisions between (seed, tag) pairs used in one
// run would correlate streams, hence the full 64-bit mix.
inline std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t tag) {
    return splitmix64(seed ^ (0x9e3779b97f4a7c15ULL + (tag << 1) + (tag >> 3)));
}

// Deterministic random stream with explicit, documented draw semantics.
//
// All distribution logic lives here rather than in <random> distribution
// templates because those are implementation-defined: two standard libraries
// may produce different sequences from the same engine. Reproducibility of
// experiment outputs across toolchains requires pinning the mapping from raw
// engine words to variates.
class RandomStream {
  public:
    explicit RandomStream(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return std::ldexp(static_cast<double>(engine_() >> 11), -53); }

    double uniform_in(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Bias is below 2^-23 for any n < 2^30.
    int uniform_int(int n) {
        if (n < 1) throw std::invalid_argument("uniform_int: n must be positive");
        int v = static_cast<int>(uniform() * n);
        return v < n ? v : n - 1;
    }

    // Circularly symmetric complex Gaussian with E|w|^2 = variance.
    cdouble complex_normal(double variance) {
        if (variance < 0.0) throw std::invalid_argument("complex_normal: negative variance");
        double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        double u2 = uniform();
        double r = std::sqrt(-variance * std::log(u1));
        return {r * std::cos(2.0 * pi * u2), r * std::sin(2.0 * pi * u2)};
    }

    // Real Gaussian N(0, variance).
    double normal(double variance) { return complex_normal(2.0 * variance).real(); }

    // Independent child stream addressed by tag; depends only on this
    // stream's seed, not on how many draws were consumed.
    RandomStream fork(std::uint64_t tag) const { return RandomStream(combine_seed(seed_, tag)); }

    std::uint64_t seed() const { return seed_; }

  private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace ucadoa
