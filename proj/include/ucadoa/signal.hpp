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

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

#include "array.hpp"
#include "common.hpp"

namespace ucadoa {

// One simulated capture: a linear up-chirp at complex baseband arriving over
// one or more paths, each a delayed replica of the same chirp from its own
// direction, observed in white noise.
struct ScenarioConfig {
    double center_frequency = 30e9;  // carrier the baseband is referenced to
    double bandwidth = 9e9;          // chirp sweep width, centered on the carrier
    double sample_rate = 11.25e9;
    double duration = 1e-6;          // observation window, seconds
    int fft_size = 32;               // segment length for the narrowband stack
    double snr_db = 10.0;            // per-source SNR against the total noise power
    bool noise_free = false;
    std::vector<DoA> path_doas = {DoA(60.0, 150.0)};
    double path_delay = 1e-9;           // extra delay of path n relative to path n-1
    bool time_domain_steering = false;  // exact wideband delays instead of per-bin phases

    int sample_count() const { return static_cast<int>(std::floor(duration * sample_rate)); }
    int snapshot_count() const { return sample_count() / fft_size; }

    // Noise variance that puts each unit-power source at snr_db against the
    // total noise floor: sigma^2 = N / 10^(snr/10).
    double noise_variance() const {
        if (noise_free) return 0.0;
        return static_cast<double>(path_doas.size()) / std::pow(10.0, snr_db / 10.0);
    }

    void validate(const ArrayGeometry& g) const {
        if (!(duration > 0.0)) throw std::invalid_argument("scenario: duration must be positive");
        if (!(sample_rate > 0.0)) throw std::invalid_argument("scenario: sample rate must be positive");
        if (fft_size < 2) throw std::invalid_argument("scenario: fft size must be at least 2");
        if (sample_count() < fft_size) throw std::invalid_argument("scenario: capture shorter than one segment");
        if (!(bandwidth > 0.0) || bandwidth > sample_rate)
            throw std::invalid_argument("scenario: bandwidth must lie in (0, sample_rate]");
        if (!(center_frequency > 0.5 * bandwidth))
            throw std::invalid_argument("scenario: band edge reaches a nonpositive frequency");
        if (!noise_free && !std::isfinite(snr_db)) throw std::invalid_argument("scenario: snr must be finite");
        if (path_delay < 0.0) throw std::invalid_argument("scenario: path delay must be nonnegative");
        if (path_doas.empty()) throw std::invalid_argument("scenario: no propagation paths");
        if (static_cast<int>(path_doas.size()) >= g.element_count)
            throw unidentifiable_scenario_error("scenario: needs fewer paths than array elements");
        // The ring must stay ambiguity-free up to the upper band edge.
        double f_top = center_frequency + 0.5 * bandwidth;
        if (g.radius_m > max_radius(g.element_count, f_top, g.light_speed) * (1.0 + 1e-12))
            throw std::invalid_argument("scenario: array radius ambiguous at the upper band edge");
    }
};

// Passband frequency of segment-DFT bin z (1-based). Bins above half the
// segment length alias to negative baseband offsets.
inline double bin_frequency(int z, int fft_size, double sample_rate, double center_frequency) {
    if (fft_size < 2) throw std::invalid_argument("bin_frequency: fft size must be at least 2");
    if (z < 1 || z > fft_size) throw std::invalid_argument("bin_frequency: bin index out of range");
    int k = z - 1;
    double offset = (k <= (fft_size - 1) / 2) ? k * sample_rate / fft_size
                                              : (k - fft_size) * sample_rate / fft_size;
    return center_frequency + offset;
}

struct TimeSamples {
    CMat samples;  // element-major: M rows, K_t complex samples each
    double sample_rate = 0.0;
};

struct NarrowbandStack {
    std::vector<CMat> bins;          // fft_size matrices, each M x snapshots
    std::vector<double> frequencies; // passband frequency per bin
    int snapshots = 0;
    double center_frequency = 0.0;
};

namespace detail {

// Baseband LFM chirp sweeping [-B/2, +B/2] over [0, t0), zero outside.
inline cdouble chirp_sample(double t, double t0, double bandwidth) {
    if (t < 0.0 || t >= t0) return {0.0, 0.0};
    return std::polar(1.0, pi * (bandwidth / t0) * t * t - pi * bandwidth * t);
}

inline CMat dft_matrix(int Z, double sign) {
    CMat W(Z, Z);
    for (int k = 0; k < Z; ++k)
        for (int t = 0; t < Z; ++t) W(k, t) = std::polar(1.0, sign * 2.0 * pi * k * t / Z);
    return W;
}

}  // namespace detail

// Per-bin spectra of the clean (unit-amplitude, undelayed-by-array) source
// waveforms: result[z] is N x n_segments, entry (n, seg) the unnormalized
// forward DFT of source n's samples in that segment at bin z. Source n is the
// chirp delayed by n * path_delay.
inline std::vector<CMat> clean_source_spectra(const ScenarioConfig& cfg, int n_segments) {
    const int Z = cfg.fft_size;
    const int N = static_cast<int>(cfg.path_doas.size());
    if (n_segments < 1) throw std::invalid_argument("clean_source_spectra: need at least one segment");
    CMat W = detail::dft_matrix(Z, -1.0);
    std::vector<CMat> out(static_cast<std::size_t>(Z), CMat::Zero(N, n_segments));
    CVec seg(Z);
    for (int n = 0; n < N; ++n) {
        double tau = n * cfg.path_delay;
        for (int s = 0; s < n_segments; ++s) {
            for (int t = 0; t < Z; ++t) {
                double time = (static_cast<double>(s) * Z + t) / cfg.sample_rate;
                seg[t] = detail::chirp_sample(time - tau, cfg.duration, cfg.bandwidth);
            }
            CVec spec = W * seg;
            for (int z = 0; z < Z; ++z) out[static_cast<std::size_t>(z)](n, s) = spec[z];
        }
    }
    return out;
}

// Simulates the array capture. By default each source is steered per segment
// bin: the clean spectra are multiplied by the steering vector at that bin's
// frequency and transformed back, which matches the stacked narrowband model
// exactly. With time_domain_steering the element delays are applied to the
// chirp waveform itself (plus the carrier phase of the delay), so the capture
// contains the true wideband signal rather than its per-bin approximation.
// Path delays act purely on the envelope in both modes; any constant carrier
// phase per path is a source amplitude factor the estimators are blind to.
inline TimeSamples synthesize_received(const ArrayGeometry& g, const ScenarioConfig& cfg,
                                       RandomStream& noise_rng) {
    cfg.validate(g);
    const int M = g.element_count;
    const int Z = cfg.fft_size;
    const int K_t = cfg.sample_count();
    const int n_seg = (K_t + Z - 1) / Z;
    const int N = static_cast<int>(cfg.path_doas.size());

    TimeSamples out;
    out.sample_rate = cfg.sample_rate;
    out.samples = CMat::Zero(M, K_t);

    if (!cfg.time_domain_steering) {
        std::vector<CMat> spectra = clean_source_spectra(cfg, n_seg);
        CMat Winv = detail::dft_matrix(Z, +1.0);  // unnormalized inverse, scaled below
        // Steered spectra per element, then one inverse transform per segment.
        CMat elem_spec(Z, n_seg);
        for (int m = 0; m < M; ++m) {
            elem_spec.setZero();
            for (int z = 0; z < Z; ++z) {
                double f = bin_frequency(z + 1, Z, cfg.sample_rate, cfg.center_frequency);
                for (int n = 0; n < N; ++n) {
                    cdouble a_m = steering_vector(g, f, cfg.path_doas[static_cast<std::size_t>(n)])[m];
                    elem_spec.row(z) += a_m * spectra[static_cast<std::size_t>(z)].row(n);
                }
            }
            CMat segs = (Winv * elem_spec) / static_cast<double>(Z);  // Z x n_seg time samples
            for (int k = 0; k < K_t; ++k) out.samples(m, k) = segs(k % Z, k / Z);
        }
    } else {
        double u[64];
        for (int n = 0; n < N; ++n) {
            const DoA& doa = cfg.path_doas[static_cast<std::size_t>(n)];
            detail::direction_factors(g, deg2rad(doa.elevation_deg), deg2rad(doa.azimuth_deg), u);
            double tau_path = n * cfg.path_delay;
            for (int m = 0; m < M; ++m) {
                double tau_m = -(g.radius_m / g.light_speed) * u[m];  // negative: arrives early
                cdouble carrier = std::polar(1.0, -2.0 * pi * cfg.center_frequency * tau_m);
                for (int k = 0; k < K_t; ++k) {
                    double t = k / cfg.sample_rate;
                    out.samples(m, k) +=
                        carrier * detail::chirp_sample(t - tau_path - tau_m, cfg.duration, cfg.bandwidth);
                }
            }
        }
    }

    double sigma2 = cfg.noise_variance();
    if (sigma2 > 0.0) {
        // Element-major draw order; fixed so captures are seed-reproducible.
        for (int m = 0; m < M; ++m)
            for (int k = 0; k < K_t; ++k) out.samples(m, k) += noise_rng.complex_normal(sigma2);
    }
    return out;
}

// Segments the capture into fft_size-long blocks and takes one unnormalized
// forward DFT per element per block. Trailing samples that do not fill a
// block are discarded. bins[z](m, s) is element m, segment s, bin z.
inline NarrowbandStack to_narrowband(const TimeSamples& ts, int fft_size, double center_frequency) {
    const int M = static_cast<int>(ts.samples.rows());
    const int K_t = static_cast<int>(ts.samples.cols());
    const int Z = fft_size;
    if (Z < 2) throw std::invalid_argument("to_narrowband: fft size must be at least 2");
    const int K_f = K_t / Z;
    if (K_f < 1) throw std::invalid_argument("to_narrowband: capture shorter than one segment");

    NarrowbandStack stack;
    stack.snapshots = K_f;
    stack.center_frequency = center_frequency;
    stack.frequencies.resize(static_cast<std::size_t>(Z));
    for (int z = 0; z < Z; ++z)
        stack.frequencies[static_cast<std::size_t>(z)] = bin_frequency(z + 1, Z, ts.sample_rate, center_frequency);

    stack.bins.assign(static_cast<std::size_t>(Z), CMat(M, K_f));
    CMat W = detail::dft_matrix(Z, -1.0);
    CMat seg(Z, K_f);
    for (int m = 0; m < M; ++m) {
        for (int s = 0; s < K_f; ++s)
            for (int t = 0; t < Z; ++t) seg(t, s) = ts.samples(m, s * Z + t);
        CMat spec = W * seg;  // Z x K_f
        for (int z = 0; z < Z; ++z) stack.bins[static_cast<std::size_t>(z)].row(m) = spec.row(z);
    }
    return stack;
}

// Coarse prior estimates: each truth perturbed per axis by sign * magnitude
// with magnitude uniform on [0, 2 * avg] (so its mean is avg) and sign a fair
// coin. Draw order per source: elevation magnitude, elevation sign, azimuth
// magnitude, azimuth sign. Elevation clips to [0, 90], azimuth wraps.
inline std::vector<DoA> make_pre_estimates(std::span<const DoA> truths, double avg_err_theta_deg,
                                           double avg_err_phi_deg, RandomStream& rng) {
    if (avg_err_theta_deg < 0.0 || avg_err_phi_deg < 0.0)
        throw std::invalid_argument("make_pre_estimates: average errors must be nonnegative");
    std::vector<DoA> out;
    out.reserve(truths.size());
    for (const DoA& t : truths) {
        double mag_t = rng.uniform() * 2.0 * avg_err_theta_deg;
        double sign_t = rng.uniform() < 0.5 ? -1.0 : 1.0;
        double mag_p = rng.uniform() * 2.0 * avg_err_phi_deg;
        double sign_p = rng.uniform() < 0.5 ? -1.0 : 1.0;
        double el = std::min(std::max(t.elevation_deg + sign_t * mag_t, 0.0), 90.0);
        out.emplace_back(el, t.azimuth_deg + sign_p * mag_p);
    }
    return out;
}

namespace detail {

inline void put_u32(std::string& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& b, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& b, double v) { put_u64(b, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}
inline std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}
inline double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_u64(p)); }

}  // namespace detail

// Raw I/Q dump, little-endian throughout. 32-byte header:
//   offset  0: magic "UCAIQ\0" then two zero bytes
//   offset  8: u32 element count, u32 reserved (zero)
//   offset 16: u64 sample count per element
//   offset 24: f64 sample rate in Hz
// followed by element-major samples, each an f64 re / f64 im pair.
inline void write_time_samples(const std::filesystem::path& path, const TimeSamples& ts) {
    const int M = static_cast<int>(ts.samples.rows());
    const int K_t = static_cast<int>(ts.samples.cols());
    std::string buf;
    buf.reserve(32 + static_cast<std::size_t>(M) * K_t * 16);
    buf.append("UCAIQ", 6);  // includes the terminator
    buf.push_back('\0');
    buf.push_back('\0');
    detail::put_u32(buf, static_cast<std::uint32_t>(M));
    detail::put_u32(buf, 0);
    detail::put_u64(buf, static_cast<std::uint64_t>(K_t));
    detail::put_f64(buf, ts.sample_rate);
    for (int m = 0; m < M; ++m)
        for (int k = 0; k < K_t; ++k) {
            detail::put_f64(buf, ts.samples(m, k).real());
            detail::put_f64(buf, ts.samples(m, k).imag());
        }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("write_time_samples: cannot open " + path.string());
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("write_time_samples: short write to " + path.string());
}

inline TimeSamples read_time_samples(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_time_samples: cannot open " + path.string());
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (data.size() < 32 || std::memcmp(data.data(), "UCAIQ\0\0\0", 8) != 0)
        throw std::runtime_error("read_time_samples: not a ucadoa I/Q dump: " + path.string());
    const auto* p = reinterpret_cast<const unsigned char*>(data.data());
    std::uint32_t M = detail::get_u32(p + 8);
    std::uint64_t K_t = detail::get_u64(p + 16);
    double fs = detail::get_f64(p + 24);
    if (M == 0 || K_t == 0 || !(fs > 0.0))
        throw std::runtime_error("read_time_samples: corrupt header in " + path.string());
    if (data.size() != 32 + static_cast<std::size_t>(M) * K_t * 16)
        throw std::runtime_error("read_time_samples: truncated payload in " + path.string());
    TimeSamples ts;
    ts.sample_rate = fs;
    ts.samples.resize(static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(K_t));
    const unsigned char* q = p + 32;
    for (std::uint32_t m = 0; m < M; ++m)
        for (std::uint64_t k = 0; k < K_t; ++k) {
            double re = detail::get_f64(q);
            double im = detail::get_f64(q + 8);
            ts.samples(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = {re, im};
            q += 16;
        }
    return ts;
}

}  // namespace ucadoa
