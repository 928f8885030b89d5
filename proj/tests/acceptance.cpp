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

// Acceptance gate: ten end-to-end checks of the estimation pipeline, run on
// pinned configurations with a pinned master seed so every number below is
// reproducible bit for bit. Each check prints one PASS/FAIL line plus
// indented evidence; the exit code is the number of failed checks.
//
// Checks that depend on Monte-Carlo batches share two batches: a four-point
// SNR sweep of the incremental estimator and a fixed-SNR comparison run of
// all three interval-based estimators. The sweep is re-derived trial by
// trial with per-iteration traces kept, which supplies the per-trial error
// population (for standard errors) and the per-iteration cost estimates.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

#include <ucadoa/harness.hpp>

using namespace ucadoa;

namespace {

struct Check {
    bool pass = true;
    std::vector<std::string> detail;

    void fail(const std::string& line) {
        pass = false;
        detail.push_back(line + "  <-- VIOLATION");
    }
    void note(const std::string& line) { detail.push_back(line); }
};

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

constexpr std::uint64_t kMasterSeed = 1;
constexpr double kDeskDuration = 1e-6;

std::vector<std::vector<DoA>> single_source_groups() {
    std::vector<std::vector<DoA>> out;
    for (const auto& g : reference_direction_groups())
        if (g.size() == 1) out.push_back(g);
    return out;
}

// Batch for the SNR-sweep checks: incremental estimator only.
ExperimentConfig sweep_batch_config() {
    ExperimentConfig cfg;
    cfg.scenario.duration = kDeskDuration;
    cfg.methods = {Method::ripf};
    cfg.doa_groups = single_source_groups();
    cfg.trials = 50;
    cfg.sweep_axis = SweepAxis::snr;
    cfg.sweep_values = {-10.0, 0.0, 10.0, 20.0};
    cfg.master_seed = kMasterSeed;
    cfg.threads = 1;
    return cfg;
}

// Batch for the fixed-SNR accuracy comparison against the reference methods.
ExperimentConfig comparison_batch_config() {
    ExperimentConfig cfg;
    cfg.scenario.duration = kDeskDuration;
    cfg.scenario.snr_db = 10.0;
    cfg.methods = {Method::ripf, Method::r_csm, Method::i2d_csm};
    cfg.doa_groups = single_source_groups();
    cfg.trials = 50;
    cfg.master_seed = kMasterSeed;
    cfg.threads = 1;
    return cfg;
}

// Batch for the wall-time ranking: coarse grid, timing enabled.
ExperimentConfig timing_batch_config() {
    ExperimentConfig cfg = comparison_batch_config();
    cfg.ripf.step_theta_deg = 1.0;
    cfg.ripf.step_phi_deg = 1.0;
    cfg.measure_wall_time = true;
    return cfg;
}

const ResultRow* find_row(const ResultTable& table, Method m, double sweep_value) {
    for (const ResultRow& r : table.rows)
        if (r.method == m && r.sweep_value == sweep_value) return &r;
    return nullptr;
}

// ---------------------------------------------------------------------------
// 1. Focusing alignment: aligning a manifold onto itself gives the identity,
//    and every alignment matrix is unitary.

Check check_focusing_identity() {
    Check c;
    RandomStream rng(101);
    const double f_ref = 30e9, f_hi = 34.5e9, f_lo = 25.5e9;
    double worst_identity = 0.0, worst_unitary = 0.0;

    for (int rep = 0; rep < 1000; ++rep) {
        const int m = 4 + rng.uniform_int(5);
        const ArrayGeometry g(m, max_radius(m, f_hi), f_hi);
        const double f_z = rng.uniform_in(f_lo, f_hi);
        std::vector<DoA> pts(static_cast<std::size_t>(1 + rng.uniform_int(6)));
        for (DoA& p : pts) p = DoA(rng.uniform_in(2.0, 88.0), rng.uniform_in(0.0, 360.0));

        const CMat a_ref = manifold_matrix(g, f_ref, pts);
        const CMat b = rss_focusing_matrix(manifold_matrix(g, f_z, pts), a_ref);
        const CMat eye = CMat::Identity(m, m);
        worst_unitary = std::max(worst_unitary, (b.adjoint() * b - eye).norm());
        worst_identity = std::max(worst_identity, (rss_focusing_matrix(a_ref, a_ref) - eye).norm());

        // Same claims through the accumulated-product path the estimators use.
        const double fz[2] = {f_z, f_ref};
        FocusingAngles angles;
        angles.points = pts;
        const std::vector<CMat> prods = focusing_products(g, f_ref, fz, angles);
        worst_unitary =
            std::max(worst_unitary, (rss_focusing_from_product(prods[0]).adjoint() *
                                         rss_focusing_from_product(prods[0]) -
                                     eye)
                                        .norm());
        worst_identity =
            std::max(worst_identity, (rss_focusing_from_product(prods[1]) - eye).norm());
    }

    c.note(fmt("1000 random cases, 4..8 elements, frequencies %.1f..%.1f GHz", f_lo / 1e9,
               f_hi / 1e9));
    if (worst_identity <= 1e-10)
        c.note(fmt("matched-frequency alignment vs identity: worst %.3e (tol 1e-10)",
                   worst_identity));
    else
        c.fail(fmt("matched-frequency alignment vs identity: worst %.3e > 1e-10", worst_identity));
    if (worst_unitary <= 1e-9)
        c.note(fmt("unitarity residual: worst %.3e (tol 1e-9)", worst_unitary));
    else
        c.fail(fmt("unitarity residual: worst %.3e > 1e-9", worst_unitary));
    return c;
}

// ---------------------------------------------------------------------------
// Shared helpers for the bound checks: a pinned small scenario family with
// 5 elements, one source, 2 snapshots, 2 bins.

CrbScenario random_small_scenario(RandomStream& rng) {
    const double f_hi = 34.5e9;
    CrbScenario scn(ArrayGeometry(5, max_radius(5, f_hi), f_hi));
    scn.doas = {DoA(rng.uniform_in(10.0, 80.0), rng.uniform_in(0.0, 360.0))};
    double f1 = rng.uniform_in(25.5e9, f_hi), f2 = rng.uniform_in(25.5e9, f_hi);
    scn.frequencies = {std::min(f1, f2), std::max(f1, f2)};
    scn.noise_variance = rng.uniform_in(0.2, 2.0);
    scn.source_spectra.assign(2, CMat(1, 2));
    for (CMat& s : scn.source_spectra)
        for (int k = 0; k < 2; ++k) s(0, k) = rng.complex_normal(1.0);
    return scn;
}

NarrowbandStack exact_observations(const CrbScenario& scn) {
    NarrowbandStack st;
    st.center_frequency = scn.frequencies.front();
    st.frequencies = scn.frequencies;
    st.snapshots = scn.snapshot_count();
    for (std::size_t z = 0; z < scn.frequencies.size(); ++z)
        st.bins.push_back(manifold_matrix(scn.geometry, scn.frequencies[z], scn.doas) *
                          scn.source_spectra[z]);
    return st;
}

// 2. The closed-form bound equals the corresponding block of the inverted
//    information matrix, and the Hadamard evaluation equals the closed form.

Check check_bound_consistency() {
    Check c;
    RandomStream rng(202);
    double worst_block = 0.0, worst_hadamard = 0.0;
    const double deg2 = (180.0 / pi) * (180.0 / pi);

    for (int rep = 0; rep < 100; ++rep) {
        const CrbScenario scn = random_small_scenario(rng);
        const FisherMatrix fisher = fisher_matrix(scn);
        const Mat inv = fisher.matrix.partialPivLu().inverse();
        const int off = fisher.doa_offset();
        const Mat block = deg2 * inv.block(off, off, 2, 2);

        const CrbResult closed = crb_closed_form(scn);
        const CrbResult hadamard = crb_hadamard_form(scn);
        worst_block =
            std::max(worst_block, (block - closed.doa_block).norm() / closed.doa_block.norm());
        worst_hadamard = std::max(worst_hadamard, (hadamard.doa_block - closed.doa_block).norm() /
                                                      closed.doa_block.norm());
    }

    c.note("100 random one-source scenarios, 5 elements, 2 snapshots x 2 bins");
    if (worst_block <= 1e-8)
        c.note(fmt("closed form vs inverted information block: worst rel %.3e (tol 1e-8)",
                   worst_block));
    else
        c.fail(fmt("closed form vs inverted information block: worst rel %.3e > 1e-8",
                   worst_block));
    if (worst_hadamard <= 1e-10)
        c.note(fmt("element-wise form vs closed form: worst rel %.3e (tol 1e-10)",
                   worst_hadamard));
    else
        c.fail(fmt("element-wise form vs closed form: worst rel %.3e > 1e-10", worst_hadamard));
    return c;
}

// 3. The analytic information matrix matches the covariance of the
//    finite-difference score vector over 1e5 noise draws on the dominant
//    entries (those above 1e-6 of the matrix norm).

Check check_information_monte_carlo() {
    Check c;
    RandomStream rng(303);
    CrbScenario scn(ArrayGeometry(5, max_radius(5, 34.5e9), 34.5e9));
    scn.doas = {DoA(40.0, 120.0)};
    scn.frequencies = {28e9, 33e9};
    scn.noise_variance = 0.8;
    scn.source_spectra.assign(2, CMat(1, 2));
    for (CMat& s : scn.source_spectra)
        for (int k = 0; k < 2; ++k) s(0, k) = rng.complex_normal(1.0);

    const FisherMatrix analytic = fisher_matrix(scn);
    const int dim = static_cast<int>(analytic.matrix.rows());
    const NarrowbandStack clean = exact_observations(scn);
    const double zs2 = scn.bin_count() * scn.noise_variance;
    const double rad_per_deg = pi / 180.0;

    auto score = [&](const NarrowbandStack& obs) {
        Vec sc(dim);
        auto at = [&](auto&& mutate) {
            CrbScenario s = scn;
            mutate(s);
            return log_likelihood(s, obs);
        };
        const double hs = 1e-6 * scn.noise_variance;
        sc[0] = (at([&](CrbScenario& s) { s.noise_variance += hs; }) -
                 at([&](CrbScenario& s) { s.noise_variance -= hs; })) /
                (2 * hs);
        const double h = 1e-6;
        int idx = 1;
        for (int z = 0; z < 2; ++z)
            for (int k = 0; k < 2; ++k) {
                sc[idx++] = (at([&](CrbScenario& s) { s.source_spectra[z](0, k) += h; }) -
                             at([&](CrbScenario& s) { s.source_spectra[z](0, k) -= h; })) /
                            (2 * h);
                sc[idx++] = (at([&](CrbScenario& s) { s.source_spectra[z](0, k) += cdouble(0, h); }) -
                             at([&](CrbScenario& s) { s.source_spectra[z](0, k) -= cdouble(0, h); })) /
                            (2 * h);
            }
        const double hd = 1e-5;
        sc[idx++] = (at([&](CrbScenario& s) { s.doas[0].elevation_deg += hd; }) -
                     at([&](CrbScenario& s) { s.doas[0].elevation_deg -= hd; })) /
                    (2 * hd * rad_per_deg);
        sc[idx++] = (at([&](CrbScenario& s) { s.doas[0].azimuth_deg += hd; }) -
                     at([&](CrbScenario& s) { s.doas[0].azimuth_deg -= hd; })) /
                    (2 * hd * rad_per_deg);
        return sc;
    };

    Mat acc = Mat::Zero(dim, dim);
    const int draws = 100000;
    for (int t = 0; t < draws; ++t) {
        NarrowbandStack obs = clean;
        for (CMat& b : obs.bins)
            for (int i = 0; i < b.rows(); ++i)
                for (int k = 0; k < b.cols(); ++k) b(i, k) += rng.complex_normal(zs2);
        const Vec sc = score(obs);
        acc.noalias() += sc * sc.transpose();
    }
    acc /= draws;

    const double dominant = 1e-6 * analytic.matrix.norm();
    double worst = 0.0;
    int compared = 0;
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) {
            if (std::fabs(analytic.matrix(i, j)) <= dominant) continue;
            ++compared;
            worst = std::max(worst, std::fabs(acc(i, j) - analytic.matrix(i, j)) /
                                        std::fabs(analytic.matrix(i, j)));
        }

    c.note(fmt("%d draws, %dx%d matrix, %d dominant entries compared", draws, dim, dim, compared));
    if (compared < dim)
        c.fail(fmt("dominant-entry count %d is implausibly small", compared));
    if (worst <= 0.05)
        c.note(fmt("worst dominant-entry relative gap %.4f (tol 0.05)", worst));
    else
        c.fail(fmt("worst dominant-entry relative gap %.4f > 0.05", worst));
    return c;
}

// ---------------------------------------------------------------------------
// 4. Fourth moments of the simulated bin noise: the squared bin energy and
//    the cross-bin energy product match the white-Gaussian predictions.

Check check_noise_fourth_moments() {
    Check c;
    ScenarioConfig cfg;
    cfg.duration = 5e-8;  // small stack; the statistics pool over bins anyway
    const double f_hi = cfg.center_frequency + cfg.bandwidth / 2.0;
    const ArrayGeometry g(5, max_radius(5, f_hi), f_hi);
    cfg.validate(g);

    ScenarioConfig clean_cfg = cfg;
    clean_cfg.noise_free = true;
    RandomStream unused(0);
    const TimeSamples ts_clean = synthesize_received(g, clean_cfg, unused);

    const double m = g.element_count;
    const double z = cfg.fft_size;
    const double s2 = cfg.noise_variance();
    const double expect_same = m * (m + 1.0) * z * z * s2 * s2;
    const double expect_cross = m * m * z * z * s2 * s2;

    double acc_same = 0.0, acc_cross = 0.0;
    std::int64_t n_same = 0, n_cross = 0;
    const int draws = 10000;
    std::vector<double> energies;
    for (int t = 0; t < draws; ++t) {
        RandomStream rng(combine_seed(404, static_cast<std::uint64_t>(t)));
        TimeSamples ts = synthesize_received(g, cfg, rng);
        ts.samples -= ts_clean.samples;  // the deterministic signal cancels exactly
        const NarrowbandStack noise = to_narrowband(ts, cfg.fft_size, cfg.center_frequency);

        energies.clear();
        for (const CMat& bin : noise.bins)
            for (int k = 0; k < bin.cols(); ++k) energies.push_back(bin.col(k).squaredNorm());
        for (double e : energies) {
            acc_same += e * e;
            ++n_same;
        }
        for (std::size_t j = 0; j + 1 < energies.size(); j += 2) {
            acc_cross += energies[j] * energies[j + 1];
            ++n_cross;
        }
    }
    const double got_same = acc_same / static_cast<double>(n_same);
    const double got_cross = acc_cross / static_cast<double>(n_cross);
    const double rel_same = std::fabs(got_same - expect_same) / expect_same;
    const double rel_cross = std::fabs(got_cross - expect_cross) / expect_cross;

    c.note(fmt("%d noise draws through the full time-to-bin pipeline, %lld bin energies", draws,
               static_cast<long long>(n_same)));
    if (rel_same <= 0.05)
        c.note(fmt("same-bin squared energy: %.4g vs predicted %.4g (rel %.4f, tol 0.05)",
                   got_same, expect_same, rel_same));
    else
        c.fail(fmt("same-bin squared energy: %.4g vs predicted %.4g (rel %.4f > 0.05)", got_same,
                   expect_same, rel_same));
    if (rel_cross <= 0.05)
        c.note(fmt("distinct-bin energy product: %.4g vs predicted %.4g (rel %.4f, tol 0.05)",
                   got_cross, expect_cross, rel_cross));
    else
        c.fail(fmt("distinct-bin energy product: %.4g vs predicted %.4g (rel %.4f > 0.05)",
                   got_cross, expect_cross, rel_cross));
    return c;
}

// ---------------------------------------------------------------------------
// 5. Noiseless recovery: with exact pre-estimates and no noise, every
//    reference direction group should be recovered within half a grid step.

Check check_noiseless_recovery() {
    Check c;
    ExperimentConfig cfg;
    cfg.scenario.duration = kDeskDuration;
    cfg.scenario.noise_free = true;
    cfg.master_seed = kMasterSeed;
    const ArrayGeometry geom = make_geometry(cfg);
    const auto groups = reference_direction_groups();
    const double half_step = cfg.ripf.step_theta_deg / 2.0 + 1e-9;

    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const std::vector<DoA>& truth = groups[gi];
        ScenarioConfig sc = cfg.scenario;
        sc.path_doas = truth;

        RandomStream root(detail::trial_seed(cfg.master_seed, 0, static_cast<int>(gi), 0));
        RandomStream noise_rng = root.fork(0);
        const TimeSamples ts = synthesize_received(geom, sc, noise_rng);
        const NarrowbandStack stack = to_narrowband(ts, sc.fft_size, sc.center_frequency);
        RandomStream est_rng = root.fork(16 + static_cast<std::uint64_t>(Method::ripf));
        const EstimationResult r = ripf_csm(stack, truth, geom, cfg.ripf, est_rng);

        double worst_theta = 0.0, worst_phi = 0.0;
        for (const DoA& t : truth) {
            double best_t = 1e9, best_p = 1e9;
            for (const DoA& e : r.estimates) {
                const double dt = std::fabs(e.elevation_deg - t.elevation_deg);
                double dp = std::fabs(e.azimuth_deg - t.azimuth_deg);
                dp = std::min(dp, 360.0 - dp);
                if (std::max(dt, dp) < std::max(best_t, best_p)) {
                    best_t = dt;
                    best_p = dp;
                }
            }
            worst_theta = std::max(worst_theta, best_t);
            worst_phi = std::max(worst_phi, best_p);
        }
        const bool ok = worst_theta <= half_step && worst_phi <= half_step &&
                        r.estimates.size() == truth.size();
        const std::string line =
            fmt("group %zu (n=%zu): found %zu, worst elevation error %.3f, azimuth %.3f deg", gi,
                truth.size(), r.estimates.size(), worst_theta, worst_phi);
        if (ok)
            c.note(line);
        else
            c.fail(line);
    }
    if (!c.pass)
        c.note("note: a failed group converged on a small focus set whose joint alignment "
               "residual holds one source a single lattice step off; most bin draw orders "
               "recover it exactly");
    return c;
}

// ---------------------------------------------------------------------------
// Re-derivation of the sweep batch, trial by trial, with traces kept. The
// pooled outcomes are cross-checked bitwise against the batch rows, so the
// standard errors and per-iteration costs below describe exactly the same
// runs.

struct SweepPointData {
    double snr = 0.0;
    std::vector<TrialOutcome> outcomes;               // group-major, trial-minor
    std::vector<std::vector<EstimatorState>> traces;  // parallel to outcomes
};

std::vector<SweepPointData> rederive_sweep_with_traces(const ExperimentConfig& cfg) {
    const ArrayGeometry geom = make_geometry(cfg);
    std::vector<SweepPointData> points;
    for (std::size_t s = 0; s < cfg.sweep_values.size(); ++s) {
        SweepPointData data;
        data.snr = cfg.sweep_values[s];
        ScenarioConfig scenario = cfg.scenario;
        RipfParams ripf = cfg.ripf;
        apply_sweep(cfg.sweep_axis, data.snr, scenario, ripf);

        for (std::size_t g = 0; g < cfg.doa_groups.size(); ++g)
            for (int t = 0; t < cfg.trials; ++t) {
                const std::vector<DoA>& truth = cfg.doa_groups[g];
                ScenarioConfig sc = scenario;
                sc.path_doas = truth;

                RandomStream root(detail::trial_seed(cfg.master_seed, static_cast<int>(s),
                                                     static_cast<int>(g), t));
                RandomStream noise_rng = root.fork(0);
                RandomStream pre_rng = root.fork(1);
                const TimeSamples ts = synthesize_received(geom, sc, noise_rng);
                const NarrowbandStack stack = to_narrowband(ts, sc.fft_size, sc.center_frequency);
                const std::vector<DoA> pre = make_pre_estimates(truth, ripf.avg_err_theta_deg,
                                                                ripf.avg_err_phi_deg, pre_rng);
                RandomStream est_rng = root.fork(16 + static_cast<std::uint64_t>(Method::ripf));
                EstimationResult r = ripf_csm(stack, pre, geom, ripf, est_rng);

                TrialOutcome out;
                out.truth = truth;
                out.estimates = r.estimates;
                out.iterations_used = static_cast<int>(r.trace.size());
                for (const EstimatorState& st : r.trace) out.flops_estimate += st.flops_estimate;
                data.outcomes.push_back(std::move(out));
                data.traces.push_back(std::move(r.trace));
            }
        points.push_back(std::move(data));
    }
    return points;
}

// Standard error of the pooled RMSE by the delta method: RMSE^2 is a mean of
// independent per-trial squared errors, so SE(RMSE) = SE(mean)/(2 RMSE).
double rmse_standard_error(const std::vector<TrialOutcome>& outcomes) {
    std::vector<double> sq;
    sq.reserve(outcomes.size());
    for (const TrialOutcome& out : outcomes) {
        const double r = rmse(std::span<const TrialOutcome>(&out, 1));
        sq.push_back(r * r);
    }
    const double n = static_cast<double>(sq.size());
    double mean = 0.0;
    for (double v : sq) mean += v;
    mean /= n;
    if (mean <= 0.0) return 0.0;
    double var = 0.0;
    for (double v : sq) var += (v - mean) * (v - mean);
    var /= (n - 1.0) * n;  // variance of the mean
    return std::sqrt(var) / (2.0 * std::sqrt(mean));
}

// 6. Sweep shape at desk scale: error non-increasing with SNR (within one
//    pooled standard error per step), detection probability non-decreasing,
//    and at 10 dB the incremental estimator is no worse than the references.

Check check_sweep_shape(const ExperimentConfig& sweep_cfg, const ResultTable& sweep_table,
                        const std::vector<SweepPointData>& rederived,
                        const ResultTable& comparison_table) {
    Check c;

    std::vector<double> rmse_by_snr, sdp_by_snr, se_by_snr;
    for (std::size_t s = 0; s < sweep_cfg.sweep_values.size(); ++s) {
        const double snr = sweep_cfg.sweep_values[s];
        const ResultRow* row = find_row(sweep_table, Method::ripf, snr);
        if (row == nullptr) {
            c.fail(fmt("missing sweep row at snr %g", snr));
            return c;
        }
        const double rederived_rmse = rmse(rederived[s].outcomes);
        if (rederived_rmse != row->rmse_deg) {
            c.fail(fmt("internal: re-derived rmse %.17g differs from batch row %.17g at snr %g",
                       rederived_rmse, row->rmse_deg, snr));
            return c;
        }
        rmse_by_snr.push_back(row->rmse_deg);
        sdp_by_snr.push_back(row->sdp);
        se_by_snr.push_back(rmse_standard_error(rederived[s].outcomes));
    }

    for (std::size_t i = 0; i < rmse_by_snr.size(); ++i)
        c.note(fmt("snr %+3g dB: rmse %.4f deg (se %.4f), sdp %.4f", sweep_cfg.sweep_values[i],
                   rmse_by_snr[i], se_by_snr[i], sdp_by_snr[i]));

    for (std::size_t i = 0; i + 1 < rmse_by_snr.size(); ++i) {
        const double allowance = std::hypot(se_by_snr[i], se_by_snr[i + 1]);
        if (rmse_by_snr[i + 1] > rmse_by_snr[i] + allowance)
            c.fail(fmt("rmse step %g -> %g dB rises %.4f -> %.4f beyond one pooled se %.4f",
                       sweep_cfg.sweep_values[i], sweep_cfg.sweep_values[i + 1], rmse_by_snr[i],
                       rmse_by_snr[i + 1], allowance));
        if (sdp_by_snr[i + 1] < sdp_by_snr[i])
            c.fail(fmt("sdp step %g -> %g dB falls %.4f -> %.4f", sweep_cfg.sweep_values[i],
                       sweep_cfg.sweep_values[i + 1], sdp_by_snr[i], sdp_by_snr[i + 1]));
    }

    const ResultRow* ripf_row = find_row(comparison_table, Method::ripf, 0.0);
    const ResultRow* r_row = find_row(comparison_table, Method::r_csm, 0.0);
    const ResultRow* i2d_row = find_row(comparison_table, Method::i2d_csm, 0.0);
    if (ripf_row == nullptr || r_row == nullptr || i2d_row == nullptr) {
        c.fail("missing comparison rows");
        return c;
    }
    c.note(fmt("10 dB comparison: incremental %.4f, interval reference %.4f, "
               "sine-interval reference %.4f deg",
               ripf_row->rmse_deg, r_row->rmse_deg, i2d_row->rmse_deg));
    if (ripf_row->rmse_deg > r_row->rmse_deg)
        c.fail(fmt("incremental rmse %.4f exceeds interval reference %.4f at 10 dB",
                   ripf_row->rmse_deg, r_row->rmse_deg));
    if (ripf_row->rmse_deg > i2d_row->rmse_deg)
        c.fail(fmt("incremental rmse %.4f exceeds sine-interval reference %.4f at 10 dB",
                   ripf_row->rmse_deg, i2d_row->rmse_deg));
    if (!c.pass)
        c.note("note: at this snapshot count every method lands within one lattice step of the "
               "true directions at 10 dB, so the ranking turns on a handful of single-step "
               "misses and varies with the master seed; the incremental estimator integrates "
               "fewer bins by design, which costs it a few extra misses here");
    return c;
}

// 7. Bound ordering: pooled estimator error at each swept SNR should not be
//    below the aggregated lower bound for the same scenarios.

Check check_bound_ordering(const ExperimentConfig& sweep_cfg, const ResultTable& sweep_table) {
    Check c;
    for (double snr : sweep_cfg.sweep_values) {
        const ResultRow* row = find_row(sweep_table, Method::ripf, snr);
        if (row == nullptr) {
            c.fail(fmt("missing sweep row at snr %g", snr));
            return c;
        }
        if (row->rmse_deg >= row->rmse_crb_deg)
            c.note(fmt("snr %+3g dB: rmse %.4f >= bound %.4f", snr, row->rmse_deg,
                       row->rmse_crb_deg));
        else
            c.fail(fmt("snr %+3g dB: rmse %.4f < bound %.4f", snr, row->rmse_deg,
                       row->rmse_crb_deg));
    }
    if (!c.pass)
        c.note("note: the search lattice contains the true directions, so at high snr nearly "
               "every trial snaps to the exact grid point and the empirical error falls to or "
               "below the bound; the bound constrains unbiased estimators, which a "
               "lattice-quantized search is not");
    return c;
}

// ---------------------------------------------------------------------------
// 8. Complexity ranking at a coarse grid: the incremental estimator is
//    cheaper than both references in measured wall time and in the
//    per-iteration cost model.

Check check_runtime_ranking(const ResultTable& timing_table) {
    Check c;
    const ResultRow* ripf_row = find_row(timing_table, Method::ripf, 0.0);
    const ResultRow* r_row = find_row(timing_table, Method::r_csm, 0.0);
    const ResultRow* i2d_row = find_row(timing_table, Method::i2d_csm, 0.0);
    if (ripf_row == nullptr || r_row == nullptr || i2d_row == nullptr) {
        c.fail("missing timing rows");
        return c;
    }
    c.note(fmt("mean wall time per trial: incremental %.3f ms, interval reference %.3f ms, "
               "sine-interval reference %.3f ms",
               1e3 * ripf_row->mean_wall_time_s, 1e3 * r_row->mean_wall_time_s,
               1e3 * i2d_row->mean_wall_time_s));
    c.note(fmt("mean cost estimate per trial: %.3g vs %.3g vs %.3g", ripf_row->mean_flops,
               r_row->mean_flops, i2d_row->mean_flops));
    if (!(ripf_row->mean_wall_time_s > 0.0) || !(r_row->mean_wall_time_s > 0.0) ||
        !(i2d_row->mean_wall_time_s > 0.0))
        c.fail("wall times were not measured");
    if (ripf_row->mean_wall_time_s >= r_row->mean_wall_time_s)
        c.fail("incremental estimator is not faster than the interval reference");
    if (ripf_row->mean_wall_time_s >= i2d_row->mean_wall_time_s)
        c.fail("incremental estimator is not faster than the sine-interval reference");
    if (ripf_row->mean_flops >= r_row->mean_flops || ripf_row->mean_flops >= i2d_row->mean_flops)
        c.fail("cost model does not reproduce the wall-time ranking");
    return c;
}

// 9. Single-iteration complexity advantage: the closed-form predicate holds
//    for the default configuration, and nearly all traced iterations cost
//    less than one full-focus conventional iteration on the same data.

Check check_complexity_advantage(const ExperimentConfig& sweep_cfg,
                                 const std::vector<SweepPointData>& rederived) {
    Check c;

    ExperimentConfig defaults;
    defaults.scenario.duration = 1e-5;  // full-length capture
    defaults.doa_groups = {{DoA(60.0, 150.0)}};
    const ComplexityAdvantageParams params = complexity_advantage_params_from(defaults, 5.0);
    const ComplexityAdvantageResult pred = complexity_advantage_check(params);
    if (pred.satisfied)
        c.note(fmt("closed-form predicate: %.4g < %.4g (margin %.4f)", pred.lhs, pred.rhs,
                   pred.margin));
    else
        c.fail(fmt("closed-form predicate violated: %.4g >= %.4g", pred.lhs, pred.rhs));

    FlopsState conventional;
    conventional.z_bins = sweep_cfg.scenario.fft_size;
    conventional.elements = sweep_cfg.elements;
    conventional.snapshots = sweep_cfg.scenario.snapshot_count();
    conventional.v_theta_deg = sweep_cfg.ripf.step_theta_deg;
    conventional.v_phi_deg = sweep_cfg.ripf.step_phi_deg;
    conventional.grid_theta = params.grid_theta;
    conventional.grid_phi = params.grid_phi;

    std::int64_t cheaper = 0, total = 0;
    for (const SweepPointData& point : rederived) {
        std::int64_t point_cheap = 0, point_total = 0;
        for (const auto& trace : point.traces)
            for (const EstimatorState& st : trace) {
                conventional.source_count = std::max(1, st.source_count);
                const double reference = flops_estimate(Method::ccsm, conventional);
                ++point_total;
                if (st.flops_estimate < reference) ++point_cheap;
            }
        c.note(fmt("snr %+3g dB: %lld of %lld iterations cheaper (%.2f%%)", point.snr,
                   static_cast<long long>(point_cheap), static_cast<long long>(point_total),
                   100.0 * static_cast<double>(point_cheap) /
                       static_cast<double>(std::max<std::int64_t>(1, point_total))));
        cheaper += point_cheap;
        total += point_total;
    }
    const double frac = total > 0 ? static_cast<double>(cheaper) / static_cast<double>(total) : 0.0;
    c.note(fmt("traced iterations cheaper than one full-focus iteration: %lld of %lld (%.2f%%)",
               static_cast<long long>(cheaper), static_cast<long long>(total), 100.0 * frac));
    if (frac < 0.95) {
        c.fail(fmt("fraction %.4f below the required 0.95", frac));
        c.note("note: the shortfall sits at the low-snr points, where nearly every expensive case "
               "is a full-set second iteration whose search regions scale with the large movement "
               "away from an inaccurate first estimate; the published probability model assumes "
               "movements that keep shrinking over about five iterations, which holds at 10 dB "
               "and above but not at -10 and 0 dB");
    }
    return c;
}

// 10. Determinism: the shared batches reproduce byte-identical CSV text when
//     re-run, at one worker thread and at eight.

Check check_determinism(const ExperimentConfig& sweep_cfg, const std::string& sweep_csv,
                        const ExperimentConfig& comparison_cfg,
                        const std::string& comparison_csv) {
    Check c;
    for (int threads : {1, 8}) {
        ExperimentConfig cfg_a = sweep_cfg;
        cfg_a.threads = threads;
        const std::string csv_a = results_csv_text(run_batch(cfg_a));
        ExperimentConfig cfg_b = comparison_cfg;
        cfg_b.threads = threads;
        const std::string csv_b = results_csv_text(run_batch(cfg_b));
        if (csv_a == sweep_csv)
            c.note(fmt("sweep batch at %d thread(s): byte-identical (%zu bytes)", threads,
                       csv_a.size()));
        else
            c.fail(fmt("sweep batch at %d thread(s) differs from the reference run", threads));
        if (csv_b == comparison_csv)
            c.note(fmt("comparison batch at %d thread(s): byte-identical (%zu bytes)", threads,
                       csv_b.size()));
        else
            c.fail(fmt("comparison batch at %d thread(s) differs from the reference run",
                       threads));
    }
    return c;
}

void report(int index, const char* name, const Check& c, double elapsed_s, double budget_s,
            int& failures) {
    const bool in_budget = elapsed_s < budget_s;
    const bool pass = c.pass && in_budget;
    std::printf("[%2d] %s %s (%.1f s, budget %.0f s)\n", index, pass ? "PASS" : "FAIL", name,
                elapsed_s, budget_s);
    for (const std::string& line : c.detail) std::printf("      %s\n", line.c_str());
    if (!in_budget) std::printf("      runtime %.1f s exceeded the %.0f s budget\n", elapsed_s, budget_s);
    if (!pass) ++failures;
    std::fflush(stdout);
}

}  // namespace

int main() {
    std::printf("acceptance checks: pinned master seed %llu, capture %.0f ns, 50 trials/group\n",
                static_cast<unsigned long long>(kMasterSeed), kDeskDuration * 1e9);
    std::fflush(stdout);
    int failures = 0;
    using clock = std::chrono::steady_clock;

    {
        const auto t0 = clock::now();
        const Check c = check_focusing_identity();
        report(1, "focusing alignment identity and unitarity", c, seconds_since(t0), 5.0,
               failures);
    }
    {
        const auto t0 = clock::now();
        const Check c = check_bound_consistency();
        report(2, "bound formulations agree with the information matrix", c, seconds_since(t0),
               30.0, failures);
    }
    {
        const auto t0 = clock::now();
        const Check c = check_information_monte_carlo();
        report(3, "information matrix matches the score covariance", c, seconds_since(t0), 120.0,
               failures);
    }
    {
        const auto t0 = clock::now();
        const Check c = check_noise_fourth_moments();
        report(4, "simulated noise fourth moments", c, seconds_since(t0), 30.0, failures);
    }
    {
        const auto t0 = clock::now();
        const Check c = check_noiseless_recovery();
        report(5, "noiseless recovery of the reference direction groups", c, seconds_since(t0),
               60.0, failures);
    }

    // Shared Monte-Carlo batches for checks 6, 7, 9 and 10.
    const ExperimentConfig sweep_cfg = sweep_batch_config();
    const ExperimentConfig comparison_cfg = comparison_batch_config();
    const auto batches_t0 = clock::now();
    const ResultTable sweep_table = run_batch(sweep_cfg);
    const std::string sweep_csv = results_csv_text(sweep_table);
    const ResultTable comparison_table = run_batch(comparison_cfg);
    const std::string comparison_csv = results_csv_text(comparison_table);
    const std::vector<SweepPointData> rederived = rederive_sweep_with_traces(sweep_cfg);
    const double batches_s = seconds_since(batches_t0);

    {
        const Check c = check_sweep_shape(sweep_cfg, sweep_table, rederived, comparison_table);
        report(6, "error and detection trends across the snr sweep", c, batches_s, 900.0,
               failures);
    }
    {
        const auto t0 = clock::now();
        const Check c = check_bound_ordering(sweep_cfg, sweep_table);
        report(7, "estimator error stays above the aggregated bound", c, seconds_since(t0), 900.0,
               failures);
    }
    {
        const auto t0 = clock::now();
        const ResultTable timing_table = run_batch(timing_batch_config());
        const Check c = check_runtime_ranking(timing_table);
        report(8, "wall-time and cost-model ranking at a coarse grid", c, seconds_since(t0),
               600.0, failures);
    }
    {
        const auto t0 = clock::now();
        const Check c = check_complexity_advantage(sweep_cfg, rederived);
        report(9, "single-iteration complexity advantage", c, seconds_since(t0), 60.0, failures);
    }
    {
        const auto t0 = clock::now();
        const Check c =
            check_determinism(sweep_cfg, sweep_csv, comparison_cfg, comparison_csv);
        report(10, "byte-identical batches across reruns and worker counts", c,
               seconds_since(t0) + batches_s, 1800.0, failures);
    }

    std::printf("%d of 10 checks passed\n", 10 - failures);
    return failures;
}
