#include <doctest.h>

#include <random>

#include "cosinor/simgen.hpp"
#include "oracles.hpp"

using namespace cosinor;
using oracle::kPi;

namespace {

const double kPhaseVar = kPi * kPi / 36.0;

double normal_pdf(double x, double mean, double var) {
    return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * kPi * var);
}

// Moments of a truncated normal by direct integration of its density.
struct Moments {
    double mean;
    double var;
};
Moments tn_moments(double mean, double var, double lo, double hi) {
    const double z = oracle::simpson([&](double x) { return normal_pdf(x, mean, var); }, lo, hi);
    const double m1 = oracle::simpson([&](double x) { return x * normal_pdf(x, mean, var); }, lo, hi) / z;
    const double m2 = oracle::simpson([&](double x) { return x * x * normal_pdf(x, mean, var); }, lo, hi) / z;
    return {m1, m2 - m1 * m1};
}

double tn_cos_mean(double var, double lo, double hi) {
    const double z = oracle::simpson([&](double x) { return normal_pdf(x, 0.0, var); }, lo, hi);
    return oracle::simpson([&](double x) { return std::cos(x) * normal_pdf(x, 0.0, var); }, lo, hi) / z;
}

// Plain rejection sampler, kept independent of the library's sampler.
double tn_reject(std::mt19937_64& rng, double mean, double var, double lo, double hi) {
    std::normal_distribution<double> z(mean, std::sqrt(var));
    for (;;) {
        const double x = z(rng);
        if (x >= lo && x <= hi) return x;
    }
}

bool same_values(const GeneMatrix& a, const GeneMatrix& b) {
    return a.values == b.values && a.times == b.times && a.individual_ids == b.individual_ids &&
           a.gene_ids == b.gene_ids;
}

}  // namespace

TEST_CASE("truncated normal samples stay in bounds and match integrated moments") {
    Rng rng = make_rng(1);
    const int n = 1000000;
    double s = 0.0, s2 = 0.0;
    for (int k = 0; k < n; ++k) {
        const double x = sample_trunc_normal(0.0, 0.5, -0.3, 0.3, rng);
        REQUIRE(x >= -0.3);
        REQUIRE(x <= 0.3);
        s += x;
        s2 += x * x;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    const Moments ref = tn_moments(0.0, 0.5, -0.3, 0.3);
    CHECK(var == doctest::Approx(ref.var).epsilon(0.01));

    // Asymmetric, one-sided and far-tail truncations.
    struct Case {
        double mean, var, lo, hi;
    };
    for (const Case& c : {Case{1.0, 2.0, -0.5, 4.0}, Case{0.0, 1.0, 2.5, 6.0}, Case{0.0, 1.0, -9.0, -6.0},
                          Case{3.0, 0.01, -1.0, 1.0}}) {
        double t = 0.0, t2 = 0.0;
        const int k_draws = 200000;
        for (int k = 0; k < k_draws; ++k) {
            const double x = sample_trunc_normal(c.mean, c.var, c.lo, c.hi, rng);
            REQUIRE(x >= c.lo);
            REQUIRE(x <= c.hi);
            t += x;
            t2 += x * x;
        }
        const Moments r = tn_moments(c.mean, c.var, c.lo, c.hi);
        const double m = t / k_draws;
        const double v = t2 / k_draws - m * m;
        CHECK(std::abs(m - r.mean) < 4.0 * std::sqrt(r.var / k_draws));
        CHECK(v == doctest::Approx(r.var).epsilon(0.03));
    }
}

TEST_CASE("truncated normal special cases") {
    Rng rng = make_rng(2);
    for (int k = 0; k < 1000; ++k) CHECK(std::abs(sample_trunc_normal(0.0, 1e-12, -1.0, 1.0, rng)) < 1e-4);

    const int n = 1000000;
    double s = 0.0, s2 = 0.0;
    for (int k = 0; k < n; ++k) {
        const double x = sample_trunc_normal(0.0, kPhaseVar, -kPi, kPi, rng);
        s += x;
        s2 += x * x;
    }
    const double se = std::sqrt((s2 / n) / n);
    CHECK(std::abs(s / n) < 4.0 * se);
}

TEST_CASE("characteristic function at one") {
    CHECK(characteristic_at_one(PointMass{0.0}) == 1.0);
    CHECK(std::abs(characteristic_at_one(UniformSpec{-kPi, kPi})) < 1e-12);
    CHECK(characteristic_at_one(UniformSpec{-1.0, 1.0}) == doctest::Approx(std::sin(1.0)).epsilon(1e-12));

    const TruncNormalSpec tn{0.0, kPhaseVar, -kPi, kPi};
    const double phi = characteristic_at_one(tn);
    CHECK(std::abs(phi - tn_cos_mean(kPhaseVar, -kPi, kPi)) < 1e-10);

    // Independent Monte Carlo from the test-side rejection sampler.
    std::mt19937_64 rng(3);
    const int n = 10000000;
    double s = 0.0, s2 = 0.0;
    for (int k = 0; k < n; ++k) {
        const double c = std::cos(tn_reject(rng, 0.0, kPhaseVar, -kPi, kPi));
        s += c;
        s2 += c * c;
    }
    const double mean = s / n;
    const double se = std::sqrt((s2 / n - mean * mean) / n);
    CHECK(std::abs(phi - mean) < 4.0 * se);
}

TEST_CASE("presets") {
    for (int id = 1; id <= 6; ++id) {
        const SimSetting s = SimSetting::preset(id);
        CHECK(s.id == id);
        CHECK(s.mu0 == 6.0);
        CHECK(s.theta1 == 0.3);
        CHECK(s.n_individuals == 10);
        CHECK(s.noise_variance == 0.25);
        CHECK(s.c2.variance >= kPhaseVar);
        CHECK(s.c2.lo == doctest::Approx(-kPi));
        const auto t = s.sample_times();
        CHECK(t.size() == static_cast<std::size_t>(s.n_samples));
        CHECK(t.front() == s.sample_interval);
    }
    const double listed[] = {0.5, 0.5, 0.4, 0.4, 0.3, 0.3};
    for (int id = 1; id <= 6; ++id) {
        CHECK(SimSetting::preset(id, AmplitudeConvention::kListed).theta1 == listed[id - 1]);
    }
    CHECK(SimSetting::preset(1).sample_times() == std::vector<double>{2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24});
    CHECK(SimSetting::preset(1).c2.variance == doctest::Approx(kPhaseVar));
    CHECK(SimSetting::preset(2).outlier_prob > 0.0);
    CHECK_THROWS_AS(SimSetting::preset(0), Error);
    CHECK_THROWS_AS(SimSetting::preset(7), Error);
}

TEST_CASE("noiseless waveforms") {
    GenerationHooks hooks;
    hooks.zero_random_effects = true;
    hooks.zero_noise = true;

    SUBCASE("setting 1 with the listed amplitude is an exact cosine") {
        const SimSetting s = SimSetting::preset(1, AmplitudeConvention::kListed);
        const TrialOutput out = generate_trial(s, 5, hooks);
        for (std::size_t i = 0; i < out.data_offset.n_individuals(); ++i) {
            for (std::size_t j = 0; j < out.data_offset.times[i].size(); ++j) {
                const double x = out.data_offset.times[i][j];
                CHECK(std::abs(out.data_offset.values[0][i][j] - (6.0 + 0.5 * std::cos(kPi * x / 12.0))) < 1e-12);
            }
        }
    }
    SUBCASE("square wave partial sum at a quarter period") {
        SimSetting s = SimSetting::preset(6);
        s.theta2 = 0.0;
        s.n_samples = 12;
        s.sample_interval = 2.0;
        // The argument x - pi/2 - theta2 equals pi/2 at 12 h.
        const double expected = 4.0 * 0.3 / kPi * (1.0 - 1.0 / 3.0 + 1.0 / 5.0);
        CHECK(expected == doctest::Approx(0.33104228).epsilon(1e-8));
        CHECK(s.mean_response(12.0, 0.0, 0.0, 0.0) - 6.0 == doctest::Approx(expected).epsilon(1e-12));
        const TrialOutput out = generate_trial(s, 5, hooks);
        CHECK(out.data_offset.values[0][0][5] - 6.0 == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("mean-zero waveforms average to the mesor over a day") {
        for (int id : {1, 3, 5, 6}) {
            const SimSetting s = SimSetting::preset(id);
            for (double c2 : {0.0, 0.7, -2.0}) {
                const double avg = oracle::simpson([&](double t) { return s.mean_response(t, 0.0, 0.1, c2); }, 0.0,
                                                   24.0) / 24.0;
                CHECK(std::abs(avg - s.mu0) < 1e-6);
            }
        }
    }
}

TEST_CASE("trials are deterministic and share draws between the twins") {
    for (int id = 1; id <= 6; ++id) {
        const SimSetting s = SimSetting::preset(id);
        const TrialOutput a = generate_trial(s, 99);
        const TrialOutput b = generate_trial(s, 99);
        CHECK(same_values(a.data_offset, b.data_offset));
        CHECK(same_values(a.data_aligned, b.data_aligned));
        CHECK(a.truth.c2 == b.truth.c2);
        CHECK_FALSE(same_values(a.data_offset, generate_trial(s, 100).data_offset));

        GenerationHooks no_phase;
        no_phase.zero_phase_offsets = true;
        const TrialOutput z = generate_trial(s, 99, no_phase);
        CHECK(same_values(z.data_offset, z.data_aligned));
        // Zeroing the offsets leaves the other draws untouched.
        CHECK(same_values(z.data_aligned, a.data_aligned));
        CHECK(z.truth.m0 == a.truth.m0);
    }
}

TEST_CASE("trial seeds and substreams") {
    CHECK(trial_seed(1, 0) != trial_seed(1, 1));
    CHECK(trial_seed(1, 0) != trial_seed(2, 0));
    CHECK(trial_seed(5, 7) == trial_seed(5, 7));
    Rng a = make_rng(3, 0), b = make_rng(3, 1), c = make_rng(3, 0);
    CHECK(a() != b());
    CHECK(a() == (c(), c()));
}

TEST_CASE("campaign results do not depend on the thread count") {
    const SimSetting s = SimSetting::preset(2);
    const std::vector<Framework> fw{Framework::kAdjusted, Framework::kNaive, Framework::kAligned};
    CampaignOptions serial, parallel;
    serial.threads = 1;
    parallel.threads = 3;
    const auto a = run_trials(s, 6, fw, 11, serial);
    const auto b = run_trials(s, 6, fw, 11, parallel);
    for (std::size_t k = 0; k < a.size(); ++k) {
        for (Framework f : fw) {
            CHECK(a[k].get(f).theta1 == b[k].get(f).theta1);
            CHECK(a[k].get(f).tau == b[k].get(f).tau);
        }
    }
    const CampaignTable ta = summarize_trials(2, 11, a, fw);
    const CampaignTable tb = run_campaign(s, 6, fw, 11, parallel);
    for (Framework f : fw) {
        CHECK(ta.row(f).mean_theta1 == tb.row(f).mean_theta1);
        CHECK(ta.row(f).sd_tau == tb.row(f).sd_tau);
        CHECK(ta.row(f).n_ok + ta.row(f).n_failed == 6);
    }
    CHECK_THROWS_AS(run_campaign(s, 0, fw, 11), Error);
    const std::vector<Framework> only3{Framework::kAligned};
    CHECK_THROWS_AS(summarize_trials(2, 11, a, only3).row(Framework::kNaive), Error);
}

TEST_CASE("summary statistics match a direct computation") {
    std::vector<TrialEstimates> est(5);
    const double th[] = {0.1, 0.2, 0.4, 0.3, 0.5};
    for (int k = 0; k < 5; ++k) {
        est[k].aligned = {true, true, th[k], 10.0 * th[k]};
    }
    est[4].aligned.ok = false;
    const std::vector<Framework> fw{Framework::kAligned};
    const auto row = summarize_trials(1, 0, est, fw).row(Framework::kAligned);
    CHECK(row.n_ok == 4);
    CHECK(row.n_failed == 1);
    CHECK(row.mean_theta1 == doctest::Approx(0.25));
    CHECK(row.sd_theta1 == doctest::Approx(std::sqrt((0.0225 + 0.0025 + 0.0225 + 0.0025) / 3.0)));
    CHECK(row.mean_tau == doctest::Approx(2.5));
}

TEST_CASE("noiseless aligned trial recovers the amplitude exactly") {
    GenerationHooks hooks;
    hooks.zero_noise = true;
    hooks.zero_random_effects = true;
    const SimSetting s = SimSetting::preset(1);
    CampaignOptions options;
    options.hooks = hooks;
    options.threads = 1;
    const std::vector<Framework> fw{Framework::kAligned};
    const auto res = run_trials(s, 1, fw, 4, options);
    CHECK(res[0].aligned.theta1 == doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("amplitude and phase effects are uncorrelated with the basis") {
    // E[c1 sin c2] = E[c1 cos c2] = 0 for the symmetric samplers.
    Rng rng = make_rng(6);
    const SimSetting s = SimSetting::preset(1);
    const int n = 1000000;
    double ss = 0.0, ss2 = 0.0, sc = 0.0, sc2 = 0.0;
    for (int k = 0; k < n; ++k) {
        const double c1 = sample_trunc_normal(s.c1, rng);
        const double c2 = sample_trunc_normal(s.c2, rng);
        const double a = c1 * std::sin(c2), b = c1 * std::cos(c2);
        ss += a;
        ss2 += a * a;
        sc += b;
        sc2 += b * b;
    }
    CHECK(std::abs(ss / n) < 4.0 * std::sqrt(ss2 / n / n));
    CHECK(std::abs(sc / n) < 4.0 * std::sqrt(sc2 / n / n));
}

TEST_CASE("phase variation attenuates the fixed effects by the characteristic function") {
    // Data from the cosine model with random intercept, amplitude and phase
    // effects; the GLS fixed effects at a fixed V are linear in the data, so
    // their mean is exactly phi(1) times the population coefficients.
    const double theta1 = 0.5, theta2 = kPi / 3.0;
    const auto beta = amplitude_phase_to_linear(theta1, theta2);
    const double phi = characteristic_at_one(TruncNormalSpec{0.0, kPhaseVar, -kPi, kPi});
    const RandomEffectSpec spec = RandomEffectSpec::diagonal(1.0, 0.02, 0.02, 0.25);

    std::mt19937_64 rng(7);
    std::normal_distribution<double> z(0.0, 1.0);
    const int reps = 5000;
    double s1 = 0.0, s1sq = 0.0, s2 = 0.0, s2sq = 0.0;
    std::vector<double> times;
    for (int j = 1; j <= 12; ++j) times.push_back(2.0 * j);
    for (int r = 0; r < reps; ++r) {
        std::vector<LongitudinalSeries> data;
        for (int i = 0; i < 10; ++i) {
            const double m0 = z(rng);
            const double c1 = tn_reject(rng, 0.0, 0.5, -0.3, 0.3);
            const double c2 = tn_reject(rng, 0.0, kPhaseVar, -kPi, kPi);
            LongitudinalSeries s{"i", times, {}};
            for (double t : times) {
                s.values.push_back(6.0 + m0 + (theta1 + c1) * std::cos(kPi * t / 12.0 + theta2 + c2) + 0.5 * z(rng));
            }
            data.push_back(std::move(s));
        }
        const GlsResult g = gls_at(data, spec);
        s1 += g.params.beta1;
        s1sq += g.params.beta1 * g.params.beta1;
        s2 += g.params.beta2;
        s2sq += g.params.beta2 * g.params.beta2;
    }
    const double m1 = s1 / reps, m2 = s2 / reps;
    const double se1 = std::sqrt((s1sq / reps - m1 * m1) / reps);
    const double se2 = std::sqrt((s2sq / reps - m2 * m2) / reps);
    CHECK(std::abs(m1 - phi * beta.beta1) < 3.0 * se1);
    CHECK(std::abs(m2 - phi * beta.beta2) < 3.0 * se2);
    // The attenuation is real: the unattenuated value lies far outside.
    CHECK(std::abs(m1 - beta.beta1) > 5.0 * se1);
}

TEST_CASE("panel generator") {
    PanelConfig cfg;
    cfg.n_genes = 5;
    const PanelOutput a = generate_panel(cfg, 3);
    const PanelOutput b = generate_panel(cfg, 3);
    CHECK(same_values(a.data, b.data));
    CHECK(a.offset_hours == b.offset_hours);
    CHECK(a.data.n_genes() == 5);
    CHECK(a.offset_hours.size() == 10);
    CHECK_NOTHROW(a.data.validate());
    cfg.n_individuals = 1;
    CHECK_THROWS_AS(generate_panel(cfg, 3), Error);
}
