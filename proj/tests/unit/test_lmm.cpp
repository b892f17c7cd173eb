#include <doctest.h>

#include <random>

#include "cosinor/lmm.hpp"
#include "oracles.hpp"

using namespace cosinor;
using oracle::kPi;

namespace {

std::vector<double> grid(int n, double step, double start = 0.0) {
    std::vector<double> t;
    for (int j = 0; j < n; ++j) t.push_back(start + step * j);
    return t;
}

std::vector<GlsBlock> dense_blocks(const std::vector<LongitudinalSeries>& data, const Mat3& psi, double sigma2) {
    std::vector<GlsBlock> blocks;
    for (const auto& s : data) {
        GlsBlock b;
        b.design = DesignMatrix::from_times(s.times);
        b.y = Eigen::Map<const Eigen::VectorXd>(s.values.data(), static_cast<Eigen::Index>(s.size()));
        b.v_inv = oracle::dense_v(s.times, psi, sigma2).inverse();
        blocks.push_back(std::move(b));
    }
    return blocks;
}

Mat3 random_psd(std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> z(0.0, scale);
    Mat3 a = Mat3::NullaryExpr([&] { return z(rng); });
    return a * a.transpose();
}

}  // namespace

TEST_CASE("design orthogonality on four equispaced times") {
    const auto d = DesignMatrix::from_times(std::vector<double>{0.0, 6.0, 12.0, 18.0});
    const Mat3 wtw = d.rows.transpose() * d.rows;
    Mat3 expected = Mat3::Zero();
    expected.diagonal() << 4.0, 2.0, 2.0;
    CHECK((wtw - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("GLS with no random effects equals pooled OLS") {
    std::mt19937_64 rng(1);
    const auto data = oracle::simulate_lmm(rng, 6, grid(8, 3.0, 1.0), {6.0, 0.3, -0.2}, {0.0, 0.0, 0.0}, 0.3);
    const auto res = gls_fixed_effects(dense_blocks(data, Mat3::Zero(), 0.3));

    Eigen::MatrixXd x(48, 3);
    Eigen::VectorXd y(48);
    Eigen::Index r = 0;
    for (const auto& s : data) {
        const Eigen::MatrixXd w = oracle::design(s.times);
        for (Eigen::Index j = 0; j < w.rows(); ++j, ++r) {
            x.row(r) = w.row(j);
            y(r) = s.values[static_cast<std::size_t>(j)];
        }
    }
    const Eigen::Vector3d ols = x.colPivHouseholderQr().solve(y);
    CHECK((res.params.as_vector() - ols).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::Matrix3d cov = 0.3 * (x.transpose() * x).inverse();
    CHECK((res.cov.sigma - cov).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("GLS recovers noiseless parameters under any valid covariance") {
    std::mt19937_64 rng(2);
    const CosinorParams truth{6.0, 0.0, 0.5};
    std::vector<LongitudinalSeries> data;
    for (int i = 0; i < 4; ++i) {
        LongitudinalSeries s{"i" + std::to_string(i), grid(5, 4.0, 0.5 * i), {}};
        for (double t : s.times) s.values.push_back(truth.evaluate(t));
        data.push_back(s);
    }
    const auto res = gls_fixed_effects(dense_blocks(data, random_psd(rng, 0.5), 0.7));
    CHECK((res.params.as_vector() - truth.as_vector()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("sufficient-statistic GLS matches dense GLS") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 20; ++rep) {
        const auto data = oracle::simulate_lmm(rng, 7, grid(9, 2.5, 0.3 * rep), {5.0, -0.4, 0.8}, {0.5, 0.1, 0.2}, 0.4);
        RandomEffectSpec spec;
        spec.psi = random_psd(rng, 0.6);
        spec.sigma2 = 0.2 + 0.1 * rep;
        const auto fast = gls_at(data, spec);
        const auto ref = oracle::dense_gls(data, spec.psi, spec.sigma2);
        CHECK((fast.params.as_vector() - ref.beta).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((fast.cov.sigma - ref.cov).cwiseAbs().maxCoeff() < 1e-9);
        const auto dense = gls_fixed_effects(dense_blocks(data, spec.psi, spec.sigma2));
        CHECK((dense.params.as_vector() - ref.beta).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("GLS shift invariance") {
    std::mt19937_64 rng(4);
    auto data = oracle::simulate_lmm(rng, 5, grid(6, 4.0), {6.0, 0.2, 0.1}, {1.0, 0.05, 0.05}, 0.25);
    RandomEffectSpec spec = RandomEffectSpec::diagonal(1.0, 0.05, 0.05, 0.25);
    const auto before = gls_at(data, spec);
    for (auto& s : data) {
        for (double& v : s.values) v += 3.5;
    }
    const auto after = gls_at(data, spec);
    CHECK(after.params.mu0 - before.params.mu0 == doctest::Approx(3.5).epsilon(1e-10));
    CHECK(std::abs(after.params.beta1 - before.params.beta1) < 1e-10);
    CHECK(std::abs(after.params.beta2 - before.params.beta2) < 1e-10);
    CHECK((after.cov.sigma - before.cov.sigma).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("singular information is reported") {
    std::vector<GlsBlock> blocks(1);
    blocks[0].design = DesignMatrix::from_times(std::vector<double>{3.0, 3.0, 3.0});
    blocks[0].y = Eigen::Vector3d(1.0, 2.0, 3.0);
    blocks[0].v_inv = Eigen::MatrixXd::Identity(3, 3);
    CHECK_THROWS_AS(gls_fixed_effects(blocks), Error);
}

TEST_CASE("closed-form inverse on the equispaced grid") {
    SUBCASE("no random effects") {
        const auto inv = equispaced_v_inverse(6, equispaced_times(6), RandomEffectSpec::diagonal(0, 0, 0, 0.5));
        CHECK((inv - 2.0 * Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("hand-evaluated entry") {
        const auto inv = equispaced_v_inverse(4, equispaced_times(4), RandomEffectSpec::diagonal(1, 1, 1, 1));
        CHECK(inv(0, 0) == doctest::Approx(0.46666666666666667).epsilon(1e-12));
    }
    SUBCASE("matches dense inversion") {
        std::mt19937_64 rng(5);
        std::uniform_int_distribution<int> n_dist(3, 48);
        std::uniform_real_distribution<double> u(0.01, 3.0);
        for (int rep = 0; rep < 100; ++rep) {
            const int n = n_dist(rng);
            const auto spec = RandomEffectSpec::diagonal(u(rng), u(rng), u(rng), u(rng));
            const auto t = equispaced_times(n);
            const auto inv = equispaced_v_inverse(n, t, spec);
            const Eigen::MatrixXd v = oracle::dense_v(t, spec.psi, spec.sigma2);
            CHECK((inv - v.inverse()).cwiseAbs().maxCoeff() < 1e-9);
            CHECK((v * inv - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
    SUBCASE("off-grid times are rejected") {
        auto t = equispaced_times(6);
        t[2] += 1e-6;
        CHECK_THROWS_AS(equispaced_v_inverse(6, t, RandomEffectSpec::diagonal(1, 1, 1, 1)), Error);
        CHECK_THROWS_AS(equispaced_v_inverse(2, equispaced_times(2), RandomEffectSpec::diagonal(1, 1, 1, 1)), Error);
    }
}

TEST_CASE("log-likelihood matches the dense multivariate normal density") {
    std::mt19937_64 rng(6);
    const auto data = oracle::simulate_lmm(rng, 6, grid(7, 3.0, 1.0), {6.0, 0.4, 0.1}, {1.0, 0.1, 0.1}, 0.25);
    for (int rep = 0; rep < 10; ++rep) {
        RandomEffectSpec spec;
        spec.psi = random_psd(rng, 0.4);
        spec.sigma2 = 0.1 + 0.05 * rep;
        const CosinorParams beta{5.5 + 0.1 * rep, 0.3, -0.2};
        CHECK(log_likelihood(data, beta, spec) ==
              doctest::Approx(oracle::dense_loglik(data, beta.as_vector(), spec.psi, spec.sigma2)).epsilon(1e-10));
    }
}

TEST_CASE("EM fit: monotone trace, GLS at the estimate, local maximum") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        const auto data = oracle::simulate_lmm(rng, 10, grid(12, 2.0, 2.0), {6.0, 0.1, 0.3}, {1.0, 0.02, 0.03}, 0.25);
        EmConfig config;
        config.record_trace = true;
        const MixedFit fit = em_fit(data, config);
        CHECK(fit.converged);
        for (std::size_t k = 1; k < fit.loglik_trace.size(); ++k) {
            CHECK(fit.loglik_trace[k] >= fit.loglik_trace[k - 1] - 1e-10);
        }
        const auto ref = oracle::dense_gls(data, fit.psi_hat, fit.sigma2_hat);
        CHECK((fit.fixed.as_vector() - ref.beta).cwiseAbs().maxCoeff() < 1e-8);
        CHECK((fit.fixed_cov.sigma - ref.cov).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(fit.loglik == doctest::Approx(oracle::dense_loglik(data, ref.beta, fit.psi_hat, fit.sigma2_hat))
                                .epsilon(1e-10));

        // No nearby admissible (Psi, sigma2), with beta re-profiled, does better.
        const double best = fit.loglik;
        std::normal_distribution<double> z(0.0, 1e-3);
        for (int probe = 0; probe < 20; ++probe) {
            Mat3 d = Mat3::NullaryExpr([&] { return z(rng); });
            Mat3 psi = project_psd(fit.psi_hat + 0.5 * (d + d.transpose()));
            const double s2 = fit.sigma2_hat * (1.0 + z(rng));
            const auto g = oracle::dense_gls(data, psi, s2);
            CHECK(oracle::dense_loglik(data, g.beta, psi, s2) <= best + 1e-8);
        }
    }
}

TEST_CASE("EM with zero iterations is GLS at the start") {
    std::mt19937_64 rng(8);
    const auto data = oracle::simulate_lmm(rng, 8, grid(6, 4.0, 4.0), {6.0, -0.3, 0.2}, {0.8, 0.05, 0.05}, 0.3);
    EmConfig config;
    config.max_iterations = 0;
    config.start = RandomEffectSpec::diagonal(0.8, 0.05, 0.05, 0.3);
    const MixedFit fit = em_fit(data, config);
    const auto gls = gls_fixed_effects(dense_blocks(data, config.start->psi, config.start->sigma2));
    CHECK((fit.fixed.as_vector() - gls.params.as_vector()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(fit.iterations == 0);
}

TEST_CASE("EM on data without random effects") {
    std::mt19937_64 rng(9);
    const int reps = 200;
    Eigen::Vector3d psi_sum = Eigen::Vector3d::Zero(), psi_sq = Eigen::Vector3d::Zero();
    double sigma_sum = 0.0;
    for (int r = 0; r < reps; ++r) {
        const auto data = oracle::simulate_lmm(rng, 10, grid(48, 0.5), {6.0, 0.3, 0.0}, {0, 0, 0}, 0.25);
        const MixedFit fit = em_fit(data);
        const Eigen::Vector3d d = fit.psi_hat.diagonal();
        psi_sum += d;
        psi_sq += d.cwiseProduct(d);
        sigma_sum += fit.sigma2_hat;
    }
    const Eigen::Vector3d mean = psi_sum / reps;
    const Eigen::Vector3d se = ((psi_sq / reps - mean.cwiseProduct(mean)) / reps).cwiseSqrt();
    // The estimate lives on the PSD cone, so its mean sits above zero by an
    // amount of the order of the per-individual sampling variance sigma2 / n.
    const double boundary_bias = 0.25 / 48.0;
    for (int k = 0; k < 3; ++k) {
        CHECK(std::abs(mean(k)) < 3.0 * se(k) + boundary_bias);
    }
    CHECK(sigma_sum / reps == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("EM diagonal structure keeps off-diagonals at zero") {
    std::mt19937_64 rng(10);
    const auto data = oracle::simulate_lmm(rng, 10, grid(12, 2.0, 2.0), {6.0, 0.1, 0.3}, {1.0, 0.05, 0.05}, 0.25);
    EmConfig config;
    config.psi_structure = PsiStructure::kDiagonal;
    const MixedFit fit = em_fit(data, config);
    CHECK(fit.psi_hat(0, 1) == 0.0);
    CHECK(fit.psi_hat(0, 2) == 0.0);
    CHECK(fit.psi_hat(1, 2) == 0.0);
    CHECK(fit.converged);
}

TEST_CASE("EM input checks") {
    std::mt19937_64 rng(11);
    const auto one = oracle::simulate_lmm(rng, 1, grid(12, 2.0), {6, 0, 0}, {1, 0, 0}, 0.25);
    CHECK_THROWS_AS(em_fit(one), Error);
    const auto tiny = oracle::simulate_lmm(rng, 2, grid(4, 2.0), {6, 0, 0}, {1, 0, 0}, 0.25);
    CHECK_THROWS_AS(em_fit(tiny), Error);
}

TEST_CASE("individual cosinor fits") {
    SUBCASE("noiseless recovery") {
        const CosinorParams truth{6.0, -0.2, 0.45};
        LongitudinalSeries s{"a", equispaced_times(12), {}};
        for (double t : s.times) s.values.push_back(truth.evaluate(t));
        const auto fit = individual_cosinor(s);
        CHECK((fit.params.as_vector() - truth.as_vector()).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(fit.residual_var < 1e-20);
    }
    SUBCASE("too few samples") {
        LongitudinalSeries s{"a", {0.0, 8.0, 16.0}, {1.0, 2.0, 3.0}};
        CHECK_THROWS_AS(individual_cosinor(s), Error);
    }
    SUBCASE("rank deficient") {
        LongitudinalSeries s{"a", {4.0, 4.0, 4.0, 4.0, 4.0}, {1.0, 2.0, 3.0, 2.0, 1.0}};
        CHECK_THROWS_AS(individual_cosinor(s), Error);
    }
    SUBCASE("covariance on six equispaced times") {
        std::mt19937_64 rng(12);
        std::normal_distribution<double> z(0.0, 0.5);
        LongitudinalSeries s{"a", equispaced_times(6), {}};
        for (double t : s.times) s.values.push_back(6.0 + 0.3 * std::cos(kPi * t / 12.0) + z(rng));
        const auto fit = individual_cosinor(s);
        Mat3 expected = Mat3::Zero();
        expected.diagonal() << 1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0;
        CHECK((fit.cov.sigma - fit.residual_var * expected).cwiseAbs().maxCoeff() < 1e-12);
        // Residual variance against a direct RSS computation.
        const Eigen::MatrixXd w = oracle::design(s.times);
        const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(s.values.data(), 6);
        const Eigen::Vector3d b = (w.transpose() * w).inverse() * w.transpose() * y;
        CHECK(fit.residual_var == doctest::Approx((y - w * b).squaredNorm() / 3.0).epsilon(1e-10));
    }
}

TEST_CASE("Wald statistic") {
    SUBCASE("zero coefficients") {
        FitCovariance cov;
        cov.sigma = Mat3::Identity();
        const auto w = wald_test({1.0, 0.0, 0.0}, cov);
        CHECK(w.tau == 0.0);
        CHECK(w.p_value == 1.0);
        CHECK(w.df == 2);
    }
    SUBCASE("closed form without random effects") {
        const int m = 10, n = 12;
        const double theta1 = 0.5, sigma2 = 0.25;
        std::vector<LongitudinalSeries> data;
        for (int i = 0; i < m; ++i) data.push_back({"i" + std::to_string(i), equispaced_times(n), std::vector<double>(n)});
        const auto info = fixed_information(data, RandomEffectSpec::diagonal(0, 0, 0, sigma2));
        FitCovariance cov;
        cov.sigma = info.inverse();
        const auto coef = amplitude_phase_to_linear(theta1, 0.7);
        const auto w = wald_test({6.0, coef.beta1, coef.beta2}, cov);
        CHECK(std::abs(w.tau - m * n * theta1 * theta1 / (2.0 * sigma2)) < 1e-8);
        CHECK(std::abs(w.tau - 60.0) < 1e-8);
    }
    SUBCASE("diagonal random effects at expected values") {
        const int m = 10, n = 8;
        const double s2 = 0.3, p1 = 0.9, p2 = 0.2, p3 = 0.4, b1 = 0.25, b2 = -0.35;
        const auto t = equispaced_times(n);
        const auto spec = RandomEffectSpec::diagonal(p1, p2, p3, s2);
        const auto v_inv = equispaced_v_inverse(n, t, spec);
        const Eigen::MatrixXd w = oracle::design(t);
        FitCovariance cov;
        cov.sigma = (m * (w.transpose() * v_inv * w)).inverse();
        const double expected =
            m * n / 2.0 *
            ((1.0 / s2 - n * p2 / (s2 * (n * p2 + 2.0 * s2))) * b1 * b1 +
             (1.0 / s2 - n * p3 / (s2 * (n * p3 + 2.0 * s2))) * b2 * b2);
        CHECK(std::abs(wald_test({6.0, b1, b2}, cov).tau - expected) < 1e-8);
    }
    SUBCASE("scaling the coefficients scales tau quadratically") {
        FitCovariance cov;
        cov.sigma << 1.0, 0.1, 0.0, 0.1, 0.5, 0.2, 0.0, 0.2, 0.7;
        const double tau = wald_test({0.0, 0.3, -0.4}, cov).tau;
        CHECK(wald_test({0.0, 0.9, -1.2}, cov).tau == doctest::Approx(9.0 * tau).epsilon(1e-14));
    }
    SUBCASE("singular block") {
        FitCovariance cov;
        cov.sigma = Mat3::Identity();
        cov.sigma(1, 1) = cov.sigma(2, 2) = cov.sigma(1, 2) = cov.sigma(2, 1) = 1.0;
        CHECK_THROWS_AS(wald_test({0.0, 1.0, 1.0}, cov), Error);
    }
}

TEST_CASE("chi-square upper tail against numerical integration") {
    for (double x : {0.0, 0.1, 1.0, 5.991464547107979, 13.8, 40.0}) {
        const double tail = 1.0 - oracle::simpson([](double u) { return 0.5 * std::exp(-0.5 * u); }, 0.0, x);
        CHECK(std::abs(chi2_2df_upper_tail(x) - tail) < 1e-10);
    }
    CHECK(chi2_2df_upper_tail(5.991464547107979) == doctest::Approx(0.05).epsilon(1e-12));
}
