#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cosinor/core.hpp"

namespace cosinor {

/// n x 3 cosinor design with rows [1, sin(wt), cos(wt)].
struct DesignMatrix {
    Eigen::Matrix<double, Eigen::Dynamic, 3> rows;

    static DesignMatrix from_times(std::span<const double> times);
    Eigen::Index size() const noexcept { return rows.rows(); }
};

/// One individual's contribution to a GLS solve with an explicit V^{-1}.
struct GlsBlock {
    DesignMatrix design;
    Eigen::VectorXd y;
    Eigen::MatrixXd v_inv;
};

struct GlsResult {
    CosinorParams params;
    FitCovariance cov;
};

/// (sum W' V^-1 W)^-1 (sum W' V^-1 y) with covariance (sum W' V^-1 W)^-1.
/// Throws Errc::kSingularInformation when the summed information has condition >= 1e12.
GlsResult gls_fixed_effects(std::span<const GlsBlock> blocks);

/// Dense V = sigma2 I + W Psi W' for the given design.
Eigen::MatrixXd marginal_covariance(const DesignMatrix& design, const RandomEffectSpec& spec);

/// Closed-form inverse of sigma2 I + W Psi W' for the equispaced grid 24(j-1)/n and diagonal Psi.
/// Throws Errc::kNotEquispaced when a time is off the grid by more than 1e-9 h.
Eigen::MatrixXd equispaced_v_inverse(int n, std::span<const double> times, const RandomEffectSpec& spec);

/// The grid 24(j-1)/n, j = 1..n.
std::vector<double> equispaced_times(int n);

enum class PsiStructure { kFull, kDiagonal };

struct EmConfig {
    int max_iterations = 500;
    double loglik_tol = 1e-8;
    double param_tol = 1e-8;
    PsiStructure psi_structure = PsiStructure::kFull;
    double psi_init_floor = 1e-6;
    // Keeps the likelihood bounded on noiseless data.
    double sigma2_floor = 1e-12;
    bool record_trace = false;
    // Squared-extrapolation acceleration; every accepted step still raises the likelihood.
    bool accelerate = true;
    // Quasi-Newton steps after EM on the profiled likelihood (0 disables);
    // converged when the scaled score norm drops below gradient_tol.
    int polish_iterations = 200;
    double gradient_tol = 1e-7;
    // EM hands over to the quasi-Newton steps once its gain per iteration falls below this.
    double handoff_tol = 1e-5;
    // When set, overrides the data-driven start.
    std::optional<RandomEffectSpec> start;
};

struct MixedFit {
    CosinorParams fixed;
    Mat3 psi_hat = Mat3::Zero();
    double sigma2_hat = 0.0;
    FitCovariance fixed_cov;
    double loglik = 0.0;
    int iterations = 0;
    bool converged = false;
    bool phase_degenerate = false;
    std::vector<double> loglik_trace;
};

/// Maximum-likelihood fit of the linear mixed cosinor model. Fixed effects are
/// the GLS solution at the returned (Psi, sigma2); variance components are
/// updated by EM. Non-convergence is reported through `converged`, not thrown.
MixedFit em_fit(std::span<const LongitudinalSeries> data, const EmConfig& config = {});

/// Marginal log-likelihood of the data at (beta, Psi, sigma2).
double log_likelihood(std::span<const LongitudinalSeries> data, const CosinorParams& beta,
                      const RandomEffectSpec& spec);

/// sum_i W_i' V_i^-1 W_i.
Mat3 fixed_information(std::span<const LongitudinalSeries> data, const RandomEffectSpec& spec);

/// GLS fixed effects at known (Psi, sigma2), computed through 3x3 sufficient statistics.
GlsResult gls_at(std::span<const LongitudinalSeries> data, const RandomEffectSpec& spec);

struct IndividualFit {
    CosinorParams params;
    FitCovariance cov;
    double residual_var = 0.0;
    int n = 0;
};

/// OLS cosinor fit of one individual; residual_var = RSS / (n - 3).
/// Throws Errc::kTooFewSamples when n < 4, Errc::kRankDeficient when W lacks full column rank.
IndividualFit individual_cosinor(const LongitudinalSeries& series);

struct WaldResult {
    double tau = 0.0;
    int df = 2;
    double p_value = 1.0;
};

/// Upper tail of chi-square with 2 degrees of freedom.
double chi2_2df_upper_tail(double x) noexcept;

/// Wald test of beta1 = beta2 = 0 using the (beta1, beta2) block of the covariance.
/// Throws Errc::kSingularBlock when that block is not invertible.
WaldResult wald_test(const CosinorParams& params, const FitCovariance& cov);
WaldResult wald_test(const MixedFit& fit);

}  // namespace cosinor
