#include "cosinor/lmm.hpp"

#include <cmath>
#include <string>

namespace cosinor {

namespace {

constexpr double kMaxCondition = 1e12;

// Inverse of a symmetric positive-definite 3x3 matrix, refusing anything with
// condition number >= kMaxCondition.
Mat3 checked_spd_inverse(const Mat3& m, Errc on_failure, const char* what) {
    const Mat3 sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat3> eig(sym, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || !(hi / lo < kMaxCondition)) {
        throw Error(on_failure, std::string(what) + " is numerically singular");
    }
    Eigen::LLT<Mat3> llt(sym);
    Mat3 inv = llt.solve(Mat3::Identity());
    return 0.5 * (inv + inv.transpose());
}

}  // namespace

DesignMatrix DesignMatrix::from_times(std::span<const double> times) {
    DesignMatrix d;
    d.rows.resize(static_cast<Eigen::Index>(times.size()), 3);
    for (std::size_t j = 0; j < times.size(); ++j) {
        const double x = kOmega * times[j];
        const auto r = static_cast<Eigen::Index>(j);
        d.rows(r, 0) = 1.0;
        d.rows(r, 1) = std::sin(x);
        d.rows(r, 2) = std::cos(x);
    }
    return d;
}

GlsResult gls_fixed_effects(std::span<const GlsBlock> blocks) {
    if (blocks.empty()) {
        throw Error(Errc::kInsufficientData, "no blocks supplied to GLS");
    }
    Mat3 info = Mat3::Zero();
    Vec3 score = Vec3::Zero();
    for (const GlsBlock& b : blocks) {
        const Eigen::Index n = b.design.size();
        if (b.y.size() != n || b.v_inv.rows() != n || b.v_inv.cols() != n) {
            throw Error(Errc::kInvalidArgument, "GLS block dimensions disagree");
        }
        const Eigen::Matrix<double, Eigen::Dynamic, 3> vw = b.v_inv * b.design.rows;
        info.noalias() += b.design.rows.transpose() * vw;
        score.noalias() += vw.transpose() * b.y;
    }
    GlsResult out;
    out.cov.sigma = checked_spd_inverse(info, Errc::kSingularInformation, "information matrix");
    out.params = CosinorParams::from_vector(out.cov.sigma * score);
    return out;
}

Eigen::MatrixXd marginal_covariance(const DesignMatrix& design, const RandomEffectSpec& spec) {
    Eigen::MatrixXd v = design.rows * spec.psi * design.rows.transpose();
    v.diagonal().array() += spec.sigma2;
    return v;
}

std::vector<double> equispaced_times(int n) {
    std::vector<double> t(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) t[static_cast<std::size_t>(j)] = 24.0 * j / n;
    return t;
}

Eigen::MatrixXd equispaced_v_inverse(int n, std::span<const double> times, const RandomEffectSpec& spec) {
    if (n < 3) {
        throw Error(Errc::kInvalidArgument, "closed-form inverse needs n >= 3");
    }
    if (static_cast<int>(times.size()) != n) {
        throw Error(Errc::kInvalidArgument, "times length differs from n");
    }
    for (int j = 0; j < n; ++j) {
        if (std::abs(times[static_cast<std::size_t>(j)] - 24.0 * j / n) > 1e-9) {
            throw Error(Errc::kNotEquispaced, "time " + std::to_string(j) + " is off the equispaced grid");
        }
    }
    spec.validate();
    const Mat3& psi = spec.psi;
    if (psi(0, 1) != 0.0 || psi(0, 2) != 0.0 || psi(1, 2) != 0.0) {
        throw Error(Errc::kInvalidArgument, "closed-form inverse needs a diagonal psi");
    }

    const double s2 = spec.sigma2;
    const double nd = static_cast<double>(n);
    const double k0 = psi(0, 0) / (s2 * (nd * psi(0, 0) + s2));
    const double k1 = 2.0 * psi(1, 1) / (s2 * (nd * psi(1, 1) + 2.0 * s2));
    const double k2 = 2.0 * psi(2, 2) / (s2 * (nd * psi(2, 2) + 2.0 * s2));

    Eigen::VectorXd sn(n), cs(n);
    for (int j = 0; j < n; ++j) {
        const double x = kOmega * times[static_cast<std::size_t>(j)];
        sn(j) = std::sin(x);
        cs(j) = std::cos(x);
    }
    Eigen::MatrixXd out = Eigen::MatrixXd::Constant(n, n, -k0);
    out.noalias() -= k1 * sn * sn.transpose();
    out.noalias() -= k2 * cs * cs.transpose();
    out.diagonal().array() += 1.0 / s2;
    return out;
}

IndividualFit individual_cosinor(const LongitudinalSeries& series) {
    series.validate();
    const auto n = static_cast<Eigen::Index>(series.size());
    if (n < 4) {
        throw Error(Errc::kTooFewSamples, "individual '" + series.individual_id + "' has fewer than 4 samples");
    }
    const DesignMatrix w = DesignMatrix::from_times(series.times);
    const Eigen::Map<const Eigen::VectorXd> y(series.values.data(), n);

    Eigen::ColPivHouseholderQR<Eigen::Matrix<double, Eigen::Dynamic, 3>> qr(w.rows);
    qr.setThreshold(1e-10);
    if (qr.rank() < 3) {
        throw Error(Errc::kRankDeficient, "design for '" + series.individual_id + "' is rank deficient");
    }
    const Vec3 beta = qr.solve(y);
    const double rss = (y - w.rows * beta).squaredNorm();

    IndividualFit fit;
    fit.params = CosinorParams::from_vector(beta);
    fit.n = static_cast<int>(n);
    fit.residual_var = rss / static_cast<double>(n - 3);
    const Mat3 wtw = w.rows.transpose() * w.rows;
    const Mat3 wtw_inv = checked_spd_inverse(wtw, Errc::kRankDeficient, "W'W");
    fit.cov.sigma = fit.residual_var * wtw_inv;
    return fit;
}

double chi2_2df_upper_tail(double x) noexcept {
    if (!(x > 0.0)) return 1.0;
    return std::exp(-0.5 * x);
}

WaldResult wald_test(const CosinorParams& params, const FitCovariance& cov) {
    const Eigen::Matrix2d block = cov.sigma.block<2, 2>(1, 1);
    const Eigen::Matrix2d sym = 0.5 * (block + block.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(sym, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || !(hi / lo < kMaxCondition)) {
        throw Error(Errc::kSingularBlock, "(beta1, beta2) covariance block is singular");
    }
    const Eigen::Vector2d b(params.beta1, params.beta2);
    WaldResult out;
    out.tau = std::max(0.0, b.dot(sym.llt().solve(b)));
    out.p_value = chi2_2df_upper_tail(out.tau);
    return out;
}

WaldResult wald_test(const MixedFit& fit) { return wald_test(fit.fixed, fit.fixed_cov); }

}  // namespace cosinor
