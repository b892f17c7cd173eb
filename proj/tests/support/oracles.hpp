#pragma once

// Reference computations for the tests. These use dense n x n algebra and
// direct formulas and never call the library's own solvers.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cosinor/core.hpp"

namespace oracle {

inline constexpr double kPi = std::numbers::pi;

inline Eigen::MatrixXd design(const std::vector<double>& t) {
    Eigen::MatrixXd w(static_cast<Eigen::Index>(t.size()), 3);
    for (std::size_t j = 0; j < t.size(); ++j) {
        const auto r = static_cast<Eigen::Index>(j);
        w(r, 0) = 1.0;
        w(r, 1) = std::sin(kPi * t[j] / 12.0);
        w(r, 2) = std::cos(kPi * t[j] / 12.0);
    }
    return w;
}

inline Eigen::MatrixXd dense_v(const std::vector<double>& t, const Eigen::Matrix3d& psi, double sigma2) {
    const Eigen::MatrixXd w = design(t);
    Eigen::MatrixXd v = w * psi * w.transpose();
    v += sigma2 * Eigen::MatrixXd::Identity(v.rows(), v.cols());
    return v;
}

struct Gls {
    Eigen::Vector3d beta;
    Eigen::Matrix3d cov;
};

// Generalized least squares with explicitly inverted V_i.
inline Gls dense_gls(const std::vector<cosinor::LongitudinalSeries>& data, const Eigen::Matrix3d& psi,
                     double sigma2) {
    Eigen::Matrix3d info = Eigen::Matrix3d::Zero();
    Eigen::Vector3d score = Eigen::Vector3d::Zero();
    for (const auto& s : data) {
        const Eigen::MatrixXd w = design(s.times);
        const Eigen::MatrixXd v_inv = dense_v(s.times, psi, sigma2).inverse();
        const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(s.values.data(), static_cast<Eigen::Index>(s.size()));
        info += w.transpose() * v_inv * w;
        score += w.transpose() * v_inv * y;
    }
    Gls out;
    out.cov = info.inverse();
    out.beta = out.cov * score;
    return out;
}

// Multivariate normal log density summed over individuals.
inline double dense_loglik(const std::vector<cosinor::LongitudinalSeries>& data, const Eigen::Vector3d& beta,
                           const Eigen::Matrix3d& psi, double sigma2) {
    double ll = 0.0;
    for (const auto& s : data) {
        const Eigen::MatrixXd v = dense_v(s.times, psi, sigma2);
        const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(s.values.data(), static_cast<Eigen::Index>(s.size()));
        const Eigen::VectorXd r = y - design(s.times) * beta;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(v);
        const double logdet = ldlt.vectorD().array().log().sum();
        const double n = static_cast<double>(s.size());
        ll -= 0.5 * (n * std::log(2.0 * kPi) + logdet + r.dot(ldlt.solve(r)));
    }
    return ll;
}

// Data from the random-intercept-and-slopes model with Psi = diag(psi_diag).
inline std::vector<cosinor::LongitudinalSeries> simulate_lmm(std::mt19937_64& rng, int m, const std::vector<double>& t,
                                                             const Eigen::Vector3d& beta,
                                                             const Eigen::Vector3d& psi_diag, double sigma2) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<cosinor::LongitudinalSeries> out;
    for (int i = 0; i < m; ++i) {
        cosinor::LongitudinalSeries s;
        s.individual_id = "i" + std::to_string(i);
        s.times = t;
        Eigen::Vector3d b;
        for (int k = 0; k < 3; ++k) b(k) = std::sqrt(psi_diag(k)) * z(rng);
        const Eigen::Vector3d coef = beta + b;
        for (double tj : t) {
            s.values.push_back(coef(0) + coef(1) * std::sin(kPi * tj / 12.0) + coef(2) * std::cos(kPi * tj / 12.0) +
                               std::sqrt(sigma2) * z(rng));
        }
        out.push_back(std::move(s));
    }
    return out;
}

// Composite Simpson rule with n (even) panels.
template <class F>
double simpson(F f, double a, double b, int n = 20000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * f(a + k * h);
    return s * h / 3.0;
}

}  // namespace oracle
