#pragma once

#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cosinor/error.hpp"

namespace cosinor {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Angular frequency of the 24 h cosinor basis, in radians per hour.
inline constexpr double kOmega = std::numbers::pi / 12.0;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Reduce an angle to (-pi, pi]. Every stored phase goes through this.
double wrap_pi(double angle) noexcept;

/// Reduce an angle to [0, 2pi).
double wrap_two_pi(double angle) noexcept;

inline double hours_to_radians(double hours) noexcept { return kOmega * hours; }
inline double radians_to_hours(double radians) noexcept { return radians / kOmega; }

/// One individual's sample times (hours) and one gene's readout at those times.
struct LongitudinalSeries {
    std::string individual_id;
    std::vector<double> times;
    std::vector<double> values;

    std::size_t size() const noexcept { return times.size(); }

    /// Throws Errc::kInvalidArgument when lengths differ, are zero, or a time is not finite.
    void validate() const;
};

struct AmplitudePhase {
    double amplitude = 0.0;  // theta1 >= 0
    double phase = 0.0;      // theta2 in (-pi, pi]
};

/// Linear form of a cosinor fit: mu0 + beta1 sin(wt) + beta2 cos(wt).
struct CosinorParams {
    double mu0 = 0.0;
    double beta1 = 0.0;
    double beta2 = 0.0;

    double amplitude() const noexcept;
    double phase() const noexcept;

    /// True when beta1 = beta2 = 0 and the phase is undefined (reported as 0).
    bool phase_degenerate() const noexcept { return beta1 == 0.0 && beta2 == 0.0; }

    Vec3 as_vector() const noexcept { return {mu0, beta1, beta2}; }
    static CosinorParams from_vector(const Vec3& v) noexcept { return {v(0), v(1), v(2)}; }

    /// Noise-free model value at time t (hours).
    double evaluate(double t) const noexcept;
};

/// Covariance of (mu0, beta1, beta2) estimates.
struct FitCovariance {
    Mat3 sigma = Mat3::Zero();

    void validate() const;
};

/// Random-effect covariance Psi of (m0, b1, b2) and residual variance.
struct RandomEffectSpec {
    Mat3 psi = Mat3::Zero();
    double sigma2 = 1.0;

    void validate() const;
    static RandomEffectSpec diagonal(double psi1, double psi2, double psi3, double sigma2);
};

AmplitudePhase linear_to_amplitude_phase(const CosinorParams& p) noexcept;

struct SinCosCoefficients {
    double beta1 = 0.0;
    double beta2 = 0.0;
};

SinCosCoefficients amplitude_phase_to_linear(double amplitude, double phase);

enum class PhaseVarianceForm {
    // Gradient of atan2(-beta1, beta2), i.e. (-beta2, beta1) / theta1^2.
    kDelta,
    // The closed form as usually displayed, with the gradient normalized by theta1
    // instead of theta1^2; equals theta1^2 times the delta-method value.
    kDisplayed,
};

/// Variance of the phase atan2(-beta1, beta2) from the (mu0, beta1, beta2) covariance.
/// Throws Errc::kDegenerateAmplitude when beta1 = beta2 = 0.
double phase_variance(const CosinorParams& p, const FitCovariance& cov,
                      PhaseVarianceForm form = PhaseVarianceForm::kDisplayed);

/// Eigenvalue clip of a symmetric 3x3 matrix onto the PSD cone.
Mat3 project_psd(const Mat3& m);

}  // namespace cosinor
