#include "cosinor/core.hpp"

#include <cmath>
#include <numbers>

namespace cosinor {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::kInvalidArgument: return "InvalidArgument";
        case Errc::kDegenerateAmplitude: return "DegenerateAmplitude";
        case Errc::kResultantDegenerate: return "ResultantDegenerate";
        case Errc::kSingularInformation: return "SingularInformation";
        case Errc::kNotEquispaced: return "NotEquispaced";
        case Errc::kInsufficientData: return "InsufficientData";
        case Errc::kRankDeficient: return "RankDeficient";
        case Errc::kTooFewSamples: return "TooFewSamples";
        case Errc::kSingularBlock: return "SingularBlock";
        case Errc::kNonPositiveVariance: return "NonPositiveVariance";
        case Errc::kNoUsableGenes: return "NoUsableGenes";
        case Errc::kZeroCircularVariance: return "ZeroCircularVariance";
        case Errc::kDegenerateCovariate: return "DegenerateCovariate";
        case Errc::kEmptyAfterFilter: return "EmptyAfterFilter";
        case Errc::kDataFormat: return "DataFormat";
    }
    return "Unknown";
}

bool is_numerical(Errc code) noexcept {
    switch (code) {
        case Errc::kDegenerateAmplitude:
        case Errc::kResultantDegenerate:
        case Errc::kSingularInformation:
        case Errc::kRankDeficient:
        case Errc::kSingularBlock:
        case Errc::kNonPositiveVariance:
        case Errc::kZeroCircularVariance:
        case Errc::kDegenerateCovariate:
            return true;
        default:
            return false;
    }
}

double wrap_pi(double angle) noexcept {
    constexpr double pi = std::numbers::pi;
    double r = std::remainder(angle, kTwoPi);  // [-pi, pi]
    if (r <= -pi) r += kTwoPi;
    // -0.0 is reported as 0
    return r == 0.0 ? 0.0 : r;
}

double wrap_two_pi(double angle) noexcept {
    double r = std::fmod(angle, kTwoPi);
    if (r < 0.0) r += kTwoPi;
    if (r >= kTwoPi) r -= kTwoPi;
    return r == 0.0 ? 0.0 : r;
}

void LongitudinalSeries::validate() const {
    if (times.empty()) {
        throw Error(Errc::kInvalidArgument, "series '" + individual_id + "' has no samples");
    }
    if (times.size() != values.size()) {
        throw Error(Errc::kInvalidArgument,
                    "series '" + individual_id + "' has mismatched times/values lengths");
    }
    for (double t : times) {
        if (!std::isfinite(t)) {
            throw Error(Errc::kInvalidArgument, "series '" + individual_id + "' has a non-finite time");
        }
    }
}

double CosinorParams::amplitude() const noexcept { return std::hypot(beta1, beta2); }

double CosinorParams::phase() const noexcept { return wrap_pi(std::atan2(-beta1, beta2)); }

double CosinorParams::evaluate(double t) const noexcept {
    const double x = kOmega * t;
    return mu0 + beta1 * std::sin(x) + beta2 * std::cos(x);
}

void FitCovariance::validate() const {
    const double scale = sigma.cwiseAbs().maxCoeff();
    if (!sigma.allFinite()) {
        throw Error(Errc::kInvalidArgument, "covariance has non-finite entries");
    }
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0)) {
        throw Error(Errc::kInvalidArgument, "covariance is not symmetric");
    }
    if ((sigma.diagonal().array() < 0.0).any()) {
        throw Error(Errc::kInvalidArgument, "covariance has a negative variance");
    }
}

void RandomEffectSpec::validate() const {
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
        throw Error(Errc::kInvalidArgument, "residual variance must be positive");
    }
    if (!psi.allFinite() || (psi - psi.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, psi.cwiseAbs().maxCoeff())) {
        throw Error(Errc::kInvalidArgument, "psi must be finite and symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(psi, Eigen::EigenvaluesOnly);
    const double trace = psi.trace();
    if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(trace, 0.0) - 1e-300) {
        throw Error(Errc::kInvalidArgument, "psi is not positive semidefinite");
    }
}

RandomEffectSpec RandomEffectSpec::diagonal(double psi1, double psi2, double psi3, double sigma2) {
    RandomEffectSpec spec;
    spec.psi = Vec3(psi1, psi2, psi3).asDiagonal();
    spec.sigma2 = sigma2;
    return spec;
}

AmplitudePhase linear_to_amplitude_phase(const CosinorParams& p) noexcept {
    return {p.amplitude(), p.phase()};
}

SinCosCoefficients amplitude_phase_to_linear(double amplitude, double phase) {
    if (!(amplitude >= 0.0)) {
        throw Error(Errc::kInvalidArgument, "amplitude must be nonnegative");
    }
    return {-amplitude * std::sin(phase), amplitude * std::cos(phase)};
}

double phase_variance(const CosinorParams& p, const FitCovariance& cov, PhaseVarianceForm form) {
    const double b1 = p.beta1;
    const double b2 = p.beta2;
    const double norm2 = b1 * b1 + b2 * b2;
    if (norm2 == 0.0) {
        throw Error(Errc::kDegenerateAmplitude, "phase variance undefined at zero amplitude");
    }
    const Mat3& s = cov.sigma;
    const double quad = s(1, 1) * b2 * b2 + s(2, 2) * b1 * b1 - 2.0 * s(1, 2) * b1 * b2;
    const double v = form == PhaseVarianceForm::kDelta ? quad / (norm2 * norm2) : quad / norm2;
    return std::max(v, 0.0);
}

Mat3 project_psd(const Mat3& m) {
    const Mat3 sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat3> eig(sym);
    const Vec3 clipped = eig.eigenvalues().cwiseMax(0.0);
    Mat3 out = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

}  // namespace cosinor
