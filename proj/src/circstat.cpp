#include "cosinor/circstat.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "cosinor/core.hpp"

namespace cosinor {

namespace {

constexpr double kDegenerateComponent = 1e-12;

void check_angles(std::span<const double> angles) {
    if (angles.empty()) {
        throw Error(Errc::kInvalidArgument, "angle sample is empty");
    }
    if (!std::all_of(angles.begin(), angles.end(), [](double a) { return std::isfinite(a); })) {
        throw Error(Errc::kInvalidArgument, "angle sample has a non-finite angle");
    }
}

void check_weights(std::span<const double> weights, std::size_t n) {
    if (weights.size() != n) {
        throw Error(Errc::kInvalidArgument, "weights and angles differ in length");
    }
    bool any_positive = false;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw Error(Errc::kInvalidArgument, "weights must be finite and nonnegative");
        }
        any_positive = any_positive || w > 0.0;
    }
    if (!any_positive) {
        throw Error(Errc::kInvalidArgument, "at least one weight must be positive");
    }
}

}  // namespace

void AngleSample::validate() const {
    check_angles(angles);
    if (weights) check_weights(*weights, angles.size());
}

double Resultant::length() const noexcept {
    return std::min(1.0, std::hypot(mean_sin, mean_cos));
}

Resultant resultant(std::span<const double> angles, std::span<const double> weights) {
    check_angles(angles);
    if (!weights.empty()) check_weights(weights, angles.size());
    // Equal weights cancel; taking the unweighted path makes that exact in floating point.
    const bool weighted = !weights.empty() && std::adjacent_find(weights.begin(), weights.end(),
                                                                 std::not_equal_to<>()) != weights.end();

    double s = 0.0;
    double c = 0.0;
    double total = 0.0;
    for (std::size_t j = 0; j < angles.size(); ++j) {
        const double w = weighted ? weights[j] : 1.0;
        s += w * std::sin(angles[j]);
        c += w * std::cos(angles[j]);
        total += w;
    }
    return {s / total, c / total};
}

double circular_mean(std::span<const double> angles, std::span<const double> weights) {
    const Resultant r = resultant(angles, weights);
    if (std::abs(r.mean_sin) < kDegenerateComponent && std::abs(r.mean_cos) < kDegenerateComponent) {
        throw Error(Errc::kResultantDegenerate, "mean direction is undefined");
    }
    return wrap_pi(std::atan2(r.mean_sin, r.mean_cos));
}

double circular_mean(const AngleSample& sample) {
    sample.validate();
    if (sample.weights) return circular_mean(sample.angles, *sample.weights);
    return circular_mean(sample.angles);
}

double resultant_length(std::span<const double> angles) { return resultant(angles).length(); }

double circular_variance(std::span<const double> angles) { return 1.0 - resultant_length(angles); }

}  // namespace cosinor
