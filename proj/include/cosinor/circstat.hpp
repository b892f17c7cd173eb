#pragma once

#include <optional>
#include <span>
#include <vector>

namespace cosinor {

/// Angles in radians with optional nonnegative weights of the same length.
struct AngleSample {
    std::vector<double> angles;
    std::optional<std::vector<double>> weights;

    void validate() const;
};

/// Weighted component means of (sin, cos). Both circular_mean and the
/// resultant length are read off this.
struct Resultant {
    double mean_sin = 0.0;
    double mean_cos = 0.0;

    double length() const noexcept;
};

Resultant resultant(std::span<const double> angles, std::span<const double> weights = {});

/// Mean direction in (-pi, pi]. Throws Errc::kResultantDegenerate when both
/// component means are below 1e-12 in magnitude.
double circular_mean(const AngleSample& sample);
double circular_mean(std::span<const double> angles, std::span<const double> weights = {});

/// Mean resultant length Omega in [0, 1].
double resultant_length(std::span<const double> angles);

/// 1 - Omega.
double circular_variance(std::span<const double> angles);

}  // namespace cosinor
