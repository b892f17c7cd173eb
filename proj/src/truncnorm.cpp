// Truncated normal sampling (Robert, 1995) and phase characteristic functions.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <variant>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "cosinor/simgen.hpp"

namespace cosinor {

namespace {

double unit_uniform(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

// 0 <= lo < hi, standardized.
double one_sided(double lo, double hi, Rng& rng) {
    const double a_star = 0.5 * (lo + std::sqrt(lo * lo + 4.0));
    const double uniform_width =
        2.0 / (lo + std::sqrt(lo * lo + 4.0)) * std::exp(0.25 * (lo * lo - lo * std::sqrt(lo * lo + 4.0)) + 0.5);
    if (hi - lo < uniform_width) {
        std::uniform_real_distribution<double> proposal(lo, hi);
        while (true) {
            const double z = proposal(rng);
            if (unit_uniform(rng) < std::exp(0.5 * (lo * lo - z * z))) return z;
        }
    }
    std::exponential_distribution<double> proposal(a_star);
    while (true) {
        const double z = lo + proposal(rng);
        if (z > hi) continue;
        if (unit_uniform(rng) < std::exp(-0.5 * (z - a_star) * (z - a_star))) return z;
    }
}

double standard_trunc_normal(double lo, double hi, Rng& rng) {
    if (lo >= 0.0) return one_sided(lo, hi, rng);
    if (hi <= 0.0) return -one_sided(-hi, -lo, rng);

    constexpr double sqrt_two_pi = 2.5066282746310002;
    if (hi - lo < sqrt_two_pi) {
        std::uniform_real_distribution<double> proposal(lo, hi);
        while (true) {
            const double z = proposal(rng);
            if (unit_uniform(rng) < std::exp(-0.5 * z * z)) return z;
        }
    }
    std::normal_distribution<double> proposal(0.0, 1.0);
    while (true) {
        const double z = proposal(rng);
        if (z >= lo && z <= hi) return z;
    }
}

}  // namespace

double sample_trunc_normal(double mean, double var, double lo, double hi, Rng& rng) {
    if (!(lo < hi) || !(var > 0.0) || !std::isfinite(mean) || !std::isfinite(var)) {
        throw Error(Errc::kInvalidArgument, "truncated normal needs lo < hi and var > 0");
    }
    const double sd = std::sqrt(var);
    const double z = standard_trunc_normal((lo - mean) / sd, (hi - mean) / sd, rng);
    return std::clamp(mean + sd * z, lo, hi);
}

double characteristic_at_one(const PhaseDistribution& dist) {
    struct Visitor {
        double operator()(const PointMass& p) const { return std::cos(p.at); }
        double operator()(const UniformSpec& u) const {
            if (!(u.lo < u.hi)) throw Error(Errc::kInvalidArgument, "uniform needs lo < hi");
            return (std::sin(u.hi) - std::sin(u.lo)) / (u.hi - u.lo);
        }
        double operator()(const TruncNormalSpec& s) const {
            if (!(s.lo < s.hi) || !(s.variance > 0.0)) {
                throw Error(Errc::kInvalidArgument, "truncated normal needs lo < hi and variance > 0");
            }
            using boost::math::quadrature::gauss_kronrod;
            const double sd = std::sqrt(s.variance);
            // Beyond 12 sd the density is below 1e-31 of its peak.
            const double a = std::max(s.lo, s.mean - 12.0 * sd);
            const double b = std::min(s.hi, s.mean + 12.0 * sd);
            if (!(a < b)) throw Error(Errc::kInvalidArgument, "truncation interval carries no mass");
            auto density = [&](double x) {
                const double z = (x - s.mean) / sd;
                return std::exp(-0.5 * z * z);
            };
            double err = 0.0;
            const double mass = gauss_kronrod<double, 61>::integrate(density, a, b, 20, 1e-15, &err);
            const double moment = gauss_kronrod<double, 61>::integrate(
                [&](double x) { return std::cos(x) * density(x); }, a, b, 20, 1e-15, &err);
            return moment / mass;
        }
    };
    return std::visit(Visitor{}, dist);
}

}  // namespace cosinor
