#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "cosinor/gene_matrix.hpp"
#include "cosinor/lmm.hpp"
#include "cosinor/phase_adjust.hpp"

namespace cosinor {

using Rng = std::mt19937_64;

/// Independent substream for (seed, stream); identical inputs give identical streams.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

/// Seed of trial `trial` in a campaign seeded with `campaign_seed`.
std::uint64_t trial_seed(std::uint64_t campaign_seed, std::uint64_t trial) noexcept;

struct TruncNormalSpec {
    double mean = 0.0;
    double variance = 1.0;  // of the parent normal
    double lo = -1.0;
    double hi = 1.0;
};

/// Draw from N(mean, var) restricted to [lo, hi].
double sample_trunc_normal(double mean, double var, double lo, double hi, Rng& rng);
inline double sample_trunc_normal(const TruncNormalSpec& s, Rng& rng) {
    return sample_trunc_normal(s.mean, s.variance, s.lo, s.hi, rng);
}

struct PointMass {
    double at = 0.0;
};
struct UniformSpec {
    double lo = 0.0;
    double hi = 1.0;
};
using PhaseDistribution = std::variant<PointMass, UniformSpec, TruncNormalSpec>;

/// E[cos(c2)], the characteristic function of a symmetric phase distribution at t = 1.
/// Truncated normals are integrated by adaptive Gauss-Kronrod quadrature.
double characteristic_at_one(const PhaseDistribution& dist);

enum class Waveform { kCosine, kCosineOutlier, kCosine2, kPeak, kTriangle, kSquare };

const char* waveform_name(Waveform w) noexcept;

/// Which population amplitude the presets carry. The setting list gives
/// 0.5/0.5/0.4/0.4/0.3/0.3 but the design note (and the reported results)
/// use 0.3 throughout.
enum class AmplitudeConvention { kCommon, kListed };

struct SimSetting {
    int id = 1;
    Waveform waveform = Waveform::kCosine;
    double mu0 = 6.0;
    double theta1 = 0.3;
    double theta2 = 0.0;
    double m0_variance = 1.0;
    TruncNormalSpec c1{0.0, 0.5, -0.3, 0.3};
    TruncNormalSpec c2{0.0, 1.0, -3.141592653589793, 3.141592653589793};
    int n_individuals = 10;
    int n_samples = 12;
    double sample_interval = 2.0;
    double noise_variance = 0.25;
    double outlier_prob = 0.0;
    double outlier_scale = 1.0;

    /// Settings 1-6. Throws Errc::kInvalidArgument for any other id.
    static SimSetting preset(int id, AmplitudeConvention amplitude = AmplitudeConvention::kCommon);

    /// interval * j for j = 1..n.
    std::vector<double> sample_times() const;

    /// Noise-free response at time t (hours) for one individual's effects, before any outlier multiplier.
    double mean_response(double t, double m0, double c1, double c2) const noexcept;

    void validate() const;
};

/// Debug switches; draws still happen so the random stream is unchanged.
struct GenerationHooks {
    bool zero_random_effects = false;
    bool zero_noise = false;  // also disables outlier multipliers
    bool zero_phase_offsets = false;
};

struct TrialTruth {
    std::vector<double> m0;
    std::vector<double> c1;
    std::vector<double> c2;
};

struct TrialOutput {
    GeneMatrix data_offset;   // individual phase offsets present
    GeneMatrix data_aligned;  // same draws, phase offsets removed from the mean
    TrialTruth truth;
    std::uint64_t seed = 0;
};

TrialOutput generate_trial(const SimSetting& setting, std::uint64_t seed, const GenerationHooks& hooks = {});

enum class Framework {
    kAdjusted = 1,  // phase adjustment on the offset data
    kNaive = 2,     // mixed fit on the offset data
    kAligned = 3,   // mixed fit on the aligned data
};

struct FrameworkEstimate {
    bool ok = false;
    bool converged = false;
    double theta1 = 0.0;
    double tau = 0.0;
};

struct TrialEstimates {
    FrameworkEstimate adjusted;
    FrameworkEstimate naive;
    FrameworkEstimate aligned;

    const FrameworkEstimate& get(Framework f) const noexcept;
};

struct FrameworkStats {
    Framework framework = Framework::kAligned;
    double mean_theta1 = 0.0;
    double sd_theta1 = 0.0;
    double mean_tau = 0.0;
    double sd_tau = 0.0;
    int n_ok = 0;
    int n_failed = 0;
    int n_nonconverged = 0;
};

struct CampaignTable {
    int setting_id = 1;
    int trials = 0;
    std::uint64_t seed = 0;
    std::vector<FrameworkStats> rows;

    const FrameworkStats& row(Framework f) const;
};

struct CampaignOptions {
    AdjustConfig adjust;  // adjust.em is used for every framework
    GenerationHooks hooks;
    unsigned threads = 0;  // 0: hardware concurrency
};

/// Per-trial estimates, trial k generated from trial_seed(seed, k).
std::vector<TrialEstimates> run_trials(const SimSetting& setting, int trials, std::span<const Framework> frameworks,
                                       std::uint64_t seed, const CampaignOptions& options = {});

/// Mean and SD over trials of the amplitude estimate and Wald statistic, per framework.
CampaignTable run_campaign(const SimSetting& setting, int trials, std::span<const Framework> frameworks,
                           std::uint64_t seed, const CampaignOptions& options = {});

/// Aggregate per-trial estimates; Kahan-compensated so the order of trial completion does not matter.
CampaignTable summarize_trials(int setting_id, std::uint64_t seed, std::span<const TrialEstimates> estimates,
                               std::span<const Framework> frameworks);

/// Multi-gene synthetic study: every individual carries one internal-clock
/// offset shared by all genes, plus a small gene-specific phase jitter.
struct PanelConfig {
    int n_genes = 50;
    int n_individuals = 10;
    int n_samples = 12;
    double sample_interval = 2.0;
    double mu0 = 6.0;
    double m0_variance = 1.0;
    double amplitude_lo = 0.2;
    double amplitude_hi = 1.0;
    TruncNormalSpec c1{0.0, 0.5, -0.1, 0.1};
    TruncNormalSpec offset{0.0, 0.2741556778080377, -3.141592653589793, 3.141592653589793};  // pi^2/36
    double phase_jitter_sd = 0.1;
    double noise_variance = 0.25;
};

struct PanelOutput {
    GeneMatrix data;
    std::vector<double> offset_hours;  // internal time = recorded time + offset
};

PanelOutput generate_panel(const PanelConfig& config, std::uint64_t seed);

}  // namespace cosinor
