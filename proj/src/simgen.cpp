#include "cosinor/simgen.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

namespace cosinor {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

std::uint64_t trial_seed(std::uint64_t campaign_seed, std::uint64_t trial) noexcept {
    return splitmix64(splitmix64(campaign_seed) ^ splitmix64(trial + 0x632be59bd9b4e019ULL));
}

const char* waveform_name(Waveform w) noexcept {
    switch (w) {
        case Waveform::kCosine: return "cosine";
        case Waveform::kCosineOutlier: return "cosine_outlier";
        case Waveform::kCosine2: return "cosine2";
        case Waveform::kPeak: return "peak";
        case Waveform::kTriangle: return "triangle";
        case Waveform::kSquare: return "square";
    }
    return "unknown";
}

SimSetting SimSetting::preset(int id, AmplitudeConvention amplitude) {
    SimSetting s;
    s.id = id;
    s.mu0 = 6.0;
    s.m0_variance = 1.0;
    s.c1 = {0.0, 0.5, -0.3, 0.3};
    s.n_individuals = 10;
    s.noise_variance = 0.25;
    double listed_theta1 = 0.3;
    double c2_variance = 0.0;
    switch (id) {
        case 1:
            s.waveform = Waveform::kCosine;
            listed_theta1 = 0.5;
            s.theta2 = 0.0;
            c2_variance = kPi * kPi / 36.0;
            s.n_samples = 12;
            s.sample_interval = 2.0;
            break;
        case 2:
            s.waveform = Waveform::kCosineOutlier;
            listed_theta1 = 0.5;
            s.theta2 = kPi / 6.0;
            c2_variance = kPi * kPi / 36.0;
            s.n_samples = 8;
            s.sample_interval = 3.0;
            s.outlier_prob = 0.05;
            s.outlier_scale = 1.5;
            break;
        case 3:
            s.waveform = Waveform::kCosine2;
            listed_theta1 = 0.4;
            s.theta2 = kPi / 3.0;
            c2_variance = kPi * kPi / 16.0;
            s.n_samples = 6;
            s.sample_interval = 4.0;
            break;
        case 4:
            s.waveform = Waveform::kPeak;
            listed_theta1 = 0.4;
            s.theta2 = kPi / 2.0;
            c2_variance = kPi * kPi / 16.0;
            s.n_samples = 12;
            s.sample_interval = 2.0;
            break;
        case 5:
            s.waveform = Waveform::kTriangle;
            listed_theta1 = 0.3;
            s.theta2 = 2.0 * kPi / 3.0;
            c2_variance = kPi * kPi / 9.0;
            s.n_samples = 8;
            s.sample_interval = 3.0;
            break;
        case 6:
            s.waveform = Waveform::kSquare;
            listed_theta1 = 0.3;
            s.theta2 = 5.0 * kPi / 6.0;
            c2_variance = kPi * kPi / 9.0;
            s.n_samples = 6;
            s.sample_interval = 4.0;
            break;
        default:
            throw Error(Errc::kInvalidArgument, "simulation setting must be 1-6, got " + std::to_string(id));
    }
    s.theta1 = amplitude == AmplitudeConvention::kListed ? listed_theta1 : 0.3;
    s.c2 = {0.0, c2_variance, -kPi, kPi};
    return s;
}

std::vector<double> SimSetting::sample_times() const {
    std::vector<double> t(static_cast<std::size_t>(n_samples));
    for (int j = 0; j < n_samples; ++j) t[static_cast<std::size_t>(j)] = sample_interval * (j + 1);
    return t;
}

double SimSetting::mean_response(double t, double m0, double c1, double c2) const noexcept {
    const double x = kOmega * t;
    const double amp = theta1 + c1;
    double wave = 0.0;
    switch (waveform) {
        case Waveform::kCosine:
        case Waveform::kCosineOutlier:
            wave = amp * std::cos(x + theta2 + c2);
            break;
        case Waveform::kCosine2:
            // The listed form subtracts theta2 here, unlike the other settings.
            wave = amp * (std::cos(x - theta2 + c2) + 0.5 * std::cos(3.0 * x - kPi / 2.0 - theta2 + c2));
            break;
        case Waveform::kPeak:
            wave = amp * (-1.0 + 2.0 * std::pow(std::cos(0.5 * x + 0.5 * theta2 + c2), 10));
            break;
        case Waveform::kTriangle: {
            const double u = x - kPi / 2.0 - theta2 + c2;
            wave = 8.0 * amp / (kPi * kPi) *
                   (std::sin(u) - std::sin(3.0 * u) / 9.0 + std::sin(5.0 * u) / 25.0);
            break;
        }
        case Waveform::kSquare: {
            const double u = x - kPi / 2.0 - theta2 + c2;
            wave = 4.0 * amp / kPi * (std::sin(u) + std::sin(3.0 * u) / 3.0 + std::sin(5.0 * u) / 5.0);
            break;
        }
    }
    return mu0 + m0 + wave;
}

void SimSetting::validate() const {
    if (n_individuals < 2 || n_samples < 1 || !(sample_interval > 0.0)) {
        throw Error(Errc::kInvalidArgument, "setting needs >= 2 individuals, >= 1 sample and a positive interval");
    }
    if (!(noise_variance >= 0.0) || !(m0_variance >= 0.0)) {
        throw Error(Errc::kInvalidArgument, "variances must be nonnegative");
    }
    if (!(c1.lo < c1.hi) || !(c2.lo < c2.hi) || !(c1.variance > 0.0) || !(c2.variance > 0.0)) {
        throw Error(Errc::kInvalidArgument, "truncated normal effects need lo < hi and positive variance");
    }
    if (!(outlier_prob >= 0.0 && outlier_prob <= 1.0)) {
        throw Error(Errc::kInvalidArgument, "outlier probability must lie in [0, 1]");
    }
}

TrialOutput generate_trial(const SimSetting& setting, std::uint64_t seed, const GenerationHooks& hooks) {
    setting.validate();
    Rng rng = make_rng(seed);
    std::normal_distribution<double> std_normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const auto m = static_cast<std::size_t>(setting.n_individuals);
    const std::vector<double> times = setting.sample_times();

    TrialOutput out;
    out.seed = seed;
    for (GeneMatrix* gm : {&out.data_offset, &out.data_aligned}) {
        gm->gene_ids = {"gene"};
        gm->values.assign(1, std::vector<std::vector<double>>(m));
        gm->times.assign(m, times);
        for (std::size_t i = 0; i < m; ++i) gm->individual_ids.push_back("ind" + std::to_string(i + 1));
    }

    const double m0_sd = std::sqrt(setting.m0_variance);
    const double noise_sd = std::sqrt(setting.noise_variance);
    for (std::size_t i = 0; i < m; ++i) {
        double m0 = m0_sd * std_normal(rng);
        double c1 = sample_trunc_normal(setting.c1, rng);
        double c2 = sample_trunc_normal(setting.c2, rng);
        if (hooks.zero_random_effects) m0 = c1 = c2 = 0.0;
        if (hooks.zero_phase_offsets) c2 = 0.0;
        out.truth.m0.push_back(m0);
        out.truth.c1.push_back(c1);
        out.truth.c2.push_back(c2);

        auto& y_offset = out.data_offset.values[0][i];
        auto& y_aligned = out.data_aligned.values[0][i];
        for (double t : times) {
            double eps = noise_sd * std_normal(rng);
            double multiplier = 1.0;
            if (setting.outlier_prob > 0.0) {
                const double p = unit(rng);
                if (p > 1.0 - setting.outlier_prob) multiplier = setting.outlier_scale;
            }
            if (hooks.zero_noise) {
                eps = 0.0;
                multiplier = 1.0;
            }
            y_offset.push_back(multiplier * (setting.mean_response(t, m0, c1, c2) + eps));
            y_aligned.push_back(multiplier * (setting.mean_response(t, m0, c1, 0.0) + eps));
        }
    }
    return out;
}

PanelOutput generate_panel(const PanelConfig& config, std::uint64_t seed) {
    if (config.n_genes < 1 || config.n_individuals < 2 || config.n_samples < 4 || !(config.sample_interval > 0.0)) {
        throw Error(Errc::kInvalidArgument, "panel needs >= 1 gene, >= 2 individuals and >= 4 samples");
    }
    Rng rng = make_rng(seed, 1);
    std::normal_distribution<double> std_normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const auto m = static_cast<std::size_t>(config.n_individuals);
    const auto n_genes = static_cast<std::size_t>(config.n_genes);
    std::vector<double> times(static_cast<std::size_t>(config.n_samples));
    for (std::size_t j = 0; j < times.size(); ++j) times[j] = config.sample_interval * static_cast<double>(j + 1);

    PanelOutput out;
    GeneMatrix& gm = out.data;
    gm.times.assign(m, times);
    for (std::size_t i = 0; i < m; ++i) gm.individual_ids.push_back("ind" + std::to_string(i + 1));

    std::vector<double> offsets(m);
    for (std::size_t i = 0; i < m; ++i) {
        offsets[i] = sample_trunc_normal(config.offset, rng);
        out.offset_hours.push_back(radians_to_hours(offsets[i]));
    }

    const double m0_sd = std::sqrt(config.m0_variance);
    const double noise_sd = std::sqrt(config.noise_variance);
    for (std::size_t g = 0; g < n_genes; ++g) {
        char id[32];
        std::snprintf(id, sizeof id, "g%03zu", g + 1);
        gm.gene_ids.emplace_back(id);
        const double amplitude = config.amplitude_lo + (config.amplitude_hi - config.amplitude_lo) * unit(rng);
        const double phase = -kPi + kTwoPi * unit(rng);
        std::vector<std::vector<double>> block(m);
        for (std::size_t i = 0; i < m; ++i) {
            const double m0 = m0_sd * std_normal(rng);
            const double c1 = sample_trunc_normal(config.c1, rng);
            const double jitter = config.phase_jitter_sd * std_normal(rng);
            for (double t : times) {
                const double x = kOmega * t;
                block[i].push_back(config.mu0 + m0 + (amplitude + c1) * std::cos(x + phase + offsets[i] + jitter) +
                                   noise_sd * std_normal(rng));
            }
        }
        gm.values.push_back(std::move(block));
    }
    return out;
}

}  // namespace cosinor
