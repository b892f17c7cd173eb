#include "cosinor/phase_adjust.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "cosinor/circstat.hpp"

namespace cosinor {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Step-5 weight including the limits the closed form cannot express: an exact
// individual fit (zero variance) is trusted fully, an exact population fit not at all.
double limiting_weight(double var_pop, double var_ind) {
    if (var_ind <= 0.0 && var_pop <= 0.0) return 0.5;
    if (var_ind <= 0.0) return 1.0;
    if (var_pop <= 0.0) return 0.0;
    return shrinkage_weight(var_pop, var_ind);
}

struct GeneStage {
    bool usable = false;
    std::string reason;
    double theta_pop = 0.0;
    double var_pop = 0.0;
    std::vector<double> theta_ind;  // NaN where the individual fit failed
    std::vector<double> var_ind;
    std::vector<double> d_hat;
    double omega = kNaN;
};

GeneStage estimate_gene(const GeneMatrix& data, std::size_t g, const AdjustConfig& config,
                        std::optional<MixedFit>& original) {
    GeneStage st;
    const std::size_t m = data.n_individuals();
    st.theta_ind.assign(m, kNaN);
    st.var_ind.assign(m, kNaN);
    st.d_hat.assign(m, kNaN);

    const auto series = data.gene_series(g);
    try {
        original = em_fit(series, config.em);
    } catch (const Error& e) {
        st.reason = std::string("population fit failed: ") + e.what();
        return st;
    }
    if (original->phase_degenerate) {
        st.reason = "population amplitude is zero";
        return st;
    }
    st.theta_pop = original->fixed.phase();
    st.var_pop = phase_variance(original->fixed, original->fixed_cov, config.phase_variance);

    std::vector<double> usable_thetas;
    for (std::size_t i = 0; i < m; ++i) {
        try {
            const IndividualFit fit = individual_cosinor(series[i]);
            const double var = phase_variance(fit.params, fit.cov, config.phase_variance);
            const double theta = fit.params.phase();
            const double w = limiting_weight(st.var_pop, var);
            const double d = per_gene_offset(st.theta_pop, theta, w);
            st.theta_ind[i] = theta;
            st.var_ind[i] = var;
            st.d_hat[i] = d;
            usable_thetas.push_back(theta);
        } catch (const Error&) {
            // this individual does not contribute to gene g
        }
    }
    if (usable_thetas.empty()) {
        st.reason = "no individual-level fit succeeded";
        return st;
    }
    st.omega = resultant_length(usable_thetas);
    st.usable = true;
    return st;
}

}  // namespace

double shrinkage_weight(double var_pop, double var_ind) {
    if (!(var_pop > 0.0) || !(var_ind > 0.0) || !std::isfinite(var_pop) || !std::isfinite(var_ind)) {
        throw Error(Errc::kNonPositiveVariance, "phase variances must be finite and positive");
    }
    const double inv_ind = 1.0 / var_ind;
    return inv_ind / (1.0 / var_pop + inv_ind);
}

double per_gene_offset(double theta_pop, double theta_ind, double w) {
    if (!std::isfinite(theta_pop) || !std::isfinite(theta_ind) || !std::isfinite(w)) {
        throw Error(Errc::kInvalidArgument, "offset inputs must be finite");
    }
    const double s = w * std::sin(theta_ind) + (1.0 - w) * std::sin(theta_pop);
    const double c = w * std::cos(theta_ind) + (1.0 - w) * std::cos(theta_pop);
    if (std::abs(s) < 1e-12 && std::abs(c) < 1e-12) {
        throw Error(Errc::kResultantDegenerate, "weighted phases cancel");
    }
    return wrap_two_pi(std::atan2(s, c) - theta_pop);
}

double aggregate_translation(std::span<const double> d_hat_row, std::span<const double> weights_row) {
    if (d_hat_row.empty()) {
        throw Error(Errc::kNoUsableGenes, "no gene contributes to this individual");
    }
    const double mean = circular_mean(d_hat_row, weights_row);
    return radians_to_hours(mean);
}

CappedWeights inverse_circular_variance_weights(std::span<const double> omegas, double cap) {
    CappedWeights out;
    out.weights.reserve(omegas.size());
    for (std::size_t g = 0; g < omegas.size(); ++g) {
        const double spread = 1.0 - omegas[g];
        if (!(spread > 0.0) || 1.0 / spread > cap) {
            out.weights.push_back(cap);
            out.capped.push_back(g);
        } else {
            out.weights.push_back(1.0 / spread);
        }
    }
    return out;
}

double aggregate_translation_omega(std::span<const double> d_hat_row, std::span<const double> omegas, double cap) {
    if (d_hat_row.size() != omegas.size()) {
        throw Error(Errc::kInvalidArgument, "offsets and Omega values differ in length");
    }
    const CappedWeights w = inverse_circular_variance_weights(omegas, cap);
    return aggregate_translation(d_hat_row, w.weights);
}

AdjustmentResult run_adjustment(const GeneMatrix& data, const AdjustConfig& config) {
    data.validate();
    const std::size_t n_genes = data.n_genes();
    const std::size_t m = data.n_individuals();
    if (m < 2) {
        throw Error(Errc::kInsufficientData, "phase adjustment needs at least 2 individuals");
    }

    AdjustmentResult result;
    PhaseAdjustment& adj = result.adjustment;
    adj.d_hat = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(n_genes), static_cast<Eigen::Index>(m), kNaN);
    adj.omega.assign(n_genes, kNaN);
    result.original.assign(n_genes, std::nullopt);
    result.refit.assign(n_genes, std::nullopt);

    // Steps 1-5, independently per gene.
    std::vector<GeneStage> stages;
    stages.reserve(n_genes);
    for (std::size_t g = 0; g < n_genes; ++g) {
        stages.push_back(estimate_gene(data, g, config, result.original[g]));
        const GeneStage& st = stages.back();
        if (!st.usable) {
            adj.excluded_genes.push_back({data.gene_ids[g], st.reason});
            continue;
        }
        adj.omega[g] = st.omega;
        for (std::size_t i = 0; i < m; ++i) adj.d_hat(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(i)) = st.d_hat[i];
    }
    if (adj.excluded_genes.size() == n_genes) {
        throw Error(Errc::kNoUsableGenes, "every gene was excluded");
    }

    // Step 6. Genes are visited in id order so the result does not depend on input order.
    std::vector<std::size_t> order(n_genes);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return data.gene_ids[a] < data.gene_ids[b]; });

    std::vector<double> omega_weight(n_genes, kNaN);
    for (std::size_t g : order) {
        if (!stages[g].usable) continue;
        const double om = stages[g].omega;
        const CappedWeights w = inverse_circular_variance_weights(std::span<const double>(&om, 1), config.weight_cap);
        omega_weight[g] = w.weights.front();
        if (config.step6 == Step6Weights::kCircularVariance && !w.capped.empty()) {
            adj.warnings.push_back("gene '" + data.gene_ids[g] + "' has near-zero circular variance; weight capped");
        }
    }

    adj.d_tilde.assign(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<double> row;
        std::vector<double> weights;
        for (std::size_t g : order) {
            const GeneStage& st = stages[g];
            if (!st.usable || std::isnan(st.d_hat[i])) continue;
            double w = omega_weight[g];
            if (config.step6 == Step6Weights::kIndividualVariance) {
                const double v = st.var_ind[i];
                w = (v > 0.0) ? std::min(1.0 / v, config.weight_cap) : config.weight_cap;
            }
            row.push_back(st.d_hat[i]);
            weights.push_back(w);
        }
        if (row.empty()) {
            adj.warnings.push_back("individual '" + data.individual_ids[i] + "' has no usable gene; translation set to 0");
            continue;
        }
        try {
            adj.d_tilde[i] = aggregate_translation(row, weights);
        } catch (const Error& e) {
            adj.warnings.push_back("individual '" + data.individual_ids[i] + "': " + e.what() + "; translation set to 0");
        }
    }

    // Step 7.
    for (std::size_t g = 0; g < n_genes; ++g) {
        if (!stages[g].usable) continue;
        try {
            MixedFit refit = em_fit(data.gene_series(g, adj.d_tilde), config.em);
            if (config.realign) {
                refit = realign_population_phase(*result.original[g], refit);
            }
            result.refit[g] = std::move(refit);
        } catch (const Error& e) {
            adj.warnings.push_back("gene '" + data.gene_ids[g] + "' refit failed: " + e.what());
        }
    }
    return result;
}

GeneFits fit_genes(const GeneMatrix& data, const EmConfig& config, std::span<const double> shift_hours,
                   unsigned threads) {
    data.validate();
    const std::size_t n_genes = data.n_genes();
    std::vector<std::optional<MixedFit>> fits(n_genes);
    std::vector<std::string> errors(n_genes);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t g = next++; g < n_genes; g = next++) {
            try {
                fits[g] = em_fit(data.gene_series(g, shift_hours), config);
            } catch (const Error& e) {
                errors[g] = e.what();
            }
        }
    };
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n_genes, 1)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    GeneFits out;
    out.fits = std::move(fits);
    for (std::size_t g = 0; g < n_genes; ++g) {
        if (!out.fits[g]) out.failures.push_back({data.gene_ids[g], errors[g]});
    }
    return out;
}

MixedFit realign_population_phase(const MixedFit& original, const MixedFit& refit) {
    if (original.fixed.phase_degenerate() || refit.fixed.phase_degenerate()) {
        throw Error(Errc::kDegenerateAmplitude, "cannot realign a fit with zero amplitude");
    }
    const double delta = original.fixed.phase() - refit.fixed.phase();
    const double c = std::cos(delta);
    const double s = std::sin(delta);

    // theta2 = atan2(-beta1, beta2) advances by delta under this rotation of (beta1, beta2).
    Mat3 rot = Mat3::Identity();
    rot(1, 1) = c;
    rot(1, 2) = -s;
    rot(2, 1) = s;
    rot(2, 2) = c;

    MixedFit out = refit;
    out.fixed = CosinorParams::from_vector(rot * refit.fixed.as_vector());
    Mat3 cov = rot * refit.fixed_cov.sigma * rot.transpose();
    out.fixed_cov.sigma = 0.5 * (cov + cov.transpose());
    return out;
}

}  // namespace cosinor
