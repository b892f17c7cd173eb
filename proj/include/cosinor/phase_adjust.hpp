#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cosinor/gene_matrix.hpp"
#include "cosinor/lmm.hpp"

namespace cosinor {

/// Inverse-variance weight on the individual estimate:
/// (1/var_ind) / (1/var_pop + 1/var_ind). Throws Errc::kNonPositiveVariance.
double shrinkage_weight(double var_pop, double var_ind);

/// Offset of the weighted circular mean of {theta_ind (weight w), theta_pop (weight 1-w)}
/// from theta_pop, in [0, 2pi).
double per_gene_offset(double theta_pop, double theta_ind, double w);

/// Weighted circular mean of per-gene offsets, converted to hours.
/// Throws Errc::kNoUsableGenes for an empty row.
double aggregate_translation(std::span<const double> d_hat_row, std::span<const double> weights_row);

struct CappedWeights {
    std::vector<double> weights;
    std::vector<std::size_t> capped;  // indices whose weight hit the cap
};

/// 1 / (1 - Omega_g), capped at `cap` when the circular variance is near zero.
CappedWeights inverse_circular_variance_weights(std::span<const double> omegas, double cap = 1e6);

/// Translation in hours using inverse circular variance weights across genes.
double aggregate_translation_omega(std::span<const double> d_hat_row, std::span<const double> omegas,
                                   double cap = 1e6);

enum class Step6Weights {
    kCircularVariance,    // 1 / (1 - Omega_g)
    kIndividualVariance,  // 1 / Var(theta_ind)
};

struct AdjustConfig {
    EmConfig em;
    Step6Weights step6 = Step6Weights::kCircularVariance;
    // Phase variances entering the Step-5 weights (and the inverse phase-variance Step-6 weights).
    // The displayed form is the one that reproduces the published simulation results.
    PhaseVarianceForm phase_variance = PhaseVarianceForm::kDisplayed;
    double weight_cap = 1e6;
    bool realign = false;
};

struct GeneExclusion {
    std::string gene_id;
    std::string reason;
};

struct PhaseAdjustment {
    Eigen::MatrixXd d_hat;       // G x M, radians in [0, 2pi); NaN where unavailable
    std::vector<double> omega;   // per gene; NaN for excluded genes
    std::vector<double> d_tilde; // per individual, hours
    std::vector<GeneExclusion> excluded_genes;
    std::vector<std::string> warnings;
};

struct AdjustmentResult {
    PhaseAdjustment adjustment;
    std::vector<std::optional<MixedFit>> original;  // Step 1 fits on the recorded times
    std::vector<std::optional<MixedFit>> refit;     // Step 7 fits on the translated times
};

/// Estimate population and per-individual phases per gene, shrink and
/// aggregate them into one translation per individual, and refit every gene
/// on the translated times. Gene-level failures become exclusions; the run
/// only throws (Errc::kNoUsableGenes) when no gene survives.
AdjustmentResult run_adjustment(const GeneMatrix& data, const AdjustConfig& config = {});

struct GeneFits {
    std::vector<std::optional<MixedFit>> fits;  // one slot per gene, empty where the fit failed
    std::vector<GeneExclusion> failures;
};

/// Mixed fit of every gene, optionally on shifted times; genes are spread over
/// `threads` workers (0: hardware concurrency) and results keep gene order.
GeneFits fit_genes(const GeneMatrix& data, const EmConfig& config, std::span<const double> shift_hours = {},
                   unsigned threads = 1);

/// Rotate the refit's (beta1, beta2) and covariance so its phase equals the
/// original fit's. Amplitude and Wald statistic are unchanged.
MixedFit realign_population_phase(const MixedFit& original, const MixedFit& refit);

}  // namespace cosinor
