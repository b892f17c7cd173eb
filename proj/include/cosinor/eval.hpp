#pragma once

#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "cosinor/error.hpp"

namespace cosinor {

/// Per-gene quantities from a framework on recorded times (x) and from the
/// reference framework on internal times (y).
struct PairedQuantities {
    std::vector<std::string> gene_ids;
    std::vector<double> x;
    std::vector<double> y;

    void validate() const;
};

enum class R2Convention {
    kUncentered,  // 1 - SSE / sum(y^2)
    kCentered,    // 1 - SSE / sum((y - mean y)^2)
};

struct GammaFit {
    double gamma = 0.0;
    double r2 = 0.0;
    std::size_t n = 0;
};

/// Least-squares slope of y on x through the origin, with R^2.
/// Throws Errc::kDegenerateCovariate when every x is zero.
GammaFit gamma_fit(const PairedQuantities& pairs, R2Convention convention = R2Convention::kUncentered);

/// One row of a per-gene report.
struct GeneRecord {
    std::string gene_id;
    bool ok = false;
    double mu0 = 0.0;
    double beta1 = 0.0;
    double beta2 = 0.0;
    double theta1 = 0.0;
    double theta2 = 0.0;
    double tau = 0.0;
    double p_value = 1.0;
    double sigma2 = 0.0;
    double loglik = 0.0;
    bool converged = false;
    int iterations = 0;
    std::string note;
};

/// Keep the records whose gene id is in `keep`, in their original order.
/// Throws Errc::kEmptyAfterFilter when nothing survives.
std::vector<GeneRecord> gene_filter(std::span<const GeneRecord> records, const std::unordered_set<std::string>& keep);

enum class Quantity { kAmplitude, kWald };

const char* quantity_name(Quantity q) noexcept;

struct PairingResult {
    PairedQuantities pairs;
    std::vector<std::string> only_in_x;  // ok genes without a counterpart
    std::vector<std::string> only_in_y;
};

/// Match successful genes of two reports by id, in the order of `xs`.
PairingResult pair_reports(std::span<const GeneRecord> xs, std::span<const GeneRecord> ys, Quantity q);

}  // namespace cosinor
