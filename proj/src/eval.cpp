#include "cosinor/eval.hpp"

#include <cmath>
#include <limits>
#include <unordered_map>

namespace cosinor {

void PairedQuantities::validate() const {
    if (x.size() != y.size() || gene_ids.size() != x.size()) {
        throw Error(Errc::kInvalidArgument, "paired quantities differ in length");
    }
    if (x.size() < 2) {
        throw Error(Errc::kInvalidArgument, "at least 2 pairs are required");
    }
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!std::isfinite(x[k]) || !std::isfinite(y[k])) {
            throw Error(Errc::kInvalidArgument, "gene '" + gene_ids[k] + "' has a non-finite quantity");
        }
    }
}

GammaFit gamma_fit(const PairedQuantities& pairs, R2Convention convention) {
    pairs.validate();
    double sxx = 0.0, sxy = 0.0, syy = 0.0, sy = 0.0;
    for (std::size_t k = 0; k < pairs.x.size(); ++k) {
        sxx += pairs.x[k] * pairs.x[k];
        sxy += pairs.x[k] * pairs.y[k];
        syy += pairs.y[k] * pairs.y[k];
        sy += pairs.y[k];
    }
    if (!(sxx > 0.0)) {
        throw Error(Errc::kDegenerateCovariate, "every covariate value is zero");
    }
    GammaFit out;
    out.n = pairs.x.size();
    out.gamma = sxy / sxx;
    double sse = 0.0;
    for (std::size_t k = 0; k < pairs.x.size(); ++k) {
        const double e = pairs.y[k] - out.gamma * pairs.x[k];
        sse += e * e;
    }
    double total = syy;
    if (convention == R2Convention::kCentered) {
        const double mean = sy / static_cast<double>(out.n);
        total = 0.0;
        for (double v : pairs.y) total += (v - mean) * (v - mean);
    }
    if (total > 0.0) {
        out.r2 = 1.0 - sse / total;
    } else {
        out.r2 = sse == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    }
    return out;
}

std::vector<GeneRecord> gene_filter(std::span<const GeneRecord> records, const std::unordered_set<std::string>& keep) {
    std::vector<GeneRecord> out;
    for (const GeneRecord& r : records) {
        if (keep.contains(r.gene_id)) out.push_back(r);
    }
    if (out.empty()) {
        throw Error(Errc::kEmptyAfterFilter, "no gene survived the gene list filter");
    }
    return out;
}

const char* quantity_name(Quantity q) noexcept {
    return q == Quantity::kAmplitude ? "amplitude" : "wald";
}

PairingResult pair_reports(std::span<const GeneRecord> xs, std::span<const GeneRecord> ys, Quantity q) {
    auto value = [q](const GeneRecord& r) { return q == Quantity::kAmplitude ? r.theta1 : r.tau; };
    std::unordered_map<std::string, const GeneRecord*> by_id;
    for (const GeneRecord& r : ys) {
        if (r.ok) by_id.emplace(r.gene_id, &r);
    }
    PairingResult out;
    std::unordered_set<std::string> matched;
    for (const GeneRecord& r : xs) {
        if (!r.ok) continue;
        auto it = by_id.find(r.gene_id);
        if (it == by_id.end()) {
            out.only_in_x.push_back(r.gene_id);
            continue;
        }
        matched.insert(r.gene_id);
        out.pairs.gene_ids.push_back(r.gene_id);
        out.pairs.x.push_back(value(r));
        out.pairs.y.push_back(value(*it->second));
    }
    for (const GeneRecord& r : ys) {
        if (r.ok && !matched.contains(r.gene_id)) out.only_in_y.push_back(r.gene_id);
    }
    return out;
}

}  // namespace cosinor
