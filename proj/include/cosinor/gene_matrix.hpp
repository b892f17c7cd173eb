#pragma once

#include <span>
#include <string>
#include <vector>

#include "cosinor/core.hpp"

namespace cosinor {

/// G genes read out on one shared sampling schedule: individual i has a single
/// time vector, and every gene has one value per (individual, time).
struct GeneMatrix {
    std::vector<std::string> gene_ids;
    std::vector<std::string> individual_ids;
    std::vector<std::vector<double>> times;                // [individual][sample]
    std::vector<std::vector<std::vector<double>>> values;  // [gene][individual][sample]

    std::size_t n_genes() const noexcept { return gene_ids.size(); }
    std::size_t n_individuals() const noexcept { return individual_ids.size(); }

    void validate() const;

    /// Gene g as one series per individual, with individual i's times shifted by shift_hours[i].
    std::vector<LongitudinalSeries> gene_series(std::size_t g, std::span<const double> shift_hours = {}) const;
};

}  // namespace cosinor
