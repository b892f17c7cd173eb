#include "cosinor/gene_matrix.hpp"

#include <cmath>
#include <set>

namespace cosinor {

void GeneMatrix::validate() const {
    const std::size_t m = individual_ids.size();
    if (times.size() != m) {
        throw Error(Errc::kInvalidArgument, "one time vector per individual is required");
    }
    if (values.size() != gene_ids.size()) {
        throw Error(Errc::kInvalidArgument, "one value block per gene is required");
    }
    if (std::set<std::string>(gene_ids.begin(), gene_ids.end()).size() != gene_ids.size()) {
        throw Error(Errc::kInvalidArgument, "gene ids must be unique");
    }
    if (std::set<std::string>(individual_ids.begin(), individual_ids.end()).size() != m) {
        throw Error(Errc::kInvalidArgument, "individual ids must be unique");
    }
    for (std::size_t i = 0; i < m; ++i) {
        if (times[i].empty()) {
            throw Error(Errc::kInvalidArgument, "individual '" + individual_ids[i] + "' has no samples");
        }
        for (double t : times[i]) {
            if (!std::isfinite(t)) {
                throw Error(Errc::kInvalidArgument, "individual '" + individual_ids[i] + "' has a non-finite time");
            }
        }
    }
    for (std::size_t g = 0; g < values.size(); ++g) {
        if (values[g].size() != m) {
            throw Error(Errc::kInvalidArgument, "gene '" + gene_ids[g] + "' does not cover every individual");
        }
        for (std::size_t i = 0; i < m; ++i) {
            if (values[g][i].size() != times[i].size()) {
                throw Error(Errc::kInvalidArgument,
                            "gene '" + gene_ids[g] + "' is off individual '" + individual_ids[i] + "''s time grid");
            }
        }
    }
}

std::vector<LongitudinalSeries> GeneMatrix::gene_series(std::size_t g, std::span<const double> shift_hours) const {
    if (g >= values.size()) {
        throw Error(Errc::kInvalidArgument, "gene index out of range");
    }
    if (!shift_hours.empty() && shift_hours.size() != individual_ids.size()) {
        throw Error(Errc::kInvalidArgument, "one shift per individual is required");
    }
    std::vector<LongitudinalSeries> out;
    out.reserve(individual_ids.size());
    for (std::size_t i = 0; i < individual_ids.size(); ++i) {
        LongitudinalSeries s;
        s.individual_id = individual_ids[i];
        s.times = times[i];
        if (!shift_hours.empty()) {
            for (double& t : s.times) t += shift_hours[i];
        }
        s.values = values[g][i];
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace cosinor
