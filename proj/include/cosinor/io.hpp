#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "cosinor/eval.hpp"
#include "cosinor/gene_matrix.hpp"
#include "cosinor/lmm.hpp"
#include "cosinor/phase_adjust.hpp"
#include "cosinor/simgen.hpp"

namespace cosinor::io {

/// Shortest decimal text that reads back to the same double; "nan"/"inf" for non-finite values.
std::string format_double(double v);

/// Parse a decimal number; empty, "NA" and "NaN" (any case) give NaN. Throws Errc::kDataFormat.
double parse_double(std::string_view text);

/// Long-format expression table after ingestion.
struct ExpressionData {
    GeneMatrix data;
    std::optional<std::vector<double>> ict_offset_hours;  // per individual, when the column is present
    std::size_t dropped_missing = 0;                      // rows with missing expression
    std::vector<GeneExclusion> excluded_genes;            // genes off some individual's grid
    std::vector<std::string> warnings;
};

/// Columns individual_id, gene_id, time_hours, expression[, ict_offset_hours] in any order.
/// Individuals and genes keep their order of first appearance. An individual's
/// grid is every time recorded for it; genes without a value at every grid
/// point are excluded. Throws Errc::kDataFormat on malformed input.
ExpressionData read_expression(std::istream& in);
ExpressionData read_expression_file(const std::filesystem::path& path);

void write_expression(std::ostream& out, const GeneMatrix& data, std::span<const double> ict_offset_hours = {});

/// Per-gene fit report.
std::vector<GeneRecord> fit_records(std::span<const std::string> gene_ids,
                                    std::span<const std::optional<MixedFit>> fits,
                                    std::span<const GeneExclusion> failures);
void write_fit_report(std::ostream& out, std::span<const GeneRecord> records);
std::vector<GeneRecord> read_fit_report(std::istream& in);
std::vector<GeneRecord> read_fit_report_file(const std::filesystem::path& path);

/// One translation (hours) per individual.
void write_translations(std::ostream& out, std::span<const std::string> individual_ids,
                        std::span<const double> d_tilde);

/// Per-gene offsets (radians) with the gene's resultant length.
void write_offsets(std::ostream& out, const GeneMatrix& data, const PhaseAdjustment& adjustment);

/// Tab-separated campaign table.
void write_campaign(std::ostream& out, std::span<const CampaignTable> tables);

struct EvaluationRow {
    Quantity quantity = Quantity::kAmplitude;
    GammaFit fit;
};
void write_evaluation(std::ostream& out, std::span<const EvaluationRow> rows);

/// quantity, gene_id, x, y, gamma per pair, for external plotting.
void write_scatter(std::ostream& out, Quantity q, const PairedQuantities& pairs, double gamma, bool header);

/// One id per line; blank lines and lines starting with '#' are ignored.
std::unordered_set<std::string> read_gene_list(std::istream& in);
std::unordered_set<std::string> read_gene_list_file(const std::filesystem::path& path);

}  // namespace cosinor::io
