#include "cosinor/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <unordered_map>

namespace cosinor::io {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            out.emplace_back(trim(field));
            field.clear();
        } else {
            field.push_back(c);
        }
    }
    out.emplace_back(trim(field));
    return out;
}

bool lower_equals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) == y;
           });
}

std::string clean_note(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

struct Header {
    std::unordered_map<std::string, std::size_t> index;

    explicit Header(const std::vector<std::string>& names) {
        for (std::size_t k = 0; k < names.size(); ++k) index.emplace(names[k], k);
    }
    std::optional<std::size_t> find(const std::string& name) const {
        auto it = index.find(name);
        if (it == index.end()) return std::nullopt;
        return it->second;
    }
    std::size_t require(const std::string& name) const {
        auto k = find(name);
        if (!k) throw Error(Errc::kDataFormat, "missing column '" + name + "'");
        return *k;
    }
};

template <class T>
std::ifstream open_input(const T& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::kDataFormat, "cannot open '" + path.string() + "'");
    return in;
}

std::string line_ref(std::size_t line_no) { return "line " + std::to_string(line_no) + ": "; }

}  // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
    text = trim(text);
    if (text.empty() || lower_equals(text, "na") || lower_equals(text, "nan")) return kNaN;
    if (text.front() == '+') text.remove_prefix(1);
    double v = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        if (lower_equals(text, "inf")) return std::numeric_limits<double>::infinity();
        if (lower_equals(text, "-inf")) return -std::numeric_limits<double>::infinity();
        throw Error(Errc::kDataFormat, "not a number: '" + std::string(text) + "'");
    }
    return v;
}

ExpressionData read_expression(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) break;
    }
    if (trim(line).empty()) throw Error(Errc::kDataFormat, "expression file is empty");
    const Header header(split_csv(line));
    const std::size_t c_ind = header.require("individual_id");
    const std::size_t c_gene = header.require("gene_id");
    const std::size_t c_time = header.require("time_hours");
    const std::size_t c_expr = header.require("expression");
    const std::optional<std::size_t> c_ict = header.find("ict_offset_hours");
    const std::size_t n_cols = header.index.size();

    std::vector<std::string> individuals, genes;
    std::unordered_map<std::string, std::size_t> ind_index, gene_index;
    std::vector<std::vector<double>> grid_raw;                    // [individual] all recorded times
    std::map<std::tuple<std::size_t, std::size_t, double>, double> cells;  // (gene, individual, time)
    std::vector<double> offsets;
    std::vector<bool> offset_seen;

    ExpressionData out;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split_csv(line);
        if (fields.size() != n_cols) {
            throw Error(Errc::kDataFormat, line_ref(line_no) + "expected " + std::to_string(n_cols) + " fields");
        }
        const std::string& ind = fields[c_ind];
        const std::string& gene = fields[c_gene];
        if (ind.empty() || gene.empty()) throw Error(Errc::kDataFormat, line_ref(line_no) + "empty id");
        const double t = parse_double(fields[c_time]);
        if (!std::isfinite(t)) throw Error(Errc::kDataFormat, line_ref(line_no) + "time_hours must be finite");

        auto [iit, new_ind] = ind_index.emplace(ind, individuals.size());
        if (new_ind) {
            individuals.push_back(ind);
            grid_raw.emplace_back();
            offsets.push_back(kNaN);
            offset_seen.push_back(false);
        }
        const std::size_t i = iit->second;
        auto [git, new_gene] = gene_index.emplace(gene, genes.size());
        if (new_gene) genes.push_back(gene);
        const std::size_t g = git->second;

        if (c_ict) {
            const double off = parse_double(fields[*c_ict]);
            if (!offset_seen[i]) {
                offsets[i] = off;
                offset_seen[i] = true;
            } else if (!(std::isnan(off) && std::isnan(offsets[i])) && off != offsets[i]) {
                throw Error(Errc::kDataFormat,
                            line_ref(line_no) + "individual '" + ind + "' has conflicting ict_offset_hours");
            }
        }

        grid_raw[i].push_back(t);
        const double y = parse_double(fields[c_expr]);
        if (std::isnan(y)) {
            ++out.dropped_missing;
            continue;
        }
        if (!std::isfinite(y)) throw Error(Errc::kDataFormat, line_ref(line_no) + "expression must be finite");
        if (!cells.emplace(std::make_tuple(g, i, t), y).second) {
            throw Error(Errc::kDataFormat, line_ref(line_no) + "duplicate (individual, gene, time) entry");
        }
    }
    if (individuals.empty()) throw Error(Errc::kDataFormat, "expression file has no data rows");

    // Individuals without a known offset cannot enter an internal-time analysis.
    std::vector<std::size_t> kept_individuals;
    for (std::size_t i = 0; i < individuals.size(); ++i) {
        if (c_ict && std::isnan(offsets[i])) {
            out.warnings.push_back("individual '" + individuals[i] + "' has no ict_offset_hours and was excluded");
            continue;
        }
        kept_individuals.push_back(i);
    }
    if (kept_individuals.empty()) throw Error(Errc::kDataFormat, "no individual remains after filtering");

    GeneMatrix& gm = out.data;
    for (std::size_t i : kept_individuals) {
        std::vector<double> grid = grid_raw[i];
        std::sort(grid.begin(), grid.end());
        grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
        gm.individual_ids.push_back(individuals[i]);
        gm.times.push_back(std::move(grid));
    }
    for (std::size_t g = 0; g < genes.size(); ++g) {
        std::vector<std::vector<double>> block;
        std::string missing;
        for (std::size_t k = 0; k < kept_individuals.size() && missing.empty(); ++k) {
            const std::size_t i = kept_individuals[k];
            std::vector<double> row;
            for (double t : gm.times[k]) {
                auto it = cells.find(std::make_tuple(g, i, t));
                if (it == cells.end()) {
                    missing = "no value for individual '" + individuals[i] + "' at time " + format_double(t);
                    break;
                }
                row.push_back(it->second);
            }
            block.push_back(std::move(row));
        }
        if (!missing.empty()) {
            out.excluded_genes.push_back({genes[g], missing});
            continue;
        }
        gm.gene_ids.push_back(genes[g]);
        gm.values.push_back(std::move(block));
    }
    if (c_ict) {
        std::vector<double> kept;
        for (std::size_t i : kept_individuals) kept.push_back(offsets[i]);
        out.ict_offset_hours = std::move(kept);
    }
    return out;
}

ExpressionData read_expression_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_expression(in);
}

void write_expression(std::ostream& out, const GeneMatrix& data, std::span<const double> ict_offset_hours) {
    data.validate();
    const bool with_ict = !ict_offset_hours.empty();
    if (with_ict && ict_offset_hours.size() != data.n_individuals()) {
        throw Error(Errc::kInvalidArgument, "one offset per individual is required");
    }
    out << "individual_id,gene_id,time_hours,expression" << (with_ict ? ",ict_offset_hours" : "") << '\n';
    for (std::size_t i = 0; i < data.n_individuals(); ++i) {
        for (std::size_t g = 0; g < data.n_genes(); ++g) {
            for (std::size_t j = 0; j < data.times[i].size(); ++j) {
                out << data.individual_ids[i] << ',' << data.gene_ids[g] << ',' << format_double(data.times[i][j])
                    << ',' << format_double(data.values[g][i][j]);
                if (with_ict) out << ',' << format_double(ict_offset_hours[i]);
                out << '\n';
            }
        }
    }
}

std::vector<GeneRecord> fit_records(std::span<const std::string> gene_ids,
                                    std::span<const std::optional<MixedFit>> fits,
                                    std::span<const GeneExclusion> failures) {
    if (gene_ids.size() != fits.size()) {
        throw Error(Errc::kInvalidArgument, "one fit slot per gene is required");
    }
    std::unordered_map<std::string, std::string> reasons;
    for (const GeneExclusion& f : failures) reasons.emplace(f.gene_id, f.reason);

    std::vector<GeneRecord> out;
    for (std::size_t g = 0; g < gene_ids.size(); ++g) {
        GeneRecord r;
        r.gene_id = gene_ids[g];
        if (fits[g]) {
            const MixedFit& fit = *fits[g];
            r.mu0 = fit.fixed.mu0;
            r.beta1 = fit.fixed.beta1;
            r.beta2 = fit.fixed.beta2;
            r.theta1 = fit.fixed.amplitude();
            r.theta2 = fit.fixed.phase_degenerate() ? kNaN : fit.fixed.phase();
            r.sigma2 = fit.sigma2_hat;
            r.loglik = fit.loglik;
            r.converged = fit.converged;
            r.iterations = fit.iterations;
            try {
                const WaldResult w = wald_test(fit);
                r.tau = w.tau;
                r.p_value = w.p_value;
                r.ok = true;
            } catch (const Error& e) {
                r.note = e.what();
            }
            if (!fit.converged) r.note = "did not converge";
        } else {
            auto it = reasons.find(r.gene_id);
            r.note = it != reasons.end() ? it->second : "no fit";
        }
        out.push_back(std::move(r));
    }
    return out;
}

void write_fit_report(std::ostream& out, std::span<const GeneRecord> records) {
    out << "gene_id,status,mu0,beta1,beta2,amplitude,phase,wald_tau,p_value,sigma2,loglik,iterations,converged,note\n";
    for (const GeneRecord& r : records) {
        out << r.gene_id << ',' << (r.ok ? "ok" : "failed");
        if (r.ok) {
            for (double v : {r.mu0, r.beta1, r.beta2, r.theta1, r.theta2, r.tau, r.p_value, r.sigma2, r.loglik}) {
                out << ',' << format_double(v);
            }
            out << ',' << r.iterations << ',' << (r.converged ? 1 : 0);
        } else {
            out << ",,,,,,,,,,,";
        }
        out << ',' << clean_note(r.note) << '\n';
    }
}

std::vector<GeneRecord> read_fit_report(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw Error(Errc::kDataFormat, "fit report is empty");
    ++line_no;
    const Header header(split_csv(line));
    const std::size_t c_gene = header.require("gene_id");
    const std::size_t c_status = header.require("status");
    const std::size_t c_amp = header.require("amplitude");
    const std::size_t c_tau = header.require("wald_tau");
    const auto c_conv = header.find("converged");
    const auto c_iter = header.find("iterations");
    const auto c_note = header.find("note");
    // Columns beyond amplitude and wald_tau are optional.
    const std::pair<const char*, double GeneRecord::*> optional_numbers[] = {
        {"mu0", &GeneRecord::mu0},       {"beta1", &GeneRecord::beta1},   {"beta2", &GeneRecord::beta2},
        {"phase", &GeneRecord::theta2},  {"p_value", &GeneRecord::p_value}, {"sigma2", &GeneRecord::sigma2},
        {"loglik", &GeneRecord::loglik},
    };

    std::vector<GeneRecord> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto f = split_csv(line);
        if (f.size() < header.index.size()) {
            throw Error(Errc::kDataFormat, line_ref(line_no) + "too few fields in fit report");
        }
        GeneRecord r;
        r.gene_id = f[c_gene];
        r.ok = f[c_status] == "ok";
        if (r.ok) {
            r.theta1 = parse_double(f[c_amp]);
            r.tau = parse_double(f[c_tau]);
            for (const auto& [name, member] : optional_numbers) {
                if (const auto c = header.find(name)) r.*member = parse_double(f[*c]);
            }
            if (c_conv) r.converged = f[*c_conv] == "1";
            if (c_iter) {
                const double it = parse_double(f[*c_iter]);
                r.iterations = std::isfinite(it) ? static_cast<int>(it) : 0;
            }
        }
        if (c_note) r.note = f[*c_note];
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<GeneRecord> read_fit_report_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_fit_report(in);
}

void write_translations(std::ostream& out, std::span<const std::string> individual_ids,
                        std::span<const double> d_tilde) {
    out << "individual_id,translation_hours\n";
    for (std::size_t i = 0; i < individual_ids.size(); ++i) {
        out << individual_ids[i] << ',' << format_double(d_tilde[i]) << '\n';
    }
}

void write_offsets(std::ostream& out, const GeneMatrix& data, const PhaseAdjustment& adjustment) {
    out << "gene_id,individual_id,offset_radians,resultant_length\n";
    for (std::size_t g = 0; g < data.n_genes(); ++g) {
        for (std::size_t i = 0; i < data.n_individuals(); ++i) {
            const double d = adjustment.d_hat(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(i));
            if (std::isnan(d)) continue;
            out << data.gene_ids[g] << ',' << data.individual_ids[i] << ',' << format_double(d) << ','
                << format_double(adjustment.omega[g]) << '\n';
        }
    }
}

void write_campaign(std::ostream& out, std::span<const CampaignTable> tables) {
    out << "setting\tframework\ttrials\tmean_amplitude\tsd_amplitude\tmean_wald_tau\tsd_wald_tau\tn_ok\tn_failed\t"
           "n_nonconverged\n";
    for (const CampaignTable& t : tables) {
        for (const FrameworkStats& r : t.rows) {
            out << t.setting_id << '\t' << static_cast<int>(r.framework) << '\t' << t.trials << '\t'
                << format_double(r.mean_theta1) << '\t' << format_double(r.sd_theta1) << '\t'
                << format_double(r.mean_tau) << '\t' << format_double(r.sd_tau) << '\t' << r.n_ok << '\t'
                << r.n_failed << '\t' << r.n_nonconverged << '\n';
        }
    }
}

void write_evaluation(std::ostream& out, std::span<const EvaluationRow> rows) {
    out << "quantity,n,gamma,r2\n";
    for (const EvaluationRow& r : rows) {
        out << quantity_name(r.quantity) << ',' << r.fit.n << ',' << format_double(r.fit.gamma) << ','
            << format_double(r.fit.r2) << '\n';
    }
}

void write_scatter(std::ostream& out, Quantity q, const PairedQuantities& pairs, double gamma, bool header) {
    if (header) out << "quantity,gene_id,x,y,gamma\n";
    for (std::size_t k = 0; k < pairs.x.size(); ++k) {
        out << quantity_name(q) << ',' << pairs.gene_ids[k] << ',' << format_double(pairs.x[k]) << ','
            << format_double(pairs.y[k]) << ',' << format_double(gamma) << '\n';
    }
}

std::unordered_set<std::string> read_gene_list(std::istream& in) {
    std::unordered_set<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        const std::string_view id = trim(line);
        if (id.empty() || id.front() == '#') continue;
        out.emplace(id);
    }
    return out;
}

std::unordered_set<std::string> read_gene_list_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_gene_list(in);
}

}  // namespace cosinor::io
