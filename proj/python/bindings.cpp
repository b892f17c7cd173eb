// Python bindings: thin wrappers over the library, returning plain dicts and NumPy arrays.
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cosinor/circstat.hpp"
#include "cosinor/eval.hpp"
#include "cosinor/phase_adjust.hpp"
#include "cosinor/simgen.hpp"

namespace py = pybind11;
using namespace cosinor;

namespace {

std::vector<LongitudinalSeries> to_series(const std::vector<std::vector<double>>& times,
                                          const std::vector<std::vector<double>>& values) {
    if (times.size() != values.size()) throw py::value_error("times and values need one entry per individual");
    std::vector<LongitudinalSeries> out;
    for (std::size_t i = 0; i < times.size(); ++i) {
        out.push_back({"ind" + std::to_string(i + 1), times[i], values[i]});
    }
    return out;
}

EmConfig em_config(const std::string& psi, int max_iter, double tol) {
    if (psi != "full" && psi != "diagonal") throw py::value_error("psi must be 'full' or 'diagonal'");
    EmConfig c;
    c.psi_structure = psi == "diagonal" ? PsiStructure::kDiagonal : PsiStructure::kFull;
    c.max_iterations = max_iter;
    c.loglik_tol = c.param_tol = tol;
    return c;
}

py::dict fit_dict(const MixedFit& fit) {
    const WaldResult w = wald_test(fit);
    py::dict d;
    d["mu0"] = fit.fixed.mu0;
    d["beta1"] = fit.fixed.beta1;
    d["beta2"] = fit.fixed.beta2;
    d["amplitude"] = fit.fixed.amplitude();
    d["phase"] = fit.fixed.phase();
    d["wald_tau"] = w.tau;
    d["p_value"] = w.p_value;
    d["psi"] = Eigen::Matrix3d(fit.psi_hat);
    d["sigma2"] = fit.sigma2_hat;
    d["cov"] = Eigen::Matrix3d(fit.fixed_cov.sigma);
    d["loglik"] = fit.loglik;
    d["iterations"] = fit.iterations;
    d["converged"] = fit.converged;
    return d;
}

GeneMatrix to_gene_matrix(const std::vector<std::string>& gene_ids, const std::vector<std::vector<double>>& times,
                          const std::vector<std::vector<std::vector<double>>>& values) {
    GeneMatrix gm;
    gm.gene_ids = gene_ids;
    for (std::size_t i = 0; i < times.size(); ++i) gm.individual_ids.push_back("ind" + std::to_string(i + 1));
    gm.times = times;
    gm.values = values;
    gm.validate();
    return gm;
}

py::dict gene_matrix_dict(const GeneMatrix& gm) {
    py::dict d;
    d["gene_ids"] = gm.gene_ids;
    d["individual_ids"] = gm.individual_ids;
    d["times"] = gm.times;
    d["values"] = gm.values;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Mixed-effects cosinor models with phase-variation adjustment";

    py::register_exception<Error>(m, "CosinorError", PyExc_ValueError);

    m.def("amplitude_phase_to_linear", [](double amplitude, double phase) {
        const auto c = amplitude_phase_to_linear(amplitude, phase);
        return py::make_tuple(c.beta1, c.beta2);
    }, py::arg("amplitude"), py::arg("phase"));
    m.def("linear_to_amplitude_phase", [](double beta1, double beta2) {
        const auto a = linear_to_amplitude_phase({0.0, beta1, beta2});
        return py::make_tuple(a.amplitude, a.phase);
    }, py::arg("beta1"), py::arg("beta2"));
    m.def("phase_variance", [](double beta1, double beta2, const Eigen::Matrix3d& cov, const std::string& form) {
        if (form != "displayed" && form != "delta") throw py::value_error("form must be 'displayed' or 'delta'");
        FitCovariance c;
        c.sigma = cov;
        return phase_variance({0.0, beta1, beta2}, c,
                              form == "delta" ? PhaseVarianceForm::kDelta : PhaseVarianceForm::kDisplayed);
    }, py::arg("beta1"), py::arg("beta2"), py::arg("cov"), py::arg("form") = "displayed");

    m.def("circular_mean", [](const std::vector<double>& angles, const std::vector<double>& weights) {
        return circular_mean(angles, weights);
    }, py::arg("angles"), py::arg("weights") = std::vector<double>{});
    m.def("resultant_length", [](const std::vector<double>& angles) { return resultant_length(angles); },
          py::arg("angles"));

    m.def("fit", [](const std::vector<std::vector<double>>& times, const std::vector<std::vector<double>>& values,
                    const std::string& psi, int max_iter, double tol) {
        const auto series = to_series(times, values);
        MixedFit fit;
        {
            py::gil_scoped_release release;
            fit = em_fit(series, em_config(psi, max_iter, tol));
        }
        return fit_dict(fit);
    }, py::arg("times"), py::arg("values"), py::arg("psi") = "full", py::arg("max_iter") = 500,
       py::arg("tol") = 1e-8, "Mixed cosinor fit: one time and value sequence per individual.");

    m.def("adjust", [](const std::vector<std::string>& gene_ids, const std::vector<std::vector<double>>& times,
                       const std::vector<std::vector<std::vector<double>>>& values, bool realign) {
        const GeneMatrix gm = to_gene_matrix(gene_ids, times, values);
        AdjustConfig config;
        config.realign = realign;
        AdjustmentResult res;
        {
            py::gil_scoped_release release;
            res = run_adjustment(gm, config);
        }
        py::dict d;
        d["translations_hours"] = res.adjustment.d_tilde;
        d["offsets"] = res.adjustment.d_hat;
        d["omega"] = res.adjustment.omega;
        py::list refit, original;
        for (std::size_t g = 0; g < gm.n_genes(); ++g) {
            refit.append(res.refit[g] ? py::object(fit_dict(*res.refit[g])) : py::object(py::none()));
            original.append(res.original[g] ? py::object(fit_dict(*res.original[g])) : py::object(py::none()));
        }
        d["refit"] = refit;
        d["original"] = original;
        py::list excluded;
        for (const auto& e : res.adjustment.excluded_genes) excluded.append(py::make_tuple(e.gene_id, e.reason));
        d["excluded"] = excluded;
        d["warnings"] = res.adjustment.warnings;
        return d;
    }, py::arg("gene_ids"), py::arg("times"), py::arg("values"), py::arg("realign") = false,
       "Phase adjustment: values[gene][individual][sample] on times[individual][sample].");

    m.def("generate_trial", [](int setting, std::uint64_t seed) {
        const TrialOutput t = generate_trial(SimSetting::preset(setting), seed);
        py::dict d;
        d["offset"] = gene_matrix_dict(t.data_offset);
        d["aligned"] = gene_matrix_dict(t.data_aligned);
        d["m0"] = t.truth.m0;
        d["c1"] = t.truth.c1;
        d["c2"] = t.truth.c2;
        return d;
    }, py::arg("setting"), py::arg("seed"));

    m.def("run_campaign", [](int setting, int trials, std::uint64_t seed, unsigned threads) {
        CampaignOptions options;
        options.threads = threads;
        const Framework fw[] = {Framework::kAdjusted, Framework::kNaive, Framework::kAligned};
        CampaignTable table;
        {
            py::gil_scoped_release release;
            table = run_campaign(SimSetting::preset(setting), trials, fw, seed, options);
        }
        py::list rows;
        for (const auto& r : table.rows) {
            py::dict d;
            d["framework"] = static_cast<int>(r.framework);
            d["mean_amplitude"] = r.mean_theta1;
            d["sd_amplitude"] = r.sd_theta1;
            d["mean_wald_tau"] = r.mean_tau;
            d["sd_wald_tau"] = r.sd_tau;
            d["n_ok"] = r.n_ok;
            d["n_failed"] = r.n_failed;
            d["n_nonconverged"] = r.n_nonconverged;
            rows.append(d);
        }
        return rows;
    }, py::arg("setting"), py::arg("trials"), py::arg("seed"), py::arg("threads") = 0);

    m.def("characteristic_at_one", [](double variance, double lo, double hi) {
        return characteristic_at_one(TruncNormalSpec{0.0, variance, lo, hi});
    }, py::arg("variance"), py::arg("lo"), py::arg("hi"), "E[cos c] for c ~ N(0, variance) truncated to [lo, hi].");

    m.def("gamma_fit", [](const std::vector<double>& x, const std::vector<double>& y, bool centered) {
        PairedQuantities p;
        p.x = x;
        p.y = y;
        for (std::size_t k = 0; k < x.size(); ++k) p.gene_ids.push_back(std::to_string(k));
        const GammaFit g = gamma_fit(p, centered ? R2Convention::kCentered : R2Convention::kUncentered);
        return py::make_tuple(g.gamma, g.r2);
    }, py::arg("x"), py::arg("y"), py::arg("centered") = false);
}
