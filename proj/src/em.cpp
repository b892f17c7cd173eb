// Maximum-likelihood EM for the linear mixed cosinor model.
//
// Random effects share the fixed-effect design (Z_i = W_i), so every quantity
// reduces to 3x3 algebra through A_i = sigma2 I + S_i Psi with S_i = W_i' W_i:
//   W' V^-1 W = A^-1 S,   W' V^-1 r = A^-1 W' r,
//   E[b | y]  = Psi A^-1 W' r,   Var[b | y] = sigma2 Psi A^-1,
//   log|V|    = (n - 3) log sigma2 + log|A|,
//   r' V^-1 r = |r - W E[b|y]|^2 / sigma2 + g' Psi g  with g = A^-1 W' r.
// None of these subtract nearly equal terms, so they hold up as sigma2 -> 0.

#include <algorithm>
#include <cmath>
#include <numbers>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include "cosinor/lmm.hpp"

namespace cosinor {

namespace {

struct IndividualData {
    DesignMatrix w;
    Eigen::VectorXd y;
    Mat3 s;  // W'W
    Vec3 t;  // W'y
};

struct Factor {
    Mat3 a_inv;
    double logdet_a = 0.0;
};

std::vector<IndividualData> prepare(std::span<const LongitudinalSeries> data) {
    std::vector<IndividualData> out;
    out.reserve(data.size());
    for (const LongitudinalSeries& series : data) {
        series.validate();
        IndividualData d;
        d.w = DesignMatrix::from_times(series.times);
        d.y = Eigen::Map<const Eigen::VectorXd>(series.values.data(), static_cast<Eigen::Index>(series.size()));
        if (!d.y.allFinite()) {
            throw Error(Errc::kInvalidArgument, "series '" + series.individual_id + "' has a non-finite value");
        }
        d.s = d.w.rows.transpose() * d.w.rows;
        d.t = d.w.rows.transpose() * d.y;
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<Factor> factorize(const std::vector<IndividualData>& data, const Mat3& psi, double sigma2) {
    std::vector<Factor> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Mat3 a = sigma2 * Mat3::Identity() + data[i].s * psi;
        Eigen::PartialPivLU<Mat3> lu(a);
        out[i].a_inv = lu.inverse();
        out[i].logdet_a = std::log(lu.determinant());
    }
    return out;
}

struct GlsParts {
    Mat3 info = Mat3::Zero();
    Vec3 score = Vec3::Zero();
};

GlsParts gls_parts(const std::vector<IndividualData>& data, const std::vector<Factor>& factors) {
    GlsParts p;
    for (std::size_t i = 0; i < data.size(); ++i) {
        p.info.noalias() += factors[i].a_inv * data[i].s;
        p.score.noalias() += factors[i].a_inv * data[i].t;
    }
    p.info = 0.5 * (p.info + p.info.transpose());
    return p;
}

void check_information(const Mat3& info) {
    Eigen::SelfAdjointEigenSolver<Mat3> eig(info, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || !(hi / lo < 1e12)) {
        throw Error(Errc::kSingularInformation, "information matrix is numerically singular");
    }
}

Mat3 invert_information(const Mat3& info) {
    check_information(info);
    Mat3 inv = info.llt().solve(Mat3::Identity());
    return 0.5 * (inv + inv.transpose());
}

Vec3 gls_beta(const GlsParts& p) {
    check_information(p.info);
    return p.info.llt().solve(p.score);
}

struct EStep {
    Mat3 psi_sum = Mat3::Zero();
    double sigma2_sum = 0.0;
    double loglik = 0.0;
    // Derivatives of loglik in Psi (symmetric) and sigma2, beta held fixed.
    Mat3 grad_psi = Mat3::Zero();
    double grad_sigma2 = 0.0;
};

// Conditional moments of the random effects at (beta, psi, sigma2) plus the
// marginal log-likelihood, which falls out of the same quantities.
EStep expectation(const std::vector<IndividualData>& data, const std::vector<Factor>& factors,
                  const Vec3& beta, const Mat3& psi, double sigma2) {
    constexpr double log_two_pi = 1.8378770664093454836;
    EStep out;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const IndividualData& d = data[i];
        const Eigen::VectorXd r = d.y - d.w.rows * beta;
        const Vec3 u = d.w.rows.transpose() * r;
        const Vec3 g = factors[i].a_inv * u;
        const Vec3 b_hat = psi * g;
        const double ee = (r - d.w.rows * b_hat).squaredNorm();
        Mat3 var_b = sigma2 * psi * factors[i].a_inv;
        var_b = 0.5 * (var_b + var_b.transpose());

        out.psi_sum.noalias() += b_hat * b_hat.transpose() + var_b;
        out.sigma2_sum += ee + (d.s * var_b).trace();

        const auto n = static_cast<double>(d.y.size());
        const double quad = ee / sigma2 + g.dot(psi * g);
        const double logdet_v = (n - 3.0) * std::log(sigma2) + factors[i].logdet_a;
        out.loglik -= 0.5 * (n * log_two_pi + logdet_v + quad);

        const Mat3 wvw = factors[i].a_inv * d.s;
        out.grad_psi.noalias() += 0.5 * (g * g.transpose() - 0.5 * (wvw + wvw.transpose()));
        const double trace_v_inv = (n - (psi * wvw).trace()) / sigma2;
        out.grad_sigma2 += 0.5 * (ee / (sigma2 * sigma2) - trace_v_inv);
    }
    return out;
}

Mat3 restrict_structure(const Mat3& psi, PsiStructure structure) {
    if (structure == PsiStructure::kDiagonal) {
        return psi.diagonal().cwiseMax(0.0).asDiagonal();
    }
    return project_psd(psi);
}

RandomEffectSpec data_driven_start(std::span<const LongitudinalSeries> data,
                                   const std::vector<IndividualData>& prepared,
                                   const EmConfig& config) {
    // sigma2 from pooled OLS residuals.
    Mat3 s = Mat3::Zero();
    Vec3 t = Vec3::Zero();
    double n_total = 0.0;
    for (const IndividualData& d : prepared) {
        s += d.s;
        t += d.t;
        n_total += static_cast<double>(d.y.size());
    }
    const Vec3 beta_ols = s.ldlt().solve(t);
    double rss = 0.0;
    for (const IndividualData& d : prepared) rss += (d.y - d.w.rows * beta_ols).squaredNorm();

    RandomEffectSpec spec;
    spec.sigma2 = std::max(rss / (n_total - 3.0), config.sigma2_floor);

    // Psi from the spread of per-individual OLS coefficients.
    std::vector<Vec3> coefs;
    for (const LongitudinalSeries& series : data) {
        try {
            coefs.push_back(individual_cosinor(series).params.as_vector());
        } catch (const Error&) {
            // individuals that cannot be fitted alone still enter the EM
        }
    }
    Mat3 psi = Mat3::Zero();
    if (coefs.size() >= 2) {
        Vec3 mean = Vec3::Zero();
        for (const Vec3& c : coefs) mean += c;
        mean /= static_cast<double>(coefs.size());
        for (const Vec3& c : coefs) psi += (c - mean) * (c - mean).transpose();
        psi /= static_cast<double>(coefs.size() - 1);
    }
    if (config.psi_structure == PsiStructure::kDiagonal) {
        psi = Mat3(psi.diagonal().asDiagonal());
    }
    for (int k = 0; k < 3; ++k) psi(k, k) = std::max(psi(k, k), config.psi_init_floor);
    spec.psi = restrict_structure(psi, config.psi_structure);
    return spec;
}

Eigen::Matrix<double, 10, 1> pack(const Vec3& beta, const Mat3& psi, double sigma2) {
    Eigen::Matrix<double, 10, 1> v;
    v << beta, psi(0, 0), psi(0, 1), psi(0, 2), psi(1, 1), psi(1, 2), psi(2, 2), sigma2;
    return v;
}

struct State {
    Mat3 psi = Mat3::Zero();
    double sigma2 = 1.0;
    Vec3 beta = Vec3::Zero();
    GlsParts parts;
    EStep estep;
};

constexpr double kMaxStep = 64.0;

Eigen::Matrix<double, 7, 1> variance_params(const State& st) {
    Eigen::Matrix<double, 7, 1> v;
    v << st.psi(0, 0), st.psi(0, 1), st.psi(0, 2), st.psi(1, 1), st.psi(1, 2), st.psi(2, 2), st.sigma2;
    return v;
}


// Quasi-Newton refinement of the profiled likelihood. EM crawls when the
// maximum sits on the boundary of the PSD cone; writing Psi = L L' with L
// lower triangular (diagonal for the diagonal structure) and sigma2 = exp(s)
// removes the constraint, and the score comes from the same E-step sums.
class Polisher {
public:
    Polisher(const std::vector<IndividualData>& data, const EmConfig& config, double n_obs)
        : data_(data), config_(config), n_obs_(n_obs) {}

    int dim() const { return config_.psi_structure == PsiStructure::kDiagonal ? 4 : 7; }

    Eigen::VectorXd to_params(const Mat3& psi, double sigma2) const {
        Eigen::VectorXd x(dim());
        if (config_.psi_structure == PsiStructure::kDiagonal) {
            for (int k = 0; k < 3; ++k) x(k) = std::sqrt(std::max(psi(k, k), 0.0));
        } else {
            const double jitter = 1e-10 * std::max(psi.trace(), 1e-12);
            const Mat3 l = (psi + jitter * Mat3::Identity()).llt().matrixL();
            x.head<6>() << l(0, 0), l(1, 0), l(1, 1), l(2, 0), l(2, 1), l(2, 2);
        }
        x(dim() - 1) = std::log(sigma2);
        return x;
    }

    Mat3 lower(const double* x) const {
        Mat3 l = Mat3::Zero();
        if (config_.psi_structure == PsiStructure::kDiagonal) {
            for (int k = 0; k < 3; ++k) l(k, k) = x[k];
        } else {
            l(0, 0) = x[0];
            l(1, 0) = x[1];
            l(1, 1) = x[2];
            l(2, 0) = x[3];
            l(2, 1) = x[4];
            l(2, 2) = x[5];
        }
        return l;
    }

    State state_at(const double* x) const {
        const Mat3 l = lower(x);
        State st;
        st.psi = l * l.transpose();
        st.sigma2 = std::max(std::exp(x[dim() - 1]), config_.sigma2_floor);
        const auto factors = factorize(data_, st.psi, st.sigma2);
        st.parts = gls_parts(data_, factors);
        st.beta = gls_beta(st.parts);
        st.estep = expectation(data_, factors, st.beta, st.psi, st.sigma2);
        return st;
    }

    // Objective is -loglik / N so the line-search tolerances are scale free.
    double evaluate(const double* x, double* grad) const {
        State st;
        try {
            st = state_at(x);
        } catch (const Error&) {
            if (grad) std::fill(grad, grad + dim(), 0.0);
            return GSL_POSINF;
        }
        if (!std::isfinite(st.estep.loglik)) return GSL_POSINF;
        if (grad) {
            const Mat3 dl = 2.0 * st.estep.grad_psi * lower(x);
            if (config_.psi_structure == PsiStructure::kDiagonal) {
                for (int k = 0; k < 3; ++k) grad[k] = dl(k, k);
            } else {
                grad[0] = dl(0, 0);
                grad[1] = dl(1, 0);
                grad[2] = dl(1, 1);
                grad[3] = dl(2, 0);
                grad[4] = dl(2, 1);
                grad[5] = dl(2, 2);
            }
            grad[dim() - 1] = st.sigma2 * st.estep.grad_sigma2;
            for (int k = 0; k < dim(); ++k) grad[k] = -grad[k] / n_obs_;
        }
        return -st.estep.loglik / n_obs_;
    }

private:
    const std::vector<IndividualData>& data_;
    const EmConfig& config_;
    double n_obs_;
};

double gsl_f(const gsl_vector* x, void* p) { return static_cast<Polisher*>(p)->evaluate(x->data, nullptr); }

void gsl_df(const gsl_vector* x, void* p, gsl_vector* g) { static_cast<Polisher*>(p)->evaluate(x->data, g->data); }

void gsl_fdf(const gsl_vector* x, void* p, double* f, gsl_vector* g) {
    *f = static_cast<Polisher*>(p)->evaluate(x->data, g->data);
}

struct PolishResult {
    State state;
    int iterations = 0;
    bool converged = false;
};

PolishResult polish(const Polisher& polisher, const State& start, const EmConfig& config, std::vector<double>* trace) {
    static const bool handler_off = [] {
        gsl_set_error_handler_off();
        return true;
    }();
    (void)handler_off;

    PolishResult out;
    out.state = start;
    const int dim = polisher.dim();
    const Eigen::VectorXd x0 = polisher.to_params(start.psi, start.sigma2);

    gsl_multimin_function_fdf fn;
    fn.n = static_cast<std::size_t>(dim);
    fn.f = gsl_f;
    fn.df = gsl_df;
    fn.fdf = gsl_fdf;
    fn.params = const_cast<Polisher*>(&polisher);

    gsl_vector* x = gsl_vector_alloc(fn.n);
    for (int k = 0; k < dim; ++k) gsl_vector_set(x, static_cast<std::size_t>(k), x0(k));
    gsl_multimin_fdfminimizer* solver = gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, fn.n);
    gsl_multimin_fdfminimizer_set(solver, &fn, x, 0.01, 0.1);

    double best = polisher.evaluate(x->data, nullptr);
    for (int iter = 1; iter <= config.polish_iterations; ++iter) {
        const int status = gsl_multimin_fdfminimizer_iterate(solver);
        const double f = solver->f;
        if (f < best) {
            best = f;
            out.state = polisher.state_at(solver->x->data);
            out.iterations = iter;
            if (trace) trace->push_back(out.state.estep.loglik);
        }
        double gnorm = 0.0;
        for (int k = 0; k < dim; ++k) gnorm += solver->gradient->data[k] * solver->gradient->data[k];
        if (std::sqrt(gnorm) < config.gradient_tol) {
            out.converged = true;
            break;
        }
        if (status != GSL_SUCCESS) {
            // No further decrease is representable; accept a small score as stationary.
            out.converged = status == GSL_ENOPROG && std::sqrt(gnorm) < 1e3 * config.gradient_tol;
            break;
        }
    }
    gsl_multimin_fdfminimizer_free(solver);
    gsl_vector_free(x);
    return out;
}

}  // namespace

Mat3 fixed_information(std::span<const LongitudinalSeries> data, const RandomEffectSpec& spec) {
    spec.validate();
    const auto prepared = prepare(data);
    return gls_parts(prepared, factorize(prepared, spec.psi, spec.sigma2)).info;
}

GlsResult gls_at(std::span<const LongitudinalSeries> data, const RandomEffectSpec& spec) {
    spec.validate();
    const auto prepared = prepare(data);
    const GlsParts parts = gls_parts(prepared, factorize(prepared, spec.psi, spec.sigma2));
    GlsResult out;
    out.params = CosinorParams::from_vector(gls_beta(parts));
    out.cov.sigma = invert_information(parts.info);
    return out;
}

double log_likelihood(std::span<const LongitudinalSeries> data, const CosinorParams& beta,
                      const RandomEffectSpec& spec) {
    spec.validate();
    const auto prepared = prepare(data);
    const auto factors = factorize(prepared, spec.psi, spec.sigma2);
    return expectation(prepared, factors, beta.as_vector(), spec.psi, spec.sigma2).loglik;
}

MixedFit em_fit(std::span<const LongitudinalSeries> data, const EmConfig& config) {
    if (data.size() < 2) {
        throw Error(Errc::kInsufficientData, "mixed model needs at least 2 individuals");
    }
    std::size_t n_total = 0;
    for (const LongitudinalSeries& series : data) n_total += series.size();
    if (n_total < 10) {
        throw Error(Errc::kInsufficientData, "mixed model needs at least 10 observations");
    }
    if (config.max_iterations < 0) {
        throw Error(Errc::kInvalidArgument, "max_iterations must be nonnegative");
    }

    const auto prepared = prepare(data);
    RandomEffectSpec start;
    if (config.start) {
        config.start->validate();
        start = *config.start;
        start.psi = restrict_structure(start.psi, config.psi_structure);
    } else {
        start = data_driven_start(data, prepared, config);
    }
    const double n_individuals = static_cast<double>(prepared.size());
    const double n_obs = static_cast<double>(n_total);

    auto evaluate = [&](const Mat3& psi, double sigma2) {
        State st;
        st.psi = psi;
        st.sigma2 = sigma2;
        const auto factors = factorize(prepared, psi, sigma2);
        st.parts = gls_parts(prepared, factors);
        st.beta = gls_beta(st.parts);
        st.estep = expectation(prepared, factors, st.beta, psi, sigma2);
        return st;
    };
    auto em_map = [&](const State& st) {
        return evaluate(restrict_structure(st.estep.psi_sum / n_individuals, config.psi_structure),
                        std::max(st.estep.sigma2_sum / n_obs, config.sigma2_floor));
    };

    MixedFit fit;
    State cur = evaluate(start.psi, start.sigma2);
    if (config.record_trace) fit.loglik_trace.push_back(cur.estep.loglik);

    for (int iter = 1; iter <= config.max_iterations; ++iter) {
        State next = em_map(cur);
        if (config.accelerate) {
            // Squared extrapolation over two EM steps; the stabilizing EM step
            // is kept only if it beats the plain double step.
            State second = em_map(next);
            const auto r = variance_params(next) - variance_params(cur);
            const auto v = variance_params(second) - 2.0 * variance_params(next) + variance_params(cur);
            next = std::move(second);
            if (v.norm() > 0.0 && r.norm() > 0.0) {
                const double alpha = std::clamp(-r.norm() / v.norm(), -kMaxStep, -1.0);
                const auto x = variance_params(cur) - 2.0 * alpha * r + alpha * alpha * v;
                try {
                    Mat3 psi;
                    psi << x(0), x(1), x(2), x(1), x(3), x(4), x(2), x(4), x(5);
                    State jump = em_map(evaluate(restrict_structure(psi, config.psi_structure),
                                                 std::max(x(6), config.sigma2_floor)));
                    if (jump.estep.loglik > next.estep.loglik) next = std::move(jump);
                } catch (const Error&) {
                    // extrapolated point left the admissible region
                }
            }
        }
        const auto before = pack(cur.beta, cur.psi, cur.sigma2);
        const auto after = pack(next.beta, next.psi, next.sigma2);
        const double loglik_change = std::abs(next.estep.loglik - cur.estep.loglik);
        cur = std::move(next);
        fit.iterations = iter;
        if (config.record_trace) fit.loglik_trace.push_back(cur.estep.loglik);

        const double rel_change = (after - before).norm() / std::max(before.norm(), 1e-300);
        if (loglik_change < config.loglik_tol || rel_change < config.param_tol) {
            fit.converged = true;
            break;
        }
        if (config.polish_iterations > 0 && loglik_change < config.handoff_tol) break;
    }
    if (config.max_iterations == 0) {
        fit.converged = true;
    } else if (config.polish_iterations > 0) {
        const Polisher polisher(prepared, config, n_obs);
        PolishResult refined = polish(polisher, cur, config, config.record_trace ? &fit.loglik_trace : nullptr);
        fit.iterations += refined.iterations;
        if (refined.state.estep.loglik >= cur.estep.loglik) cur = std::move(refined.state);
        fit.converged = fit.converged || refined.converged;
    }

    fit.fixed = CosinorParams::from_vector(cur.beta);
    fit.psi_hat = cur.psi;
    fit.sigma2_hat = cur.sigma2;
    fit.fixed_cov.sigma = invert_information(cur.parts.info);
    fit.loglik = cur.estep.loglik;
    fit.phase_degenerate = fit.fixed.phase_degenerate();
    return fit;
}

}  // namespace cosinor
