#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "cosinor/simgen.hpp"

namespace cosinor {

namespace {

FrameworkEstimate summarize_fit(const MixedFit& fit) {
    FrameworkEstimate est;
    est.theta1 = fit.fixed.amplitude();
    est.tau = wald_test(fit).tau;
    est.converged = fit.converged;
    est.ok = std::isfinite(est.theta1) && std::isfinite(est.tau);
    return est;
}

bool wants(std::span<const Framework> frameworks, Framework f) {
    return std::find(frameworks.begin(), frameworks.end(), f) != frameworks.end();
}

TrialEstimates estimate_trial(const SimSetting& setting, std::uint64_t seed, std::span<const Framework> frameworks,
                              const CampaignOptions& options) {
    const TrialOutput trial = generate_trial(setting, seed, options.hooks);
    TrialEstimates out;

    const bool adjusted = wants(frameworks, Framework::kAdjusted);
    const bool naive = wants(frameworks, Framework::kNaive);
    if (adjusted) {
        try {
            const AdjustmentResult res = run_adjustment(trial.data_offset, options.adjust);
            if (res.refit[0]) out.adjusted = summarize_fit(*res.refit[0]);
            // The naive fit is exactly the adjustment's first-stage fit.
            if (naive && res.original[0]) out.naive = summarize_fit(*res.original[0]);
        } catch (const Error&) {
        }
    }
    if (naive && !out.naive.ok) {
        try {
            out.naive = summarize_fit(em_fit(trial.data_offset.gene_series(0), options.adjust.em));
        } catch (const Error&) {
        }
    }
    if (wants(frameworks, Framework::kAligned)) {
        try {
            out.aligned = summarize_fit(em_fit(trial.data_aligned.gene_series(0), options.adjust.em));
        } catch (const Error&) {
        }
    }
    return out;
}

struct Kahan {
    double sum = 0.0;
    double comp = 0.0;
    void add(double x) {
        const double y = x - comp;
        const double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
};

}  // namespace

const FrameworkEstimate& TrialEstimates::get(Framework f) const noexcept {
    switch (f) {
        case Framework::kAdjusted: return adjusted;
        case Framework::kNaive: return naive;
        case Framework::kAligned: return aligned;
    }
    return aligned;
}

const FrameworkStats& CampaignTable::row(Framework f) const {
    for (const auto& r : rows) {
        if (r.framework == f) return r;
    }
    throw Error(Errc::kInvalidArgument, "framework not part of this campaign");
}

std::vector<TrialEstimates> run_trials(const SimSetting& setting, int trials, std::span<const Framework> frameworks,
                                       std::uint64_t seed, const CampaignOptions& options) {
    setting.validate();
    if (trials < 1) throw Error(Errc::kInvalidArgument, "trials must be positive");
    std::vector<TrialEstimates> results(static_cast<std::size_t>(trials));

    unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min<unsigned>(threads, static_cast<unsigned>(trials));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int k = next++; k < trials; k = next++) {
            results[static_cast<std::size_t>(k)] =
                estimate_trial(setting, trial_seed(seed, static_cast<std::uint64_t>(k)), frameworks, options);
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    return results;
}

CampaignTable summarize_trials(int setting_id, std::uint64_t seed, std::span<const TrialEstimates> estimates,
                               std::span<const Framework> frameworks) {
    CampaignTable table;
    table.setting_id = setting_id;
    table.seed = seed;
    table.trials = static_cast<int>(estimates.size());
    for (Framework f : frameworks) {
        FrameworkStats st;
        st.framework = f;
        Kahan s_theta, s_tau;
        for (const auto& e : estimates) {
            const FrameworkEstimate& fe = e.get(f);
            if (!fe.ok) {
                ++st.n_failed;
                continue;
            }
            ++st.n_ok;
            if (!fe.converged) ++st.n_nonconverged;
            s_theta.add(fe.theta1);
            s_tau.add(fe.tau);
        }
        if (st.n_ok > 0) {
            st.mean_theta1 = s_theta.sum / st.n_ok;
            st.mean_tau = s_tau.sum / st.n_ok;
        }
        if (st.n_ok > 1) {
            Kahan q_theta, q_tau;
            for (const auto& e : estimates) {
                const FrameworkEstimate& fe = e.get(f);
                if (!fe.ok) continue;
                q_theta.add((fe.theta1 - st.mean_theta1) * (fe.theta1 - st.mean_theta1));
                q_tau.add((fe.tau - st.mean_tau) * (fe.tau - st.mean_tau));
            }
            st.sd_theta1 = std::sqrt(q_theta.sum / (st.n_ok - 1));
            st.sd_tau = std::sqrt(q_tau.sum / (st.n_ok - 1));
        }
        table.rows.push_back(st);
    }
    return table;
}

CampaignTable run_campaign(const SimSetting& setting, int trials, std::span<const Framework> frameworks,
                           std::uint64_t seed, const CampaignOptions& options) {
    const auto estimates = run_trials(setting, trials, frameworks, seed, options);
    return summarize_trials(setting.id, seed, estimates, frameworks);
}

}  // namespace cosinor
