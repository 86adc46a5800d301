#include "ljpcausal/refute.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ljp {

const char* refutation_strategy_name(RefutationStrategy s) {
    switch (s) {
        case RefutationStrategy::random_confounder: return "random_confounder";
        case RefutationStrategy::placebo: return "placebo";
        case RefutationStrategy::subset: return "subset";
    }
    return "placebo";
}

namespace {

AteEstimate original_estimate(const RefutationJob& job) {
    return psm_ate_with_confounders(*job.data, job.t_col, job.y_col, job.confounders, job.psm);
}

double band(const RefutationThresholds& th, double original) {
    return std::max(th.abs_tol, th.rel_tol * std::abs(original));
}

}  // namespace

RefutationReport refute_random_confounder(const RefutationJob& job, int trials,
                                          std::uint32_t seed,
                                          const RefutationThresholds& thresholds) {
    if (trials < 1) throw ValidationError("refute_random_confounder: trials must be >= 1");
    RefutationReport report;
    report.strategy = RefutationStrategy::random_confounder;
    report.original = original_estimate(job).value;
    report.trials = trials;
    report.threshold = band(thresholds, report.original);

    double total = 0;
    for (int trial = 0; trial < trials; ++trial) {
        std::seed_seq seq{seed, static_cast<std::uint32_t>(trial), 0xc0fu};
        std::mt19937 rng(seq);
        std::bernoulli_distribution coin(0.5);

        VarTable extended = *job.data;
        std::vector<std::uint8_t> col(extended.n_rows());
        for (auto& c : col) c = coin(rng) ? 1 : 0;
        extended.cols.push_back(std::move(col));
        extended.names.push_back("random_confounder");
        extended.kinds.push_back(VarKind::factor);
        extended.source_index.push_back(-1);

        std::vector<int> conf = job.confounders;
        conf.push_back(extended.n_cols() - 1);
        total += psm_ate_with_confounders(extended, job.t_col, job.y_col, conf, job.psm).value;
    }
    report.refuted_mean = total / trials;
    report.pass = std::abs(report.refuted_mean - report.original) <= report.threshold;
    return report;
}

RefutationReport refute_placebo(const RefutationJob& job, int trials, std::uint32_t seed,
                                const RefutationThresholds& thresholds) {
    if (trials < 1) throw ValidationError("refute_placebo: trials must be >= 1");
    RefutationReport report;
    report.strategy = RefutationStrategy::placebo;
    report.original = original_estimate(job).value;
    report.trials = trials;
    report.threshold = thresholds.placebo_tol;

    const auto& t = job.data->cols[job.t_col];
    double mean_t = 0;
    for (auto b : t) mean_t += b ? 1.0 : 0.0;
    mean_t /= static_cast<double>(t.size());

    double total = 0;
    int skipped = 0;
    for (int trial = 0; trial < trials; ++trial) {
        std::seed_seq seq{seed, static_cast<std::uint32_t>(trial), 0x91acebu};
        std::mt19937 rng(seq);
        std::bernoulli_distribution coin(mean_t);

        VarTable placebo = *job.data;
        for (auto& b : placebo.cols[job.t_col]) b = coin(rng) ? 1 : 0;
        try {
            total += psm_ate_with_confounders(placebo, job.t_col, job.y_col, job.confounders,
                                              job.psm)
                         .value;
        } catch (const PipelineError&) {
            ++skipped;  // placebo draw degenerate on tiny n
        }
    }
    const int effective = trials - skipped;
    report.skipped = skipped;
    report.refuted_mean = effective > 0 ? total / effective : 0;
    report.pass = std::abs(report.refuted_mean) <= report.threshold;
    return report;
}

RefutationReport refute_subset(const RefutationJob& job, double fraction, int trials,
                               std::uint32_t seed, const RefutationThresholds& thresholds) {
    if (trials < 1) throw ValidationError("refute_subset: trials must be >= 1");
    if (!(fraction > 0 && fraction < 1)) {
        throw ValidationError("refute_subset: fraction must be in (0, 1)");
    }
    RefutationReport report;
    report.strategy = RefutationStrategy::subset;
    report.original = original_estimate(job).value;
    report.trials = trials;
    report.threshold = band(thresholds, report.original);

    const int n = job.data->n_rows();
    const int m = std::max(1, static_cast<int>(std::floor(fraction * n)));

    double total = 0;
    int skipped = 0;
    for (int trial = 0; trial < trials; ++trial) {
        std::seed_seq seq{seed, static_cast<std::uint32_t>(trial), 0x5eb5u};
        std::mt19937 rng(seq);
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(m);
        std::sort(idx.begin(), idx.end());

        VarTable sub;
        sub.names = job.data->names;
        sub.kinds = job.data->kinds;
        sub.source_index = job.data->source_index;
        sub.cols.resize(job.data->cols.size());
        for (std::size_t c = 0; c < sub.cols.size(); ++c) {
            sub.cols[c].reserve(idx.size());
            for (int i : idx) sub.cols[c].push_back(job.data->cols[c][i]);
        }
        try {
            total += psm_ate_with_confounders(sub, job.t_col, job.y_col, job.confounders, job.psm)
                         .value;
        } catch (const PipelineError&) {
            ++skipped;  // subset lost a treatment class
        }
    }
    const int effective = trials - skipped;
    report.skipped = skipped;
    report.refuted_mean = effective > 0 ? total / effective : report.original;
    report.pass = std::abs(report.refuted_mean - report.original) <= report.threshold;
    return report;
}

}  // namespace ljp
