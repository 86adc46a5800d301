#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ljpcausal/strength.hpp"

namespace ljp {

enum class RefutationStrategy { random_confounder, placebo, subset };

const char* refutation_strategy_name(RefutationStrategy s);

struct RefutationThresholds {
    double abs_tol = 0.05;      // absolute band for confounder/subset checks
    double rel_tol = 0.25;      // relative band (fraction of |original|)
    double placebo_tol = 0.05;  // |mean refuted psi| bound for placebo
};

struct RefutationReport {
    RefutationStrategy strategy = RefutationStrategy::placebo;
    double original = 0;
    double refuted_mean = 0;
    int trials = 0;
    int skipped = 0;  // degenerate trials (e.g. subset lost a class)
    bool pass = false;
    double threshold = 0;
};

struct RefutationJob {
    const VarTable* data = nullptr;
    int t_col = -1;
    int y_col = -1;
    std::vector<int> confounders;
    PsmParams psm;
};

// Appends an independent Bernoulli(0.5) confounder per trial; the estimate
// should stay within max(abs_tol, rel_tol * |original|).
RefutationReport refute_random_confounder(const RefutationJob& job, int trials,
                                          std::uint32_t seed,
                                          const RefutationThresholds& thresholds = {});

// Replaces the treatment with Bernoulli(mean T) noise per trial; the
// estimate should collapse to (near) zero.
RefutationReport refute_placebo(const RefutationJob& job, int trials, std::uint32_t seed,
                                const RefutationThresholds& thresholds = {});

// Re-estimates on uniform record subsets; trials that lose a treatment
// class are skipped and counted.
RefutationReport refute_subset(const RefutationJob& job, double fraction, int trials,
                               std::uint32_t seed,
                               const RefutationThresholds& thresholds = {});

}  // namespace ljp
