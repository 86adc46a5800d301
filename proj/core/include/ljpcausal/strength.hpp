#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ljpcausal/edges.hpp"
#include "ljpcausal/factors.hpp"

namespace ljp {

struct AteEstimate {
    int treatment = -1;   // VarTable column
    int outcome = -1;     // VarTable column
    int graph_index = -1;
    double value = 0;
    int matched_pairs = 0;
    int caliper_dropped = 0;
    bool unestimable = false;
};

// Ridge-regularized logistic propensity model fit by IRLS
// (convergence ||d beta||_inf < 1e-8 or 100 iterations). An empty
// confounder set yields the constant score mean(T). Throws PipelineError
// ("untestable treatment") when T is single-class.
Eigen::VectorXd fit_propensity(const Eigen::MatrixXd& confounders,
                               const std::vector<std::uint8_t>& treatment,
                               double ridge = 1e-4);

struct PsmParams {
    double caliper = 0.05;
};

// ATT via 1-nearest-neighbour propensity matching with replacement.
// Equidistant controls are averaged, which keeps the estimator exact on
// discrete propensity ties. Treated units with no control inside the
// caliper are counted in caliper_dropped.
AteEstimate psm_ate_with_confounders(const VarTable& data, int t_col, int y_col,
                                     const std::vector<int>& confounder_cols,
                                     const PsmParams& params, int graph_index = -1);

// Confounders = parents of the treatment in the sampled graph (backdoor
// set), excluding the outcome.
AteEstimate psm_ate(const VarTable& data, int t_col, int y_col, const SampledGraph& graph,
                    const PsmParams& params, int graph_index = -1);

struct StrengthMatrix {
    int n_factors = 0;
    int n_labels = 0;
    std::vector<double> psi;  // row-major factors x labels
    // (factor, label) -> contributing (graph index, ATT) pairs
    std::map<std::pair<int, int>, std::vector<std::pair<int, double>>> provenance;

    double at(int factor, int label) const { return psi[factor * n_labels + label]; }
    double& at(int factor, int label) { return psi[factor * n_labels + label]; }

    void save(const std::string& path) const;
    static StrengthMatrix load(const std::string& path);
    void save_tsv(const FactorSpace& fs, const std::string& path) const;
};

// One ATT per factor->charge edge per sampled graph.
std::vector<AteEstimate> estimate_ensemble_strengths(const WeightedGraphEnsemble& ensemble,
                                                     const VarTable& data,
                                                     const PsmParams& params);

// psi[f, l] = sum_q weight(G_q) * ATT_q(f -> l), absent edges contribute 0.
StrengthMatrix aggregate_strengths(const WeightedGraphEnsemble& ensemble,
                                   const std::vector<AteEstimate>& estimates,
                                   const VarTable& data, int n_factors, int n_labels);

}  // namespace ljp
