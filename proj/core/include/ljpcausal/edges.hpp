#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ljpcausal/corpus.hpp"
#include "ljpcausal/llm.hpp"
#include "ljpcausal/pag.hpp"

namespace ljp {

// Prior over the three resolutions of an ambiguous edge (u, v), u < v.
// LLM-sourced priors put 1 - epsilon on the chosen relation and epsilon/2
// on each alternative; fallback priors are uniform.
struct EdgePrior {
    std::pair<int, int> pair;
    double p_uv = 1.0 / 3;    // u -> v
    double p_vu = 1.0 / 3;    // v -> u
    double p_none = 1.0 / 3;  // u <-> v, i.e. drop
    enum class Source : std::uint8_t { llm, fallback } source = Source::fallback;

    double sum() const { return p_uv + p_vu + p_none; }
};

using PriorMap = std::map<std::pair<int, int>, EdgePrior>;

using ContextProvider =
    std::function<std::vector<std::string>(const std::string& u, const std::string& v)>;

// One edge prompt per ambiguous pair; unparseable responses (after
// retries with a format reminder) fall back to the uniform prior.
PriorMap elicit_edge_priors(const Pag& pag, const std::vector<std::pair<int, int>>& amb,
                            const ContextProvider& context, LlmClient& client,
                            double epsilon, int max_parse_retries = 2);

// Mean over co-occurring training records of
// (first-occurrence norm_pos of v) - (first-occurrence norm_pos of u);
// 0 when no record contains both factors.
double delta_pos(const FactorSpace& fs, const Corpus& corpus, int factor_u, int factor_v);

struct ConstraintLog {
    int charge_rule_applications = 0;
    int temporal_rule_applications = 0;
    std::vector<std::pair<int, int>> removed_edges;  // all options forbidden
};

// Judicial rule: any orientation implying charge -> factor loses its prior
// mass (deterministic charge -> factor edges are deleted). Temporal rule:
// when delta_pos(u, v) > alpha_temporal the direction v -> u is forbidden.
// Edges whose every option is forbidden are removed and logged.
ConstraintLog apply_constraints(Pag& pag, PriorMap& priors, const FactorSpace& fs,
                                const Corpus& corpus, double alpha_temporal);

struct SampledGraph {
    std::vector<std::pair<int, int>> edges;  // directed (from, to)
    double bic = 0;
    double weight = 0;

    bool has_edge(int from, int to) const;
    std::vector<int> parents_of(int node, int n_nodes) const;
};

struct WeightedGraphEnsemble {
    std::vector<SampledGraph> graphs;
    int q() const { return static_cast<int>(graphs.size()); }
};

// Q independent draws: directed edges kept, bidirected dropped,
// circle-arrow kept with probability 1/2, circle-circle resolved by its
// prior. Cyclic draws are resampled (<= 50 attempts), then repaired by
// deleting the lowest-probability edge on a detected cycle.
WeightedGraphEnsemble sample_graphs(const Pag& pag, const PriorMap& priors, int q,
                                    std::uint32_t seed);

// BIC(G, D) = -2 log L + k ln N with Laplace-smoothed (add-one) CPTs,
// k = edge count. Throws when a node has more than 12 parents.
double bic_of_graph(const SampledGraph& graph, const VarTable& data);

// weight = exp(-(BIC - min BIC)) / sum(...), the shift-invariant softmax.
void normalize_weights(WeightedGraphEnsemble& ensemble);

// Control ensemble for the random-edge comparison: keep/drop decisions of
// the reference are preserved per graph and edge; kept ambiguous edges are
// redirected uniformly over the constraint-allowed directions.
WeightedGraphEnsemble random_edge_baseline(const Pag& pag, const PriorMap& priors,
                                           const WeightedGraphEnsemble& reference,
                                           std::uint32_t seed);

void save_ensemble(const WeightedGraphEnsemble& ensemble, const Pag& pag,
                   const std::string& path);
WeightedGraphEnsemble load_ensemble(const std::string& path);
std::string sampled_graph_to_dot(const SampledGraph& graph, const Pag& pag);

void save_priors(const PriorMap& priors, const Pag& pag, const std::string& path);
PriorMap load_priors(const std::string& path);

}  // namespace ljp
