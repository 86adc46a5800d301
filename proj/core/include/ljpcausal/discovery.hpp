#pragma once

#include <set>
#include <vector>

#include "ljpcausal/citest.hpp"
#include "ljpcausal/pag.hpp"

namespace ljp {

struct DiscoveryConfig {
    double alpha_ci = 0.05;
    int max_cond = 3;       // conditioning-set size cap
    double penalty = 1.0;   // multiplier on the standard BIC penalty
    int max_parents = 12;
};

// BIC-family local score: multinomial log-likelihood of v given its
// parents minus penalty * (params / 2) * ln N, params = 2^|parents|.
double local_bic_score(const VarTable& data, int v, const std::vector<int>& parents,
                       double penalty);

// Greedy search result: a CPDAG-style mixed graph (compelled edges
// directed, the rest undirected) plus its adjacency sets.
struct Cpdag {
    int n = 0;
    std::vector<std::pair<int, int>> directed;    // (from, to)
    std::vector<std::pair<int, int>> undirected;  // (a, b), a < b
    std::vector<std::set<int>> adjacency;
    double score = 0;
};

// Two-phase greedy structure search over binary variables: forward single
// edge insertions to a local optimum, then backward eliminations; phases
// repeat until neither improves. The learned DAG is reduced to its CPDAG
// via v-structures plus Meek closure.
Cpdag greedy_adjacency_search(const VarTable& data, const DiscoveryConfig& cfg = {});

// FCI-style constraint phase over the greedy adjacencies: CI re-verification
// (neighbor subsets, then possible-d-separating sets), circle
// initialization, collider orientation from sepsets, and orientation rules
// R1-R4 and R8-R10 to fixpoint.
Pag fci_orient(const Cpdag& adjacencies, const VarTable& data,
               const DiscoveryConfig& cfg = {});

// greedy_adjacency_search followed by fci_orient.
Pag discover_pag(const VarTable& data, const DiscoveryConfig& cfg = {});

}  // namespace ljp
