#include "ljpcausal/discovery.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>

namespace ljp {

double local_bic_score(const VarTable& data, int v, const std::vector<int>& parents,
                       double penalty) {
    const int n = data.n_rows();
    const int n_strata = 1 << parents.size();
    std::vector<std::array<double, 2>> counts(n_strata, {0.0, 0.0});
    const auto& cv = data.cols[v];
    for (int r = 0; r < n; ++r) {
        int stratum = 0;
        for (std::size_t k = 0; k < parents.size(); ++k) {
            stratum |= (data.cols[parents[k]][r] ? 1 : 0) << k;
        }
        counts[stratum][cv[r] ? 1 : 0] += 1.0;
    }
    double ll = 0;
    for (int s = 0; s < n_strata; ++s) {
        const double total = counts[s][0] + counts[s][1];
        if (total == 0) continue;
        for (int b = 0; b < 2; ++b) {
            const double o = counts[s][b];
            if (o > 0) ll += o * std::log(o / total);
        }
    }
    const double params = static_cast<double>(n_strata);
    return ll - penalty * 0.5 * params * std::log(static_cast<double>(std::max(1, n)));
}

namespace {

// ---------------------------------------------------------------------------
// Greedy DAG hill climb
// ---------------------------------------------------------------------------

struct Dag {
    int n = 0;
    std::vector<std::set<int>> parents;

    bool has_edge(int from, int to) const { return parents[to].count(from) > 0; }

    bool reachable(int from, int to) const {
        if (from == to) return true;
        std::vector<int> stack{from};
        std::set<int> seen{from};
        while (!stack.empty()) {
            int cur = stack.back();
            stack.pop_back();
            for (int child = 0; child < n; ++child) {
                if (parents[child].count(cur) && seen.insert(child).second) {
                    if (child == to) return true;
                    stack.push_back(child);
                }
            }
        }
        return false;
    }
};

class ScoreCache {
public:
    ScoreCache(const VarTable& data, double penalty) : data_(data), penalty_(penalty) {}

    double score(int v, const std::set<int>& parents) {
        std::ostringstream key;
        key << v << '|';
        for (int p : parents) key << p << ',';
        auto it = cache_.find(key.str());
        if (it != cache_.end()) return it->second;
        std::vector<int> pa(parents.begin(), parents.end());
        const double s = local_bic_score(data_, v, pa, penalty_);
        cache_[key.str()] = s;
        return s;
    }

private:
    const VarTable& data_;
    double penalty_;
    std::map<std::string, double> cache_;
};

// ---------------------------------------------------------------------------
// DAG -> CPDAG (v-structures + Meek rules)
// ---------------------------------------------------------------------------

struct MixedGraph {
    int n = 0;
    std::vector<std::set<int>> adj;               // symmetric adjacency
    std::set<std::pair<int, int>> directed;       // (from, to)

    bool adjacent(int a, int b) const { return adj[a].count(b) > 0; }
    bool has_directed(int a, int b) const { return directed.count({a, b}) > 0; }
    bool undirected(int a, int b) const {
        return adjacent(a, b) && !has_directed(a, b) && !has_directed(b, a);
    }
    void orient(int from, int to) {
        if (!has_directed(to, from)) directed.insert({from, to});
    }
};

void apply_meek_rules(MixedGraph& g) {
    bool changed = true;
    while (changed) {
        changed = false;
        for (int a = 0; a < g.n; ++a) {
            for (int b : g.adj[a]) {
                if (!g.undirected(b, a)) continue;
                // Meek R1: c -> a, c not adjacent b  =>  a -> b
                for (int c = 0; c < g.n; ++c) {
                    if (c != b && g.has_directed(c, a) && !g.adjacent(c, b)) {
                        g.orient(a, b);
                        changed = true;
                        break;
                    }
                }
                if (!g.undirected(a, b)) continue;
                // Meek R2: a -> c -> b  =>  a -> b
                for (int c = 0; c < g.n; ++c) {
                    if (g.has_directed(a, c) && g.has_directed(c, b)) {
                        g.orient(a, b);
                        changed = true;
                        break;
                    }
                }
                if (!g.undirected(a, b)) continue;
                // Meek R3: a - c -> b, a - d -> b, c,d non-adjacent  =>  a -> b
                {
                    std::vector<int> mids;
                    for (int c : g.adj[a]) {
                        if (g.undirected(a, c) && g.has_directed(c, b)) mids.push_back(c);
                    }
                    bool fired = false;
                    for (std::size_t i = 0; i < mids.size() && !fired; ++i) {
                        for (std::size_t j = i + 1; j < mids.size() && !fired; ++j) {
                            if (!g.adjacent(mids[i], mids[j])) {
                                g.orient(a, b);
                                changed = true;
                                fired = true;
                            }
                        }
                    }
                }
            }
        }
    }
}

Cpdag dag_to_cpdag(const Dag& dag, double score) {
    MixedGraph g;
    g.n = dag.n;
    g.adj.assign(dag.n, {});
    for (int v = 0; v < dag.n; ++v) {
        for (int p : dag.parents[v]) {
            g.adj[v].insert(p);
            g.adj[p].insert(v);
        }
    }
    // v-structures are compelled.
    for (int v = 0; v < dag.n; ++v) {
        std::vector<int> pa(dag.parents[v].begin(), dag.parents[v].end());
        for (std::size_t i = 0; i < pa.size(); ++i) {
            for (std::size_t j = i + 1; j < pa.size(); ++j) {
                if (!g.adjacent(pa[i], pa[j])) {
                    g.orient(pa[i], v);
                    g.orient(pa[j], v);
                }
            }
        }
    }
    apply_meek_rules(g);

    Cpdag out;
    out.n = dag.n;
    out.score = score;
    out.adjacency.assign(dag.n, {});
    for (int a = 0; a < dag.n; ++a) {
        for (int b : g.adj[a]) {
            out.adjacency[a].insert(b);
            if (a < b) {
                if (g.has_directed(a, b)) out.directed.push_back({a, b});
                else if (g.has_directed(b, a)) out.directed.push_back({b, a});
                else out.undirected.push_back({a, b});
            }
        }
    }
    std::sort(out.directed.begin(), out.directed.end());
    std::sort(out.undirected.begin(), out.undirected.end());
    return out;
}

}  // namespace

Cpdag greedy_adjacency_search(const VarTable& data, const DiscoveryConfig& cfg) {
    const int n = data.n_cols();
    Dag dag;
    dag.n = n;
    dag.parents.assign(n, {});
    ScoreCache cache(data, cfg.penalty);

    double total = 0;
    for (int v = 0; v < n; ++v) total += cache.score(v, {});
    if (n < 2) return dag_to_cpdag(dag, total);

    const double eps = 1e-9;
    bool any_phase_changed = true;
    while (any_phase_changed) {
        any_phase_changed = false;

        // Forward: best single insertion until no improvement.
        while (true) {
            double best_delta = eps;
            int best_from = -1, best_to = -1;
            for (int to = 0; to < n; ++to) {
                if (static_cast<int>(dag.parents[to].size()) >= cfg.max_parents) continue;
                const double base = cache.score(to, dag.parents[to]);
                for (int from = 0; from < n; ++from) {
                    if (from == to || dag.has_edge(from, to) || dag.has_edge(to, from)) continue;
                    if (dag.reachable(to, from)) continue;  // would create a cycle
                    std::set<int> pa = dag.parents[to];
                    pa.insert(from);
                    const double delta = cache.score(to, pa) - base;
                    if (delta > best_delta) {
                        best_delta = delta;
                        best_from = from;
                        best_to = to;
                    }
                }
            }
            if (best_to < 0) break;
            dag.parents[best_to].insert(best_from);
            total += best_delta;
            any_phase_changed = true;
        }

        // Backward: best single deletion until no improvement.
        while (true) {
            double best_delta = eps;
            int best_from = -1, best_to = -1;
            for (int to = 0; to < n; ++to) {
                const double base = cache.score(to, dag.parents[to]);
                for (int from : dag.parents[to]) {
                    std::set<int> pa = dag.parents[to];
                    pa.erase(from);
                    const double delta = cache.score(to, pa) - base;
                    if (delta > best_delta) {
                        best_delta = delta;
                        best_from = from;
                        best_to = to;
                    }
                }
            }
            if (best_to < 0) break;
            dag.parents[best_to].erase(best_from);
            total += best_delta;
            any_phase_changed = true;
        }
    }

    return dag_to_cpdag(dag, total);
}

// ---------------------------------------------------------------------------
// FCI orientation phase
// ---------------------------------------------------------------------------

namespace {

struct Skeleton {
    int n = 0;
    std::vector<std::set<int>> adj;
    std::map<std::pair<int, int>, std::vector<int>> sepsets;
    std::set<std::pair<int, int>> no_sepset;  // on-demand searches that failed

    bool adjacent(int a, int b) const { return adj[a].count(b) > 0; }
    void remove(int a, int b) {
        adj[a].erase(b);
        adj[b].erase(a);
    }
};

// Enumerates size-k subsets of pool in lexicographic order.
bool next_combination(std::vector<int>& idx, int pool_size) {
    const int k = static_cast<int>(idx.size());
    for (int i = k - 1; i >= 0; --i) {
        if (idx[i] < pool_size - (k - i)) {
            ++idx[i];
            for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
            return true;
        }
    }
    return false;
}

// Tests u ⟂ v | S over subsets of `pool` of the given size; returns the
// first separating set found.
std::optional<std::vector<int>> find_sepset_in(const VarTable& data, int u, int v,
                                               const std::vector<int>& pool, int size,
                                               double alpha) {
    if (size > static_cast<int>(pool.size())) return std::nullopt;
    std::vector<int> idx(size);
    for (int i = 0; i < size; ++i) idx[i] = i;
    do {
        std::vector<int> subset;
        subset.reserve(size);
        for (int i : idx) subset.push_back(pool[i]);
        const CiResult r = g2_test(data, u, v, subset, alpha);
        if (r.independent && !r.untestable) return subset;
    } while (size > 0 && next_combination(idx, static_cast<int>(pool.size())));
    return std::nullopt;
}

std::vector<int> pool_without(const std::set<int>& s, int excluded) {
    std::vector<int> out;
    for (int x : s) {
        if (x != excluded) out.push_back(x);
    }
    return out;
}

// PC-style removal over neighbor subsets of increasing size.
void prune_by_neighbors(Skeleton& sk, const VarTable& data, const DiscoveryConfig& cfg) {
    for (int depth = 0; depth <= cfg.max_cond; ++depth) {
        std::vector<std::pair<int, int>> edges;
        for (int a = 0; a < sk.n; ++a) {
            for (int b : sk.adj[a]) {
                if (a < b) edges.push_back({a, b});
            }
        }
        for (auto [a, b] : edges) {
            if (!sk.adjacent(a, b)) continue;
            auto sep = find_sepset_in(data, a, b, pool_without(sk.adj[a], b), depth, cfg.alpha_ci);
            if (!sep) {
                sep = find_sepset_in(data, a, b, pool_without(sk.adj[b], a), depth, cfg.alpha_ci);
            }
            if (sep) {
                sk.remove(a, b);
                sk.sepsets[{a, b}] = *sep;
            }
        }
    }
}

// Nodes reachable from `start` along paths whose interior vertices are
// either colliders on the path or members of a triangle with their path
// neighbours; `collider` reports arrow-arrow marks in the working PAG.
std::set<int> possible_d_sep(const Skeleton& sk, const Pag& work, int start) {
    std::set<int> result;
    std::set<std::pair<int, int>> visited;  // (prev, cur)
    std::vector<std::pair<int, int>> stack;
    for (int nb : sk.adj[start]) {
        stack.push_back({start, nb});
        visited.insert({start, nb});
        result.insert(nb);
    }
    while (!stack.empty()) {
        auto [prev, cur] = stack.back();
        stack.pop_back();
        for (int nxt : sk.adj[cur]) {
            if (nxt == prev || nxt == start) continue;
            bool collider = false;
            if (const PagEdge* e1 = work.find_edge(prev, cur)) {
                if (const PagEdge* e2 = work.find_edge(cur, nxt)) {
                    collider = work.mark_at(*e1, cur) == Mark::arrow &&
                               work.mark_at(*e2, cur) == Mark::arrow;
                }
            }
            const bool triangle = sk.adjacent(prev, nxt);
            if (!collider && !triangle) continue;
            if (visited.insert({cur, nxt}).second) {
                result.insert(nxt);
                stack.push_back({cur, nxt});
            }
        }
    }
    result.erase(start);
    return result;
}

// Looks up a recorded sepset or searches neighbour subsets on demand.
std::optional<std::vector<int>> sepset_for(Skeleton& sk, const VarTable& data, int u, int v,
                                           const DiscoveryConfig& cfg) {
    const std::pair<int, int> key{std::min(u, v), std::max(u, v)};
    auto it = sk.sepsets.find(key);
    if (it != sk.sepsets.end()) return it->second;
    if (sk.no_sepset.count(key)) return std::nullopt;
    for (int depth = 0; depth <= cfg.max_cond; ++depth) {
        auto sep = find_sepset_in(data, u, v, pool_without(sk.adj[u], v), depth, cfg.alpha_ci);
        if (!sep) {
            sep = find_sepset_in(data, u, v, pool_without(sk.adj[v], u), depth, cfg.alpha_ci);
        }
        if (sep) {
            sk.sepsets[key] = *sep;
            return sep;
        }
    }
    sk.no_sepset.insert(key);
    return std::nullopt;
}

void orient_colliders(Pag& pag, Skeleton& sk, const VarTable& data, const DiscoveryConfig& cfg) {
    for (int w = 0; w < sk.n; ++w) {
        std::vector<int> nbs(sk.adj[w].begin(), sk.adj[w].end());
        for (std::size_t i = 0; i < nbs.size(); ++i) {
            for (std::size_t j = i + 1; j < nbs.size(); ++j) {
                const int u = nbs[i], v = nbs[j];
                if (sk.adjacent(u, v)) continue;  // shielded
                auto sep = sepset_for(sk, data, u, v, cfg);
                if (!sep) continue;
                if (std::find(sep->begin(), sep->end(), w) != sep->end()) continue;
                if (!pag.set_mark(u, w, w, Mark::arrow)) {
                    log_warning("fci_orient: conflicting collider at " + pag.node_names[w] +
                                ", keeping first orientation");
                }
                if (!pag.set_mark(v, w, w, Mark::arrow)) {
                    log_warning("fci_orient: conflicting collider at " + pag.node_names[w] +
                                ", keeping first orientation");
                }
            }
        }
    }
}

// Potentially-directed edge from a to b: no arrow into a, no tail at b.
bool pd_edge(const Pag& pag, int a, int b) {
    const PagEdge* e = pag.find_edge(a, b);
    if (!e) return false;
    return pag.mark_at(*e, a) != Mark::arrow && pag.mark_at(*e, b) != Mark::tail;
}

// Second vertices of uncovered potentially-directed paths from a to
// target (paths of >= 3 nodes; the direct edge is not a path here).
std::set<int> uncovered_pd_path_second_nodes(const Pag& pag, int a, int target,
                                             bool second_nonadjacent_target) {
    std::set<int> seconds;
    std::vector<std::vector<int>> stack;
    for (int b = 0; b < pag.n(); ++b) {
        if (b == a || b == target) continue;
        if (pd_edge(pag, a, b)) stack.push_back({a, b});
    }
    while (!stack.empty()) {
        std::vector<int> path = stack.back();
        stack.pop_back();
        const int last = path.back();
        if (last == target) {
            if (!second_nonadjacent_target || !pag.adjacent(path[1], target)) {
                seconds.insert(path[1]);
            }
            continue;
        }
        for (int nxt = 0; nxt < pag.n(); ++nxt) {
            if (std::find(path.begin(), path.end(), nxt) != path.end()) continue;
            if (!pd_edge(pag, last, nxt)) continue;
            // uncovered: consecutive triple endpoints stay non-adjacent
            if (pag.adjacent(path[path.size() - 2], nxt)) continue;
            auto next_path = path;
            next_path.push_back(nxt);
            stack.push_back(std::move(next_path));
        }
    }
    return seconds;
}

// Discriminating path search for R4: looks for d ... a b c where every
// interior vertex is a collider on the path and a parent of c, d is not
// adjacent to c. Returns the sepset decision endpoint d if found.
std::optional<int> find_discriminating_origin(const Pag& pag, int a, int b, int c) {
    // Path runs d, ..., x, a, b, c. Interior vertices (including a) must be
    // colliders on the path and parents of c.
    auto is_parent_of_c = [&](int x) {
        const PagEdge* e = pag.find_edge(x, c);
        return e && pag.mark_at(*e, x) == Mark::tail && pag.mark_at(*e, c) == Mark::arrow;
    };
    if (!is_parent_of_c(a)) return std::nullopt;

    // Walk back from a through colliders that are parents of c.
    std::vector<std::vector<int>> stack{{b, a}};  // reversed: path from b back
    while (!stack.empty()) {
        std::vector<int> rev = stack.back();
        stack.pop_back();
        const int tip = rev.back();
        for (int d = 0; d < pag.n(); ++d) {
            if (d == c || std::find(rev.begin(), rev.end(), d) != rev.end()) continue;
            const PagEdge* e = pag.find_edge(d, tip);
            if (!e) continue;
            // tip must be a collider on the path: arrow at tip on both edges
            const PagEdge* prev_e = pag.find_edge(rev[rev.size() - 2], tip);
            if (!prev_e) continue;
            if (pag.mark_at(*prev_e, tip) != Mark::arrow || pag.mark_at(*e, tip) != Mark::arrow) {
                continue;
            }
            if (!pag.adjacent(d, c)) {
                return d;  // discriminating path found
            }
            if (is_parent_of_c(d)) {
                auto next_rev = rev;
                next_rev.push_back(d);
                stack.push_back(std::move(next_rev));
            }
        }
        if (stack.size() > 5000) break;  // path explosion guard
    }
    return std::nullopt;
}

bool apply_r1_r4(Pag& pag, Skeleton& sk, const VarTable& data, const DiscoveryConfig& cfg) {
    bool changed = false;
    const int n = pag.n();
    for (int b = 0; b < n; ++b) {
        for (int a : pag.neighbors(b)) {
            for (int c : pag.neighbors(b)) {
                if (a == c) continue;
                const PagEdge* ab = pag.find_edge(a, b);
                const PagEdge* bc = pag.find_edge(b, c);
                if (!ab || !bc) continue;

                // R1: a *-> b o-* c, a,c non-adjacent  =>  b -> c
                if (!pag.adjacent(a, c) && pag.mark_at(*ab, b) == Mark::arrow &&
                    pag.mark_at(*bc, b) == Mark::circle) {
                    changed |= pag.set_mark(b, c, b, Mark::tail);
                    changed |= pag.set_mark(b, c, c, Mark::arrow);
                }

                // R2: (a -> b *-> c) or (a *-> b -> c), circle at c on (a,c)
                if (const PagEdge* ac = pag.find_edge(a, c)) {
                    const bool chain1 = pag.mark_at(*ab, a) == Mark::tail &&
                                        pag.mark_at(*ab, b) == Mark::arrow &&
                                        pag.mark_at(*bc, c) == Mark::arrow;
                    const bool chain2 = pag.mark_at(*ab, b) == Mark::arrow &&
                                        pag.mark_at(*bc, b) == Mark::tail &&
                                        pag.mark_at(*bc, c) == Mark::arrow;
                    if ((chain1 || chain2) && pag.mark_at(*ac, c) == Mark::circle) {
                        changed |= pag.set_mark(a, c, c, Mark::arrow);
                    }
                }
            }
        }
    }

    // R3: a *-> b <-* c, a *-o d o-* c, a,c non-adjacent, d *-o b  =>  d *-> b
    for (int b = 0; b < n; ++b) {
        for (int d : pag.neighbors(b)) {
            const PagEdge* db = pag.find_edge(d, b);
            if (pag.mark_at(*db, b) != Mark::circle) continue;
            const auto nbs = pag.neighbors(d);
            for (int a : nbs) {
                if (a == b) continue;
                for (int c : nbs) {
                    if (c == b || c == a || pag.adjacent(a, c)) continue;
                    const PagEdge* ab = pag.find_edge(a, b);
                    const PagEdge* cb = pag.find_edge(c, b);
                    const PagEdge* ad = pag.find_edge(a, d);
                    const PagEdge* cd = pag.find_edge(c, d);
                    if (!ab || !cb || !ad || !cd) continue;
                    if (pag.mark_at(*ab, b) == Mark::arrow && pag.mark_at(*cb, b) == Mark::arrow &&
                        pag.mark_at(*ad, d) == Mark::circle && pag.mark_at(*cd, d) == Mark::circle) {
                        changed |= pag.set_mark(d, b, b, Mark::arrow);
                    }
                }
            }
        }
    }

    // R4: discriminating paths
    for (int b = 0; b < n; ++b) {
        for (int c : pag.neighbors(b)) {
            const PagEdge* bc = pag.find_edge(b, c);
            if (pag.mark_at(*bc, b) != Mark::circle) continue;
            for (int a : pag.neighbors(b)) {
                if (a == c || !pag.adjacent(a, c)) continue;
                const PagEdge* ab = pag.find_edge(a, b);
                if (pag.mark_at(*ab, b) != Mark::arrow) continue;
                auto d = find_discriminating_origin(pag, a, b, c);
                if (!d) continue;
                auto sep = sepset_for(sk, data, *d, c, cfg);
                const bool b_in_sep =
                    sep && std::find(sep->begin(), sep->end(), b) != sep->end();
                if (b_in_sep) {
                    changed |= pag.set_mark(b, c, b, Mark::tail);
                    changed |= pag.set_mark(b, c, c, Mark::arrow);
                } else {
                    changed |= pag.set_mark(a, b, a, Mark::arrow);
                    changed |= pag.set_mark(a, b, b, Mark::arrow);
                    changed |= pag.set_mark(b, c, b, Mark::arrow);
                    changed |= pag.set_mark(b, c, c, Mark::arrow);
                }
            }
        }
    }
    return changed;
}

bool apply_r8_r10(Pag& pag) {
    bool changed = false;
    const int n = pag.n();
    for (int a = 0; a < n; ++a) {
        for (int c : pag.neighbors(a)) {
            const PagEdge* ac = pag.find_edge(a, c);
            if (pag.mark_at(*ac, a) != Mark::circle || pag.mark_at(*ac, c) != Mark::arrow) {
                continue;  // rules below resolve a o-> c only
            }

            // R8: a -> b -> c or a -o b -> c
            for (int b : pag.neighbors(a)) {
                if (b == c) continue;
                const PagEdge* ab = pag.find_edge(a, b);
                const PagEdge* bc = pag.find_edge(b, c);
                if (!bc) continue;
                const bool b_to_c = pag.mark_at(*bc, b) == Mark::tail &&
                                    pag.mark_at(*bc, c) == Mark::arrow;
                if (!b_to_c) continue;
                const bool a_to_b = pag.mark_at(*ab, a) == Mark::tail &&
                                    pag.mark_at(*ab, b) == Mark::arrow;
                const bool a_tail_circle = pag.mark_at(*ab, a) == Mark::tail &&
                                           pag.mark_at(*ab, b) == Mark::circle;
                if (a_to_b || a_tail_circle) {
                    changed |= pag.set_mark(a, c, a, Mark::tail);
                    break;
                }
            }
            if (pag.mark_at(*ac, a) != Mark::circle) continue;

            // R9: uncovered pd path a, b, ..., c with b non-adjacent to c
            {
                auto seconds = uncovered_pd_path_second_nodes(pag, a, c, true);
                if (!seconds.empty()) {
                    changed |= pag.set_mark(a, c, a, Mark::tail);
                }
            }
            if (pag.mark_at(*ac, a) != Mark::circle) continue;

            // R10: two uncovered pd paths to distinct parents b, d of c whose
            // second vertices differ and are non-adjacent
            {
                std::vector<int> into_c;
                for (int b : pag.neighbors(c)) {
                    if (b == a) continue;
                    const PagEdge* bc = pag.find_edge(b, c);
                    if (pag.mark_at(*bc, b) == Mark::tail && pag.mark_at(*bc, c) == Mark::arrow) {
                        into_c.push_back(b);
                    }
                }
                bool fired = false;
                for (std::size_t i = 0; i < into_c.size() && !fired; ++i) {
                    for (std::size_t j = i + 1; j < into_c.size() && !fired; ++j) {
                        auto s1 = uncovered_pd_path_second_nodes(pag, a, into_c[i], false);
                        auto s2 = uncovered_pd_path_second_nodes(pag, a, into_c[j], false);
                        if (pd_edge(pag, a, into_c[i])) s1.insert(into_c[i]);
                        if (pd_edge(pag, a, into_c[j])) s2.insert(into_c[j]);
                        for (int m : s1) {
                            for (int nn : s2) {
                                if (m != nn && !pag.adjacent(m, nn)) {
                                    changed |= pag.set_mark(a, c, a, Mark::tail);
                                    fired = true;
                                    break;
                                }
                            }
                            if (fired) break;
                        }
                    }
                }
            }
        }
    }
    return changed;
}

}  // namespace

Pag fci_orient(const Cpdag& adjacencies, const VarTable& data, const DiscoveryConfig& cfg) {
    Skeleton sk;
    sk.n = adjacencies.n;
    sk.adj = adjacencies.adjacency;

    // Stage A: re-verify greedy adjacencies against CI tests.
    prune_by_neighbors(sk, data, cfg);

    // Preliminary collider orientation so possible-d-sep sets see arrows.
    Pag work;
    work.node_names = data.names;
    work.node_kinds = data.kinds;
    for (int a = 0; a < sk.n; ++a) {
        for (int b : sk.adj[a]) {
            if (a < b) work.add_edge(a, b, Mark::circle, Mark::circle);
        }
    }
    orient_colliders(work, sk, data, cfg);

    // Stage B: possible-d-sep pruning.
    {
        std::vector<std::pair<int, int>> edges;
        for (int a = 0; a < sk.n; ++a) {
            for (int b : sk.adj[a]) {
                if (a < b) edges.push_back({a, b});
            }
        }
        for (auto [a, b] : edges) {
            if (!sk.adjacent(a, b)) continue;
            bool removed = false;
            for (int side = 0; side < 2 && !removed; ++side) {
                const int x = side == 0 ? a : b;
                const int y = side == 0 ? b : a;
                auto pds = possible_d_sep(sk, work, x);
                pds.erase(y);
                std::vector<int> pool(pds.begin(), pds.end());
                for (int depth = 1; depth <= cfg.max_cond && !removed; ++depth) {
                    auto sep = find_sepset_in(data, x, y, pool, depth, cfg.alpha_ci);
                    if (sep) {
                        sk.remove(a, b);
                        sk.sepsets[{a, b}] = *sep;
                        removed = true;
                    }
                }
            }
        }
    }

    // Final orientation pass from a clean all-circle graph.
    Pag pag;
    pag.node_names = data.names;
    pag.node_kinds = data.kinds;
    for (int a = 0; a < sk.n; ++a) {
        for (int b : sk.adj[a]) {
            if (a < b) pag.add_edge(a, b, Mark::circle, Mark::circle);
        }
    }
    orient_colliders(pag, sk, data, cfg);

    for (int guard = 0; guard < sk.n * sk.n + 8; ++guard) {
        bool changed = apply_r1_r4(pag, sk, data, cfg);
        changed |= apply_r8_r10(pag);
        if (!changed) break;
    }

    pag.sepsets = sk.sepsets;
    pag.validate();
    return pag;
}

Pag discover_pag(const VarTable& data, const DiscoveryConfig& cfg) {
    return fci_orient(greedy_adjacency_search(data, cfg), data, cfg);
}

}  // namespace ljp
