#include "ljpcausal/edges.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>

#include <json.hpp>

namespace ljp {

bool SampledGraph::has_edge(int from, int to) const {
    return std::find(edges.begin(), edges.end(), std::make_pair(from, to)) != edges.end();
}

std::vector<int> SampledGraph::parents_of(int node, int) const {
    std::vector<int> out;
    for (const auto& [from, to] : edges) {
        if (to == node) out.push_back(from);
    }
    std::sort(out.begin(), out.end());
    return out;
}

PriorMap elicit_edge_priors(const Pag& pag, const std::vector<std::pair<int, int>>& amb,
                            const ContextProvider& context, LlmClient& client,
                            double epsilon, int max_parse_retries) {
    if (epsilon < 0 || epsilon > 1) {
        throw ValidationError("elicit_edge_priors: epsilon must be in [0, 1]");
    }
    PriorMap priors;
    for (const auto& [u, v] : amb) {
        const std::string& nu = pag.node_names[u];
        const std::string& nv = pag.node_names[v];
        LlmRequest req = build_edge_prompt(nu, nv, context ? context(nu, nv)
                                                           : std::vector<std::string>{});
        EdgePrior prior;
        prior.pair = {u, v};
        bool resolved = false;
        for (int attempt = 0; attempt <= max_parse_retries && !resolved; ++attempt) {
            LlmResponse resp = client.complete(req);
            if (!resp.ok) {
                throw PipelineError("elicit_edge_priors: client failure for (" + nu + ", " + nv +
                                    "): " + resp.text);
            }
            try {
                const EdgeRelation rel = parse_edge_choice(resp);
                prior.p_uv = rel == EdgeRelation::forward ? 1 - epsilon : epsilon / 2;
                prior.p_vu = rel == EdgeRelation::backward ? 1 - epsilon : epsilon / 2;
                prior.p_none = rel == EdgeRelation::none ? 1 - epsilon : epsilon / 2;
                prior.source = EdgePrior::Source::llm;
                resolved = true;
            } catch (const ParseError&) {
                req.user += "\n\nReminder: answer with exactly one of u->v, v->u, u<->v "
                            "enclosed within <START> and </START>.";
            }
        }
        if (!resolved) {
            log_warning("elicit_edge_priors: unparseable answer for (" + nu + ", " + nv +
                        "), using uniform prior");
            prior = EdgePrior{};
            prior.pair = {u, v};
        }
        priors[{u, v}] = prior;
    }
    return priors;
}

double delta_pos(const FactorSpace& fs, const Corpus& corpus, int factor_u, int factor_v) {
    double total = 0;
    int count = 0;
    for (const auto* rec : corpus.split_records(Split::train)) {
        std::optional<double> first_u, first_v;
        for (const auto& tok : rec->tokens) {
            const int f = fs.factor_of(to_lower(tok.surface));
            if (f == factor_u && !first_u) first_u = tok.norm_pos;
            if (f == factor_v && !first_v) first_v = tok.norm_pos;
            if (first_u && first_v) break;
        }
        if (first_u && first_v) {
            total += *first_v - *first_u;
            ++count;
        }
    }
    return count == 0 ? 0.0 : total / count;
}

namespace {

// Node index -> factor id, or -1 for charges.
int factor_id_of_node(const Pag& pag, const FactorSpace& fs, int node) {
    if (pag.node_kinds[node] == VarKind::charge) return -1;
    for (const auto& f : fs.factors) {
        if (f.canonical == pag.node_names[node]) return f.id;
    }
    return -1;
}

}  // namespace

ConstraintLog apply_constraints(Pag& pag, PriorMap& priors, const FactorSpace& fs,
                                const Corpus& corpus, double alpha_temporal) {
    ConstraintLog log;

    // Is direction from -> to forbidden?
    auto forbidden = [&](int from, int to) {
        if (pag.node_kinds[from] == VarKind::charge && pag.node_kinds[to] == VarKind::factor) {
            ++log.charge_rule_applications;
            return true;
        }
        if (pag.node_kinds[from] == VarKind::factor && pag.node_kinds[to] == VarKind::factor) {
            const int f_to = factor_id_of_node(pag, fs, to);
            const int f_from = factor_id_of_node(pag, fs, from);
            // delta_pos(to, from) > alpha: `from` occurs after `to` in the
            // text, so it cannot be its cause.
            if (f_to >= 0 && f_from >= 0 &&
                delta_pos(fs, corpus, f_to, f_from) > alpha_temporal) {
                ++log.temporal_rule_applications;
                return true;
            }
        }
        return false;
    };

    std::vector<PagEdge> kept;
    for (const PagEdge& e : pag.edges) {
        const EdgeKind kind = edge_kind(e);
        bool remove = false;
        switch (kind) {
            case EdgeKind::directed_uv:
                remove = forbidden(e.u, e.v);
                break;
            case EdgeKind::directed_vu:
                remove = forbidden(e.v, e.u);
                break;
            case EdgeKind::circle_arrow_uv:
                remove = forbidden(e.u, e.v);  // retention would mean u -> v
                break;
            case EdgeKind::circle_arrow_vu:
                remove = forbidden(e.v, e.u);
                break;
            case EdgeKind::bidirected:
                break;  // dropped at sampling regardless
            case EdgeKind::circle_circle: {
                auto it = priors.find({e.u, e.v});
                if (it == priors.end()) {
                    EdgePrior p;
                    p.pair = {e.u, e.v};
                    it = priors.emplace(p.pair, p).first;
                }
                EdgePrior& p = it->second;
                if (forbidden(e.u, e.v)) p.p_uv = 0;
                if (forbidden(e.v, e.u)) p.p_vu = 0;
                const double total = p.sum();
                if (total <= 0) {
                    remove = true;
                    priors.erase(it);
                } else {
                    p.p_uv /= total;
                    p.p_vu /= total;
                    p.p_none /= total;
                }
                break;
            }
            case EdgeKind::other:
                throw ValidationError("apply_constraints: malformed edge type");
        }
        if (remove) {
            log.removed_edges.push_back({e.u, e.v});
            log_warning("apply_constraints: removed edge " + pag.node_names[e.u] + " - " +
                        pag.node_names[e.v] + " (all orientations forbidden)");
        } else {
            kept.push_back(e);
        }
    }
    pag.edges = std::move(kept);
    return log;
}

namespace {

// A sampled decision for one PAG edge.
struct Decision {
    bool keep = false;
    int from = 0, to = 0;
    double prob = 1.0;  // probability of this decision under its rule
};

Decision decide_edge(const PagEdge& e, const PriorMap& priors, std::mt19937& rng) {
    Decision d;
    switch (edge_kind(e)) {
        case EdgeKind::directed_uv:
            d = {true, e.u, e.v, 1.0};
            break;
        case EdgeKind::directed_vu:
            d = {true, e.v, e.u, 1.0};
            break;
        case EdgeKind::bidirected:
            d = {false, 0, 0, 1.0};
            break;
        case EdgeKind::circle_arrow_uv: {
            std::uniform_real_distribution<double> u01(0.0, 1.0);
            const bool keep = u01(rng) < 0.5;
            d = keep ? Decision{true, e.u, e.v, 0.5} : Decision{false, 0, 0, 0.5};
            break;
        }
        case EdgeKind::circle_arrow_vu: {
            std::uniform_real_distribution<double> u01(0.0, 1.0);
            const bool keep = u01(rng) < 0.5;
            d = keep ? Decision{true, e.v, e.u, 0.5} : Decision{false, 0, 0, 0.5};
            break;
        }
        case EdgeKind::circle_circle: {
            auto it = priors.find({e.u, e.v});
            EdgePrior p;
            if (it != priors.end()) p = it->second;
            std::uniform_real_distribution<double> u01(0.0, 1.0);
            const double r = u01(rng);
            if (r < p.p_uv) {
                d = {true, e.u, e.v, p.p_uv};
            } else if (r < p.p_uv + p.p_vu) {
                d = {true, e.v, e.u, p.p_vu};
            } else {
                d = {false, 0, 0, p.p_none};
            }
            break;
        }
        case EdgeKind::other:
            throw ValidationError("sample_graphs: malformed edge type");
    }
    return d;
}

// Finds a directed cycle; returns the positions (into `kept`) of its edges.
std::optional<std::vector<std::size_t>> find_cycle(const std::vector<Decision>& kept, int n) {
    std::vector<std::vector<std::pair<int, std::size_t>>> out(n);  // (to, decision idx)
    for (std::size_t i = 0; i < kept.size(); ++i) {
        out[kept[i].from].push_back({kept[i].to, i});
    }
    std::vector<int> color(n, 0);  // 0 white, 1 gray, 2 black
    std::vector<std::pair<int, std::size_t>> parent(n, {-1, 0});

    std::vector<std::size_t> cycle;
    std::function<bool(int)> dfs = [&](int v) {
        color[v] = 1;
        for (auto [w, idx] : out[v]) {
            if (color[w] == 1) {
                // back edge v -> w closes a cycle
                cycle.push_back(idx);
                int cur = v;
                while (cur != w) {
                    cycle.push_back(parent[cur].second);
                    cur = parent[cur].first;
                }
                return true;
            }
            if (color[w] == 0) {
                parent[w] = {v, idx};
                if (dfs(w)) return true;
            }
        }
        color[v] = 2;
        return false;
    };
    for (int v = 0; v < n; ++v) {
        if (color[v] == 0 && dfs(v)) return cycle;
    }
    return std::nullopt;
}

// Deletes the lowest-probability edge on detected cycles until acyclic.
SampledGraph assemble_acyclic(std::vector<Decision> decisions, int n,
                              const Pag& pag_for_names) {
    std::vector<Decision> kept;
    for (const auto& d : decisions) {
        if (d.keep) kept.push_back(d);
    }
    std::size_t guard = kept.size() + 1;
    while (auto cycle = find_cycle(kept, n)) {
        if (guard-- == 0) {
            std::ostringstream os;
            os << "sample_graphs: cannot repair cycle:";
            for (std::size_t i : *cycle) {
                os << ' ' << pag_for_names.node_names[kept[i].from] << "->"
                   << pag_for_names.node_names[kept[i].to];
            }
            throw PipelineError(os.str());
        }
        std::size_t weakest = (*cycle)[0];
        for (std::size_t i : *cycle) {
            if (kept[i].prob < kept[weakest].prob) weakest = i;
        }
        kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(weakest));
    }
    SampledGraph g;
    for (const auto& d : kept) g.edges.push_back({d.from, d.to});
    std::sort(g.edges.begin(), g.edges.end());
    return g;
}

bool is_acyclic(const std::vector<Decision>& decisions, int n) {
    std::vector<Decision> kept;
    for (const auto& d : decisions) {
        if (d.keep) kept.push_back(d);
    }
    return !find_cycle(kept, n).has_value();
}

}  // namespace

WeightedGraphEnsemble sample_graphs(const Pag& pag, const PriorMap& priors, int q,
                                    std::uint32_t seed) {
    if (q < 1) throw ValidationError("sample_graphs: Q must be >= 1");
    WeightedGraphEnsemble ensemble;
    for (int gi = 0; gi < q; ++gi) {
        std::vector<Decision> decisions;
        bool acyclic = false;
        for (int attempt = 0; attempt < 50 && !acyclic; ++attempt) {
            std::seed_seq seq{seed, static_cast<std::uint32_t>(gi),
                              static_cast<std::uint32_t>(attempt)};
            std::mt19937 rng(seq);
            decisions.clear();
            for (const PagEdge& e : pag.edges) {
                decisions.push_back(decide_edge(e, priors, rng));
            }
            acyclic = is_acyclic(decisions, pag.n());
        }
        ensemble.graphs.push_back(assemble_acyclic(std::move(decisions), pag.n(), pag));
    }
    return ensemble;
}

double bic_of_graph(const SampledGraph& graph, const VarTable& data) {
    const int n_vars = data.n_cols();
    const int n = data.n_rows();
    double loglik = 0;
    for (int v = 0; v < n_vars; ++v) {
        const std::vector<int> parents = graph.parents_of(v, n_vars);
        if (parents.size() > 12) {
            throw PipelineError("bic_of_graph: node " + data.names[v] +
                                " has more than 12 parents");
        }
        const int n_strata = 1 << parents.size();
        std::vector<std::array<double, 2>> counts(n_strata, {0.0, 0.0});
        for (int r = 0; r < n; ++r) {
            int stratum = 0;
            for (std::size_t k = 0; k < parents.size(); ++k) {
                stratum |= (data.cols[parents[k]][r] ? 1 : 0) << k;
            }
            counts[stratum][data.cols[v][r] ? 1 : 0] += 1.0;
        }
        // Laplace-smoothed CPTs, smoothing 1.
        for (int r = 0; r < n; ++r) {
            int stratum = 0;
            for (std::size_t k = 0; k < parents.size(); ++k) {
                stratum |= (data.cols[parents[k]][r] ? 1 : 0) << k;
            }
            const int x = data.cols[v][r] ? 1 : 0;
            const double p = (counts[stratum][x] + 1.0) /
                             (counts[stratum][0] + counts[stratum][1] + 2.0);
            loglik += std::log(p);
        }
    }
    return -2.0 * loglik +
           static_cast<double>(graph.edges.size()) * std::log(static_cast<double>(std::max(1, n)));
}

void normalize_weights(WeightedGraphEnsemble& ensemble) {
    if (ensemble.graphs.empty()) return;
    double min_bic = ensemble.graphs[0].bic;
    for (const auto& g : ensemble.graphs) min_bic = std::min(min_bic, g.bic);
    double total = 0;
    for (auto& g : ensemble.graphs) {
        g.weight = std::exp(-(g.bic - min_bic));
        total += g.weight;
    }
    for (auto& g : ensemble.graphs) g.weight /= total;
}

WeightedGraphEnsemble random_edge_baseline(const Pag& pag, const PriorMap& priors,
                                           const WeightedGraphEnsemble& reference,
                                           std::uint32_t seed) {
    WeightedGraphEnsemble control;
    for (int gi = 0; gi < reference.q(); ++gi) {
        const SampledGraph& ref = reference.graphs[gi];

        // Non-ambiguous decisions are copied from the reference verbatim;
        // ambiguous kept edges are redirected uniformly.
        auto redirect = [&](std::mt19937& rng) {
            std::vector<Decision> decisions;
            for (const PagEdge& e : pag.edges) {
                const EdgeKind kind = edge_kind(e);
                const bool kept_uv = ref.has_edge(e.u, e.v);
                const bool kept_vu = ref.has_edge(e.v, e.u);
                if (kind != EdgeKind::circle_circle) {
                    if (kept_uv) decisions.push_back({true, e.u, e.v, 1.0});
                    else if (kept_vu) decisions.push_back({true, e.v, e.u, 1.0});
                    else decisions.push_back({false, 0, 0, 1.0});
                    continue;
                }
                if (!kept_uv && !kept_vu) {
                    decisions.push_back({false, 0, 0, 1.0});
                    continue;
                }
                auto it = priors.find({e.u, e.v});
                EdgePrior p;
                if (it != priors.end()) p = it->second;
                std::vector<std::pair<int, int>> allowed;
                if (p.p_uv > 0) allowed.push_back({e.u, e.v});
                if (p.p_vu > 0) allowed.push_back({e.v, e.u});
                if (allowed.empty()) {
                    decisions.push_back({false, 0, 0, 1.0});
                    continue;
                }
                std::uniform_int_distribution<std::size_t> pick(0, allowed.size() - 1);
                const auto [from, to] = allowed[pick(rng)];
                decisions.push_back({true, from, to, 1.0 / allowed.size()});
            }
            return decisions;
        };

        std::vector<Decision> decisions;
        bool acyclic = false;
        for (int attempt = 0; attempt < 50 && !acyclic; ++attempt) {
            std::seed_seq seq{seed, static_cast<std::uint32_t>(gi),
                              static_cast<std::uint32_t>(attempt), 0x7247u};
            std::mt19937 rng(seq);
            decisions = redirect(rng);
            acyclic = is_acyclic(decisions, pag.n());
        }
        control.graphs.push_back(assemble_acyclic(std::move(decisions), pag.n(), pag));
    }
    return control;
}

void save_ensemble(const WeightedGraphEnsemble& ensemble, const Pag& pag,
                   const std::string& path) {
    nlohmann::ordered_json j;
    j["q"] = ensemble.q();
    j["nodes"] = pag.node_names;
    j["graphs"] = nlohmann::ordered_json::array();
    for (const auto& g : ensemble.graphs) {
        nlohmann::ordered_json gj;
        gj["edges"] = nlohmann::ordered_json::array();
        for (const auto& [from, to] : g.edges) {
            gj["edges"].push_back({{"from", from}, {"to", to}});
        }
        gj["bic"] = g.bic;
        gj["weight"] = g.weight;
        j["graphs"].push_back(gj);
    }
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write ensemble: " + path);
    out << j.dump(2) << "\n";
}

WeightedGraphEnsemble load_ensemble(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open ensemble: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid ensemble file " + path + ": " + e.what());
    }
    WeightedGraphEnsemble ensemble;
    for (const auto& gj : j.at("graphs")) {
        SampledGraph g;
        for (const auto& ej : gj.at("edges")) {
            g.edges.push_back({ej.at("from").get<int>(), ej.at("to").get<int>()});
        }
        g.bic = gj.value("bic", 0.0);
        g.weight = gj.value("weight", 0.0);
        ensemble.graphs.push_back(std::move(g));
    }
    return ensemble;
}

std::string sampled_graph_to_dot(const SampledGraph& graph, const Pag& pag) {
    std::ostringstream os;
    os << "digraph sampled {\n";
    for (int i = 0; i < pag.n(); ++i) {
        os << "  n" << i << " [label=\"" << pag.node_names[i] << "\""
           << (pag.node_kinds[i] == VarKind::charge ? ", shape=box" : "") << "];\n";
    }
    for (const auto& [from, to] : graph.edges) {
        os << "  n" << from << " -> n" << to << ";\n";
    }
    os << "}\n";
    return os.str();
}

void save_priors(const PriorMap& priors, const Pag& pag, const std::string& path) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& [pair, p] : priors) {
        j.push_back({{"u", pair.first},
                     {"v", pair.second},
                     {"u_name", pag.node_names[pair.first]},
                     {"v_name", pag.node_names[pair.second]},
                     {"p_uv", p.p_uv},
                     {"p_vu", p.p_vu},
                     {"p_none", p.p_none},
                     {"source", p.source == EdgePrior::Source::llm ? "llm" : "default"}});
    }
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write priors: " + path);
    out << j.dump(2) << "\n";
}

PriorMap load_priors(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open priors: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid priors file " + path + ": " + e.what());
    }
    PriorMap priors;
    for (const auto& pj : j) {
        EdgePrior p;
        p.pair = {pj.at("u").get<int>(), pj.at("v").get<int>()};
        p.p_uv = pj.at("p_uv").get<double>();
        p.p_vu = pj.at("p_vu").get<double>();
        p.p_none = pj.at("p_none").get<double>();
        p.source = pj.value("source", "default") == "llm" ? EdgePrior::Source::llm
                                                          : EdgePrior::Source::fallback;
        priors[p.pair] = p;
    }
    return priors;
}

}  // namespace ljp
