#include "ljpcausal/pag.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ljp {

const char* mark_name(Mark m) {
    switch (m) {
        case Mark::circle: return "circle";
        case Mark::tail: return "tail";
        case Mark::arrow: return "arrow";
    }
    return "circle";
}

namespace {
Mark mark_from_name(const std::string& s) {
    if (s == "circle") return Mark::circle;
    if (s == "tail") return Mark::tail;
    if (s == "arrow") return Mark::arrow;
    throw ParseError("unknown endpoint mark: " + s);
}
}  // namespace

EdgeKind edge_kind(const PagEdge& e) {
    if (e.mark_u == Mark::tail && e.mark_v == Mark::arrow) return EdgeKind::directed_uv;
    if (e.mark_u == Mark::arrow && e.mark_v == Mark::tail) return EdgeKind::directed_vu;
    if (e.mark_u == Mark::arrow && e.mark_v == Mark::arrow) return EdgeKind::bidirected;
    if (e.mark_u == Mark::circle && e.mark_v == Mark::arrow) return EdgeKind::circle_arrow_uv;
    if (e.mark_u == Mark::arrow && e.mark_v == Mark::circle) return EdgeKind::circle_arrow_vu;
    if (e.mark_u == Mark::circle && e.mark_v == Mark::circle) return EdgeKind::circle_circle;
    return EdgeKind::other;
}

const PagEdge* Pag::find_edge(int a, int b) const {
    const int u = std::min(a, b), v = std::max(a, b);
    for (const auto& e : edges) {
        if (e.u == u && e.v == v) return &e;
    }
    return nullptr;
}

PagEdge* Pag::find_edge(int a, int b) {
    const int u = std::min(a, b), v = std::max(a, b);
    for (auto& e : edges) {
        if (e.u == u && e.v == v) return &e;
    }
    return nullptr;
}

std::vector<int> Pag::neighbors(int a) const {
    std::vector<int> out;
    for (const auto& e : edges) {
        if (e.u == a) out.push_back(e.v);
        else if (e.v == a) out.push_back(e.u);
    }
    std::sort(out.begin(), out.end());
    return out;
}

Mark Pag::mark_at(const PagEdge& e, int node) const {
    return node == e.u ? e.mark_u : e.mark_v;
}

void Pag::add_edge(int a, int b, Mark mark_a, Mark mark_b) {
    if (a == b) throw ValidationError("Pag::add_edge: self loop");
    if (adjacent(a, b)) throw ValidationError("Pag::add_edge: duplicate edge");
    PagEdge e;
    e.u = std::min(a, b);
    e.v = std::max(a, b);
    e.mark_u = a < b ? mark_a : mark_b;
    e.mark_v = a < b ? mark_b : mark_a;
    edges.push_back(e);
    sort_edges();
}

void Pag::remove_edge(int a, int b) {
    const int u = std::min(a, b), v = std::max(a, b);
    edges.erase(std::remove_if(edges.begin(), edges.end(),
                               [&](const PagEdge& e) { return e.u == u && e.v == v; }),
                edges.end());
}

bool Pag::set_mark(int a, int b, int at_node, Mark mark) {
    PagEdge* e = find_edge(a, b);
    if (!e) return false;
    Mark& slot = at_node == e->u ? e->mark_u : e->mark_v;
    if (slot == mark) return true;
    if (slot != Mark::circle) return false;  // arrows and tails are final
    slot = mark;
    return true;
}

void Pag::sort_edges() {
    std::sort(edges.begin(), edges.end(), [](const PagEdge& a, const PagEdge& b) {
        if (a.u != b.u) return a.u < b.u;
        return a.v < b.v;
    });
}

void Pag::validate() const {
    for (const auto& e : edges) {
        if (e.u == e.v) throw ValidationError("Pag: self loop at node " + node_names[e.u]);
        if (edge_kind(e) == EdgeKind::other) {
            throw ValidationError("Pag: edge " + node_names[e.u] + " - " + node_names[e.v] +
                                  " has composite type outside the four allowed");
        }
    }
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (edges[i - 1].u == edges[i].u && edges[i - 1].v == edges[i].v) {
            throw ValidationError("Pag: duplicate edge");
        }
    }
}

std::vector<std::pair<int, int>> ambiguous_edges(const Pag& pag) {
    std::vector<std::pair<int, int>> out;
    for (const auto& e : pag.edges) {
        if (edge_kind(e) == EdgeKind::circle_circle) out.push_back({e.u, e.v});
    }
    return out;
}

std::string Pag::to_dot() const {
    // Endpoint marks become arrowhead decorations: arrow = normal,
    // circle = odot, tail = none.
    auto arrow_of = [](Mark m) {
        switch (m) {
            case Mark::arrow: return "normal";
            case Mark::circle: return "odot";
            case Mark::tail: return "none";
        }
        return "none";
    };
    std::ostringstream os;
    os << "graph pag {\n";
    for (int i = 0; i < n(); ++i) {
        os << "  n" << i << " [label=\"" << node_names[i] << "\""
           << (node_kinds[i] == VarKind::charge ? ", shape=box" : "") << "];\n";
    }
    for (const auto& e : edges) {
        os << "  n" << e.u << " -- n" << e.v << " [taillabel=\"\", headlabel=\"\", dir=both"
           << ", arrowtail=" << arrow_of(e.mark_u) << ", arrowhead=" << arrow_of(e.mark_v)
           << "];\n";
    }
    os << "}\n";
    return os.str();
}

void Pag::save(const std::string& path) const {
    nlohmann::ordered_json j;
    j["nodes"] = nlohmann::ordered_json::array();
    for (int i = 0; i < n(); ++i) {
        j["nodes"].push_back({{"name", node_names[i]},
                              {"kind", node_kinds[i] == VarKind::charge ? "charge" : "factor"}});
    }
    j["edges"] = nlohmann::ordered_json::array();
    for (const auto& e : edges) {
        j["edges"].push_back({{"u", e.u},
                              {"v", e.v},
                              {"mark_u", mark_name(e.mark_u)},
                              {"mark_v", mark_name(e.mark_v)}});
    }
    j["sepsets"] = nlohmann::ordered_json::array();
    for (const auto& [pair, set] : sepsets) {
        j["sepsets"].push_back({{"u", pair.first}, {"v", pair.second}, {"set", set}});
    }
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write PAG: " + path);
    out << j.dump(2) << "\n";
}

Pag Pag::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open PAG: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("invalid PAG file " + path + ": " + e.what());
    }
    Pag pag;
    for (const auto& nj : j.at("nodes")) {
        pag.node_names.push_back(nj.at("name").get<std::string>());
        pag.node_kinds.push_back(nj.at("kind").get<std::string>() == "charge" ? VarKind::charge
                                                                              : VarKind::factor);
    }
    for (const auto& ej : j.at("edges")) {
        PagEdge e;
        e.u = ej.at("u").get<int>();
        e.v = ej.at("v").get<int>();
        e.mark_u = mark_from_name(ej.at("mark_u").get<std::string>());
        e.mark_v = mark_from_name(ej.at("mark_v").get<std::string>());
        pag.edges.push_back(e);
    }
    for (const auto& sj : j.value("sepsets", nlohmann::json::array())) {
        pag.sepsets[{sj.at("u").get<int>(), sj.at("v").get<int>()}] =
            sj.at("set").get<std::vector<int>>();
    }
    pag.sort_edges();
    return pag;
}

void save_sepsets(const Pag& pag, const std::string& path) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& [pair, set] : pag.sepsets) {
        nlohmann::ordered_json names = nlohmann::ordered_json::array();
        for (int i : set) names.push_back(pag.node_names[i]);
        j.push_back({{"u", pag.node_names[pair.first]},
                     {"v", pag.node_names[pair.second]},
                     {"set", names}});
    }
    std::ofstream out(path);
    if (!out) throw PipelineError("cannot write sepsets: " + path);
    out << j.dump(2) << "\n";
}

}  // namespace ljp
