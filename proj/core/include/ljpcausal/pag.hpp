#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ljpcausal/factors.hpp"

namespace ljp {

enum class Mark : std::uint8_t { circle, tail, arrow };

const char* mark_name(Mark m);

// Edge endpoints are stored with u < v. Composite types are restricted to
// directed (tail/arrow), bidirected (arrow/arrow), circle-arrow, and
// circle-circle.
struct PagEdge {
    int u = 0, v = 0;
    Mark mark_u = Mark::circle;  // mark at u
    Mark mark_v = Mark::circle;  // mark at v
};

enum class EdgeKind {
    directed_uv,      // u -> v
    directed_vu,      // v -> u
    bidirected,       // u <-> v
    circle_arrow_uv,  // u o-> v
    circle_arrow_vu,  // v o-> u
    circle_circle,    // u o-o v
    other
};

EdgeKind edge_kind(const PagEdge& e);

struct Pag {
    std::vector<std::string> node_names;
    std::vector<VarKind> node_kinds;
    std::vector<PagEdge> edges;  // sorted by (u, v)
    std::map<std::pair<int, int>, std::vector<int>> sepsets;

    int n() const { return static_cast<int>(node_names.size()); }
    const PagEdge* find_edge(int a, int b) const;
    PagEdge* find_edge(int a, int b);
    bool adjacent(int a, int b) const { return find_edge(a, b) != nullptr; }
    std::vector<int> neighbors(int a) const;
    Mark mark_at(const PagEdge& e, int node) const;
    void add_edge(int a, int b, Mark mark_a, Mark mark_b);
    void remove_edge(int a, int b);
    // Monotonic endpoint update: circle may become tail/arrow; returns
    // false (and leaves the mark alone) on a conflicting re-orientation.
    bool set_mark(int a, int b, int at_node, Mark mark);
    void sort_edges();
    // Throws ValidationError when any edge falls outside the four
    // composite types.
    void validate() const;

    std::string to_dot() const;
    void save(const std::string& path) const;
    static Pag load(const std::string& path);
};

// The fully ambiguous (circle-circle) edges, in stable (u, v) order.
std::vector<std::pair<int, int>> ambiguous_edges(const Pag& pag);

void save_sepsets(const Pag& pag, const std::string& path);

}  // namespace ljp
