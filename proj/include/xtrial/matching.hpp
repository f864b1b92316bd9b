#pragma once

#include <cstdint>
#include <vector>

// Exact minimum-weight perfect matching on small-to-medium complete graphs
// (Edmonds' blossom algorithm with dual variables). Weights are handled in
// integer arithmetic so optimality does not hinge on floating-point luck.

namespace xtrial::matching {

// Maximum-weight matching of an undirected graph given as an edge list.
// Returns mate[v] = partner vertex or -1. With max_cardinality, among all
// maximum-cardinality matchings one of maximum weight is returned.
struct Edge {
    int u;
    int v;
    std::int64_t weight;
};

std::vector<int> max_weight_matching(int n, const std::vector<Edge>& edges,
                                     bool max_cardinality);

// Minimum-weight perfect matching on the complete graph defined by a dense
// symmetric int64 cost matrix. n must be even and positive.
std::vector<int> min_weight_perfect_matching_int(
    const std::vector<std::vector<std::int64_t>>& cost);

// Convenience wrapper for double costs: scales to integers (~1e-12 relative
// resolution) and solves exactly on the scaled problem.
std::vector<int> min_weight_perfect_matching(const std::vector<std::vector<double>>& cost);

}  // namespace xtrial::matching
