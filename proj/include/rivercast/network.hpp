#ifndef RIVERCAST_NETWORK_HPP
#define RIVERCAST_NETWORK_HPP

#include "rivercast/tape.hpp"
#include "rivercast/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace rivercast {

/**
 * Directed river network. Edges point downstream: (j, i) means reach j
 * drains into reach i. Valid graphs are forests (out-degree <= 1, acyclic)
 * with a dense 0-based id space. Immutable after construction.
 */
struct RiverGraph {
    int n_reaches = 0;
    std::vector<std::pair<int, int>> edges; // (upstream, downstream)
    std::vector<int> topo_order;            // upstream-first
    std::vector<int> degree;                // 1 + upstream neighbor count

    // derived adjacency, filled by from_edges
    std::vector<std::vector<int>> upstream; // upstream[i] = reaches draining into i
    std::vector<int> downstream;            // -1 at outlets

    /// Validates the forest property, computes topo_order / degree / adjacency.
    /// Throws std::invalid_argument on cycles or out-degree > 1.
    static RiverGraph from_edges(int n_reaches, std::vector<std::pair<int, int>> edges);

    /// CSR view consumed by the graph-convolution kernels.
    ad::SparseAdjacency sparse_adjacency() const;

    std::vector<int> outlets() const;
};

/// Per-reach geomorphic attributes. All vectors are n_reaches long.
struct StaticFeatureTable {
    std::vector<double> ctarea;       // m^2
    std::vector<double> elevtn;       // m, at channel outlet
    std::vector<double> grdarea;      // m^2
    std::vector<double> nxtdst;       // m
    std::vector<double> rivlen;       // m
    std::vector<double> rivwth_gwdlr; // m
    std::vector<double> uparea;       // m^2
    std::vector<double> width;        // m
    std::vector<std::array<double, 10>> fldhgt; // m, monotone non-decreasing
    std::vector<double> slope;        // dimensionless
    std::vector<double> manning_n;    // dimensionless

    int n() const { return static_cast<int>(ctarea.size()); }

    /// Column layout used by the model input matrix (20 columns).
    static const std::vector<std::string>& column_names();
    static constexpr int n_columns = 20;

    /// n x 20 matrix in column_names order.
    Tensor to_matrix() const;

    /// Checks positivity, fldhgt monotonicity, downstream uparea
    /// accumulation, slope and roughness ranges. Throws on violation.
    void validate(const RiverGraph& g) const;
};

/// Supervised/unsupervised gauge partition. Both sets sorted ascending.
struct GaugeSet {
    std::vector<int> supervised;
    std::vector<int> unsupervised;
};

/**
 * Grow a random rooted tree (root = outlet) upstream and sample channel
 * attributes with hydraulic-geometry power laws. Deterministic per seed.
 *
 * branching_prob steers confluence density: attachment goes to an arbitrary
 * existing reach with that probability, otherwise extends a headwater chain.
 */
std::pair<RiverGraph, StaticFeatureTable>
generate_network(int n_reaches, double branching_prob, std::uint64_t seed);

/// Dense D^-1 (A + I): row i sums to 1, entry (i,j) = 1/degree(i) iff j
/// drains into i (or j == i).
Tensor adjacency_normalized(const RiverGraph& g);

struct RefinedNetwork {
    RiverGraph graph;
    StaticFeatureTable feats;
    std::vector<std::vector<int>> coarse_to_fine; // coarse id -> fine ids, upstream-first
};

/// Split every reach into k serial sub-reaches (k >= 2). Channel length and
/// catchment area divide by k, elevation interpolates linearly along the
/// reach, uparea is re-accumulated on the fine graph.
RefinedNetwork refine_network(const RiverGraph& g, const StaticFeatureTable& feats, int k);

/**
 * Nested supervised/unsupervised splits: one seeded shuffle, ratio r keeps
 * the first ceil(r * |candidates|) reaches as supervised. ratios must be
 * ascending, each in (0, 1].
 */
std::vector<GaugeSet> split_gauges(const RiverGraph& g, const std::vector<int>& candidate_reaches,
                                   const std::vector<double>& ratios, std::uint64_t seed);

// ---- graph.json ----
void write_graph_json(const std::string& path, const RiverGraph& g, const StaticFeatureTable& feats);
std::pair<RiverGraph, StaticFeatureTable> read_graph_json(const std::string& path);
void write_coarse_to_fine_json(const std::string& path, const std::vector<std::vector<int>>& mapping);
std::vector<std::vector<int>> read_coarse_to_fine_json(const std::string& path);

} // namespace rivercast

#endif
