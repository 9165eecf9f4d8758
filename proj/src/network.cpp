#include "rivercast/network.hpp"

#include "rivercast/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <stdexcept>

namespace rivercast {

using nlohmann::json;

// ============================================================================
// RiverGraph
// ============================================================================

RiverGraph RiverGraph::from_edges(int n_reaches, std::vector<std::pair<int, int>> edges) {
    if (n_reaches < 1) throw std::invalid_argument("RiverGraph: n_reaches must be >= 1");
    RiverGraph g;
    g.n_reaches = n_reaches;
    g.edges = std::move(edges);
    g.upstream.assign(n_reaches, {});
    g.downstream.assign(n_reaches, -1);
    g.degree.assign(n_reaches, 1);

    for (auto [j, i] : g.edges) {
        if (j < 0 || j >= n_reaches || i < 0 || i >= n_reaches)
            throw std::invalid_argument("RiverGraph: edge (" + std::to_string(j) + "," + std::to_string(i) +
                                        ") out of range for n=" + std::to_string(n_reaches));
        if (j == i) throw std::invalid_argument("RiverGraph: self-loop at reach " + std::to_string(j));
        if (g.downstream[j] != -1)
            throw std::invalid_argument("RiverGraph: reach " + std::to_string(j) + " has out-degree > 1");
        g.downstream[j] = i;
        g.upstream[i].push_back(j);
        g.degree[i] += 1;
    }

    // Kahn's algorithm, upstream-first. Failure to place every reach means a cycle.
    std::vector<int> pending(n_reaches);
    std::priority_queue<int, std::vector<int>, std::greater<int>> ready; // smallest id first, determinism
    for (int i = 0; i < n_reaches; ++i) {
        pending[i] = static_cast<int>(g.upstream[i].size());
        if (pending[i] == 0) ready.push(i);
    }
    g.topo_order.reserve(n_reaches);
    while (!ready.empty()) {
        int j = ready.top();
        ready.pop();
        g.topo_order.push_back(j);
        int dn = g.downstream[j];
        if (dn >= 0 && --pending[dn] == 0) ready.push(dn);
    }
    if (static_cast<int>(g.topo_order.size()) != n_reaches)
        throw std::invalid_argument("RiverGraph: cycle detected, topological sort incomplete");
    return g;
}

ad::SparseAdjacency RiverGraph::sparse_adjacency() const {
    ad::SparseAdjacency adj;
    adj.n = n_reaches;
    adj.offsets.assign(n_reaches + 1, 0);
    for (int i = 0; i < n_reaches; ++i) adj.offsets[i + 1] = adj.offsets[i] + static_cast<int>(upstream[i].size());
    adj.upstream.reserve(edges.size());
    for (int i = 0; i < n_reaches; ++i)
        for (int j : upstream[i]) adj.upstream.push_back(j);
    return adj;
}

std::vector<int> RiverGraph::outlets() const {
    std::vector<int> out;
    for (int i = 0; i < n_reaches; ++i)
        if (downstream[i] < 0) out.push_back(i);
    return out;
}

// ============================================================================
// StaticFeatureTable
// ============================================================================

const std::vector<std::string>& StaticFeatureTable::column_names() {
    static const std::vector<std::string> names = {
        "ctarea", "elevtn", "grdarea", "nxtdst", "rivlen", "rivwth_gwdlr", "uparea", "width",
        "fldhgt_0", "fldhgt_1", "fldhgt_2", "fldhgt_3", "fldhgt_4", "fldhgt_5", "fldhgt_6",
        "fldhgt_7", "fldhgt_8", "fldhgt_9", "slope", "manning_n"};
    return names;
}

Tensor StaticFeatureTable::to_matrix() const {
    Tensor m(n(), n_columns);
    for (int i = 0; i < n(); ++i) {
        int c = 0;
        m.at(i, c++) = ctarea[i];
        m.at(i, c++) = elevtn[i];
        m.at(i, c++) = grdarea[i];
        m.at(i, c++) = nxtdst[i];
        m.at(i, c++) = rivlen[i];
        m.at(i, c++) = rivwth_gwdlr[i];
        m.at(i, c++) = uparea[i];
        m.at(i, c++) = width[i];
        for (int k = 0; k < 10; ++k) m.at(i, c++) = fldhgt[i][k];
        m.at(i, c++) = slope[i];
        m.at(i, c++) = manning_n[i];
    }
    return m;
}

void StaticFeatureTable::validate(const RiverGraph& g) const {
    auto positive = [&](const std::vector<double>& v, const char* name) {
        for (int i = 0; i < n(); ++i)
            if (!(v[i] > 0.0))
                throw std::invalid_argument(std::string("StaticFeatureTable: ") + name + " must be > 0 at reach " +
                                            std::to_string(i));
    };
    if (n() != g.n_reaches)
        throw std::invalid_argument("StaticFeatureTable: " + std::to_string(n()) + " rows for graph of " +
                                    std::to_string(g.n_reaches));
    positive(ctarea, "ctarea");
    positive(grdarea, "grdarea");
    positive(nxtdst, "nxtdst");
    positive(rivlen, "rivlen");
    positive(rivwth_gwdlr, "rivwth_gwdlr");
    positive(uparea, "uparea");
    positive(width, "width");
    positive(slope, "slope");
    for (int i = 0; i < n(); ++i) {
        for (int k = 0; k + 1 < 10; ++k)
            if (fldhgt[i][k] > fldhgt[i][k + 1])
                throw std::invalid_argument("StaticFeatureTable: fldhgt not monotone at reach " + std::to_string(i));
        if (manning_n[i] < 0.01 || manning_n[i] > 0.2)
            throw std::invalid_argument("StaticFeatureTable: manning_n out of [0.01, 0.2] at reach " +
                                        std::to_string(i));
    }
    for (auto [j, i] : g.edges)
        if (uparea[i] + 1e-9 * uparea[j] < uparea[j])
            throw std::invalid_argument("StaticFeatureTable: uparea decreases along edge " + std::to_string(j) +
                                        "->" + std::to_string(i));
}

// ============================================================================
// generate_network
// ============================================================================

std::pair<RiverGraph, StaticFeatureTable>
generate_network(int n_reaches, double branching_prob, std::uint64_t seed) {
    if (n_reaches < 1) throw std::invalid_argument("generate_network: n_reaches must be >= 1");
    if (branching_prob < 0.0 || branching_prob > 1.0)
        throw std::invalid_argument("generate_network: branching_prob must be in [0,1]");
    Rng rng(seed);

    // Grow a rooted tree upstream from the outlet (reach 0).
    std::vector<std::pair<int, int>> edges;
    std::vector<int> heads = {0}; // reaches without upstream neighbors yet
    std::vector<int> upstream_count(n_reaches, 0);
    for (int k = 1; k < n_reaches; ++k) {
        int target;
        if (rng.uniform() < branching_prob) {
            target = static_cast<int>(rng.index(static_cast<std::size_t>(k)));
        } else {
            target = heads[rng.index(heads.size())];
        }
        edges.emplace_back(k, target);
        if (upstream_count[target] == 0) {
            auto it = std::find(heads.begin(), heads.end(), target);
            if (it != heads.end()) {
                *it = heads.back();
                heads.pop_back();
            }
        }
        upstream_count[target] += 1;
        heads.push_back(k);
    }
    RiverGraph g = RiverGraph::from_edges(n_reaches, std::move(edges));

    StaticFeatureTable f;
    int n = n_reaches;
    f.ctarea.resize(n);
    f.elevtn.resize(n);
    f.grdarea.resize(n);
    f.nxtdst.resize(n);
    f.rivlen.resize(n);
    f.rivwth_gwdlr.resize(n);
    f.uparea.resize(n);
    f.width.resize(n);
    f.fldhgt.resize(n);
    f.slope.resize(n);
    f.manning_n.resize(n);

    for (int i = 0; i < n; ++i) {
        f.ctarea[i] = rng.lognormal(std::log(1.5e8), 0.6);        // ~150 km^2 catchments
        f.grdarea[i] = f.ctarea[i] * rng.uniform(1.0, 1.3);
        f.rivlen[i] = rng.lognormal(std::log(3.0e4), 0.35);       // ~30 km reaches
        f.nxtdst[i] = f.rivlen[i] * rng.uniform(0.8, 1.2);
        f.manning_n[i] = rng.uniform(0.025, 0.05);
    }

    // Upstream-area accumulation, then area-scaled hydraulic geometry.
    for (int i : g.topo_order) {
        f.uparea[i] = f.ctarea[i];
        for (int j : g.upstream[i]) f.uparea[i] += f.uparea[j];
    }
    const double width_exp = 0.5, depth_exp = 0.3, area_ref = 1.5e8;
    for (int i = 0; i < n; ++i) {
        double rel = f.uparea[i] / area_ref;
        f.width[i] = 40.0 * std::pow(rel, width_exp) * rng.lognormal(0.0, 0.15);
        f.rivwth_gwdlr[i] = f.width[i] * rng.lognormal(0.0, 0.08);
        double bankfull = 2.5 * std::pow(rel, depth_exp) * rng.lognormal(0.0, 0.1);
        double h = bankfull * rng.uniform(0.6, 1.0);
        for (int k = 0; k < 10; ++k) {
            f.fldhgt[i][k] = h;
            h += bankfull * rng.uniform(0.1, 0.5);
        }
        f.slope[i] = std::clamp(8e-4 * std::pow(rel, -0.3) * rng.lognormal(0.0, 0.3), 2e-5, 0.03);
    }

    // Walk downstream-first so elevation rises strictly upstream.
    for (auto it = g.topo_order.rbegin(); it != g.topo_order.rend(); ++it) {
        int i = *it;
        int dn = g.downstream[i];
        double base = dn < 0 ? 50.0 : f.elevtn[dn];
        f.elevtn[i] = base + f.slope[i] * f.rivlen[i];
    }

    f.validate(g);
    return {std::move(g), std::move(f)};
}

// ============================================================================
// adjacency_normalized
// ============================================================================

Tensor adjacency_normalized(const RiverGraph& g) {
    Tensor m(g.n_reaches, g.n_reaches);
    for (int i = 0; i < g.n_reaches; ++i) {
        double w = 1.0 / g.degree[i];
        m.at(i, i) = w;
        for (int j : g.upstream[i]) m.at(i, j) = w;
    }
    return m;
}

// ============================================================================
// refine_network
// ============================================================================

RefinedNetwork refine_network(const RiverGraph& g, const StaticFeatureTable& feats, int k) {
    if (k < 2) throw std::invalid_argument("refine_network: k must be >= 2");
    const int n = g.n_reaches;
    const int nf = n * k;

    // Fine ids: coarse i -> [i*k, i*k + k), index 0 most upstream.
    std::vector<std::pair<int, int>> edges;
    edges.reserve(static_cast<std::size_t>(nf));
    for (int i = 0; i < n; ++i)
        for (int m = 0; m + 1 < k; ++m) edges.emplace_back(i * k + m, i * k + m + 1);
    for (auto [j, i] : g.edges) edges.emplace_back(j * k + (k - 1), i * k);

    RefinedNetwork out;
    out.graph = RiverGraph::from_edges(nf, std::move(edges));

    StaticFeatureTable& f = out.feats;
    f.ctarea.resize(nf);
    f.elevtn.resize(nf);
    f.grdarea.resize(nf);
    f.nxtdst.resize(nf);
    f.rivlen.resize(nf);
    f.rivwth_gwdlr.resize(nf);
    f.uparea.resize(nf);
    f.width.resize(nf);
    f.fldhgt.resize(nf);
    f.slope.resize(nf);
    f.manning_n.resize(nf);

    out.coarse_to_fine.assign(n, {});
    for (int i = 0; i < n; ++i) {
        double drop = feats.slope[i] * feats.rivlen[i];
        for (int m = 0; m < k; ++m) {
            int fi = i * k + m;
            out.coarse_to_fine[i].push_back(fi);
            f.ctarea[fi] = feats.ctarea[i] / k;
            f.grdarea[fi] = feats.grdarea[i] / k;
            f.rivlen[fi] = feats.rivlen[i] / k;
            f.nxtdst[fi] = f.rivlen[fi];
            f.width[fi] = feats.width[i];
            f.rivwth_gwdlr[fi] = feats.rivwth_gwdlr[i];
            f.slope[fi] = feats.slope[i];
            f.manning_n[fi] = feats.manning_n[i];
            f.fldhgt[fi] = feats.fldhgt[i];
            // outlet elevation of sub-reach m, linear along the channel
            f.elevtn[fi] = feats.elevtn[i] + drop * static_cast<double>(k - 1 - m) / k;
        }
    }
    for (int i : out.graph.topo_order) {
        f.uparea[i] = f.ctarea[i];
        for (int j : out.graph.upstream[i]) f.uparea[i] += f.uparea[j];
    }
    f.validate(out.graph);
    return out;
}

// ============================================================================
// split_gauges
// ============================================================================

std::vector<GaugeSet> split_gauges(const RiverGraph& g, const std::vector<int>& candidate_reaches,
                                   const std::vector<double>& ratios, std::uint64_t seed) {
    if (candidate_reaches.empty()) throw std::invalid_argument("split_gauges: empty candidate set");
    for (std::size_t r = 0; r < ratios.size(); ++r) {
        if (ratios[r] <= 0.0 || ratios[r] > 1.0)
            throw std::invalid_argument("split_gauges: ratio " + std::to_string(ratios[r]) + " not in (0,1]");
        if (r > 0 && ratios[r] < ratios[r - 1])
            throw std::invalid_argument("split_gauges: ratios must be ascending");
    }
    std::vector<int> pool(candidate_reaches);
    std::sort(pool.begin(), pool.end());
    for (int id : pool)
        if (id < 0 || id >= g.n_reaches)
            throw std::invalid_argument("split_gauges: candidate reach " + std::to_string(id) + " not in graph");

    Rng rng(seed);
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.index(i)]);

    std::vector<GaugeSet> out;
    out.reserve(ratios.size());
    for (double r : ratios) {
        auto n_sup = static_cast<std::size_t>(std::ceil(r * static_cast<double>(pool.size())));
        GaugeSet gs;
        gs.supervised.assign(pool.begin(), pool.begin() + n_sup);
        gs.unsupervised.assign(pool.begin() + n_sup, pool.end());
        std::sort(gs.supervised.begin(), gs.supervised.end());
        std::sort(gs.unsupervised.begin(), gs.unsupervised.end());
        out.push_back(std::move(gs));
    }
    return out;
}

// ============================================================================
// graph.json
// ============================================================================

void write_graph_json(const std::string& path, const RiverGraph& g, const StaticFeatureTable& feats) {
    json st;
    st["ctarea"] = feats.ctarea;
    st["elevtn"] = feats.elevtn;
    st["grdarea"] = feats.grdarea;
    st["nxtdst"] = feats.nxtdst;
    st["rivlen"] = feats.rivlen;
    st["rivwth_gwdlr"] = feats.rivwth_gwdlr;
    st["uparea"] = feats.uparea;
    st["width"] = feats.width;
    st["slope"] = feats.slope;
    st["manning_n"] = feats.manning_n;
    st["fldhgt"] = feats.fldhgt;

    json doc;
    doc["n_reaches"] = g.n_reaches;
    doc["edges"] = g.edges;
    doc["static"] = std::move(st);

    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_graph_json: cannot open " + path);
    out << doc.dump(1) << "\n";
}

std::pair<RiverGraph, StaticFeatureTable> read_graph_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_graph_json: cannot open " + path);
    json doc = json::parse(in);

    int n = doc.at("n_reaches").get<int>();
    std::vector<std::pair<int, int>> edges = doc.at("edges").get<std::vector<std::pair<int, int>>>();
    RiverGraph g = RiverGraph::from_edges(n, std::move(edges));

    const json& st = doc.at("static");
    StaticFeatureTable f;
    f.ctarea = st.at("ctarea").get<std::vector<double>>();
    f.elevtn = st.at("elevtn").get<std::vector<double>>();
    f.grdarea = st.at("grdarea").get<std::vector<double>>();
    f.nxtdst = st.at("nxtdst").get<std::vector<double>>();
    f.rivlen = st.at("rivlen").get<std::vector<double>>();
    f.rivwth_gwdlr = st.at("rivwth_gwdlr").get<std::vector<double>>();
    f.uparea = st.at("uparea").get<std::vector<double>>();
    f.width = st.at("width").get<std::vector<double>>();
    f.slope = st.at("slope").get<std::vector<double>>();
    f.manning_n = st.at("manning_n").get<std::vector<double>>();
    f.fldhgt = st.at("fldhgt").get<std::vector<std::array<double, 10>>>();
    f.validate(g);
    return {std::move(g), std::move(f)};
}

void write_coarse_to_fine_json(const std::string& path, const std::vector<std::vector<int>>& mapping) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_coarse_to_fine_json: cannot open " + path);
    out << json(mapping).dump(1) << "\n";
}

std::vector<std::vector<int>> read_coarse_to_fine_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_coarse_to_fine_json: cannot open " + path);
    return json::parse(in).get<std::vector<std::vector<int>>>();
}

} // namespace rivercast
