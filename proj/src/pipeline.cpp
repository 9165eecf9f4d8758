#include "rivercast/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace rivercast {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* dyn_var_name(int k) {
    switch (static_cast<DynVar>(k)) {
        case DynVar::Discharge: return "discharge";
        case DynVar::Depth: return "depth";
        case DynVar::Storage: return "storage";
        case DynVar::Runoff: return "runoff";
    }
    return "?";
}

double sigma_floor(double mu, double sigma) {
    double floor = 1e-6 * (std::abs(mu) + 1.0);
    return sigma > floor ? sigma : floor;
}

} // namespace

void SplitSpec::validate() const {
    if (train.length() <= 0 || val.length() <= 0 || test.length() <= 0)
        throw std::invalid_argument("SplitSpec: empty partition");
    if (train.end != val.begin || val.end != test.begin)
        throw std::invalid_argument("SplitSpec: partitions must be contiguous and ordered train|val|test");
}

// ============================================================================
// Normalization
// ============================================================================

NormStats fit_norm(const HydroSeries& truth, const ForcingSeries& forcing, const StaticFeatureTable& feats,
                   const StepRange& train_range) {
    if (train_range.length() <= 0) throw std::invalid_argument("fit_norm: empty training slice");
    const int n = truth.n_reaches;
    NormStats st;
    st.n_reaches = n;

    auto fit_reachwise = [&](int var, auto value_at) {
        st.mu_dyn[var].resize(n);
        st.sigma_dyn[var].resize(n);
        const double T = train_range.length();
        for (int i = 0; i < n; ++i) {
            double s = 0.0, s2 = 0.0;
            for (int t = train_range.begin; t < train_range.end; ++t) {
                double v = value_at(i, t);
                s += v;
                s2 += v * v;
            }
            double mu = s / T;
            double var_hat = s2 / T - mu * mu;
            if (var_hat < 0.0) var_hat = 0.0;
            st.mu_dyn[var][i] = mu;
            st.sigma_dyn[var][i] = sigma_floor(mu, std::sqrt(var_hat));
        }
    };
    fit_reachwise(0, [&](int i, int t) { return truth.discharge[truth.idx(i, t)]; });
    fit_reachwise(1, [&](int i, int t) { return truth.depth[truth.idx(i, t)]; });
    fit_reachwise(2, [&](int i, int t) { return truth.storage[truth.idx(i, t)]; });
    fit_reachwise(3, [&](int i, int t) { return forcing.at(i, t); });

    Tensor m = feats.to_matrix();
    st.mu_static.resize(m.cols());
    st.sigma_static.resize(m.cols());
    for (int c = 0; c < m.cols(); ++c) {
        double s = 0.0, s2 = 0.0;
        for (int r = 0; r < m.rows(); ++r) {
            s += m.at(r, c);
            s2 += m.at(r, c) * m.at(r, c);
        }
        double mu = s / m.rows();
        double var_hat = s2 / m.rows() - mu * mu;
        if (var_hat < 0.0) var_hat = 0.0;
        st.mu_static[c] = mu;
        st.sigma_static[c] = sigma_floor(mu, std::sqrt(var_hat));
    }
    return st;
}

Tensor NormStats::normalize_static(const StaticFeatureTable& feats) const {
    Tensor m = feats.to_matrix();
    for (int c = 0; c < m.cols(); ++c)
        for (int r = 0; r < m.rows(); ++r) m.at(r, c) = (m.at(r, c) - mu_static[c]) / sigma_static[c];
    return m;
}

Tensor NormStats::normalize_runoff_step(const ForcingSeries& f, int step) const {
    Tensor out(f.n_reaches, 1);
    for (int i = 0; i < f.n_reaches; ++i) out.at(i, 0) = normalize(DynVar::Runoff, i, f.at(i, step));
    return out;
}

Tensor NormStats::normalize_states_step(const HydroSeries& h, int step) const {
    Tensor out(h.n_reaches, 3);
    for (int i = 0; i < h.n_reaches; ++i) {
        out.at(i, 0) = normalize(DynVar::Discharge, i, h.discharge[h.idx(i, step)]);
        out.at(i, 1) = normalize(DynVar::Depth, i, h.depth[h.idx(i, step)]);
        out.at(i, 2) = normalize(DynVar::Storage, i, h.storage[h.idx(i, step)]);
    }
    return out;
}

// ============================================================================
// Windows
// ============================================================================

std::vector<WindowSample> make_windows(const StepRange& partition, int h_lag, int f_horizon, int stride) {
    if (stride < 1) throw std::invalid_argument("make_windows: stride must be >= 1");
    std::vector<WindowSample> out;
    if (partition.length() < h_lag + f_horizon) {
        std::cerr << "make_windows: partition [" << partition.begin << "," << partition.end
                  << ") shorter than h+f=" << (h_lag + f_horizon) << ", no windows\n";
        return out;
    }
    for (int t0 = partition.begin + h_lag; t0 + f_horizon <= partition.end; t0 += stride)
        out.push_back(WindowSample{t0});
    return out;
}

// ============================================================================
// Binary series I/O
// ============================================================================

void write_series_bin(const std::string& path, const std::vector<const std::vector<double>*>& blocks,
                      const std::string& dtype) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_series_bin: cannot open " + path);
    if (dtype == "float32") {
        std::vector<float> buf;
        for (const auto* b : blocks) {
            buf.resize(b->size());
            for (std::size_t i = 0; i < b->size(); ++i) buf[i] = static_cast<float>((*b)[i]);
            out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
        }
    } else if (dtype == "float64") {
        for (const auto* b : blocks)
            out.write(reinterpret_cast<const char*>(b->data()), static_cast<std::streamsize>(b->size() * 8));
    } else {
        throw std::invalid_argument("write_series_bin: unsupported dtype " + dtype);
    }
}

std::vector<std::vector<double>> read_series_bin(const std::string& path, int n_blocks, std::size_t block_len,
                                                 const std::string& dtype) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_series_bin: cannot open " + path);
    const std::size_t elem = dtype == "float32" ? 4 : 8;
    if (dtype != "float32" && dtype != "float64")
        throw std::invalid_argument("read_series_bin: unsupported dtype " + dtype);

    in.seekg(0, std::ios::end);
    const auto file_size = static_cast<std::size_t>(in.tellg());
    const std::size_t expected = static_cast<std::size_t>(n_blocks) * block_len * elem;
    if (file_size != expected)
        throw std::runtime_error("read_series_bin: " + path + " has " + std::to_string(file_size) +
                                 " bytes, expected " + std::to_string(expected));
    in.seekg(0);

    std::vector<std::vector<double>> out(n_blocks);
    for (auto& block : out) {
        block.resize(block_len);
        if (dtype == "float32") {
            std::vector<float> buf(block_len);
            in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(block_len * 4));
            for (std::size_t i = 0; i < block_len; ++i) block[i] = static_cast<double>(buf[i]);
        } else {
            in.read(reinterpret_cast<char*>(block.data()), static_cast<std::streamsize>(block_len * 8));
        }
    }
    return out;
}

// ============================================================================
// norm.json
// ============================================================================

void write_norm_json(const std::string& path, const NormStats& norm) {
    json dyn;
    for (int k = 0; k < kNumDynVars; ++k) {
        dyn[dyn_var_name(k)] = {{"mu", norm.mu_dyn[k]}, {"sigma", norm.sigma_dyn[k]}};
    }
    json doc;
    doc["n_reaches"] = norm.n_reaches;
    doc["dynamic"] = std::move(dyn);
    doc["static"] = {{"columns", StaticFeatureTable::column_names()},
                     {"mu", norm.mu_static},
                     {"sigma", norm.sigma_static}};
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_norm_json: cannot open " + path);
    out << doc.dump(1) << "\n";
}

NormStats read_norm_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_norm_json: cannot open " + path);
    json doc = json::parse(in);
    NormStats st;
    st.n_reaches = doc.at("n_reaches").get<int>();
    for (int k = 0; k < kNumDynVars; ++k) {
        const json& d = doc.at("dynamic").at(dyn_var_name(k));
        st.mu_dyn[k] = d.at("mu").get<std::vector<double>>();
        st.sigma_dyn[k] = d.at("sigma").get<std::vector<double>>();
    }
    st.mu_static = doc.at("static").at("mu").get<std::vector<double>>();
    st.sigma_static = doc.at("static").at("sigma").get<std::vector<double>>();
    return st;
}

// ============================================================================
// Dataset directory
// ============================================================================

void write_dataset(const std::string& dir, const Dataset& ds, const std::string& dtype) {
    ds.split.validate();
    fs::create_directories(dir);
    write_graph_json(dir + "/graph.json", ds.graph, ds.feats);
    write_series_bin(dir + "/forcing.bin", {&ds.forcing.runoff}, dtype);
    write_series_bin(dir + "/hydro.bin", {&ds.truth.discharge, &ds.truth.depth, &ds.truth.storage}, dtype);
    if (ds.observations)
        write_series_bin(dir + "/obs.bin",
                         {&ds.observations->discharge, &ds.observations->depth, &ds.observations->storage}, dtype);
    write_norm_json(dir + "/norm.json", ds.norm);

    json files;
    files["forcing.bin"] = {"runoff"};
    files["hydro.bin"] = {"discharge", "depth", "storage"};
    if (ds.observations) files["obs.bin"] = {"discharge", "depth", "storage"};

    json doc;
    doc["schema_version"] = 1;
    doc["n_reaches"] = ds.forcing.n_reaches;
    doc["n_steps"] = ds.forcing.n_steps;
    doc["dtype"] = dtype;
    doc["layout"] = "reach_major";
    doc["dt_seconds"] = ds.forcing.dt;
    doc["variables"] = std::move(files);
    doc["split"] = {{"train", {ds.split.train.begin, ds.split.train.end}},
                    {"val", {ds.split.val.begin, ds.split.val.end}},
                    {"test", {ds.split.test.begin, ds.split.test.end}}};
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw std::runtime_error("write_dataset: cannot open manifest in " + dir);
    out << doc.dump(1) << "\n";
}

Dataset read_dataset(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw std::runtime_error("read_dataset: cannot open " + dir + "/manifest.json");
    json doc = json::parse(in);

    Dataset ds;
    const int n = doc.at("n_reaches").get<int>();
    const int T = doc.at("n_steps").get<int>();
    const std::string dtype = doc.at("dtype").get<std::string>();
    const double dt = doc.at("dt_seconds").get<double>();
    if (doc.at("layout").get<std::string>() != "reach_major")
        throw std::runtime_error("read_dataset: unsupported layout " + doc.at("layout").get<std::string>());

    std::tie(ds.graph, ds.feats) = read_graph_json(dir + "/graph.json");
    if (ds.graph.n_reaches != n)
        throw std::runtime_error("read_dataset: manifest says " + std::to_string(n) + " reaches, graph.json has " +
                                 std::to_string(ds.graph.n_reaches));

    const std::size_t len = static_cast<std::size_t>(n) * T;
    auto fb = read_series_bin(dir + "/forcing.bin", 1, len, dtype);
    ds.forcing.n_reaches = n;
    ds.forcing.n_steps = T;
    ds.forcing.dt = dt;
    ds.forcing.runoff = std::move(fb[0]);

    auto hb = read_series_bin(dir + "/hydro.bin", 3, len, dtype);
    ds.truth.n_reaches = n;
    ds.truth.n_steps = T;
    ds.truth.dt = dt;
    ds.truth.discharge = std::move(hb[0]);
    ds.truth.depth = std::move(hb[1]);
    ds.truth.storage = std::move(hb[2]);

    if (doc.at("variables").contains("obs.bin")) {
        auto ob = read_series_bin(dir + "/obs.bin", 3, len, dtype);
        HydroSeries obs;
        obs.n_reaches = n;
        obs.n_steps = T;
        obs.dt = dt;
        obs.discharge = std::move(ob[0]);
        obs.depth = std::move(ob[1]);
        obs.storage = std::move(ob[2]);
        ds.observations = std::move(obs);
    }

    ds.norm = read_norm_json(dir + "/norm.json");
    const auto& sp = doc.at("split");
    ds.split.train = {sp.at("train")[0].get<int>(), sp.at("train")[1].get<int>()};
    ds.split.val = {sp.at("val")[0].get<int>(), sp.at("val")[1].get<int>()};
    ds.split.test = {sp.at("test")[0].get<int>(), sp.at("test")[1].get<int>()};
    ds.split.validate();
    return ds;
}

} // namespace rivercast
