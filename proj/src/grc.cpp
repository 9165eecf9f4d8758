#include "rivercast/grc.hpp"

#include "rivercast/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace rivercast {

using nlohmann::json;

// ============================================================================
// Config
// ============================================================================

GrcConfig GrcConfig::coldstart() {
    GrcConfig c;
    c.mode = Mode::ColdStart;
    c.h_lag = 20;
    return c;
}

GrcConfig GrcConfig::hotstart() {
    GrcConfig c;
    c.mode = Mode::HotStart;
    c.h_lag = 7;
    return c;
}

void GrcConfig::validate() const {
    if (h_lag < 1 || f_horizon < 1) throw std::invalid_argument("GrcConfig: h_lag and f_horizon must be >= 1");
    if (n_gcn_layers < 1) throw std::invalid_argument("GrcConfig: n_gcn_layers must be >= 1");
    if (d_fusion < 1 || d_hidden < 1) throw std::invalid_argument("GrcConfig: hidden dims must be >= 1");
}

// ============================================================================
// Params
// ============================================================================

Tensor& GrcParams::find(const std::string& name) {
    for (auto& [n, t] : entries)
        if (n == name) return t;
    throw std::invalid_argument("GrcParams: no parameter named " + name);
}

const Tensor& GrcParams::find(const std::string& name) const {
    for (const auto& [n, t] : entries)
        if (n == name) return t;
    throw std::invalid_argument("GrcParams: no parameter named " + name);
}

bool GrcParams::has(const std::string& name) const {
    for (const auto& [n, t] : entries)
        if (n == name) return true;
    return false;
}

std::size_t GrcParams::total_size() const {
    std::size_t s = 0;
    for (const auto& [n, t] : entries) s += t.size();
    return s;
}

bool GrcParams::is_weight(const std::string& name) {
    auto dot = name.rfind('.');
    return dot != std::string::npos && name[dot + 1] == 'w';
}

std::string GrcParams::layer_of(const std::string& name) {
    auto dot = name.rfind('.');
    return dot == std::string::npos ? name : name.substr(0, dot);
}

namespace {

std::vector<std::pair<std::string, std::pair<int, int>>> param_shapes(const GrcConfig& cfg) {
    const int in = cfg.input_width();
    const int df = cfg.d_fusion;
    const int dh = cfg.d_hidden;
    std::vector<std::pair<std::string, std::pair<int, int>>> shapes = {
        {"fusion.w1", {df, in}}, {"fusion.b1", {1, df}},
        {"fusion.w2", {in, df}}, {"fusion.b2", {1, in}},
        {"input_proj.w", {dh, in}}, {"input_proj.b", {1, dh}},
    };
    for (int l = 1; l <= cfg.n_gcn_layers; ++l) {
        shapes.push_back({"gcn" + std::to_string(l) + ".w", {dh, dh}});
        shapes.push_back({"gcn" + std::to_string(l) + ".b", {1, dh}});
    }
    shapes.push_back({"gru.w_u", {dh, 2 * dh}});
    shapes.push_back({"gru.b_u", {1, dh}});
    shapes.push_back({"gru.w_r", {dh, 2 * dh}});
    shapes.push_back({"gru.b_r", {1, dh}});
    shapes.push_back({"gru.w_z", {dh, 2 * dh}});
    shapes.push_back({"gru.b_z", {1, dh}});
    shapes.push_back({"readout.w", {3, dh}});
    shapes.push_back({"readout.b", {1, 3}});
    return shapes;
}

} // namespace

GrcParams init_params(const GrcConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    GrcParams p;
    for (const auto& [name, shape] : param_shapes(cfg)) {
        Tensor t(shape.first, shape.second);
        if (GrcParams::is_weight(name)) {
            double bound = 1.0 / std::sqrt(static_cast<double>(shape.second));
            for (auto& v : t.values()) v = rng.uniform(-bound, bound);
        } else if (name == "gru.b_u") {
            t.fill(-1.0); // conservative early updates
        }
        p.entries.emplace_back(name, std::move(t));
    }
    return p;
}

GrcParams zero_params(const GrcConfig& cfg) {
    cfg.validate();
    GrcParams p;
    for (const auto& [name, shape] : param_shapes(cfg))
        p.entries.emplace_back(name, Tensor(shape.first, shape.second));
    return p;
}

// ============================================================================
// Stateless blocks
// ============================================================================

std::vector<Tensor> broadcast_static(const Tensor& static_norm, int n_steps) {
    if (n_steps < 1) throw std::invalid_argument("broadcast_static: n_steps must be >= 1");
    return std::vector<Tensor>(static_cast<std::size_t>(n_steps), static_norm);
}

Tensor step_input(const GrcConfig& cfg, const Tensor& s_t, const Tensor& r_t,
                  const std::optional<Tensor>& y_prev) {
    if (cfg.mode == Mode::ColdStart && y_prev)
        throw std::invalid_argument("step_input: state channel supplied in ColdStart mode");
    if (cfg.mode == Mode::HotStart && !y_prev)
        throw std::invalid_argument("step_input: HotStart requires the previous state");
    const int n = s_t.rows();
    if (r_t.rows() != n) throw std::invalid_argument("step_input: row mismatch " + s_t.shape_str() + " vs " + r_t.shape_str());

    Tensor x(n, s_t.cols() + (y_prev ? y_prev->cols() : 0) + r_t.cols());
    for (int i = 0; i < n; ++i) {
        int c = 0;
        for (int k = 0; k < s_t.cols(); ++k) x.at(i, c++) = cfg.ablate_stat ? 0.0 : s_t.at(i, k);
        if (y_prev)
            for (int k = 0; k < y_prev->cols(); ++k) x.at(i, c++) = y_prev->at(i, k);
        for (int k = 0; k < r_t.cols(); ++k) x.at(i, c++) = r_t.at(i, k);
    }
    return x;
}

// ============================================================================
// Tape-level graph
// ============================================================================

ad::Var ParamVars::find(const std::string& name) const {
    for (const auto& [n, v] : entries)
        if (n == name) return v;
    throw std::invalid_argument("ParamVars: no parameter named " + name);
}

ParamVars register_params(ad::Tape& tape, const GrcParams& params) {
    ParamVars pv;
    pv.entries.reserve(params.entries.size());
    for (const auto& [name, t] : params.entries) pv.entries.emplace_back(name, tape.input(t));
    return pv;
}

ad::Var fuse(ad::Tape& tape, const ParamVars& pv, ad::Var x_t) {
    ad::Var h = tape.linear(x_t, pv.find("fusion.w1"), pv.find("fusion.b1"));
    h = tape.gelu(h);
    h = tape.linear(h, pv.find("fusion.w2"), pv.find("fusion.b2"));
    return tape.add(x_t, h);
}

ad::Var gcn_stack(ad::Tape& tape, const GrcConfig& cfg, const ParamVars& pv, const ad::SparseAdjacency* adj,
                  ad::Var h0) {
    ad::Var h = h0;
    for (int l = 1; l <= cfg.n_gcn_layers; ++l) {
        ad::Var m = tape.row_normalize_apply(adj, h, cfg.ablate_topo);
        m = tape.linear(m, pv.find("gcn" + std::to_string(l) + ".w"), pv.find("gcn" + std::to_string(l) + ".b"));
        m = tape.gelu(m);
        h = tape.add(h, m);
    }
    return h;
}

ad::Var gru_step(ad::Tape& tape, const GrcConfig& cfg, const ParamVars& pv, ad::Var h_t, ad::Var z_prev) {
    if (cfg.ablate_temp) {
        const Tensor& h_val = tape.value(h_t);
        ad::Var zeros = tape.input(Tensor(h_val.rows(), cfg.d_hidden));
        ad::Var hz = tape.concat(1, {h_t, zeros});
        return tape.tanh(tape.linear(hz, pv.find("gru.w_z"), pv.find("gru.b_z")));
    }
    ad::Var hz = tape.concat(1, {h_t, z_prev});
    ad::Var gate_u = tape.sigmoid(tape.linear(hz, pv.find("gru.w_u"), pv.find("gru.b_u")));
    ad::Var gate_r = tape.sigmoid(tape.linear(hz, pv.find("gru.w_r"), pv.find("gru.b_r")));
    ad::Var hrz = tape.concat(1, {h_t, tape.hadamard(gate_r, z_prev)});
    ad::Var cand = tape.tanh(tape.linear(hrz, pv.find("gru.w_z"), pv.find("gru.b_z")));
    ad::Var dz = tape.hadamard(gate_u, tape.sub(cand, z_prev));
    return tape.add(z_prev, dz);
}

std::vector<ad::Var> forward_window(ad::Tape& tape, const GrcConfig& cfg, const ParamVars& pv,
                                    const ad::SparseAdjacency* adj, const WindowInputs& in,
                                    std::vector<LatentState>* trace) {
    cfg.validate();
    const int total = cfg.h_lag + cfg.f_horizon;
    if (static_cast<int>(in.runoff.size()) != total)
        throw std::invalid_argument("forward_window: runoff has " + std::to_string(in.runoff.size()) +
                                    " steps, config needs " + std::to_string(total));
    if (cfg.mode == Mode::HotStart && static_cast<int>(in.states_lag.size()) != cfg.h_lag)
        throw std::invalid_argument("forward_window: HotStart needs " + std::to_string(cfg.h_lag) +
                                    " state steps, got " + std::to_string(in.states_lag.size()));
    if (cfg.mode == Mode::ColdStart && !in.states_lag.empty())
        throw std::invalid_argument("forward_window: state window supplied in ColdStart mode");
    if (!in.static_norm) throw std::invalid_argument("forward_window: missing static features");

    const int n = in.static_norm->rows();
    Tensor static_block = *in.static_norm;
    if (cfg.ablate_stat) static_block.fill(0.0);
    ad::Var s_var = tape.input(std::move(static_block));

    ad::Var z = tape.input(Tensor(n, cfg.d_hidden)); // zeros at sequence start
    ad::Var y_feedback;                              // HotStart only

    std::vector<ad::Var> outputs;
    outputs.reserve(cfg.f_horizon);

    for (int step = 0; step < total; ++step) {
        ad::Var r_var = tape.input(in.runoff[step]);
        ad::Var x;
        if (cfg.mode == Mode::HotStart) {
            ad::Var y_var = step < cfg.h_lag ? tape.input(in.states_lag[step]) : y_feedback;
            x = tape.concat(1, {s_var, y_var, r_var});
        } else {
            x = tape.concat(1, {s_var, r_var});
        }
        ad::Var f = fuse(tape, pv, x);
        ad::Var h0 = tape.linear(f, pv.find("input_proj.w"), pv.find("input_proj.b"));
        ad::Var h = gcn_stack(tape, cfg, pv, adj, h0);
        z = gru_step(tape, cfg, pv, h, z);
        if (!tape.value(z).all_finite())
            throw std::runtime_error("forward_window: non-finite latent at step " + std::to_string(step));

        if (trace) trace->push_back({tape.value(f), tape.value(h), tape.value(z)});

        if (step >= cfg.h_lag) {
            ad::Var y_hat = tape.linear(z, pv.find("readout.w"), pv.find("readout.b"));
            outputs.push_back(y_hat);
            y_feedback = y_hat; // next future step sees this prediction
        } else if (cfg.mode == Mode::HotStart && step == cfg.h_lag - 1) {
            // day 1 sees the last observed state, later days roll out
            y_feedback = tape.input(in.states_lag[cfg.h_lag - 1]);
        }
    }
    return outputs;
}

Prediction predict(const GrcConfig& cfg, const GrcParams& params, const ad::SparseAdjacency* adj,
                   const WindowInputs& in, const NormStats& norm) {
    ad::Tape tape;
    ParamVars pv = register_params(tape, params);
    auto outs = forward_window(tape, cfg, pv, adj, in);
    Prediction pred;
    for (auto v : outs) {
        Tensor z = tape.value(v);
        Tensor phys(z.rows(), z.cols());
        for (int i = 0; i < z.rows(); ++i) {
            phys.at(i, 0) = norm.denormalize(DynVar::Discharge, i, z.at(i, 0));
            phys.at(i, 1) = norm.denormalize(DynVar::Depth, i, z.at(i, 1));
            phys.at(i, 2) = norm.denormalize(DynVar::Storage, i, z.at(i, 2));
        }
        pred.normalized.push_back(std::move(z));
        pred.physical.push_back(std::move(phys));
    }
    return pred;
}

WindowInputs make_window_inputs(const GrcConfig& cfg, const Dataset& ds, const Tensor& static_norm, int t0) {
    WindowInputs in;
    in.static_norm = &static_norm;
    in.runoff.reserve(cfg.h_lag + cfg.f_horizon);
    for (int t = t0 - cfg.h_lag; t < t0 + cfg.f_horizon; ++t)
        in.runoff.push_back(ds.norm.normalize_runoff_step(ds.forcing, t));
    if (cfg.mode == Mode::HotStart) {
        in.states_lag.reserve(cfg.h_lag);
        for (int t = t0 - cfg.h_lag; t < t0; ++t)
            in.states_lag.push_back(ds.norm.normalize_states_step(ds.truth, t));
    }
    return in;
}

// ============================================================================
// Checkpoints
// ============================================================================

namespace {

json cfg_to_json(const GrcConfig& c) {
    return json{{"mode", c.mode == Mode::ColdStart ? "coldstart" : "hotstart"},
                {"h_lag", c.h_lag},
                {"f_horizon", c.f_horizon},
                {"d_fusion", c.d_fusion},
                {"d_hidden", c.d_hidden},
                {"n_gcn_layers", c.n_gcn_layers},
                {"ablate_stat", c.ablate_stat},
                {"ablate_temp", c.ablate_temp},
                {"ablate_topo", c.ablate_topo},
                {"d_static", c.d_static},
                {"d_forcing", c.d_forcing},
                {"d_states", c.d_states}};
}

GrcConfig cfg_from_json(const json& j) {
    GrcConfig c;
    c.mode = j.at("mode").get<std::string>() == "hotstart" ? Mode::HotStart : Mode::ColdStart;
    c.h_lag = j.at("h_lag").get<int>();
    c.f_horizon = j.at("f_horizon").get<int>();
    c.d_fusion = j.at("d_fusion").get<int>();
    c.d_hidden = j.at("d_hidden").get<int>();
    c.n_gcn_layers = j.at("n_gcn_layers").get<int>();
    c.ablate_stat = j.at("ablate_stat").get<bool>();
    c.ablate_temp = j.at("ablate_temp").get<bool>();
    c.ablate_topo = j.at("ablate_topo").get<bool>();
    c.d_static = j.at("d_static").get<int>();
    c.d_forcing = j.at("d_forcing").get<int>();
    c.d_states = j.at("d_states").get<int>();
    return c;
}

} // namespace

void save_checkpoint(const std::string& dir, const GrcConfig& cfg, const GrcParams& params,
                     const CheckpointMeta& meta) {
    std::filesystem::create_directories(dir);
    std::ofstream bin(dir + "/params.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("save_checkpoint: cannot open " + dir + "/params.bin");
    json layers = json::array();
    for (const auto& [name, t] : params.entries) {
        bin.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * 8));
        layers.push_back({{"name", name}, {"shape", {t.rows(), t.cols()}}});
    }
    json doc;
    doc["layers"] = std::move(layers);
    doc["cfg"] = cfg_to_json(cfg);
    doc["seed"] = meta.seed;
    doc["norm_ref"] = meta.norm_ref;
    std::ofstream out(dir + "/params.json");
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + dir + "/params.json");
    out << doc.dump(1) << "\n";
}

Checkpoint load_checkpoint(const std::string& dir) {
    std::ifstream in(dir + "/params.json");
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + dir + "/params.json");
    json doc = json::parse(in);

    Checkpoint ck;
    ck.cfg = cfg_from_json(doc.at("cfg"));
    ck.meta.seed = doc.at("seed").get<std::uint64_t>();
    ck.meta.norm_ref = doc.at("norm_ref").get<std::string>();

    std::ifstream bin(dir + "/params.bin", std::ios::binary);
    if (!bin) throw std::runtime_error("load_checkpoint: cannot open " + dir + "/params.bin");
    for (const auto& layer : doc.at("layers")) {
        const std::string name = layer.at("name").get<std::string>();
        const int rows = layer.at("shape")[0].get<int>();
        const int cols = layer.at("shape")[1].get<int>();
        Tensor t(rows, cols);
        bin.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * 8));
        if (!bin) throw std::runtime_error("load_checkpoint: params.bin truncated at layer " + name);
        ck.params.entries.emplace_back(name, std::move(t));
    }
    return ck;
}

} // namespace rivercast
