#ifndef RIVERCAST_GRC_HPP
#define RIVERCAST_GRC_HPP

#include "rivercast/network.hpp"
#include "rivercast/pipeline.hpp"
#include "rivercast/tape.hpp"
#include "rivercast/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rivercast {

enum class Mode { ColdStart, HotStart };

/**
 * Model configuration.
 *
 * ColdStart consumes only static features and runoff over a long lag window
 * (it synthesizes river state internally); HotStart additionally consumes
 * recent river states over a short lag and rolls the forecast out
 * autoregressively. The ablate_* toggles zero-mask the static channel,
 * replace the recurrence with a stateless per-step transform, and restrict
 * the graph stencil to self-loops, respectively.
 */
struct GrcConfig {
    Mode mode = Mode::ColdStart;
    int h_lag = 20;
    int f_horizon = 7;
    int d_fusion = 128;
    int d_hidden = 64;
    int n_gcn_layers = 2;
    bool ablate_stat = false;
    bool ablate_temp = false;
    bool ablate_topo = false;
    int d_static = StaticFeatureTable::n_columns;
    int d_forcing = 1;
    int d_states = 3;

    static GrcConfig coldstart();
    static GrcConfig hotstart();

    /// Model input width; the state channel exists only in HotStart.
    int input_width() const {
        return d_static + d_forcing + (mode == Mode::HotStart ? d_states : 0);
    }
    void validate() const;
};

/// Named parameter tensors in a stable serialization order. Layer-name
/// prefixes ("fusion", "input_proj", "gcn1", ..., "gru", "readout") drive
/// the fine-tuning freeze/tune partition.
struct GrcParams {
    std::vector<std::pair<std::string, Tensor>> entries;

    Tensor& find(const std::string& name);
    const Tensor& find(const std::string& name) const;
    bool has(const std::string& name) const;
    std::size_t total_size() const;

    /// True for tensors subject to weight decay (weights, not biases).
    static bool is_weight(const std::string& name);
    /// Layer prefix of an entry name ("gcn2.w" -> "gcn2").
    static std::string layer_of(const std::string& name);
};

/// Uniform(+-1/sqrt(fan_in)) weights, zero biases, update-gate bias at -1.
GrcParams init_params(const GrcConfig& cfg, std::uint64_t seed);
/// All-zero parameters (test hook).
GrcParams zero_params(const GrcConfig& cfg);

/// Per-step intermediate values, for inspection and tests.
struct LatentState {
    Tensor fused;  // f_t
    Tensor hidden; // h_t after the GCN stack
    Tensor z;      // recurrent state after the step
};

// ============================================================================
// Stateless building blocks (tensor level, used by tests and docs)
// ============================================================================

/// s_i^(t) = s_i for every step: n_steps bit-identical copies.
std::vector<Tensor> broadcast_static(const Tensor& static_norm, int n_steps);

/// Concatenate (static | states | runoff) for one step. y_prev must be
/// present iff HotStart; ablate_stat zero-masks the static columns.
Tensor step_input(const GrcConfig& cfg, const Tensor& s_t, const Tensor& r_t,
                  const std::optional<Tensor>& y_prev);

// ============================================================================
// Tape-level model graph
// ============================================================================

/// Parameters registered as tape leaves, in GrcParams entry order.
struct ParamVars {
    std::vector<std::pair<std::string, ad::Var>> entries;
    ad::Var find(const std::string& name) const;
};
ParamVars register_params(ad::Tape& tape, const GrcParams& params);

/// f_t = x_t + MLP(x_t), MLP = linear -> GELU -> linear back to input width.
ad::Var fuse(ad::Tape& tape, const ParamVars& pv, ad::Var x_t);

/// n_gcn_layers residual graph-convolution layers at d_hidden width.
ad::Var gcn_stack(ad::Tape& tape, const GrcConfig& cfg, const ParamVars& pv, const ad::SparseAdjacency* adj,
                  ad::Var h0);

/// One recurrence step; ablate_temp swaps in the stateless transform.
ad::Var gru_step(ad::Tape& tape, const GrcConfig& cfg, const ParamVars& pv, ad::Var h_t, ad::Var z_prev);

/// Inputs for one window, already normalized. runoff has h_lag + f_horizon
/// steps; states_lag has h_lag steps and must be present iff HotStart.
struct WindowInputs {
    const Tensor* static_norm = nullptr;
    std::vector<Tensor> runoff;
    std::vector<Tensor> states_lag;
};

/**
 * Unroll the full operator over one window.
 *
 * Steps 1..h_lag consume historical forcing (and, in HotStart, historical
 * states); the last f_horizon steps emit readouts. HotStart feeds each
 * future step the model's previous prediction. Returns one N x 3 normalized
 * prediction per future step. Throws on non-finite latents, reporting the
 * step index.
 */
std::vector<ad::Var> forward_window(ad::Tape& tape, const GrcConfig& cfg, const ParamVars& pv,
                                    const ad::SparseAdjacency* adj, const WindowInputs& in,
                                    std::vector<LatentState>* trace = nullptr);

/// Convenience forward pass without gradient bookkeeping: predictions in
/// normalized space (per future step) and physical space via norm.
struct Prediction {
    std::vector<Tensor> normalized; // f_horizon tensors, N x 3
    std::vector<Tensor> physical;   // same shapes, de-normalized
};
Prediction predict(const GrcConfig& cfg, const GrcParams& params, const ad::SparseAdjacency* adj,
                   const WindowInputs& in, const NormStats& norm);

/// Assemble normalized window inputs from a dataset at anchor t0.
WindowInputs make_window_inputs(const GrcConfig& cfg, const Dataset& ds, const Tensor& static_norm, int t0);

// ============================================================================
// Checkpoints
// ============================================================================

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::string norm_ref = "norm.json";
};

/// params.bin (little-endian float64, entry order) + params.json manifest.
void save_checkpoint(const std::string& dir, const GrcConfig& cfg, const GrcParams& params,
                     const CheckpointMeta& meta);
struct Checkpoint {
    GrcConfig cfg;
    GrcParams params;
    CheckpointMeta meta;
};
Checkpoint load_checkpoint(const std::string& dir);

} // namespace rivercast

#endif
