#ifndef RIVERCAST_PIPELINE_HPP
#define RIVERCAST_PIPELINE_HPP

#include "rivercast/network.hpp"
#include "rivercast/oracle.hpp"
#include "rivercast/tensor.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace rivercast {

/// Dynamic variables carried through normalization, in storage order.
enum class DynVar : int { Discharge = 0, Depth = 1, Storage = 2, Runoff = 3 };
constexpr int kNumDynVars = 4;

/// Half-open step range [begin, end).
struct StepRange {
    int begin = 0;
    int end = 0;
    int length() const { return end - begin; }
    bool contains(int t) const { return t >= begin && t < end; }
};

/// Train/val/test partition: disjoint, ordered, contiguous.
struct SplitSpec {
    StepRange train, val, test;
    void validate() const;
};

/**
 * Normalization statistics. Dynamic variables (states and runoff) are
 * normalized reach-wise, static features globally; all stats come from the
 * training period only. Sigmas are floored at 1e-6 * (|mu| + 1).
 */
struct NormStats {
    int n_reaches = 0;
    std::array<std::vector<double>, kNumDynVars> mu_dyn;    // [var][reach]
    std::array<std::vector<double>, kNumDynVars> sigma_dyn; // [var][reach]
    std::vector<double> mu_static, sigma_static;            // per column

    double normalize(DynVar v, int reach, double x) const {
        int k = static_cast<int>(v);
        return (x - mu_dyn[k][reach]) / sigma_dyn[k][reach];
    }
    double denormalize(DynVar v, int reach, double z) const {
        int k = static_cast<int>(v);
        return z * sigma_dyn[k][reach] + mu_dyn[k][reach];
    }

    /// n x 20 globally normalized static matrix.
    Tensor normalize_static(const StaticFeatureTable& feats) const;
    /// N x 1 reach-wise normalized runoff at one step.
    Tensor normalize_runoff_step(const ForcingSeries& f, int step) const;
    /// N x 3 reach-wise normalized (discharge, depth, storage) at one step.
    Tensor normalize_states_step(const HydroSeries& h, int step) const;
};

NormStats fit_norm(const HydroSeries& truth, const ForcingSeries& forcing, const StaticFeatureTable& feats,
                   const StepRange& train_range);

/// One training/evaluation sample: lag slice [t0-h, t0-1], future slice
/// [t0, t0+f-1], both inside a single partition.
struct WindowSample {
    int t0 = 0;
};

/// Anchors every `stride` steps. Returns an empty list (with a stderr
/// notice) when the partition is shorter than h_lag + f_horizon.
std::vector<WindowSample> make_windows(const StepRange& partition, int h_lag, int f_horizon, int stride);

// ============================================================================
// Dataset bundle and directory layout
// ============================================================================

struct Dataset {
    RiverGraph graph;
    StaticFeatureTable feats;
    ForcingSeries forcing;
    HydroSeries truth;
    std::optional<HydroSeries> observations; // perturbed-physics gauge record
    NormStats norm;
    SplitSpec split;
};

/**
 * Directory layout: graph.json, forcing.bin, hydro.bin, optional obs.bin,
 * manifest.json, norm.json. Binaries are little-endian, reach-major, one
 * block per variable in manifest order; dtype is float32 by default.
 */
void write_dataset(const std::string& dir, const Dataset& ds, const std::string& dtype = "float32");
Dataset read_dataset(const std::string& dir);

// Raw series files (shared by dataset and any standalone emission).
void write_series_bin(const std::string& path, const std::vector<const std::vector<double>*>& blocks,
                      const std::string& dtype);
std::vector<std::vector<double>> read_series_bin(const std::string& path, int n_blocks, std::size_t block_len,
                                                 const std::string& dtype);

void write_norm_json(const std::string& path, const NormStats& norm);
NormStats read_norm_json(const std::string& path);

} // namespace rivercast

#endif
