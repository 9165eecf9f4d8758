#ifndef RIVERCAST_ORACLE_HPP
#define RIVERCAST_ORACLE_HPP

#include "rivercast/network.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace rivercast {

/// Per-reach, per-step lateral inflow. Values stored reach-major:
/// all steps of reach 0, then reach 1, ...
struct ForcingSeries {
    int n_reaches = 0;
    int n_steps = 0;
    double dt = 86400.0; // seconds per step
    std::vector<double> runoff; // m^3/s

    double at(int reach, int step) const { return runoff[static_cast<std::size_t>(reach) * n_steps + step]; }
    double& at(int reach, int step) { return runoff[static_cast<std::size_t>(reach) * n_steps + step]; }
};

/// Routed river state, same reach-major layout as ForcingSeries.
/// discharge holds step-mean outflow; depth and storage are end-of-step.
struct HydroSeries {
    int n_reaches = 0;
    int n_steps = 0;
    double dt = 86400.0;
    std::vector<double> discharge; // m^3/s
    std::vector<double> depth;     // m
    std::vector<double> storage;   // m^3

    std::size_t idx(int reach, int step) const { return static_cast<std::size_t>(reach) * n_steps + step; }
};

/// Instantaneous state used to seed a simulation.
struct HydroState {
    std::vector<double> storage;   // m^3
    std::vector<double> discharge; // m^3/s
};

enum class RoutingScheme {
    LocalInertial,  // inertia + semi-implicit friction
    LinearReservoir // debug fallback, closed-form steady state Q = S / tau
};

/// Physics knobs. manning_scale and runoff_bias perturb the base
/// parameterization to emulate a model/observation gap.
struct OraclePhysics {
    double gravity = 9.81;       // m/s^2
    double manning_scale = 1.0;  // multiplier on per-reach manning_n
    double runoff_bias = 1.0;    // multiplier on forcing
    RoutingScheme scheme = RoutingScheme::LocalInertial;
    double reservoir_celerity = 1.0; // m/s, LinearReservoir only: tau = rivlen / celerity
    int n_substeps = 24;         // internal sub-steps per external step
};

enum class RunoffRegime { Humid, Arid, Seasonal };

/// Seasonal sine plus lag-1 autocorrelated storm pulses, scaled by
/// catchment area. Arid parameters produce frequent zero-runoff days.
ForcingSeries synthesize_runoff(const RiverGraph& g, const StaticFeatureTable& feats, int n_steps,
                                std::uint64_t seed, RunoffRegime regime);

struct CflEvent {
    int step = 0;  // external step index
    int reach = 0;
};

struct RouteResult {
    HydroSeries series;
    std::vector<CflEvent> cfl_events; // flux-clamp occurrences, first per reach and step
};

/**
 * Storage-routing simulation over the network.
 *
 * Each sub-step computes candidate outflows from the momentum relation,
 * then applies continuity in topological order with outflow clamped so
 * storage never goes negative. Total mass is conserved to rounding because
 * a reach's clamped outflow is exactly its downstream neighbor's inflow.
 */
RouteResult route(const RiverGraph& g, const StaticFeatureTable& feats, const ForcingSeries& forcing,
                  const OraclePhysics& physics, const std::optional<HydroState>& init = std::nullopt);

/// Route with a perturbed parameterization; the result plays the role of
/// in-situ observations when fine-tuning against gauge records.
RouteResult make_observations(const OraclePhysics& truth_physics, const OraclePhysics& obs_physics,
                              const RiverGraph& g, const StaticFeatureTable& feats, const ForcingSeries& forcing,
                              const std::optional<HydroState>& init = std::nullopt);

/**
 * Per-step relative mass-balance residual of a routed series:
 * |dS_total - dt * (inflow_total - outlet_outflow)| / (dt * inflow_total).
 * Step 0 compares against the (optional) initial state.
 */
std::vector<double> mass_balance_residuals(const RiverGraph& g, const ForcingSeries& forcing,
                                           const OraclePhysics& physics, const HydroSeries& series,
                                           const std::optional<HydroState>& init = std::nullopt);

} // namespace rivercast

#endif
