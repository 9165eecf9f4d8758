#include "rivercast/oracle.hpp"

#include "rivercast/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace rivercast {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kDepthFloor = 1e-6; // m, friction denominator only

struct RegimeParams {
    double mean_yield;   // mm/day
    double season_amp;   // fraction of mean
    double offset;       // mm/day, subtracted before clipping at zero
    double ar_rho;       // lag-1 coefficient of the pulse process
    double ar_sigma;     // mm/day innovation scale
    double storm_prob;   // per-day probability of a burst
    double storm_scale;  // mm/day mean burst size
};

RegimeParams regime_params(RunoffRegime r) {
    switch (r) {
        case RunoffRegime::Humid:
            return {2.2, 0.45, 0.0, 0.85, 0.18, 0.10, 1.6};
        case RunoffRegime::Arid:
            return {0.25, 1.2, 0.22, 0.70, 0.05, 0.03, 1.2};
        case RunoffRegime::Seasonal:
            return {1.4, 1.0, 0.15, 0.80, 0.15, 0.07, 1.8};
    }
    throw std::invalid_argument("unknown runoff regime");
}

} // namespace

ForcingSeries synthesize_runoff(const RiverGraph& g, const StaticFeatureTable& feats, int n_steps,
                                std::uint64_t seed, RunoffRegime regime) {
    if (n_steps < 1) throw std::invalid_argument("synthesize_runoff: n_steps must be >= 1");
    const RegimeParams p = regime_params(regime);
    const int n = g.n_reaches;

    ForcingSeries f;
    f.n_reaches = n;
    f.n_steps = n_steps;
    f.runoff.assign(static_cast<std::size_t>(n) * n_steps, 0.0);

    Rng global(seed);
    const double global_phase = global.uniform(0.0, kTwoPi);

    for (int i = 0; i < n; ++i) {
        Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(i)));
        const double phase = global_phase + rng.uniform(-0.35, 0.35);
        const double mean_i = p.mean_yield * rng.lognormal(0.0, 0.30);
        // mm/day -> m^3/s over the local catchment
        const double to_m3s = feats.ctarea[i] * 1e-3 / 86400.0;

        double pulse = 0.0;
        for (int t = 0; t < n_steps; ++t) {
            double innov = p.ar_sigma * rng.normal();
            if (rng.uniform() < p.storm_prob) innov += p.storm_scale * (-std::log(1.0 - rng.uniform()));
            pulse = p.ar_rho * pulse + innov;
            double seasonal = mean_i * (1.0 + p.season_amp * std::sin(kTwoPi * t / 365.0 + phase));
            double yield = seasonal + mean_i * pulse - p.offset;
            f.at(i, t) = yield > 0.0 ? yield * to_m3s : 0.0;
        }
    }
    return f;
}

RouteResult route(const RiverGraph& g, const StaticFeatureTable& feats, const ForcingSeries& forcing,
                  const OraclePhysics& physics, const std::optional<HydroState>& init) {
    const int n = g.n_reaches;
    const int T = forcing.n_steps;
    if (forcing.n_reaches != n)
        throw std::invalid_argument("route: forcing has " + std::to_string(forcing.n_reaches) +
                                    " reaches, graph has " + std::to_string(n));
    if (!(forcing.dt > 0.0)) throw std::invalid_argument("route: dt must be > 0");
    if (physics.n_substeps < 1) throw std::invalid_argument("route: n_substeps must be >= 1");

    std::vector<double> S(n, 0.0), Q(n, 0.0);
    if (init) {
        if (static_cast<int>(init->storage.size()) != n || static_cast<int>(init->discharge.size()) != n)
            throw std::invalid_argument("route: init state size mismatch");
        S = init->storage;
        Q = init->discharge;
        for (int i = 0; i < n; ++i)
            if (!std::isfinite(S[i]) || !std::isfinite(Q[i]))
                throw std::runtime_error("route: non-finite initial state at reach " + std::to_string(i));
    }

    RouteResult out;
    HydroSeries& hs = out.series;
    hs.n_reaches = n;
    hs.n_steps = T;
    hs.dt = forcing.dt;
    hs.discharge.assign(static_cast<std::size_t>(n) * T, 0.0);
    hs.depth.assign(static_cast<std::size_t>(n) * T, 0.0);
    hs.storage.assign(static_cast<std::size_t>(n) * T, 0.0);

    const double dt_sub = forcing.dt / physics.n_substeps;
    const double g_acc = physics.gravity;

    std::vector<double> q_cand(n, 0.0), q_mean(n, 0.0);
    std::vector<int> last_cfl_step(n, -1);

    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < n; ++i) {
            double r = forcing.at(i, t);
            if (!std::isfinite(r))
                throw std::runtime_error("route: non-finite runoff at reach " + std::to_string(i) + ", step " +
                                         std::to_string(t));
            q_mean[i] = 0.0;
        }

        for (int sub = 0; sub < physics.n_substeps; ++sub) {
            // momentum: candidate outflow from current storage/flow
            for (int i = 0; i < n; ++i) {
                const double L = feats.rivlen[i];
                const double W = feats.width[i];
                const double h = S[i] / (L * W);
                double qc;
                if (physics.scheme == RoutingScheme::LinearReservoir) {
                    qc = S[i] * physics.reservoir_celerity / L;
                } else {
                    const double hf = h > kDepthFloor ? h : kDepthFloor;
                    const double n_man = physics.manning_scale * feats.manning_n[i];
                    const double grav = g_acc * (W * h) * dt_sub * feats.slope[i];
                    const double fric = g_acc * dt_sub * n_man * n_man * std::abs(Q[i]) /
                                        (std::pow(hf, 4.0 / 3.0) * (W * hf));
                    qc = (Q[i] + grav) / (1.0 + fric);
                }
                if (qc < 0.0) qc = 0.0;
                // flux limiter: water may not traverse more than one reach per sub-step
                const double q_cfl = W * h * L / dt_sub;
                if (h > kDepthFloor && qc > q_cfl) {
                    qc = q_cfl;
                    if (last_cfl_step[i] != t) {
                        last_cfl_step[i] = t;
                        out.cfl_events.push_back({t, i});
                    }
                }
                q_cand[i] = qc;
            }
            // continuity in topo order; clamped outflow of j is exactly the
            // inflow seen by its downstream neighbor
            for (int idx = 0; idx < n; ++idx) {
                const int i = g.topo_order[idx];
                double inflow = physics.runoff_bias * forcing.at(i, t);
                for (int j : g.upstream[i]) inflow += Q[j];
                const double avail = S[i] + dt_sub * inflow;
                double q = q_cand[i];
                if (q * dt_sub > avail) q = avail / dt_sub;
                if (q < 0.0) q = 0.0;
                Q[i] = q;
                S[i] = avail - dt_sub * q;
                q_mean[i] += q;
            }
        }

        for (int i = 0; i < n; ++i) {
            const std::size_t k = hs.idx(i, t);
            hs.discharge[k] = q_mean[i] / physics.n_substeps;
            hs.storage[k] = S[i];
            hs.depth[k] = S[i] / (feats.rivlen[i] * feats.width[i]);
            if (!std::isfinite(hs.discharge[k]) || !std::isfinite(hs.storage[k]))
                throw std::runtime_error("route: non-finite state at reach " + std::to_string(i) + ", step " +
                                         std::to_string(t));
        }
    }
    return out;
}

RouteResult make_observations(const OraclePhysics& /*truth_physics*/, const OraclePhysics& obs_physics,
                              const RiverGraph& g, const StaticFeatureTable& feats, const ForcingSeries& forcing,
                              const std::optional<HydroState>& init) {
    return route(g, feats, forcing, obs_physics, init);
}

std::vector<double> mass_balance_residuals(const RiverGraph& g, const ForcingSeries& forcing,
                                           const OraclePhysics& physics, const HydroSeries& series,
                                           const std::optional<HydroState>& init) {
    const int n = g.n_reaches;
    const int T = series.n_steps;
    const auto outlets = g.outlets();

    std::vector<double> res(T, 0.0);
    double prev_total = 0.0;
    if (init)
        for (double s : init->storage) prev_total += s;

    for (int t = 0; t < T; ++t) {
        double total = 0.0, inflow = 0.0, outflow = 0.0;
        for (int i = 0; i < n; ++i) {
            total += series.storage[series.idx(i, t)];
            inflow += physics.runoff_bias * forcing.at(i, t);
        }
        for (int o : outlets) outflow += series.discharge[series.idx(o, t)];
        const double lhs = total - prev_total;
        const double rhs = series.dt * (inflow - outflow);
        const double scale = series.dt * inflow;
        res[t] = scale > 0.0 ? std::abs(lhs - rhs) / scale : std::abs(lhs - rhs);
        prev_total = total;
    }
    return res;
}

} // namespace rivercast
