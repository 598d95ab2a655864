#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "fsde/curve.hpp"
#include "fsde/likelihood.hpp"
#include "fsde/model.hpp"
#include "fsde/moments.hpp"
#include "fsde/util.hpp"

namespace fsde {

enum class Scheme { ZSpace, VSpaceClamped };

struct SimConfig {
    int n_paths = 1000;
    int substeps = 10;  ///< Euler-Maruyama substeps per observation interval
    Scheme scheme = Scheme::ZSpace;
    std::uint64_t seed = 1;
    int threads = 0;
};

/// Start of every path: either a fixed error value at the first grid time, or
/// a draw from the matched-Beta early transition of length delta.
struct InitialSpec {
    enum class Type { FixedV0, DeltaTransition };
    Type type = Type::FixedV0;
    double v0 = 0.0;
    double delta = 0.0;

    static InitialSpec fixed(double v0) { return {Type::FixedV0, v0, 0.0}; }
    static InitialSpec delta_transition(double delta) { return {Type::DeltaTransition, 0.0, delta}; }
};

struct PathBundle {
    std::vector<double> times;
    std::vector<std::vector<double>> paths;  ///< production values in [0,1], one row per path
    long clamp_events = 0;                   ///< boundary guards hit during stepping
    long failed_paths = 0;                   ///< paths aborted on a non-finite state
};

namespace detail {

/// Drift of the transformed state for simulation. Works for both kinds by
/// building on the production-space drift, which already differs between
/// them; for DerivativeTracking it reduces to the published transformed
/// drift.
inline double sim_z_drift(const ModelParams& params, double z, double p, double p_dot,
                          double at0, double sq, long& clamps) {
    bool clamped = false;
    const double zc = clamp_z_interior(params, z, &clamped);
    if (clamped) ++clamps;
    const double u = -sq * zc;
    const double cu = std::cos(u);
    const double x = 0.5 * (1.0 + cu);  // = v + p, in [0,1]
    const double dx = drift_x(params, x, p, p_dot);
    return (2.0 * dx + at0 * cu) / (sq * std::sin(u));
}

inline double fold_z(double z, double zmin, long& clamps) {
    bool folded = false;
    while (z > 0.0 || z < zmin) {
        if (z > 0.0) z = -z;
        if (z < zmin) z = 2.0 * zmin - z;
        folded = true;
    }
    if (folded) ++clamps;
    return z;
}

}  // namespace detail

/// Simulates n_paths production trajectories on the given observation grid.
/// The z_space scheme integrates the transformed process and maps back, so
/// every sample lies in [0,1] by construction; v_space_clamped integrates the
/// error process directly and reflects at 1e-9 from the boundary. Each path
/// owns an RNG stream derived from (seed, path index), so bundles are
/// bitwise reproducible for any thread count.
inline PathBundle simulate_paths(const ModelParams& params, const ForecastCurve& curve,
                                 const std::vector<double>& times, const SimConfig& cfg,
                                 const InitialSpec& initial = {}) {
    params.validate();
    if (cfg.n_paths < 1 || cfg.substeps < 1) throw std::invalid_argument("bad simulation config");
    if (times.size() < 2) throw std::invalid_argument("need at least 2 grid times");
    for (double t : times)
        if (t < curve.start() - 1e-12 || t > curve.end() + 1e-12)
            throw std::domain_error("grid time outside forecast coverage");

    const double at0 = params.alpha * params.theta0;
    const bool deterministic = !(at0 > 0.0);
    // The transform degenerates when the diffusion vanishes; fall back to the
    // direct scheme, which handles a zero diffusion naturally.
    const Scheme scheme = deterministic ? Scheme::VSpaceClamped : cfg.scheme;
    const double sq = deterministic ? 0.0 : std::sqrt(2.0 * at0);
    const double zmin = deterministic ? 0.0 : z_lower_bound(params);
    const double eps_refl = 1e-9;

    // Early-transition start: Beta matched to the moments accumulated from a
    // zero error at the backward extrapolation point (same pipeline the
    // delta likelihood uses).
    BetaShapes start_shapes;
    bool sample_start = false;
    if (initial.type == InitialSpec::Type::DeltaTransition) {
        if (!(initial.delta > 0.0)) throw std::invalid_argument("delta must be positive");
        const ForecastCurve ext = curve.extended_backward(initial.delta);
        const double t0 = times.front();
        IntegratorConfig integ;
        integ.substeps = static_cast<int>(std::min<double>(
            200000.0, 20.0 * std::max(1.0, std::ceil(initial.delta / (times[1] - times[0])))));
        const MomentStateV m = integrate_v_moments(0.0, t0 - initial.delta, t0, ext, params, integ);
        LikConfig lk;
        LogLikFlags fl;
        start_shapes = matched_beta(m.m1, m.variance(), curve.epsilon(), lk, fl);
        sample_start = true;
    }

    PathBundle bundle;
    bundle.times = times;
    bundle.paths.assign(static_cast<std::size_t>(cfg.n_paths), {});
    std::atomic<long> clamp_events{0};
    std::atomic<long> failed{0};

    parallel_chunks(static_cast<std::size_t>(cfg.n_paths), cfg.threads,
                    [&](std::size_t pb, std::size_t pe) {
        for (std::size_t pi = pb; pi < pe; ++pi) {
            std::mt19937_64 rng(derive_seed(cfg.seed, pi));
            std::normal_distribution<double> gauss(0.0, 1.0);
            long clamps = 0;

            std::vector<double>& row = bundle.paths[pi];
            row.assign(times.size(), std::numeric_limits<double>::quiet_NaN());

            // Initial error value.
            double v0 = initial.v0;
            if (sample_start) {
                std::gamma_distribution<double> g1(start_shapes.xi1, 1.0);
                std::gamma_distribution<double> g2(start_shapes.xi2, 1.0);
                const double a = g1(rng), b = g2(rng);
                const double u = a / (a + b);
                const double w = 1.0 - curve.epsilon();
                v0 = -w + 2.0 * w * u;
            }
            const double p0 = curve.value(times.front());
            double x = v0 + p0;
            if (x < eps_refl || x > 1.0 - eps_refl) {
                x = std::clamp(x, eps_refl, 1.0 - eps_refl);
                ++clamps;
            }

            bool ok = true;
            if (scheme == Scheme::ZSpace) {
                double z = lamperti_forward(params, x - p0, p0);
                z = detail::fold_z(std::clamp(z, zmin, 0.0), zmin, clamps);
                row[0] = 0.5 * (1.0 + std::cos(-sq * z));
                for (std::size_t i = 1; i < times.size() && ok; ++i) {
                    const double dt = (times[i] - times[i - 1]) / cfg.substeps;
                    const double sdt = std::sqrt(dt);
                    for (int s = 0; s < cfg.substeps; ++s) {
                        const double t = times[i - 1] + dt * s;
                        const double p = curve.value(t);
                        const double pd = curve.derivative(t);
                        double a = detail::sim_z_drift(params, z, p, pd, at0, sq, clamps);
                        // Keep a near-boundary drift kick from overshooting
                        // across the whole range in one substep.
                        const double cap = 0.25 * (-zmin) / dt;
                        if (std::abs(a) > cap) {
                            a = std::copysign(cap, a);
                            ++clamps;
                        }
                        z += a * dt + sdt * gauss(rng);
                        z = detail::fold_z(z, zmin, clamps);
                        if (!std::isfinite(z)) {
                            ok = false;
                            break;
                        }
                    }
                    if (ok) row[i] = 0.5 * (1.0 + std::cos(-sq * z));
                }
            } else {
                row[0] = x;
                for (std::size_t i = 1; i < times.size() && ok; ++i) {
                    const double dt = (times[i] - times[i - 1]) / cfg.substeps;
                    const double sdt = std::sqrt(dt);
                    for (int s = 0; s < cfg.substeps; ++s) {
                        const double t = times[i - 1] + dt * s;
                        const double p = curve.value(t);
                        const double pd = curve.derivative(t);
                        const double a = drift_x(params, x, p, pd);
                        const double b = diffusion_v(params, x - p, p);
                        x += a * dt + b * sdt * gauss(rng);
                        if (x < eps_refl) {
                            x = std::min(2.0 * eps_refl - x, 1.0 - eps_refl);
                            ++clamps;
                        } else if (x > 1.0 - eps_refl) {
                            x = std::max(2.0 * (1.0 - eps_refl) - x, eps_refl);
                            ++clamps;
                        }
                        if (!std::isfinite(x)) {
                            ok = false;
                            break;
                        }
                    }
                    if (ok) row[i] = x;
                }
            }
            if (!ok) ++failed;
            clamp_events += clamps;
        }
    });

    bundle.clamp_events = clamp_events.load();
    bundle.failed_paths = failed.load();
    return bundle;
}

/// Discrete quadratic variation: sum of squared increments.
inline double quadratic_variation(std::span<const double> path) {
    if (path.size() < 2) throw std::invalid_argument("quadratic variation needs >= 2 samples");
    double s = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i) {
        const double d = path[i] - path[i - 1];
        s += d * d;
    }
    return s;
}

// ------------------------------------------------------------- histograms ---

struct Histogram {
    std::vector<double> edges;    ///< bins + 1 ascending edges
    std::vector<double> density;  ///< per-bin density (integrates to 1)
};

/// Density histogram of first differences with fixed-width bins. An optional
/// [lo, hi] range lets two series share edges for overlap comparisons.
inline Histogram transition_histogram(const std::vector<double>& series, int bins,
                                      double lo = 0.0, double hi = -1.0) {
    if (series.size() < 2) throw std::invalid_argument("need at least one transition");
    if (bins < 1) throw std::invalid_argument("need at least one bin");
    std::vector<double> diffs(series.size() - 1);
    for (std::size_t i = 1; i < series.size(); ++i) diffs[i - 1] = series[i] - series[i - 1];

    if (lo >= hi) {
        lo = *std::min_element(diffs.begin(), diffs.end());
        hi = *std::max_element(diffs.begin(), diffs.end());
    }
    if (lo == hi) {  // constant series: one spike bin
        Histogram h;
        h.edges = {lo - 0.5, lo + 0.5};
        h.density = {1.0};
        return h;
    }

    Histogram h;
    h.edges.resize(static_cast<std::size_t>(bins) + 1);
    const double w = (hi - lo) / bins;
    for (int b = 0; b <= bins; ++b) h.edges[b] = lo + w * b;
    h.density.assign(static_cast<std::size_t>(bins), 0.0);
    long counted = 0;
    for (double d : diffs) {
        if (d < lo || d > hi) continue;
        int b = std::min(static_cast<int>((d - lo) / w), bins - 1);
        h.density[static_cast<std::size_t>(b)] += 1.0;
        ++counted;
    }
    if (counted > 0)
        for (double& v : h.density) v /= counted * w;
    return h;
}

/// Total variation distance between two histograms sharing edges.
inline double histogram_tv_distance(const Histogram& a, const Histogram& b) {
    if (a.edges != b.edges) throw std::invalid_argument("histograms must share edges");
    double tv = 0.0;
    for (std::size_t i = 0; i < a.density.size(); ++i) {
        const double w = a.edges[i + 1] - a.edges[i];
        tv += 0.5 * std::abs(a.density[i] - b.density[i]) * w;
    }
    return tv;
}

// ------------------------------------------------------------------ bands ---

struct BandSet {
    std::vector<double> times;
    std::vector<double> levels;               ///< ascending central probabilities
    std::vector<std::vector<double>> lower;   ///< [level][time]
    std::vector<std::vector<double>> upper;   ///< [level][time]
    bool low_sample_warning = false;
};

/// Linear-interpolation quantile of a sorted sample.
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw std::invalid_argument("empty sample");
    if (q <= 0.0) return sorted.front();
    if (q >= 1.0) return sorted.back();
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t i = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i);
    if (i + 1 >= sorted.size()) return sorted.back();
    return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

/// Pointwise empirical bands: per grid time and level, the central-interval
/// quantiles of the path ensemble. Levels are sorted, so wider levels contain
/// narrower ones at every time.
inline BandSet empirical_bands(const PathBundle& bundle, std::vector<double> levels) {
    if (bundle.paths.size() < 2) throw std::invalid_argument("need at least 2 paths");
    std::sort(levels.begin(), levels.end());
    for (double l : levels)
        if (!(l >= 0.0 && l < 1.0)) throw std::invalid_argument("levels must lie in [0,1)");

    BandSet out;
    out.times = bundle.times;
    out.levels = levels;
    out.lower.assign(levels.size(), std::vector<double>(bundle.times.size(), 0.0));
    out.upper = out.lower;

    const double n = static_cast<double>(bundle.paths.size());
    if (!levels.empty() && (1.0 - levels.back()) / 2.0 * n < 10.0) out.low_sample_warning = true;

    std::vector<double> column;
    column.reserve(bundle.paths.size());
    for (std::size_t t = 0; t < bundle.times.size(); ++t) {
        column.clear();
        for (const auto& path : bundle.paths)
            if (std::isfinite(path[t])) column.push_back(path[t]);  // aborted paths carry NaN
        if (column.size() < 2) throw std::runtime_error("too few finite paths for bands");
        std::sort(column.begin(), column.end());
        for (std::size_t l = 0; l < levels.size(); ++l) {
            out.lower[l][t] = quantile_sorted(column, (1.0 - levels[l]) / 2.0);
            out.upper[l][t] = quantile_sorted(column, (1.0 + levels[l]) / 2.0);
        }
    }
    return out;
}

}  // namespace fsde
