#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fsde/calibrate.hpp"
#include "fsde/likelihood.hpp"
#include "fsde/model.hpp"
#include "fsde/moments.hpp"
#include "fsde/simulate.hpp"
#include "fsde/synthetic.hpp"

namespace fsde {

/// Built-in property checks on synthetic fixtures. Prints one pass/fail line
/// per check and returns false when any failed. Meant as a quick smoke
/// gate; the full acceptance suite lives in the test tree.
inline bool run_selftest(std::uint64_t seed, std::FILE* out = stdout, bool quick = false) {
    int failed = 0;
    auto check = [&](const std::string& name, const std::function<bool()>& fn) {
        bool ok = false;
        std::string note;
        try {
            ok = fn();
        } catch (const std::exception& e) {
            ok = false;
            note = std::string(" (") + e.what() + ")";
        }
        if (!ok) ++failed;
        std::fprintf(out, "%s  %s%s\n", ok ? "PASS" : "FAIL", name.c_str(), note.c_str());
    };

    std::mt19937_64 rng(seed);

    check("lamperti round trip", [&] {
        std::uniform_real_distribution<double> up(0.02, 0.98), uu(0.0, 1.0);
        std::uniform_real_distribution<double> ut(std::log(0.1), std::log(10.0));
        std::uniform_real_distribution<double> ua(std::log(0.005), std::log(0.5));
        for (int i = 0; i < 2000; ++i) {
            const double p = up(rng);
            const double v = -p + uu(rng);
            const ModelParams mp{std::exp(ut(rng)), std::exp(ua(rng)),
                                 ModelKind::DerivativeTracking};
            const double z = lamperti_forward(mp, v, p);
            if (std::abs(lamperti_inverse(mp, z, p) - v) > 1e-12) return false;
        }
        return true;
    });

    check("rk4 exponential and antiderivative oracles", [&] {
        auto f1 = [](double, const std::array<double, 1>& y) { return std::array<double, 1>{y[0]}; };
        const double e1 = rk4_integrate<1>(f1, {1.0}, 0.0, 1.0, 100)[0];
        auto f2 = [](double t, const std::array<double, 1>&) {
            return std::array<double, 1>{std::cos(t)};
        };
        const double s1 = rk4_integrate<1>(f2, {0.0}, 0.0, 1.0, 100)[0];
        return std::abs(e1 - std::exp(1.0)) < 1e-9 && std::abs(s1 - std::sin(1.0)) < 1e-9;
    });

    check("moment system matches constant-coefficient closed form", [&] {
        const ModelParams mp{2.0, 0.5, ModelKind::Plain};
        const double p = 0.4, v0 = 0.1, T = 1.0;
        const ForecastCurve curve({0.0, T}, {p, p}, 0.02);
        const MomentStateV m = integrate_v_moments(v0, 0.0, T, curve, mp, {50});
        const double at0 = mp.alpha * mp.theta0;
        const double a = 2.0 * (mp.theta0 + at0);
        const double b = 2.0 * at0 * (1.0 - 2.0 * p) * v0;
        const double c = 2.0 * at0 * p * (1.0 - p);
        const double m1 = v0 * std::exp(-mp.theta0 * T);
        const double m2 = std::exp(-a * T) * v0 * v0 +
                          b * (std::exp(-mp.theta0 * T) - std::exp(-a * T)) / (a - mp.theta0) +
                          c * (1.0 - std::exp(-a * T)) / a;
        return std::abs(m.m1 - m1) < 1e-8 && std::abs(m.m2 - m2) < 1e-8;
    });

    check("transformed variance grows like elapsed time when the drift is flat", [&] {
        const ModelParams mp{1.3, 1.0, ModelKind::Plain};  // theta_t == alpha*theta0
        const ForecastCurve curve({0.0, 1.0}, {0.5, 0.5}, 0.02);
        const double z0 = -0.5 * std::numbers::pi / std::sqrt(2.0 * mp.alpha * mp.theta0);
        const ZMomentResult r = integrate_z_moments(z0, 0.0, 0.25, curve, mp, {40});
        return std::abs(r.state.var - 0.25) < 1e-10 && std::abs(r.state.mu - z0) < 1e-10;
    });

    check("beta moment matching is exact", [&] {
        std::uniform_real_distribution<double> ue(0.0, 0.1), um(-0.8, 0.8), uf(0.05, 0.95);
        for (int i = 0; i < 1000; ++i) {
            const double eps = ue(rng);
            const double mu = um(rng) * (1.0 - eps);
            const double bound = (1.0 - eps) * (1.0 - eps) - mu * mu;
            const double s2 = uf(rng) * bound;
            const BetaShapes s = beta_shapes_from_moments(mu, s2, eps);
            if (std::abs(s.mean() - mu) > 1e-10 || std::abs(s.variance() - s2) > 1e-10)
                return false;
        }
        return true;
    });

    check("beta log-density known values", [&] {
        const BetaShapes uni{1.0, 1.0, 0.0};
        const BetaShapes two{2.0, 2.0, 0.0};
        return std::abs(beta_transition_logpdf(0.3, uni) - std::log(0.5)) < 1e-12 &&
               std::abs(beta_transition_logpdf(0.0, two) - std::log(0.75)) < 1e-12;
    });

    check("nelder-mead quadratic and rosenbrock optima", [&] {
        auto quad = [](const std::vector<double>& x) { return (x[0] - 3.0) * (x[0] - 3.0); };
        const auto r1 = nelder_mead(quad, {0.0}, {});
        auto rosen = [](const std::vector<double>& x) {
            const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
            return a * a + 100.0 * b * b;
        };
        const auto r2 = nelder_mead(rosen, {-1.2, 1.0}, {.init_step = 0.5, .max_evals = 500});
        return std::abs(r1.x[0] - 3.0) < 1e-6 && std::abs(r2.x[0] - 1.0) < 1e-4 &&
               std::abs(r2.x[1] - 1.0) < 1e-4;
    });

    check("rate guess recovers a noiseless decay", [&] {
        SegmentSet set;
        Segment seg;
        seg.id = "ar";
        seg.provider = "A";
        seg.delta_s = 360.0;  // 0.1 h
        const double c = 2.0, d = 0.1;
        double v = 0.2;
        for (int i = 0; i <= 20; ++i) {
            seg.x.push_back(0.5 + v);
            v *= 1.0 - c * d;
        }
        seg.p_raw = {0.5, 0.5, 0.5};
        set.segments.push_back(seg);
        const PreparedData prep = prepare(set, 0.02);
        return std::abs(guess_theta0(prep, d) - c) < 1e-9;
    });

    check("simulated mean tracks the forecast", [&] {
        const ModelParams mp{1.9, 0.05, ModelKind::DerivativeTracking};
        const ForecastCurve curve({0.0, 6.0, 12.0}, {0.3, 0.6, 0.45}, 0.02);
        std::vector<double> times;
        for (int i = 0; i <= 36; ++i) times.push_back(i / 3.0);
        SimConfig sim{quick ? 1000 : 4000, 10, Scheme::ZSpace, derive_seed(seed, 11)};
        const PathBundle b = simulate_paths(mp, curve, times, sim, InitialSpec::fixed(0.0));
        for (std::size_t t = 1; t < times.size(); ++t) {
            double mean = 0.0, var = 0.0;
            for (const auto& path : b.paths) mean += path[t];
            mean /= static_cast<double>(b.paths.size());
            for (const auto& path : b.paths) var += (path[t] - mean) * (path[t] - mean);
            var /= static_cast<double>(b.paths.size() - 1);
            const double se = std::sqrt(var / static_cast<double>(b.paths.size()));
            if (std::abs(mean - curve.value(times[t])) > 4.0 * se + 1e-3) return false;
        }
        return true;
    });

    check("bands nest and level zero is the median", [&] {
        const ModelParams mp{1.9, 0.05, ModelKind::DerivativeTracking};
        const ForecastCurve curve({0.0, 4.0}, {0.5, 0.5}, 0.02);
        std::vector<double> times{0.0, 1.0, 2.0, 3.0, 4.0};
        const PathBundle b = simulate_paths(mp, curve, times, {500, 10, Scheme::ZSpace, 7},
                                            InitialSpec::fixed(0.0));
        const BandSet bs = empirical_bands(b, {0.0, 0.5, 0.9});
        for (std::size_t t = 0; t < times.size(); ++t) {
            if (bs.lower[0][t] != bs.upper[0][t]) return false;
            if (bs.lower[1][t] < bs.lower[2][t] - 1e-12) return false;
            if (bs.upper[1][t] > bs.upper[2][t] + 1e-12) return false;
        }
        return true;
    });

    check("small-sample fit lands near the generating product", [&] {
        SynthConfig sc;
        sc.n_segments = quick ? 4 : 8;
        sc.n_steps = 72;
        sc.seed = derive_seed(seed, 21);
        const SegmentSet set = make_synthetic_segments(sc);
        const CalibrationResult r = fit_v_space(set, sc.epsilon, {});
        const double truth = sc.params.theta0 * sc.params.alpha;
        return std::abs(r.product() - truth) / truth < 0.35;
    });

    check("bundles are bitwise reproducible across thread counts", [&] {
        const ModelParams mp{1.9, 0.05, ModelKind::DerivativeTracking};
        const ForecastCurve curve({0.0, 4.0}, {0.4, 0.6}, 0.02);
        std::vector<double> times{0.0, 1.0, 2.0, 3.0, 4.0};
        SimConfig a{64, 5, Scheme::ZSpace, derive_seed(seed, 31), 1};
        SimConfig b = a;
        b.threads = 2;
        const PathBundle pa = simulate_paths(mp, curve, times, a, InitialSpec::fixed(0.0));
        const PathBundle pb = simulate_paths(mp, curve, times, b, InitialSpec::fixed(0.0));
        return pa.paths == pb.paths;
    });

    std::fprintf(out, "%s: %d check(s) failed\n", failed == 0 ? "OK" : "SELFTEST FAILED", failed);
    return failed == 0;
}

}  // namespace fsde
