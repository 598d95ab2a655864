#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "fsde/simulate.hpp"
#include "fsde/synthetic.hpp"
#include "support/oracles.hpp"

using namespace fsde;
using Catch::Approx;

namespace {

std::vector<double> grid(double t1, int n) {
    std::vector<double> t(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) t[static_cast<std::size_t>(i)] = t1 * i / n;
    return t;
}

}  // namespace

TEST_CASE("zero diffusion collapses to the deterministic tracking path") {
    const ModelParams mp{1.9, 0.0, ModelKind::DerivativeTracking};
    const ForecastCurve curve({0.0, 6.0, 12.0}, {0.3, 0.7, 0.5}, 0.02);
    const auto t = grid(12.0, 72);
    const auto b = simulate_paths(mp, curve, t, {3, 10, Scheme::ZSpace, 1}, InitialSpec::fixed(0.0));
    for (const auto& path : b.paths)
        for (std::size_t i = 0; i < t.size(); ++i)
            REQUIRE(path[i] == Approx(curve.value(t[i])).margin(1e-12));
}

TEST_CASE("grid outside forecast coverage is rejected") {
    const ModelParams mp{1.9, 0.05, ModelKind::DerivativeTracking};
    const ForecastCurve curve({0.0, 1.0}, {0.5, 0.5}, 0.02);
    CHECK_THROWS_AS(simulate_paths(mp, curve, {0.0, 2.0}, {1, 1, Scheme::ZSpace, 1},
                                   InitialSpec::fixed(0.0)),
                    std::domain_error);
}

TEST_CASE("transformed scheme keeps every sample inside the unit interval") {
    const ModelParams mp{1.9, 0.08, ModelKind::DerivativeTracking};
    const ForecastCurve curve({0.0, 6.0, 12.0}, {0.1, 0.85, 0.15}, 0.02);
    const auto t = grid(12.0, 72);
    const auto b = simulate_paths(mp, curve, t, {2000, 10, Scheme::ZSpace, 7},
                                  InitialSpec::fixed(0.0));
    CHECK(b.failed_paths == 0);
    for (const auto& path : b.paths)
        for (double x : path) {
            REQUIRE(x >= 0.0);
            REQUIRE(x <= 1.0);
        }
}

TEST_CASE("bundles reproduce bitwise for any thread count and seed") {
    const ModelParams mp{1.9, 0.05, ModelKind::DerivativeTracking};
    const ForecastCurve curve({0.0, 4.0}, {0.4, 0.6}, 0.02);
    const auto t = grid(4.0, 24);
    SimConfig one{128, 5, Scheme::ZSpace, 42, 1};
    SimConfig three = one;
    three.threads = 3;
    const auto a = simulate_paths(mp, curve, t, one, InitialSpec::fixed(0.0));
    const auto b = simulate_paths(mp, curve, t, three, InitialSpec::fixed(0.0));
    CHECK(a.paths == b.paths);

    SimConfig other = one;
    other.seed = 43;
    const auto c = simulate_paths(mp, curve, t, other, InitialSpec::fixed(0.0));
    CHECK(a.paths != c.paths);
}

TEST_CASE("early-transition start spreads the initial value") {
    const ModelParams mp{1.9, 0.05, ModelKind::DerivativeTracking};
    const ForecastCurve curve({0.0, 4.0}, {0.5, 0.5}, 0.02);
    const auto t = grid(4.0, 8);
    const auto b = simulate_paths(mp, curve, t, {4000, 5, Scheme::ZSpace, 11},
                                  InitialSpec::delta_transition(0.5));
    std::vector<double> x0;
    for (const auto& path : b.paths) x0.push_back(path[0]);
    const auto st = oracles::mc_stats(x0);
    // Matched early transition: mean at the forecast, nonzero spread.
    CHECK(st.mean == Approx(0.5).margin(4.0 * st.se));
    CHECK(st.var > 1e-4);
}

TEST_CASE("quadratic_variation") {
    CHECK(quadratic_variation(std::vector<double>{0.4, 0.4, 0.4}) == 0.0);
    CHECK(quadratic_variation(std::vector<double>{0.0, 0.1, 0.0}) == Approx(0.02));
    CHECK_THROWS_AS(quadratic_variation(std::vector<double>{0.5}), std::invalid_argument);
}

TEST_CASE("ensemble quadratic variation matches the integrated squared diffusion") {
    // Constant forecast and plain kind give a closed-form second moment, so
    // the expected integrated squared diffusion is computable by quadrature.
    const ModelParams mp{2.0, 0.06, ModelKind::Plain};
    const double p = 0.5, T = 4.0;
    const ForecastCurve curve({0.0, T}, {p, p}, 0.02);
    const auto t = grid(T, 96);
    const auto b = simulate_paths(mp, curve, t, {4000, 12, Scheme::ZSpace, 3},
                                  InitialSpec::fixed(0.0));
    std::vector<double> qv;
    for (const auto& path : b.paths) qv.push_back(quadratic_variation(path));
    const auto st = oracles::mc_stats(qv);

    const double at0 = mp.alpha * mp.theta0;
    const double expected = oracles::simpson(
        [&](double s) {
            const auto m = oracles::const_coeff_moments(0.0, mp.theta0, at0, p, s);
            return 2.0 * at0 * (p * (1.0 - p) + (1.0 - 2.0 * p) * m.m1 - m.m2);
        },
        0.0, T, 2000);
    CHECK(st.mean == Approx(expected).epsilon(0.05));
}

TEST_CASE("transition_histogram") {
    SECTION("constant series produces a single spike bin") {
        const auto h = transition_histogram({0.3, 0.3, 0.3, 0.3}, 16);
        REQUIRE(h.density.size() == 1);
        CHECK(h.edges.front() < 0.0);
        CHECK(h.edges.back() > 0.0);
        CHECK(h.density[0] * (h.edges[1] - h.edges[0]) == Approx(1.0));
    }
    SECTION("density integrates to one") {
        std::mt19937_64 rng(13);
        std::normal_distribution<double> g(0.0, 0.05);
        std::vector<double> series{0.5};
        for (int i = 0; i < 500; ++i) series.push_back(series.back() + g(rng));
        const auto h = transition_histogram(series, 24);
        double mass = 0.0;
        for (std::size_t i = 0; i < h.density.size(); ++i)
            mass += h.density[i] * (h.edges[i + 1] - h.edges[i]);
        CHECK(mass == Approx(1.0).margin(1e-12));
    }
    SECTION("shared-range histograms compare via total variation") {
        const auto a = transition_histogram({0.0, 0.1, 0.2, 0.1, 0.0}, 8, -0.2, 0.2);
        const auto b = transition_histogram({0.0, 0.02, 0.04, 0.06, 0.08}, 8, -0.2, 0.2);
        CHECK(histogram_tv_distance(a, a) == Approx(0.0));
        CHECK(histogram_tv_distance(a, b) > 0.5);
        const auto c = transition_histogram({0.0, 0.1}, 4);
        CHECK_THROWS_AS(histogram_tv_distance(a, c), std::invalid_argument);
    }
}

TEST_CASE("empirical_bands") {
    const ModelParams mp{1.9, 0.05, ModelKind::DerivativeTracking};
    const ForecastCurve curve({0.0, 4.0}, {0.45, 0.55}, 0.02);
    const auto t = grid(4.0, 16);
    const auto b = simulate_paths(mp, curve, t, {800, 8, Scheme::ZSpace, 17},
                                  InitialSpec::fixed(0.0));

    SECTION("level zero collapses to the median and larger levels nest") {
        const auto bands = empirical_bands(b, {0.9, 0.0, 0.5});  // sorted internally
        REQUIRE(bands.levels == std::vector<double>{0.0, 0.5, 0.9});
        for (std::size_t i = 0; i < t.size(); ++i) {
            CHECK(bands.lower[0][i] == bands.upper[0][i]);
            CHECK(bands.lower[1][i] >= bands.lower[2][i]);
            CHECK(bands.upper[1][i] <= bands.upper[2][i]);
            CHECK(bands.lower[2][i] >= 0.0);
            CHECK(bands.upper[2][i] <= 1.0);
        }
    }
    SECTION("deterministic ensembles give zero-width bands") {
        const ModelParams det{1.9, 0.0, ModelKind::DerivativeTracking};
        const auto db = simulate_paths(det, curve, t, {200, 8, Scheme::ZSpace, 17},
                                       InitialSpec::fixed(0.0));
        const auto bands = empirical_bands(db, {0.9});
        for (std::size_t i = 0; i < t.size(); ++i)
            CHECK(bands.lower[0][i] == Approx(bands.upper[0][i]).margin(1e-12));
    }
    SECTION("too few paths for the widest level warns") {
        const auto small = simulate_paths(mp, curve, t, {50, 4, Scheme::ZSpace, 5},
                                          InitialSpec::fixed(0.0));
        CHECK(empirical_bands(small, {0.99}).low_sample_warning);
        CHECK_FALSE(empirical_bands(b, {0.5}).low_sample_warning);
    }
}

TEST_CASE("clamped direct scheme stays inside the unit interval") {
    const ModelParams mp{1.9, 0.08, ModelKind::DerivativeTracking};
    const ForecastCurve curve({0.0, 6.0}, {0.08, 0.9}, 0.02);
    const auto t = grid(6.0, 36);
    const auto b = simulate_paths(mp, curve, t, {500, 10, Scheme::VSpaceClamped, 23},
                                  InitialSpec::fixed(0.0));
    CHECK(b.failed_paths == 0);
    for (const auto& path : b.paths)
        for (double x : path) {
            REQUIRE(x >= 0.0);
            REQUIRE(x <= 1.0);
        }
}

TEST_CASE("the two schemes agree on the ensemble mean") {
    const ModelParams mp{1.9, 0.05, ModelKind::DerivativeTracking};
    const ForecastCurve curve({0.0, 4.0}, {0.4, 0.6}, 0.02);
    const auto t = grid(4.0, 24);
    const auto za = simulate_paths(mp, curve, t, {6000, 10, Scheme::ZSpace, 29},
                                   InitialSpec::fixed(0.0));
    const auto vb = simulate_paths(mp, curve, t, {6000, 10, Scheme::VSpaceClamped, 31},
                                   InitialSpec::fixed(0.0));
    std::vector<double> xa, xb;
    for (const auto& p : za.paths) xa.push_back(p.back());
    for (const auto& p : vb.paths) xb.push_back(p.back());
    const auto sa = oracles::mc_stats(xa);
    const auto sb = oracles::mc_stats(xb);
    CHECK(sa.mean == Approx(sb.mean).margin(3.5 * std::hypot(sa.se, sb.se) + 2e-3));
}

TEST_CASE("simulated transitions overlap the generating transitions") {
    SynthConfig sc;
    sc.n_segments = 40;
    sc.n_steps = 144;
    sc.seed = 321;
    const auto set = make_synthetic_segments(sc);
    const auto prep = prepare(set, sc.epsilon);

    std::vector<double> real_diffs, sim_diffs;
    for (const auto& seg : prep.segments)
        for (std::size_t i = 1; i < seg.v.size(); ++i)
            real_diffs.push_back(seg.v[i] - seg.v[i - 1]);
    for (const auto& seg : prep.segments) {
        const auto b = simulate_paths(sc.params, seg.curve, seg.times,
                                      {20, 10, Scheme::ZSpace, 999}, InitialSpec::fixed(0.0));
        for (const auto& row : b.paths)
            for (std::size_t i = 1; i < row.size(); ++i) {
                const double v1 = row[i] - seg.curve.value(seg.times[i]);
                const double v0 = row[i - 1] - seg.curve.value(seg.times[i - 1]);
                sim_diffs.push_back(v1 - v0);
            }
    }
    auto series = [](const std::vector<double>& diffs) {
        std::vector<double> s(diffs.size() + 1, 0.0);
        for (std::size_t i = 0; i < diffs.size(); ++i) s[i + 1] = s[i] + diffs[i];
        return s;
    };
    const double lo = -0.25, hi = 0.25;
    const auto hr = transition_histogram(series(real_diffs), 25, lo, hi);
    const auto hs = transition_histogram(series(sim_diffs), 25, lo, hi);
    CHECK(histogram_tv_distance(hr, hs) < 0.1);
}

TEST_CASE("substep halving leaves ensemble statistics inside Monte Carlo noise") {
    const ModelParams mp{1.9, 0.05, ModelKind::DerivativeTracking};
    const ForecastCurve curve({0.0, 6.0, 12.0}, {0.35, 0.6, 0.45}, 0.02);
    std::vector<double> t;
    for (int i = 0; i <= 72; ++i) t.push_back(12.0 * i / 72.0);

    auto end_stats = [&](int substeps, std::uint64_t seed) {
        const auto b = simulate_paths(mp, curve, t, {10000, substeps, Scheme::ZSpace, seed},
                                      InitialSpec::fixed(0.0));
        std::vector<double> ends;
        for (const auto& p : b.paths) ends.push_back(p.back());
        return oracles::mc_stats(ends);
    };
    const auto coarse = end_stats(10, 51);
    const auto fine = end_stats(20, 52);
    const double se = std::hypot(coarse.se, fine.se);
    CHECK(std::abs(coarse.mean - fine.mean) < 3.0 * se);
    CHECK(coarse.var == Approx(fine.var).epsilon(0.1));
}
