#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fsde/data.hpp"
#include "fsde/model.hpp"
#include "fsde/simulate.hpp"
#include "fsde/util.hpp"

namespace fsde {

/// Generator settings for synthetic (observation, forecast) segments drawn
/// from the model itself.
struct SynthConfig {
    int n_segments = 10;
    int n_steps = 144;               ///< transitions per segment
    double delta_hours = 1.0 / 6.0;  ///< observation spacing
    double knot_hours = 1.0;         ///< forecast knot spacing
    double epsilon = 0.02;
    ModelParams params{1.9, 0.05, ModelKind::DerivativeTracking};
    double delta_star = 0.0;  ///< >0: draw the first error from the early transition
    std::uint64_t seed = 1;
    int substeps = 20;  ///< path-generation substeps per observation interval

    // Forecast-knot random walk. The defaults ramp hard enough that the
    // time-varying rate schedule actually engages, as real wind forecasts do.
    double p_start_lo = 0.2, p_start_hi = 0.8;
    double p_min = 0.05, p_max = 0.95;
    double step_sd = 0.15;
};

namespace detail {

inline std::vector<double> random_forecast_knots(std::mt19937_64& rng, int n_knots, double lo,
                                                 double hi, double start_lo, double start_hi,
                                                 double step_sd) {
    std::uniform_real_distribution<double> u0(start_lo, start_hi);
    std::normal_distribution<double> step(0.0, step_sd);
    std::vector<double> knots(static_cast<std::size_t>(n_knots));
    knots[0] = u0(rng);
    for (std::size_t k = 1; k < knots.size(); ++k)
        knots[k] = std::clamp(knots[k - 1] + step(rng), lo, hi);
    return knots;
}

}  // namespace detail

/// Draws independent segments: a fresh random forecast curve per segment and
/// one model path sampled on the observation grid. Daily start times keep
/// chronological splitting meaningful.
inline SegmentSet make_synthetic_segments(const SynthConfig& cfg,
                                          const std::string& provider = "A") {
    if (cfg.n_segments < 1 || cfg.n_steps < 1) throw std::invalid_argument("bad synthetic config");
    const double span_h = cfg.delta_hours * cfg.n_steps;
    const int n_knots = static_cast<int>(std::round(span_h / cfg.knot_hours)) + 1;
    const std::int64_t base_epoch = days_from_civil(2019, 4, 1) * 86400 + 13 * 3600;

    SegmentSet out;
    out.segments.reserve(static_cast<std::size_t>(cfg.n_segments));
    for (int j = 0; j < cfg.n_segments; ++j) {
        std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(j), 0x5eed));
        const auto knots = detail::random_forecast_knots(rng, n_knots, cfg.p_min, cfg.p_max,
                                                         cfg.p_start_lo, cfg.p_start_hi,
                                                         cfg.step_sd);
        Segment seg;
        seg.id = "synth-" + std::to_string(j);
        seg.provider = provider;
        seg.start_epoch_s = base_epoch + static_cast<std::int64_t>(j) * 86400;
        seg.delta_s = cfg.delta_hours * 3600.0;
        seg.p_raw = knots;

        std::vector<double> kt(knots.size());
        for (std::size_t k = 0; k < kt.size(); ++k) kt[k] = cfg.knot_hours * static_cast<double>(k);
        const ForecastCurve curve(kt, knots, cfg.epsilon);

        std::vector<double> times(static_cast<std::size_t>(cfg.n_steps) + 1);
        for (std::size_t i = 0; i < times.size(); ++i)
            times[i] = cfg.delta_hours * static_cast<double>(i);

        SimConfig sim;
        sim.n_paths = 1;
        sim.substeps = cfg.substeps;
        sim.scheme = Scheme::ZSpace;
        sim.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(j), 0x9a75);
        const InitialSpec init = cfg.delta_star > 0.0
                                     ? InitialSpec::delta_transition(cfg.delta_star)
                                     : InitialSpec::fixed(0.0);
        const PathBundle bundle = simulate_paths(cfg.params, curve, times, sim, init);
        seg.x = bundle.paths.front();
        out.segments.push_back(std::move(seg));
    }
    return out;
}

// ----------------------------------------------------------- CSV generator ---

/// Settings for a raw CSV in the ingest schema: a continuous production path
/// chained across days, per-provider hourly forecasts, optional curtailed
/// days.
struct SynthCsvConfig {
    int days = 10;
    int providers = 1;  ///< named A, B, C, ...
    int curtail_days = 0;
    double capacity_mw = 1474.0;
    std::string start_date = "2019-04-01";
    int anchor_hour = 13;
    ModelParams params{1.9, 0.05, ModelKind::DerivativeTracking};
    double epsilon = 0.02;
    std::uint64_t seed = 1;
    int substeps = 20;
    double delta_hours = 1.0 / 6.0;
    double knot_hours = 1.0;
    double p_min = 0.05, p_max = 0.95, step_sd = 0.15;
};

struct SynthCsvData {
    std::vector<std::int64_t> timestamps;
    std::vector<double> production_mw;
    std::vector<std::vector<double>> forecast_mw;  ///< [provider][row]
    std::vector<std::string> provider_names;
    std::vector<int> curtailed_days;
};

inline SynthCsvData make_synthetic_csv_data(const SynthCsvConfig& cfg) {
    if (cfg.days < 1 || cfg.providers < 1 || cfg.providers > 26)
        throw std::invalid_argument("bad synthetic csv config");
    std::mt19937_64 rng(derive_seed(cfg.seed, 0xc57, 7));

    const double span_h = 24.0 * cfg.days;
    const int n_knots = static_cast<int>(std::round(span_h / cfg.knot_hours)) + 1;
    const int n_rows = static_cast<int>(std::round(span_h / cfg.delta_hours)) + 1;

    // Curtailed day indices, drawn without replacement.
    std::vector<int> pool(static_cast<std::size_t>(cfg.days));
    for (int d = 0; d < cfg.days; ++d) pool[static_cast<std::size_t>(d)] = d;
    std::vector<int> curtailed;
    for (int k = 0; k < std::min(cfg.curtail_days, cfg.days); ++k) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        const std::size_t i = pick(rng);
        curtailed.push_back(pool[i]);
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(i));
    }
    std::sort(curtailed.begin(), curtailed.end());

    // Provider A knots chained over the whole horizon; curtailed days get a
    // boosted forecast so the plateau-gap signature is unambiguous.
    auto knots_a = detail::random_forecast_knots(rng, n_knots, cfg.p_min, cfg.p_max, 0.25, 0.75,
                                                 cfg.step_sd);
    const int knots_per_day = static_cast<int>(std::round(24.0 / cfg.knot_hours));
    for (int day : curtailed)
        for (int k = day * knots_per_day; k <= (day + 1) * knots_per_day && k < n_knots; ++k)
            knots_a[static_cast<std::size_t>(k)] = std::max(knots_a[static_cast<std::size_t>(k)], 0.45);

    SynthCsvData out;
    out.curtailed_days = curtailed;

    std::vector<std::vector<double>> provider_knots{knots_a};
    std::normal_distribution<double> jitter(0.0, 0.02);
    for (int p = 1; p < cfg.providers; ++p) {
        auto k = knots_a;
        for (double& v : k) v = std::clamp(v + jitter(rng), cfg.p_min, cfg.p_max);
        provider_knots.push_back(std::move(k));
    }

    std::vector<double> kt(static_cast<std::size_t>(n_knots));
    for (std::size_t k = 0; k < kt.size(); ++k) kt[k] = cfg.knot_hours * static_cast<double>(k);
    const ForecastCurve curve_a(kt, knots_a, cfg.epsilon);

    std::vector<double> times(static_cast<std::size_t>(n_rows));
    for (std::size_t i = 0; i < times.size(); ++i)
        times[i] = cfg.delta_hours * static_cast<double>(i);

    SimConfig sim;
    sim.n_paths = 1;
    sim.substeps = cfg.substeps;
    sim.scheme = Scheme::ZSpace;
    sim.seed = derive_seed(cfg.seed, 0x9a7, 5);
    const PathBundle bundle =
        simulate_paths(cfg.params, curve_a, times, sim, InitialSpec::fixed(0.0));
    std::vector<double> x = bundle.paths.front();

    // Flat under-forecast plateau (hours 4..7 of the day) on curtailed days.
    for (int day : curtailed) {
        const int i0 = static_cast<int>(std::round((day * 24.0 + 4.0) / cfg.delta_hours));
        const int i1 = static_cast<int>(std::round((day * 24.0 + 7.0) / cfg.delta_hours));
        double min_fc = 1.0;
        for (int i = i0; i <= i1 && i < n_rows; ++i)
            min_fc = std::min(min_fc, curve_a.value(times[static_cast<std::size_t>(i)]));
        const double level = std::max(0.0, min_fc - 0.2);
        for (int i = i0; i <= i1 && i < n_rows; ++i) x[static_cast<std::size_t>(i)] = level;
    }

    const std::int64_t start_epoch =
        parse_iso8601(cfg.start_date + "T00:00:00Z") + cfg.anchor_hour * 3600;
    out.timestamps.resize(static_cast<std::size_t>(n_rows));
    out.production_mw.resize(static_cast<std::size_t>(n_rows));
    for (int i = 0; i < n_rows; ++i) {
        out.timestamps[static_cast<std::size_t>(i)] =
            start_epoch + static_cast<std::int64_t>(std::llround(times[static_cast<std::size_t>(i)] * 3600.0));
        out.production_mw[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)] * cfg.capacity_mw;
    }
    for (int p = 0; p < cfg.providers; ++p) {
        out.provider_names.push_back(std::string(1, static_cast<char>('A' + p)));
        std::vector<double> fc(static_cast<std::size_t>(n_rows));
        for (int i = 0; i < n_rows; ++i) {
            // Raw (untruncated) interpolation of this provider's knots.
            const double t = times[static_cast<std::size_t>(i)];
            const auto& pk = provider_knots[static_cast<std::size_t>(p)];
            std::size_t k = std::min(static_cast<std::size_t>(t / cfg.knot_hours), pk.size() - 2);
            const double frac = (t - cfg.knot_hours * static_cast<double>(k)) / cfg.knot_hours;
            fc[static_cast<std::size_t>(i)] =
                (pk[k] + (pk[k + 1] - pk[k]) * frac) * cfg.capacity_mw;
        }
        out.forecast_mw.push_back(std::move(fc));
    }
    return out;
}

}  // namespace fsde
