#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fsde/curve.hpp"

namespace fsde {

/// One provider's raw (MW-valued) series.
struct RawSeries {
    std::string provider;
    std::vector<std::int64_t> timestamps;  ///< epoch seconds, strictly increasing
    std::vector<double> production_mw;
    std::vector<double> forecast_mw;
    double capacity_mw = 0.0;
};

struct NormalizedSeries {
    std::string provider;
    std::vector<std::int64_t> timestamps;
    std::vector<double> x;  ///< normalized production
    std::vector<double> p;  ///< normalized forecast
    long clamped = 0;       ///< values above capacity clamped to 1
};

/// Divides all power values by the installed capacity. Values above capacity
/// clamp to 1 and are counted.
inline NormalizedSeries normalize(const RawSeries& raw) {
    if (!(raw.capacity_mw > 0.0)) throw std::invalid_argument("capacity must be positive");
    NormalizedSeries out;
    out.provider = raw.provider;
    out.timestamps = raw.timestamps;
    out.x.reserve(raw.production_mw.size());
    out.p.reserve(raw.forecast_mw.size());
    auto norm = [&](double mw) {
        double v = mw / raw.capacity_mw;
        if (v > 1.0) {
            v = 1.0;
            ++out.clamped;
        }
        return v;
    };
    for (double mw : raw.production_mw) out.x.push_back(norm(mw));
    for (double mw : raw.forecast_mw) out.p.push_back(norm(mw));
    return out;
}

/// One contiguous observation window: N+1 equispaced production samples plus
/// the forecast knots covering the same span (equispaced, endpoints included).
struct Segment {
    std::string id;
    std::string provider;
    std::int64_t start_epoch_s = 0;
    double delta_s = 600.0;        ///< production sampling interval
    std::vector<double> x;         ///< normalized production, in [0,1]
    std::vector<double> p_raw;     ///< normalized forecast knots (untruncated)
    bool curtailed = false;

    double delta_hours() const { return delta_s / 3600.0; }
    double duration_hours() const {
        return delta_hours() * static_cast<double>(x.size() - 1);
    }
    std::vector<double> times_hours() const {
        std::vector<double> t(x.size());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = delta_hours() * static_cast<double>(i);
        return t;
    }
    double knot_spacing_hours() const {
        if (p_raw.size() < 2) throw std::invalid_argument("segment has fewer than 2 forecast knots");
        return duration_hours() / static_cast<double>(p_raw.size() - 1);
    }

    void validate() const {
        if (x.size() < 2) throw std::invalid_argument("segment needs at least 2 samples");
        if (p_raw.size() < 2) throw std::invalid_argument("segment has fewer than 2 forecast knots");
        if (!(delta_s > 0.0)) throw std::invalid_argument("sampling interval must be positive");
        for (double xi : x)
            if (!(xi >= 0.0 && xi <= 1.0)) throw std::invalid_argument("production sample outside [0,1]");
    }
};

enum class Role { Unassigned, Train, Test };

struct SegmentSet {
    std::vector<Segment> segments;
    Role role = Role::Unassigned;
};

/// Piecewise-linear truncated forecast over the segment span.
inline ForecastCurve build_curve(const Segment& seg, double eps) {
    seg.validate();
    const double h = seg.knot_spacing_hours();
    std::vector<double> kt(seg.p_raw.size());
    for (std::size_t i = 0; i < kt.size(); ++i) kt[i] = h * static_cast<double>(i);
    return ForecastCurve(std::move(kt), seg.p_raw, eps);
}

struct CurtailConfig {
    int plateau_len = 9;      ///< samples (90 min at 10-minute sampling)
    double flat_tol = 0.005;  ///< max production range inside a plateau
    double gap_tol = 0.1;     ///< min forecast-minus-production gap
};

/// Flags operator-imposed production plateaus: a run of plateau_len samples
/// whose range stays within flat_tol while the (raw, untruncated) forecast
/// exceeds production by more than gap_tol throughout.
inline bool detect_curtailment(const Segment& seg, const CurtailConfig& cfg = {}) {
    seg.validate();
    const std::size_t n = seg.x.size();
    const std::size_t w = static_cast<std::size_t>(std::max(cfg.plateau_len, 2));
    if (n < w) return false;

    // Raw forecast interpolated onto the sample grid.
    const double kh = seg.knot_spacing_hours();
    std::vector<double> fc(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = seg.delta_hours() * static_cast<double>(i);
        std::size_t k = std::min(static_cast<std::size_t>(t / kh), seg.p_raw.size() - 2);
        const double frac = (t - kh * static_cast<double>(k)) / kh;
        fc[i] = seg.p_raw[k] + (seg.p_raw[k + 1] - seg.p_raw[k]) * frac;
    }

    for (std::size_t i = 0; i + w <= n; ++i) {
        double lo = seg.x[i], hi = seg.x[i];
        bool gap = true;
        for (std::size_t j = i; j < i + w; ++j) {
            lo = std::min(lo, seg.x[j]);
            hi = std::max(hi, seg.x[j]);
            if (fc[j] - seg.x[j] <= cfg.gap_tol) {
                gap = false;
                break;
            }
        }
        if (gap && hi - lo <= cfg.flat_tol) return true;
    }
    return false;
}

/// Alternating chronological assignment: even index -> train, odd -> test.
/// Guarantees the two sets interleave, so neither contains contiguous days.
inline std::pair<SegmentSet, SegmentSet> split_train_test(std::vector<Segment> segments) {
    if (segments.size() < 2)
        throw std::invalid_argument("train/test split needs at least 2 segments");
    std::stable_sort(segments.begin(), segments.end(), [](const Segment& a, const Segment& b) {
        if (a.start_epoch_s != b.start_epoch_s) return a.start_epoch_s < b.start_epoch_s;
        if (a.provider != b.provider) return a.provider < b.provider;
        return a.id < b.id;
    });
    SegmentSet train, test;
    train.role = Role::Train;
    test.role = Role::Test;
    for (std::size_t i = 0; i < segments.size(); ++i)
        (i % 2 == 0 ? train : test).segments.push_back(std::move(segments[i]));
    return {std::move(train), std::move(test)};
}

/// Forecast errors v_i = x_i - p(t_i) against the truncated curve.
inline std::vector<double> compute_errors(const Segment& seg, const ForecastCurve& curve) {
    std::vector<double> v(seg.x.size());
    const auto t = seg.times_hours();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = seg.x[i] - curve.value(t[i]);
    return v;
}

// ------------------------------------------------------- prepared segments ---

/// Segment with its curve and error series precomputed; the unit every
/// likelihood and calibration routine consumes.
struct PreparedSegment {
    std::string id;
    ForecastCurve curve;
    std::vector<double> times;  ///< hours from segment start
    std::vector<double> v;      ///< forecast errors at times
};

struct PreparedData {
    std::vector<PreparedSegment> segments;
    double epsilon = 0.02;
    long n_transitions = 0;

    double delta_hours() const {
        if (segments.empty() || segments.front().times.size() < 2)
            throw std::invalid_argument("no transitions in prepared data");
        return segments.front().times[1] - segments.front().times[0];
    }
};

inline PreparedData prepare(const SegmentSet& set, double eps) {
    PreparedData out;
    out.epsilon = eps;
    out.segments.reserve(set.segments.size());
    double spacing = -1.0;
    for (const Segment& seg : set.segments) {
        if (seg.curtailed) continue;
        PreparedSegment ps;
        ps.id = seg.id;
        ps.curve = build_curve(seg, eps);
        ps.times = seg.times_hours();
        ps.v = compute_errors(seg, ps.curve);
        const double d = ps.times[1] - ps.times[0];
        if (spacing < 0.0) spacing = d;
        else if (std::abs(spacing - d) > 1e-9)
            throw std::invalid_argument("segments have inconsistent sampling intervals");
        out.n_transitions += static_cast<long>(ps.times.size()) - 1;
        out.segments.push_back(std::move(ps));
    }
    return out;
}

}  // namespace fsde
