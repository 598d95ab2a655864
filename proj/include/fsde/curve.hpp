#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace fsde {

/// Three-branch clamp of a normalized forecast value into [eps, 1-eps].
inline double truncate_forecast(double p, double eps) {
    if (!(eps > 0.0 && eps < 0.5)) throw std::invalid_argument("truncation level must be in (0, 1/2)");
    if (p < eps) return eps;
    if (p >= 1.0 - eps) return 1.0 - eps;
    return p;
}

/// Continuous-time truncated forecast: piecewise-linear through the knots,
/// with a piecewise-constant derivative. Values are kept inside
/// [eps, 1-eps]; times are in hours.
class ForecastCurve {
public:
    ForecastCurve() = default;

    ForecastCurve(std::vector<double> knot_times, std::vector<double> knot_values, double eps)
        : times_(std::move(knot_times)), values_(std::move(knot_values)), eps_(eps) {
        if (times_.size() < 2) throw std::invalid_argument("forecast curve needs at least 2 knots");
        if (times_.size() != values_.size())
            throw std::invalid_argument("knot time/value size mismatch");
        if (!(eps_ > 0.0 && eps_ < 0.5)) throw std::invalid_argument("truncation level must be in (0, 1/2)");
        for (std::size_t i = 0; i + 1 < times_.size(); ++i)
            if (!(times_[i] < times_[i + 1]))
                throw std::invalid_argument("knot times must be strictly increasing");
        for (double& v : values_) v = truncate_forecast(v, eps_);
    }

    double epsilon() const { return eps_; }
    double start() const { return times_.front(); }
    double end() const { return times_.back(); }
    const std::vector<double>& knot_times() const { return times_; }
    const std::vector<double>& knot_values() const { return values_; }

    /// Index of the piece containing t; pieces are [t_k, t_{k+1}), the last
    /// piece also owns its right endpoint.
    std::size_t piece_index(double t) const {
        check_domain(t);
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        std::size_t k = static_cast<std::size_t>(it - times_.begin());
        if (k == 0) return 0;
        if (k >= times_.size()) return times_.size() - 2;
        return k - 1;
    }

    double slope(std::size_t piece) const {
        return (values_[piece + 1] - values_[piece]) / (times_[piece + 1] - times_[piece]);
    }

    double value(double t) const {
        std::size_t k = piece_index(t);
        return values_[k] + slope(k) * (t - times_[k]);
    }

    double derivative(double t) const { return slope(piece_index(t)); }

    /// Knot times strictly inside (t0, t1), for integrators that must not
    /// step across a derivative discontinuity.
    std::vector<double> interior_knots(double t0, double t1) const {
        std::vector<double> out;
        for (double kt : times_)
            if (kt > t0 && kt < t1) out.push_back(kt);
        return out;
    }

    /// Curve extended to [start - delta, end] by continuing the first piece's
    /// slope backward and re-truncating. Crossings of the truncation bounds
    /// become knots so the extension stays exactly piecewise linear.
    ForecastCurve extended_backward(double delta) const {
        if (!(delta > 0.0)) throw std::invalid_argument("backward extension needs delta > 0");
        const double t0 = times_.front();
        const double ta = t0 - delta;
        const double s = slope(0);
        const double p0 = values_.front();

        std::vector<double> ts{ta};
        std::vector<double> vs{truncate_forecast(p0 + s * (ta - t0), eps_)};
        // Where the raw extension crosses eps or 1-eps inside (ta, t0).
        if (s != 0.0) {
            for (double bound : {eps_, 1.0 - eps_}) {
                double tc = t0 + (bound - p0) / s;
                if (tc > ta && tc < t0) {
                    ts.push_back(tc);
                    vs.push_back(bound);
                }
            }
        }
        if (ts.size() == 3 && ts[1] > ts[2]) {
            std::swap(ts[1], ts[2]);
            std::swap(vs[1], vs[2]);
        }
        ts.insert(ts.end(), times_.begin(), times_.end());
        vs.insert(vs.end(), values_.begin(), values_.end());
        return ForecastCurve(std::move(ts), std::move(vs), eps_);
    }

private:
    void check_domain(double t) const {
        if (!(t >= times_.front() - 1e-12 && t <= times_.back() + 1e-12))
            throw std::domain_error("time outside forecast curve domain");
    }

    std::vector<double> times_;
    std::vector<double> values_;
    double eps_ = 0.02;
};

/// Linear backward extension of the curve by delta, truncated. Returns the
/// forecast value at (start - delta).
inline double extrapolate_backward(const ForecastCurve& curve, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("extrapolate_backward needs delta > 0");
    const double t0 = curve.start();
    const double raw = curve.knot_values().front() + curve.slope(0) * (-delta);
    (void)t0;
    return truncate_forecast(raw, curve.epsilon());
}

}  // namespace fsde
