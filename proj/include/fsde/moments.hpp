#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fsde/curve.hpp"
#include "fsde/model.hpp"

namespace fsde {

struct MomentStateV {
    double m1 = 0.0;  ///< first raw moment of the error
    double m2 = 0.0;  ///< second raw moment of the error
    double variance() const { return m2 - m1 * m1; }
};

struct MomentStateZ {
    double mu = 0.0;   ///< linearized mean of the transformed state
    double var = 0.0;  ///< linearized variance of the transformed state
};

struct IntegratorConfig {
    int substeps = 20;  ///< fixed RK4 substeps per observation interval
};

/// Classical fixed-step 4th-order Runge-Kutta over [t0, t1].
template <std::size_t N, class F>
std::array<double, N> rk4_integrate(F&& f, std::array<double, N> y0, double t0, double t1,
                                    int substeps) {
    if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
    const double h = (t1 - t0) / static_cast<double>(substeps);
    std::array<double, N> y = y0;
    for (int s = 0; s < substeps; ++s) {
        const double t = t0 + h * static_cast<double>(s);
        const auto k1 = f(t, y);
        std::array<double, N> tmp;
        for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        const auto k2 = f(t + 0.5 * h, tmp);
        for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
        const auto k3 = f(t + 0.5 * h, tmp);
        for (std::size_t i = 0; i < N; ++i) tmp[i] = y[i] + h * k3[i];
        const auto k4 = f(t + h, tmp);
        for (std::size_t i = 0; i < N; ++i) {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            if (!std::isfinite(y[i])) throw std::runtime_error("integration produced non-finite state");
        }
    }
    return y;
}

namespace detail {

/// Integrates piece by piece between forecast knots so the discontinuous
/// forecast derivative never falls inside an RK4 step. The slope is frozen
/// per piece; substeps are distributed proportionally to piece length.
template <std::size_t N, class Rhs>
std::array<double, N> integrate_with_knots(const ForecastCurve& curve, Rhs&& rhs,
                                           std::array<double, N> y0, double t0, double t1,
                                           int substeps) {
    if (!(t1 > t0)) {
        if (t1 == t0) return y0;
        throw std::invalid_argument("integration interval reversed");
    }
    std::vector<double> bp{t0};
    for (double kt : curve.interior_knots(t0, t1)) bp.push_back(kt);
    bp.push_back(t1);

    const double total = t1 - t0;
    std::array<double, N> y = y0;
    for (std::size_t k = 0; k + 1 < bp.size(); ++k) {
        const double a = bp[k], b = bp[k + 1];
        const double tm = 0.5 * (a + b);
        const double slope = curve.derivative(tm);
        const double pa = curve.value(a);
        auto local = [&](double t, const std::array<double, N>& s) {
            return rhs(t, pa + slope * (t - a), slope, s);
        };
        int n = std::max(1, static_cast<int>(std::ceil(substeps * (b - a) / total - 1e-12)));
        y = rk4_integrate<N>(local, y, a, b, n);
    }
    return y;
}

}  // namespace detail

/// First/second raw moments of the error over one transition interval:
///   m1' = -theta_t m1
///   m2' = -2 (theta_t + a t0) m2 + 2 a t0 (1 - 2 p) m1 + 2 a t0 p (1 - p)
/// started from the observed value (m1 = v0, m2 = v0^2).
inline MomentStateV integrate_v_moments(double v0, double t0, double t1,
                                        const ForecastCurve& curve, const ModelParams& params,
                                        const IntegratorConfig& cfg = {}) {
    params.validate();
    const double at0 = params.alpha * params.theta0;
    auto rhs = [&](double /*t*/, double p, double pdot, const std::array<double, 2>& s) {
        const double th = theta_t(params, p, pdot);
        return std::array<double, 2>{
            -th * s[0],
            -2.0 * (th + at0) * s[1] + 2.0 * at0 * (1.0 - 2.0 * p) * s[0] +
                2.0 * at0 * p * (1.0 - p)};
    };
    auto y = detail::integrate_with_knots<2>(curve, rhs, {v0, v0 * v0}, t0, t1, cfg.substeps);
    return {y[0], y[1]};
}

struct ZMomentResult {
    MomentStateZ state;
    long clamp_events = 0;  ///< drift evaluations that hit the boundary guard
};

/// Linearized mean/variance of the transformed state over one transition:
///   mu'  = a(mu)
///   var' = 2 a'(mu) var + 1
/// started from (z0, 0).
inline ZMomentResult integrate_z_moments(double z0, double t0, double t1,
                                         const ForecastCurve& curve, const ModelParams& params,
                                         const IntegratorConfig& cfg = {}) {
    params.validate();
    long clamps = 0;
    const double at0 = params.alpha * params.theta0;
    const double sq = std::sqrt(2.0 * at0);
    // Single clamp + trig evaluation shared by the drift and its derivative.
    auto rhs = [&](double /*t*/, double p, double pdot, const std::array<double, 2>& s) {
        bool clamped = false;
        const double zc = detail::clamp_z_interior(params, s[0], &clamped);
        if (clamped) ++clamps;
        const double th = theta_t(params, p, pdot);
        const double u = -sq * zc;
        const double cu = std::cos(u), su = std::sin(u);
        const double c1 = 2.0 * pdot - th * (1.0 - 2.0 * p);
        const double c2 = at0 - th;
        const double a = (c1 + c2 * cu) / (sq * su);
        const double ap = (c2 + c1 * cu) / (su * su);
        return std::array<double, 2>{a, 2.0 * ap * s[1] + 1.0};
    };
    auto y = detail::integrate_with_knots<2>(curve, rhs, {z0, 0.0}, t0, t1, cfg.substeps);
    return {{y[0], std::max(y[1], 0.0)}, clamps};
}

}  // namespace fsde
