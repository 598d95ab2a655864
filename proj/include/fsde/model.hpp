#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "fsde/curve.hpp"

namespace fsde {

/// Plain: constant mean-reversion rate, no derivative tracking (model 1).
/// DerivativeTracking: drift follows the forecast derivative and uses the
/// time-varying rate schedule (model 2).
enum class ModelKind { Plain, DerivativeTracking };

struct ModelParams {
    double theta0 = 1.0;  ///< base mean-reversion rate (1/hour)
    double alpha = 0.05;  ///< dimensionless path-variability coefficient
    ModelKind kind = ModelKind::DerivativeTracking;

    void validate() const {
        if (!(theta0 > 0.0)) throw std::invalid_argument("theta0 must be positive");
        if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be nonnegative");
    }
};

/// ModelParams plus the early-transition offset delta (hours).
struct ExtendedParams {
    ModelParams base;
    double delta = 0.0;

    void validate() const {
        base.validate();
        if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    }
};

/// Mean-reversion rate at one instant. For DerivativeTracking this is the
/// smallest rate that is both >= theta0 and large enough to keep the state
/// inside [0,1] (boundary non-attainment bound); for Plain it is theta0.
inline double theta_t(const ModelParams& params, double p, double p_dot) {
    params.validate();
    if (params.kind == ModelKind::Plain) return params.theta0;
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("forecast value must lie in (0,1)");
    const double bound = (params.alpha * params.theta0 + std::abs(p_dot)) / std::min(p, 1.0 - p);
    return std::max(params.theta0, bound);
}

/// Drift of the forecast error used by the moment/likelihood pipeline:
/// -theta_t * v for DerivativeTracking, -theta0 * v for Plain.
inline double drift_v(const ModelParams& params, double v, double p, double p_dot) {
    if (params.kind == ModelKind::Plain) return -params.theta0 * v;
    return -theta_t(params, p, p_dot) * v;
}

/// Drift of the production process itself, expressed at x = v + p. This is
/// what path simulation integrates; for Plain it differs from drift_v by the
/// missing derivative-tracking term.
inline double drift_x(const ModelParams& params, double x, double p, double p_dot) {
    if (params.kind == ModelKind::Plain) return -params.theta0 * (x - p);
    return p_dot - theta_t(params, p, p_dot) * (x - p);
}

/// Diffusion coefficient sqrt(2 alpha theta0 (v+p)(1-v-p)). Zero exactly on
/// the boundary of the unit interval for x = v + p.
inline double diffusion_v(const ModelParams& params, double v, double p) {
    params.validate();
    const double q = v + p;
    if (q < -1e-12 || q > 1.0 + 1e-12) throw std::domain_error("state v+p escaped [0,1]");
    const double qq = std::clamp(q, 0.0, 1.0);
    return std::sqrt(2.0 * params.alpha * params.theta0 * qq * (1.0 - qq));
}

/// Lower end of the transformed state space: z in [-pi / sqrt(2 a t0), 0].
inline double z_lower_bound(const ModelParams& params) {
    return -std::numbers::pi / std::sqrt(2.0 * params.alpha * params.theta0);
}

/// Variance-stabilizing transform z = -sqrt(2/(alpha theta0)) asin(sqrt(1-v-p)).
/// Monotone increasing in v; maps v+p=0 to the lower bound and v+p=1 to 0.
inline double lamperti_forward(const ModelParams& params, double v, double p) {
    params.validate();
    if (!(params.alpha > 0.0)) throw std::domain_error("transform undefined for alpha = 0");
    const double q = v + p;
    if (q < -1e-12 || q > 1.0 + 1e-12) throw std::domain_error("state v+p escaped [0,1]");
    const double qq = std::clamp(q, 0.0, 1.0);
    return -std::sqrt(2.0 / (params.alpha * params.theta0)) * std::asin(std::sqrt(1.0 - qq));
}

/// Exact inverse of lamperti_forward: v = 1 - p - sin^2(-sqrt(a t0 / 2) z).
inline double lamperti_inverse(const ModelParams& params, double z, double p) {
    params.validate();
    if (!(params.alpha > 0.0)) throw std::domain_error("transform undefined for alpha = 0");
    const double zmin = z_lower_bound(params);
    if (z < zmin - 1e-9 * std::abs(zmin) || z > 1e-9 * std::abs(zmin))
        throw std::domain_error("z outside transform range");
    const double s = std::sin(-std::sqrt(params.alpha * params.theta0 / 2.0) * z);
    return 1.0 - p - s * s;
}

namespace detail {

/// Clamps z away from the singular endpoints by eta = 1e-9 * range. Sets
/// *clamped when the guard fired. Values materially outside the range are a
/// domain error, not a clamp.
inline double clamp_z_interior(const ModelParams& params, double z, bool* clamped) {
    const double zmin = z_lower_bound(params);
    const double range = -zmin;
    const double eta = 1e-9 * range;
    if (z < zmin - 1e-6 * range || z > 1e-6 * range)
        throw std::domain_error("z outside transform range");
    const double zc = std::clamp(z, zmin + eta, -eta);
    if (clamped && zc != z) *clamped = true;
    return zc;
}

}  // namespace detail

/// Drift of the transformed process (unit diffusion):
///   [2 p_dot - theta_t (1 - 2p) + (alpha theta0 - theta_t) cos(-s z)] / (s sin(-s z)),
/// with s = sqrt(2 alpha theta0). Singular at the range endpoints; evaluation
/// clamps z slightly inside and reports it via *clamped.
inline double drift_z(const ModelParams& params, double z, double p, double p_dot,
                      bool* clamped = nullptr) {
    const double zc = detail::clamp_z_interior(params, z, clamped);
    const double th = theta_t(params, p, p_dot);
    const double at0 = params.alpha * params.theta0;
    const double s = std::sqrt(2.0 * at0);
    const double u = -s * zc;  // in (0, pi)
    const double num = 2.0 * p_dot - th * (1.0 - 2.0 * p) + (at0 - th) * std::cos(u);
    return num / (s * std::sin(u));
}

/// d(drift_z)/dz at fixed (p, p_dot):
///   [(alpha theta0 - theta_t) - cos(s z) (theta_t (1 - 2p) - 2 p_dot)] / sin^2(s z).
inline double drift_z_prime(const ModelParams& params, double z, double p, double p_dot,
                            bool* clamped = nullptr) {
    const double zc = detail::clamp_z_interior(params, z, clamped);
    const double th = theta_t(params, p, p_dot);
    const double at0 = params.alpha * params.theta0;
    const double s = std::sqrt(2.0 * at0);
    const double sz = s * zc;
    const double si = std::sin(sz);
    return ((at0 - th) - std::cos(sz) * (th * (1.0 - 2.0 * p) - 2.0 * p_dot)) / (si * si);
}

// --------------------------------------------------------------- validity ---

struct ConditionViolation {
    double time = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
};

/// Pointwise report of the two rate conditions:
///  (A) 0 <= p_dot + theta_t p <= theta_t   (existence / uniqueness in [0,1])
///  (B) theta_t >= max((a t0 + p_dot)/(1-p), (a t0 - p_dot)/p)  (no boundary hits)
/// Violations are recorded as (time, lhs, rhs); for (A) the value must lie in
/// [0, rhs], for (B) lhs is the required bound that exceeded theta_t = rhs.
struct ValidityReport {
    bool condition_a_ok = true;
    bool condition_b_ok = true;
    std::vector<ConditionViolation> violations_a;
    std::vector<ConditionViolation> violations_b;
};

inline ValidityReport check_conditions(const ForecastCurve& curve, const ModelParams& params,
                                       const std::vector<double>& grid) {
    ValidityReport report;
    for (double t : grid) {
        const double p = curve.value(t);
        const double pd = curve.derivative(t);
        const double th = theta_t(params, p, pd);

        const double a_val = pd + th * p;
        if (a_val < -1e-12 || a_val > th + 1e-12) {
            report.condition_a_ok = false;
            report.violations_a.push_back({t, a_val, th});
        }
        const double b_bound =
            std::max((params.alpha * params.theta0 + pd) / (1.0 - p),
                     (params.alpha * params.theta0 - pd) / p);
        if (b_bound > th + 1e-12) {
            report.condition_b_ok = false;
            report.violations_b.push_back({t, b_bound, th});
        }
    }
    return report;
}

}  // namespace fsde
