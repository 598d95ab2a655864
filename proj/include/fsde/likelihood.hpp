#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "fsde/data.hpp"
#include "fsde/model.hpp"
#include "fsde/moments.hpp"
#include "fsde/util.hpp"

namespace fsde {

// ------------------------------------------------------------ beta proxy ---

/// Shape pair of a Beta surrogate on [-1+eps, 1-eps].
struct BetaShapes {
    double xi1 = 1.0;
    double xi2 = 1.0;
    double epsilon = 0.0;

    double mean() const {
        const double w = 2.0 * (1.0 - epsilon);
        return -(1.0 - epsilon) + w * xi1 / (xi1 + xi2);
    }
    double variance() const {
        const double w = 2.0 * (1.0 - epsilon);
        const double s = xi1 + xi2;
        return w * w * xi1 * xi2 / (s * s * (s + 1.0));
    }
};

struct infeasible_moments : std::domain_error {
    using std::domain_error::domain_error;
};

/// Shape parameters of the Beta on [-1+eps, 1-eps] with the given mean and
/// variance. Throws infeasible_moments when no such Beta exists
/// (requires |mu| < 1-eps and 0 < sigma2 < (1-eps)^2 - mu^2).
inline BetaShapes beta_shapes_from_moments(double mu, double sigma2, double eps) {
    if (!(eps >= 0.0 && eps < 0.5)) throw std::invalid_argument("truncation level must be in [0, 1/2)");
    const double b = 1.0 - eps;
    if (!(sigma2 > 0.0)) throw infeasible_moments("variance must be positive");
    if (!(mu > -b && mu < b)) throw infeasible_moments("mean outside the Beta support");
    const double common = (mu * mu + sigma2 - b * b) / (2.0 * b * sigma2);
    BetaShapes s;
    s.xi1 = -(mu + b) * common;
    s.xi2 = (mu - b) * common;
    s.epsilon = eps;
    if (!(s.xi1 > 0.0) || !(s.xi2 > 0.0))
        throw infeasible_moments("moment pair infeasible for a Beta on this support");
    return s;
}

inline double log_beta_fn(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

/// Log-density at v of the Beta surrogate scaled to [-1+eps, 1-eps].
inline double beta_transition_logpdf(double v, const BetaShapes& s) {
    const double b = 1.0 - s.epsilon;
    const double w = 2.0 * b;
    if (!(v > -b && v < b)) throw std::domain_error("observation outside Beta support");
    return -std::log(w) - log_beta_fn(s.xi1, s.xi2) + (s.xi1 - 1.0) * std::log((v + b) / w) +
           (s.xi2 - 1.0) * std::log((b - v) / w);
}

inline double gaussian_logpdf(double x, double mean, double var) {
    if (!(var > 0.0)) throw std::domain_error("Gaussian variance must be positive");
    const double d = x - mean;
    return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * d * d / var;
}

// --------------------------------------------------------------- results ---

struct LogLikFlags {
    long variance_floored = 0;  ///< sigma^2 raised to the floor
    long variance_shrunk = 0;   ///< sigma^2 pulled below the feasibility bound
    long obs_clamped = 0;       ///< observations nudged inside the support
    long z_clamped = 0;         ///< transformed-drift boundary guards hit
    long skipped = 0;           ///< transitions dropped after a numeric failure

    long total() const {
        return variance_floored + variance_shrunk + obs_clamped + z_clamped + skipped;
    }
    void merge(const LogLikFlags& o) {
        variance_floored += o.variance_floored;
        variance_shrunk += o.variance_shrunk;
        obs_clamped += o.obs_clamped;
        z_clamped += o.z_clamped;
        skipped += o.skipped;
    }
};

struct LogLikValue {
    double value = 0.0;
    long n_transitions = 0;
    LogLikFlags flags;
};

struct InformationCriteria {
    double aic = 0.0;
    double bic = 0.0;
    int k = 0;
    long n = 0;
};

inline InformationCriteria information_criteria(const LogLikValue& ll, int k) {
    if (ll.n_transitions <= 0) throw std::invalid_argument("information criteria need n > 0");
    InformationCriteria ic;
    ic.k = k;
    ic.n = ll.n_transitions;
    ic.aic = 2.0 * k - 2.0 * ll.value;
    ic.bic = k * std::log(static_cast<double>(ll.n_transitions)) - 2.0 * ll.value;
    return ic;
}

struct LikConfig {
    IntegratorConfig integrator{};
    int threads = 0;                    ///< 0 = hardware concurrency
    double variance_floor = 1e-10;
    double feasibility_shrink = 0.999;  ///< fraction of the bound used when exceeded
    double obs_clamp = 1e-12;
    double z_variance_floor = 1e-12;
};

/// Beta shapes matched to (mu, sigma2) with the degenerate-transition policy:
/// the variance is floored, and pulled to shrink * bound when it exceeds the
/// feasibility bound. Still throws when the mean itself is infeasible.
inline BetaShapes matched_beta(double mu, double sigma2, double eps, const LikConfig& cfg,
                               LogLikFlags& flags) {
    if (sigma2 < cfg.variance_floor) {
        sigma2 = cfg.variance_floor;
        ++flags.variance_floored;
    }
    const double bound = (1.0 - eps) * (1.0 - eps) - mu * mu;
    if (!(bound > 0.0)) throw infeasible_moments("mean at the support edge");
    if (sigma2 >= bound) {
        sigma2 = cfg.feasibility_shrink * bound;
        ++flags.variance_shrunk;
    }
    return beta_shapes_from_moments(mu, sigma2, eps);
}

namespace detail {

/// Evaluates fn for every transition of every segment (parallel over
/// segments), then reduces the per-transition terms by a pairwise tree in a
/// fixed order. Results are bit-stable for any thread count.
template <class Fn>
LogLikValue accumulate_transitions(const PreparedData& data, const LikConfig& cfg, Fn&& fn) {
    const std::size_t nseg = data.segments.size();
    std::vector<std::size_t> offset(nseg + 1, 0);
    for (std::size_t j = 0; j < nseg; ++j)
        offset[j + 1] = offset[j] + (data.segments[j].times.size() - 1);

    std::vector<double> terms(offset[nseg], 0.0);
    std::vector<LogLikFlags> segflags(nseg);

    parallel_chunks(nseg, cfg.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t j = b; j < e; ++j) {
            const PreparedSegment& seg = data.segments[j];
            for (std::size_t i = 1; i < seg.times.size(); ++i) {
                try {
                    terms[offset[j] + i - 1] = fn(j, seg, i, segflags[j]);
                } catch (const std::exception&) {
                    ++segflags[j].skipped;
                }
            }
        }
    });

    LogLikValue out;
    out.value = pairwise_sum(terms);
    out.n_transitions = static_cast<long>(terms.size());
    for (const auto& f : segflags) out.flags.merge(f);
    return out;
}

inline double clamp_observation(double v, double eps, const LikConfig& cfg, LogLikFlags& flags) {
    const double b = 1.0 - eps;
    const double vv = std::clamp(v, -b + cfg.obs_clamp, b - cfg.obs_clamp);
    if (vv != v) ++flags.obs_clamped;
    return vv;
}

}  // namespace detail

// ------------------------------------------------------------ likelihoods ---

/// Approximate log-likelihood with Beta surrogate transition densities in the
/// error space: per transition, the moment system is integrated from the
/// previous observation and a Beta is matched to the resulting moments.
inline LogLikValue loglik_v(const ModelParams& params, const PreparedData& data,
                            const LikConfig& cfg = {}) {
    params.validate();
    return detail::accumulate_transitions(
        data, cfg, [&](std::size_t, const PreparedSegment& seg, std::size_t i, LogLikFlags& flags) {
            const MomentStateV m =
                integrate_v_moments(seg.v[i - 1], seg.times[i - 1], seg.times[i], seg.curve,
                                    params, cfg.integrator);
            const BetaShapes shapes = matched_beta(m.m1, m.variance(), data.epsilon, cfg, flags);
            const double v = detail::clamp_observation(seg.v[i], data.epsilon, cfg, flags);
            return beta_transition_logpdf(v, shapes);
        });
}

inline LogLikValue loglik_v(const ModelParams& params, const SegmentSet& set, double eps,
                            const LikConfig& cfg = {}) {
    return loglik_v(params, prepare(set, eps), cfg);
}

/// Gaussian-proxy variant of loglik_v: identical moment pipeline, Gaussian
/// transition density with mean m1 and variance m2 - m1^2.
inline LogLikValue loglik_v_gaussian(const ModelParams& params, const PreparedData& data,
                                     const LikConfig& cfg = {}) {
    params.validate();
    return detail::accumulate_transitions(
        data, cfg, [&](std::size_t, const PreparedSegment& seg, std::size_t i, LogLikFlags& flags) {
            const MomentStateV m =
                integrate_v_moments(seg.v[i - 1], seg.times[i - 1], seg.times[i], seg.curve,
                                    params, cfg.integrator);
            double var = m.variance();
            if (var < cfg.variance_floor) {
                var = cfg.variance_floor;
                ++flags.variance_floored;
            }
            return gaussian_logpdf(seg.v[i], m.m1, var);
        });
}

inline LogLikValue loglik_v_gaussian(const ModelParams& params, const SegmentSet& set, double eps,
                                     const LikConfig& cfg = {}) {
    return loglik_v_gaussian(params, prepare(set, eps), cfg);
}

/// Observations mapped through the variance-stabilizing transform at the
/// given parameters, segment-aligned with the prepared data.
inline std::vector<std::vector<double>> transform_observations(const ModelParams& params,
                                                               const PreparedData& data) {
    std::vector<std::vector<double>> z(data.segments.size());
    for (std::size_t j = 0; j < data.segments.size(); ++j) {
        const PreparedSegment& seg = data.segments[j];
        z[j].resize(seg.v.size());
        for (std::size_t i = 0; i < seg.v.size(); ++i)
            z[j][i] = lamperti_forward(params, seg.v[i], seg.curve.value(seg.times[i]));
    }
    return z;
}

/// Gaussian log-likelihood in the transformed space with the transformed data
/// frozen (the fixed-point inner objective).
inline LogLikValue loglik_z_frozen(const ModelParams& params, const PreparedData& data,
                                   const std::vector<std::vector<double>>& z,
                                   const LikConfig& cfg = {}) {
    params.validate();
    if (z.size() != data.segments.size())
        throw std::invalid_argument("frozen data misaligned with segments");
    return detail::accumulate_transitions(
        data, cfg, [&](std::size_t j, const PreparedSegment& seg, std::size_t i, LogLikFlags& flags) {
            const ZMomentResult r =
                integrate_z_moments(z[j][i - 1], seg.times[i - 1], seg.times[i], seg.curve,
                                    params, cfg.integrator);
            flags.z_clamped += r.clamp_events;
            double var = r.state.var;
            if (var < cfg.z_variance_floor) {
                var = cfg.z_variance_floor;
                ++flags.variance_floored;
            }
            return gaussian_logpdf(z[j][i], r.state.mu, var);
        });
}

/// Self-consistent transformed-space log-likelihood: data transformed at the
/// same parameters used for the moment system.
inline LogLikValue loglik_z(const ModelParams& params, const PreparedData& data,
                            const LikConfig& cfg = {}) {
    return loglik_z_frozen(params, data, transform_observations(params, data), cfg);
}

inline LogLikValue loglik_z(const ModelParams& params, const SegmentSet& set, double eps,
                            const LikConfig& cfg = {}) {
    return loglik_z(params, prepare(set, eps), cfg);
}

/// Early-transition log-likelihood: each segment contributes the density of
/// its first observed error, reached from a zero error at the backward
/// extrapolation point delta hours before the segment start. The substep
/// budget scales with delta so accuracy per unit time matches the interior
/// transitions.
inline LogLikValue loglik_delta(const ModelParams& params, double delta, const PreparedData& data,
                                const LikConfig& cfg = {}) {
    params.validate();
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");

    double h_obs = 1.0 / 6.0;
    for (const auto& seg : data.segments)
        if (seg.times.size() >= 2) {
            h_obs = seg.times[1] - seg.times[0];
            break;
        }
    IntegratorConfig integ = cfg.integrator;
    integ.substeps = static_cast<int>(std::min<double>(
        200000.0, integ.substeps * std::max(1.0, std::ceil(delta / h_obs))));

    const std::size_t nseg = data.segments.size();
    std::vector<double> terms(nseg, 0.0);
    std::vector<LogLikFlags> segflags(nseg);
    parallel_chunks(nseg, cfg.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t j = b; j < e; ++j) {
            const PreparedSegment& seg = data.segments[j];
            try {
                const ForecastCurve ext = seg.curve.extended_backward(delta);
                const double t0 = seg.times.front();
                const MomentStateV m = integrate_v_moments(0.0, t0 - delta, t0, ext, params,
                                                           integ);
                const BetaShapes shapes =
                    matched_beta(m.m1, m.variance(), data.epsilon, cfg, segflags[j]);
                const double v0 =
                    detail::clamp_observation(seg.v.front(), data.epsilon, cfg, segflags[j]);
                terms[j] = beta_transition_logpdf(v0, shapes);
            } catch (const std::exception&) {
                ++segflags[j].skipped;
            }
        }
    });

    LogLikValue out;
    out.value = pairwise_sum(terms);
    out.n_transitions = static_cast<long>(nseg);
    for (const auto& f : segflags) out.flags.merge(f);
    return out;
}

/// Complete log-likelihood: interior transitions plus the early transition.
inline LogLikValue loglik_complete(const ModelParams& params, double delta,
                                   const PreparedData& data, const LikConfig& cfg = {}) {
    const LogLikValue a = loglik_v(params, data, cfg);
    const LogLikValue b = loglik_delta(params, delta, data, cfg);
    LogLikValue out;
    out.value = a.value + b.value;
    out.n_transitions = a.n_transitions + b.n_transitions;
    out.flags = a.flags;
    out.flags.merge(b.flags);
    return out;
}

inline LogLikValue loglik_complete(const ModelParams& params, double delta, const SegmentSet& set,
                                   double eps, const LikConfig& cfg = {}) {
    return loglik_complete(params, delta, prepare(set, eps), cfg);
}

}  // namespace fsde
