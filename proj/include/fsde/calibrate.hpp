#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <initializer_list>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsde/data.hpp"
#include "fsde/likelihood.hpp"
#include "fsde/model.hpp"

namespace fsde {

// ---------------------------------------------------------- initial guess ---

struct InitialGuess {
    double theta0_star = 0.0;
    double alpha_star = 0.0;
    std::optional<double> delta_star;
    bool theta0_clamped = false;  ///< closed-form rate came out nonpositive
};

/// Closed-form least-squares rate guess from one-step error decay:
///   c = sum v_{i-1} (v_{i-1} - v_i) / (delta * sum v_{i-1}^2).
/// Clamped to >= 1e-6 (flagged) when nonpositive.
inline double guess_theta0(const PreparedData& data, double delta_obs, bool* clamped = nullptr) {
    double num = 0.0, den = 0.0;
    for (const auto& seg : data.segments)
        for (std::size_t i = 1; i < seg.v.size(); ++i) {
            num += seg.v[i - 1] * (seg.v[i - 1] - seg.v[i]);
            den += seg.v[i - 1] * seg.v[i - 1];
        }
    if (!(den > 0.0)) throw std::invalid_argument("degenerate data: all previous errors are zero");
    double c = num / (delta_obs * den);
    if (!(c > 0.0)) {
        c = 1e-6;
        if (clamped) *clamped = true;
    }
    return c;
}

/// Quadratic-variation guess for the diffusion variability product:
///   theta0 * alpha = sum (v_i - v_{i-1})^2 / (2 delta * sum (v_i + p_i)(1 - v_i - p_i)).
inline double guess_product(const PreparedData& data, double delta_obs) {
    double num = 0.0, den = 0.0;
    for (const auto& seg : data.segments)
        for (std::size_t i = 1; i < seg.v.size(); ++i) {
            const double dv = seg.v[i] - seg.v[i - 1];
            num += dv * dv;
            const double q = seg.v[i] + seg.curve.value(seg.times[i]);
            den += q * (1.0 - q);
        }
    den *= 2.0 * delta_obs;
    if (!(den > 0.0)) throw std::invalid_argument("degenerate data: quadratic-variation denominator is zero");
    return num / den;
}

inline InitialGuess initial_guess(const PreparedData& data) {
    InitialGuess g;
    const double d = data.delta_hours();
    g.theta0_star = guess_theta0(data, d, &g.theta0_clamped);
    g.alpha_star = guess_product(data, d) / g.theta0_star;
    return g;
}

// ------------------------------------------------------------ nelder-mead ---

struct OptimizerConfig {
    double init_step = 0.2;   ///< simplex edge length around the start point
    double x_tol = 1e-6;      ///< simplex diameter stop
    double f_tol = 1e-8;      ///< relative best/worst spread stop
    int max_evals = 2000;
};

struct NelderMeadResult {
    std::vector<double> x;
    double f = 0.0;
    int evaluations = 0;
    bool converged = false;
};

/// Standard simplex search (reflection 1, expansion 2, contraction 1/2,
/// shrink 1/2). Stops on simplex diameter, relative f-spread, or budget.
inline NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                    const std::vector<double>& x0,
                                    const OptimizerConfig& cfg = {}) {
    const std::size_t n = x0.size();
    if (n == 0) throw std::invalid_argument("empty start point");

    int evals = 0;
    auto eval = [&](const std::vector<double>& x) {
        ++evals;
        const double y = f(x);
        return std::isfinite(y) ? y : std::numeric_limits<double>::max();
    };

    std::vector<std::vector<double>> xs(n + 1, x0);
    for (std::size_t i = 0; i < n; ++i) xs[i + 1][i] += cfg.init_step;
    std::vector<double> fs(n + 1);
    for (std::size_t i = 0; i <= n; ++i) fs[i] = eval(xs[i]);

    auto order = [&]() {
        for (std::size_t i = 1; i <= n; ++i) {  // insertion sort, simplex is tiny
            auto xv = xs[i];
            auto fv = fs[i];
            std::size_t j = i;
            while (j > 0 && fs[j - 1] > fv) {
                xs[j] = xs[j - 1];
                fs[j] = fs[j - 1];
                --j;
            }
            xs[j] = std::move(xv);
            fs[j] = fv;
        }
    };

    bool converged = false;
    while (evals < cfg.max_evals) {
        order();
        double diam = 0.0;
        for (std::size_t i = 1; i <= n; ++i)
            for (std::size_t d = 0; d < n; ++d)
                diam = std::max(diam, std::abs(xs[i][d] - xs[0][d]));
        const double spread = std::abs(fs[n] - fs[0]);
        if (diam < cfg.x_tol || spread <= cfg.f_tol * std::max(1.0, std::abs(fs[0]))) {
            converged = true;
            break;
        }

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t d = 0; d < n; ++d) centroid[d] += xs[i][d] / static_cast<double>(n);

        auto at = [&](double coef) {
            std::vector<double> p(n);
            for (std::size_t d = 0; d < n; ++d) p[d] = centroid[d] + coef * (centroid[d] - xs[n][d]);
            return p;
        };

        const auto xr = at(1.0);
        const double fr = eval(xr);
        if (fr < fs[0]) {
            const auto xe = at(2.0);
            const double fe = eval(xe);
            if (fe < fr) {
                xs[n] = xe;
                fs[n] = fe;
            } else {
                xs[n] = xr;
                fs[n] = fr;
            }
        } else if (fr < fs[n - 1]) {
            xs[n] = xr;
            fs[n] = fr;
        } else {
            const bool outside = fr < fs[n];
            const auto xc = at(outside ? 0.5 : -0.5);
            const double fc = eval(xc);
            if (fc < (outside ? fr : fs[n])) {
                xs[n] = xc;
                fs[n] = fc;
            } else {
                for (std::size_t i = 1; i <= n; ++i) {
                    for (std::size_t d = 0; d < n; ++d)
                        xs[i][d] = xs[0][d] + 0.5 * (xs[i][d] - xs[0][d]);
                    fs[i] = eval(xs[i]);
                }
            }
        }
    }
    order();
    return {xs[0], fs[0], evals, converged};
}

// ------------------------------------------------------------------ fits ---

enum class Proxy { Beta, Gaussian };

enum class FitMethod { VBeta, VGauss, ZFixedPoint, Complete };

inline const char* to_string(FitMethod m) {
    switch (m) {
        case FitMethod::VBeta: return "v_beta";
        case FitMethod::VGauss: return "v_gauss";
        case FitMethod::ZFixedPoint: return "z_fixed_point";
        case FitMethod::Complete: return "complete";
    }
    return "?";
}

struct FitConfig {
    OptimizerConfig optimizer{};
    LikConfig lik{};
};

struct FixedPointConfig {
    int max_iters = 25;
    double fp_tol = 1e-3;     ///< relative parameter change stop
    double damping = 0.5;     ///< applied to the first damped_iters updates
    int damped_iters = 2;
};

struct FixedPointTrace {
    std::vector<std::array<double, 2>> iterates;  ///< (theta0, alpha) per outer step
    std::vector<double> residuals;                ///< relative change per update
    bool converged = false;
};

struct OptTrace {
    std::string method;
    int evaluations = 0;
    bool converged = true;
    InitialGuess guess;
};

struct CalibrationResult {
    ModelParams params;
    std::optional<double> delta;
    LogLikValue loglik;
    InformationCriteria criteria;
    OptTrace trace;
    std::optional<FixedPointTrace> fixed_point;

    double product() const { return params.theta0 * params.alpha; }
};

namespace detail {

inline std::vector<double> to_log(std::initializer_list<double> xs) {
    std::vector<double> out;
    for (double x : xs) out.push_back(std::log(std::max(x, 1e-12)));
    return out;
}

}  // namespace detail

/// Maximum-likelihood fit of (theta0, alpha) in log space against the error
/// space likelihood (Beta or Gaussian proxy).
inline CalibrationResult fit_v_space(const PreparedData& data, const FitConfig& cfg = {},
                                     ModelKind kind = ModelKind::DerivativeTracking,
                                     Proxy proxy = Proxy::Beta) {
    InitialGuess g;
    try {
        g = initial_guess(data);
    } catch (const std::invalid_argument&) {
        // Degenerate data (e.g. all errors zero): start at the floor, flagged.
        g = InitialGuess{1.0, 1e-6, std::nullopt, true};
    }

    auto lik = [&](const ModelParams& p) {
        return proxy == Proxy::Beta ? loglik_v(p, data, cfg.lik)
                                    : loglik_v_gaussian(p, data, cfg.lik);
    };
    auto objective = [&](const std::vector<double>& x) {
        const ModelParams p{std::exp(x[0]), std::exp(x[1]), kind};
        return -lik(p).value;
    };

    const auto r = nelder_mead(objective, detail::to_log({g.theta0_star, g.alpha_star}),
                               cfg.optimizer);

    CalibrationResult out;
    out.params = ModelParams{std::exp(r.x[0]), std::exp(r.x[1]), kind};
    out.loglik = lik(out.params);
    out.criteria = information_criteria(out.loglik, 2);
    out.trace = {proxy == Proxy::Beta ? "v_beta" : "v_gauss", r.evaluations, r.converged, g};
    return out;
}

inline CalibrationResult fit_v_space(const SegmentSet& set, double eps, const FitConfig& cfg = {},
                                     ModelKind kind = ModelKind::DerivativeTracking,
                                     Proxy proxy = Proxy::Beta) {
    return fit_v_space(prepare(set, eps), cfg, kind, proxy);
}

/// Fixed-point fit in the transformed space: alternately (1) transform the
/// observations at the current parameters and (2) maximize the frozen-data
/// Gaussian likelihood, damping the first updates, until the parameter
/// vector is self-consistent.
///
/// On finite samples the exact self-consistency equation may have no
/// positive solution: the inner argmax can sit a few percent below any
/// transform product, so undamped iteration decays geometrically instead of
/// settling. That regime is detected (consecutive same-direction updates
/// whose residual stops shrinking) and the iterate with the smallest
/// self-inconsistency is returned, flagged as non-converged.
inline CalibrationResult fit_z_space_fixed_point(const PreparedData& data,
                                                 const FitConfig& cfg = {},
                                                 const FixedPointConfig& fp = {},
                                                 ModelKind kind = ModelKind::DerivativeTracking) {
    // Anchor the first transform at the error-space optimum rather than the
    // raw quadratic-variation guess: the frozen-data likelihood pulls the
    // product only weakly per iteration, so the anchor carries most of the
    // information.
    const CalibrationResult vfit = fit_v_space(data, cfg, kind, Proxy::Beta);
    const InitialGuess g = vfit.trace.guess;

    FixedPointTrace trace;
    ModelParams cur = vfit.params;
    trace.iterates.push_back({cur.theta0, cur.alpha});

    int evals = vfit.trace.evaluations;
    double best_resid = std::numeric_limits<double>::infinity();
    ModelParams best = cur;
    double prev_resid = std::numeric_limits<double>::infinity();
    int prev_dir = 0;

    for (int it = 0; it < fp.max_iters; ++it) {
        const auto z = transform_observations(cur, data);
        auto objective = [&](const std::vector<double>& x) {
            const ModelParams p{std::exp(x[0]), std::exp(x[1]), kind};
            return -loglik_z_frozen(p, data, z, cfg.lik).value;
        };
        const auto inner =
            nelder_mead(objective, detail::to_log({cur.theta0, cur.alpha}), cfg.optimizer);
        evals += inner.evaluations;
        const ModelParams argmax{std::exp(inner.x[0]), std::exp(inner.x[1]), kind};

        // Self-inconsistency of the current iterate; ties keep the earliest.
        const double resid = std::hypot(argmax.theta0 - cur.theta0, argmax.alpha - cur.alpha) /
                             std::max(1e-12, std::hypot(cur.theta0, cur.alpha));
        if (resid < best_resid) {
            best_resid = resid;
            best = cur;
        }
        trace.residuals.push_back(resid);
        if (resid < fp.fp_tol) {
            trace.converged = true;
            trace.iterates.push_back({argmax.theta0, argmax.alpha});
            best = cur;
            break;
        }

        const double w = it < fp.damped_iters ? fp.damping : 0.0;
        // Geometric damping keeps the iterate strictly positive.
        ModelParams next{std::exp((1.0 - w) * inner.x[0] + w * std::log(cur.theta0)),
                         std::exp((1.0 - w) * inner.x[1] + w * std::log(cur.alpha)), kind};

        // A same-direction update whose residual has stopped shrinking after
        // the damped phase is the no-root signature.
        const int dir = next.theta0 * next.alpha > cur.theta0 * cur.alpha ? 1 : -1;
        const bool drifting = w == 0.0 && dir == prev_dir && resid > 0.7 * prev_resid;
        prev_dir = dir;
        prev_resid = resid;

        cur = next;
        trace.iterates.push_back({cur.theta0, cur.alpha});
        if (drifting) break;
    }

    CalibrationResult out;
    out.params = best;
    out.params.kind = kind;
    out.loglik = loglik_z(out.params, data, cfg.lik);
    out.criteria = information_criteria(out.loglik, 2);
    out.trace = {"z_fixed_point", evals, trace.converged, g};
    out.fixed_point = std::move(trace);
    return out;
}

inline CalibrationResult fit_z_space_fixed_point(const SegmentSet& set, double eps,
                                                 const FitConfig& cfg = {},
                                                 const FixedPointConfig& fp = {},
                                                 ModelKind kind = ModelKind::DerivativeTracking) {
    return fit_z_space_fixed_point(prepare(set, eps), cfg, fp, kind);
}

// ------------------------------------------------------------- delta fits ---

struct DeltaFitConfig {
    double delta_min = 0.0;   ///< 0 = one tenth of the sampling interval
    double delta_max = 24.0;  ///< hours
    int grid_points = 20;
    double tol = 1e-4;        ///< golden-section interval width (hours)
};

struct DeltaFitResult {
    double delta = 0.0;
    double loglik = 0.0;
    bool at_boundary = false;
};

/// Maximizes the early-transition likelihood over delta. A log-spaced coarse
/// grid locates the mode; golden-section refines it when the grid argmax is
/// interior, otherwise the boundary point is returned flagged.
inline DeltaFitResult fit_delta(const ModelParams& params, const PreparedData& data,
                                const FitConfig& cfg = {}, const DeltaFitConfig& dcfg = {}) {
    const double lo = dcfg.delta_min > 0.0 ? dcfg.delta_min : data.delta_hours() / 10.0;
    const double hi = dcfg.delta_max;
    if (!(hi > lo)) throw std::invalid_argument("empty delta search interval");

    auto ll = [&](double d) { return loglik_delta(params, d, data, cfg.lik).value; };

    const int m = std::max(dcfg.grid_points, 4);
    std::vector<double> grid(m), val(m);
    for (int i = 0; i < m; ++i) {
        grid[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (m - 1));
        val[i] = ll(grid[i]);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (val[i] > val[best]) best = i;

    DeltaFitResult out;
    if (best == 0 || best + 1 == grid.size()) {
        out.delta = grid[best];
        out.loglik = val[best];
        out.at_boundary = true;
        return out;
    }

    double a = grid[best - 1], b = grid[best + 1];
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a), d = a + invphi * (b - a);
    double fc = ll(c), fd = ll(d);
    while (b - a > dcfg.tol) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = ll(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = ll(d);
        }
    }
    out.delta = 0.5 * (a + b);
    out.loglik = ll(out.delta);
    return out;
}

/// Joint fit of (theta0, alpha, delta) against the complete likelihood,
/// started from the error-space fit and the delta profile at those
/// parameters.
inline CalibrationResult fit_complete(const PreparedData& data, const FitConfig& cfg = {},
                                      ModelKind kind = ModelKind::DerivativeTracking,
                                      const DeltaFitConfig& dcfg = {}) {
    CalibrationResult base = fit_v_space(data, cfg, kind, Proxy::Beta);
    const DeltaFitResult d0 = fit_delta(base.params, data, cfg, dcfg);

    auto objective = [&](const std::vector<double>& x) {
        const ModelParams p{std::exp(x[0]), std::exp(x[1]), kind};
        return -loglik_complete(p, std::exp(x[2]), data, cfg.lik).value;
    };
    const auto r = nelder_mead(
        objective, detail::to_log({base.params.theta0, base.params.alpha, d0.delta}),
        cfg.optimizer);

    CalibrationResult out;
    out.params = ModelParams{std::exp(r.x[0]), std::exp(r.x[1]), kind};
    out.delta = std::exp(r.x[2]);
    out.loglik = loglik_complete(out.params, *out.delta, data, cfg.lik);
    out.criteria = information_criteria(out.loglik, 3);
    out.trace = {"complete", r.evaluations, r.converged, base.trace.guess};
    return out;
}

inline CalibrationResult fit_complete(const SegmentSet& set, double eps, const FitConfig& cfg = {},
                                      ModelKind kind = ModelKind::DerivativeTracking,
                                      const DeltaFitConfig& dcfg = {}) {
    return fit_complete(prepare(set, eps), cfg, kind, dcfg);
}

// -------------------------------------------------------- model comparison ---

struct ComparisonRow {
    int model = 2;  ///< 1 = Plain, 2 = DerivativeTracking
    std::string provider;
    FitMethod method = FitMethod::VBeta;
    std::optional<CalibrationResult> result;
    std::string error;
};

struct ProviderData {
    std::string provider;
    PreparedData train;
};

inline CalibrationResult run_fit(const PreparedData& data, ModelKind kind, FitMethod method,
                                 const FitConfig& cfg, const FixedPointConfig& fp = {},
                                 const DeltaFitConfig& dcfg = {}) {
    switch (method) {
        case FitMethod::VBeta: return fit_v_space(data, cfg, kind, Proxy::Beta);
        case FitMethod::VGauss: return fit_v_space(data, cfg, kind, Proxy::Gaussian);
        case FitMethod::ZFixedPoint: return fit_z_space_fixed_point(data, cfg, fp, kind);
        case FitMethod::Complete: return fit_complete(data, cfg, kind, dcfg);
    }
    throw std::logic_error("unknown fit method");
}

/// Runs every (model, provider, method) cell on its training set. Failures
/// are recorded per cell; rows come back sorted by AIC (ties by BIC, then by
/// smaller product).
inline std::vector<ComparisonRow> compare_models(const std::vector<ProviderData>& providers,
                                                 const std::vector<int>& models,
                                                 const std::vector<FitMethod>& methods,
                                                 const FitConfig& cfg = {},
                                                 const FixedPointConfig& fp = {}) {
    std::vector<ComparisonRow> rows;
    for (int model : models) {
        if (model != 1 && model != 2) throw std::invalid_argument("model must be 1 or 2");
        const ModelKind kind = model == 1 ? ModelKind::Plain : ModelKind::DerivativeTracking;
        for (const auto& pd : providers)
            for (FitMethod method : methods) {
                ComparisonRow row;
                row.model = model;
                row.provider = pd.provider;
                row.method = method;
                try {
                    row.result = run_fit(pd.train, kind, method, cfg, fp);
                } catch (const std::exception& e) {
                    row.error = e.what();
                }
                rows.push_back(std::move(row));
            }
    }
    std::stable_sort(rows.begin(), rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
        if (!a.result || !b.result) return static_cast<bool>(a.result) > static_cast<bool>(b.result);
        if (a.result->criteria.aic != b.result->criteria.aic)
            return a.result->criteria.aic < b.result->criteria.aic;
        if (a.result->criteria.bic != b.result->criteria.bic)
            return a.result->criteria.bic < b.result->criteria.bic;
        return a.result->product() < b.result->product();
    });
    return rows;
}

}  // namespace fsde
