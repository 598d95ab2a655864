// Command-line front end: synthetic data generation, ingestion, validity
// checks, calibration, model comparison, path simulation, and confidence
// bands. Every command echoes its effective configuration into a manifest
// so runs can be reproduced byte for byte.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fsde/io.hpp"
#include "fsde/selftest.hpp"

namespace {

using nlohmann::json;

struct SeedFlag {
    std::optional<std::uint64_t> given;
    std::uint64_t resolved = 0;
    bool drawn = false;

    std::uint64_t resolve() {
        if (given) {
            resolved = *given;
        } else {
            std::random_device rd;
            resolved = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
            drawn = true;
        }
        return resolved;
    }
};

std::vector<std::string> rerun_argv(int argc, char** argv, const SeedFlag& seed) {
    std::vector<std::string> out(argv, argv + argc);
    if (seed.drawn) {
        out.push_back("--seed");
        out.push_back(std::to_string(seed.resolved));
    }
    return out;
}

fsde::FitMethod parse_method(const std::string& m) {
    if (m == "v_beta") return fsde::FitMethod::VBeta;
    if (m == "v_gauss") return fsde::FitMethod::VGauss;
    if (m == "z_fixed_point") return fsde::FitMethod::ZFixedPoint;
    if (m == "complete") return fsde::FitMethod::Complete;
    throw fsde::usage_error("unknown method '" + m + "'");
}

fsde::ModelKind parse_model(int model) {
    if (model == 1) return fsde::ModelKind::Plain;
    if (model == 2) return fsde::ModelKind::DerivativeTracking;
    throw fsde::usage_error("model must be 1 or 2");
}

fsde::SegmentSet select_set(const std::vector<fsde::Segment>& all, const std::string& provider,
                            const std::string& which) {
    auto [train, test] = fsde::provider_split(all, provider);
    if (which == "train") return train;
    if (which == "test") return test;
    if (which == "all") {
        fsde::SegmentSet set;
        for (const auto& s : all)
            if (s.provider == provider && !s.curtailed) set.segments.push_back(s);
        return set;
    }
    throw fsde::usage_error("--set must be train, test or all");
}

std::string default_provider(const std::vector<fsde::Segment>& segments) {
    return fsde::providers_in(segments).front();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"forecast-error SDE calibration and simulation toolkit (fsde)"};
    app.set_version_flag("--version", fsde::version);
    app.require_subcommand(1);

    // ------------------------------------------------------------- synth ---
    auto* synth = app.add_subcommand("synth", "generate a synthetic raw CSV in the ingest schema");
    fsde::SynthCsvConfig synth_cfg;
    std::string synth_out;
    SeedFlag synth_seed;
    int synth_model = 2;
    synth->add_option("--out", synth_out, "output CSV path")->required();
    synth->add_option("--days", synth_cfg.days, "number of daily segments");
    synth->add_option("--providers", synth_cfg.providers, "number of forecast providers (A, B, ...)");
    synth->add_option("--curtail-days", synth_cfg.curtail_days, "days with an injected curtailment plateau");
    synth->add_option("--capacity-mw", synth_cfg.capacity_mw, "installed capacity for MW scaling");
    synth->add_option("--start-date", synth_cfg.start_date, "first day (YYYY-MM-DD)");
    synth->add_option("--theta0", synth_cfg.params.theta0, "generating mean-reversion rate (1/h)");
    synth->add_option("--alpha", synth_cfg.params.alpha, "generating variability coefficient");
    synth->add_option("--model", synth_model, "generating model: 1 plain, 2 derivative tracking");
    synth->add_option("--epsilon", synth_cfg.epsilon, "forecast truncation level");
    synth->add_option("--seed", synth_seed.given, "RNG seed (drawn and echoed when omitted)");

    // ------------------------------------------------------------ ingest ---
    auto* ing = app.add_subcommand("ingest", "normalize raw CSVs into a segments file");
    std::vector<std::string> ing_inputs;
    std::string ing_out, ing_config;
    fsde::IngestConfig ing_cfg;
    ing->add_option("--input", ing_inputs, "raw CSV path(s)")->required()->expected(-1);
    ing->add_option("--out", ing_out, "segments JSON output")->required();
    ing->add_option("--config", ing_config, "flat key=value config file");
    auto* f_eps = ing->add_option("--epsilon", ing_cfg.epsilon, "forecast truncation level");
    auto* f_plat = ing->add_option("--plateau-len", ing_cfg.plateau_len, "curtailment plateau length (samples)");
    auto* f_flat = ing->add_option("--flat-tol", ing_cfg.flat_tol, "curtailment flatness tolerance");
    auto* f_gap = ing->add_option("--gap-tol", ing_cfg.gap_tol, "curtailment forecast-production gap");
    auto* f_seg = ing->add_option("--segment-hours", ing_cfg.segment_hours, "segment length in hours");
    auto* f_cap = ing->add_option("--capacity-mw", ing_cfg.capacity_mw, "installed capacity (MW)");
    ing->add_option("--anchor-hour", ing_cfg.anchor_hour, "UTC hour segments start at");
    ing->add_option("--forecast-minutes", ing_cfg.forecast_minutes, "forecast knot spacing in the raw data");
    ing->add_option("--delta-minutes", ing_cfg.delta_minutes, "observation interval of the raw production");

    // ---------------------------------------------------------- validate ---
    auto* val = app.add_subcommand("validate", "check the rate conditions on every segment");
    std::string val_segments, val_out = "validate_report.json";
    double val_theta0 = 1.9, val_alpha = 0.05, val_eps = 0.02;
    int val_model = 2;
    val->add_option("--segments", val_segments, "segments JSON")->required();
    val->add_option("--out", val_out, "report JSON output");
    val->add_option("--theta0", val_theta0, "rate parameter");
    val->add_option("--alpha", val_alpha, "variability parameter");
    val->add_option("--model", val_model, "1 constant rate, 2 derivative tracking");
    val->add_option("--epsilon", val_eps, "forecast truncation level");

    // --------------------------------------------------------- calibrate ---
    auto* cal = app.add_subcommand("calibrate", "fit parameters on a provider's training set");
    std::string cal_segments, cal_out = "calibration.json", cal_provider, cal_method = "v_beta";
    double cal_eps = 0.02;
    int cal_model = 2, cal_threads = 0, cal_substeps = 20, cal_max_evals = 2000;
    cal->add_option("--segments", cal_segments, "segments JSON")->required();
    cal->add_option("--out", cal_out, "calibration JSON output");
    cal->add_option("--provider", cal_provider, "provider id (default: first in file)");
    cal->add_option("--method", cal_method, "v_beta | v_gauss | z_fixed_point | complete");
    cal->add_option("--model", cal_model, "1 plain, 2 derivative tracking");
    cal->add_option("--epsilon", cal_eps, "forecast truncation level");
    cal->add_option("--threads", cal_threads, "worker cap (0 = hardware)");
    cal->add_option("--substeps", cal_substeps, "RK4 substeps per observation interval");
    cal->add_option("--max-evals", cal_max_evals, "optimizer evaluation budget");

    // ----------------------------------------------------------- compare ---
    auto* cmp = app.add_subcommand("compare", "fit every (model, provider, method) cell");
    std::string cmp_segments, cmp_prefix = "comparison";
    std::vector<std::string> cmp_providers, cmp_methods{"v_beta", "v_gauss"};
    std::vector<int> cmp_models{1, 2};
    double cmp_eps = 0.02;
    int cmp_threads = 0, cmp_substeps = 20;
    cmp->add_option("--segments", cmp_segments, "segments JSON")->required();
    cmp->add_option("--out-prefix", cmp_prefix, "prefix for <prefix>.csv and <prefix>.json");
    cmp->add_option("--providers", cmp_providers, "provider ids (default: all)");
    cmp->add_option("--models", cmp_models, "models to fit");
    cmp->add_option("--methods", cmp_methods, "methods to fit");
    cmp->add_option("--epsilon", cmp_eps, "forecast truncation level");
    cmp->add_option("--threads", cmp_threads, "worker cap (0 = hardware)");
    cmp->add_option("--substeps", cmp_substeps, "RK4 substeps per observation interval");

    // ---------------------------------------------------------- simulate ---
    auto* simc = app.add_subcommand("simulate", "simulate production paths per day");
    std::string sim_calibration, sim_segments, sim_outdir = ".", sim_set = "test", sim_day,
                sim_scheme = "z_space";
    int sim_npaths = 100, sim_substeps = 10, sim_threads = 0, sim_hist_bins = 0;
    SeedFlag sim_seed;
    simc->add_option("--calibration", sim_calibration, "calibration JSON")->required();
    simc->add_option("--segments", sim_segments, "segments JSON")->required();
    simc->add_option("--out-dir", sim_outdir, "output directory");
    simc->add_option("--set", sim_set, "train | test | all");
    simc->add_option("--day", sim_day, "simulate one segment id only");
    simc->add_option("--n-paths", sim_npaths, "paths per day");
    simc->add_option("--substeps", sim_substeps, "Euler-Maruyama substeps per interval");
    simc->add_option("--scheme", sim_scheme, "z_space | v_space");
    simc->add_option("--threads", sim_threads, "worker cap (0 = hardware)");
    simc->add_option("--histogram-bins", sim_hist_bins,
                     "also write real/simulated transition histograms with this many bins");
    simc->add_option("--seed", sim_seed.given, "RNG seed (drawn and echoed when omitted)");

    // ------------------------------------------------------------- bands ---
    auto* ban = app.add_subcommand("bands", "empirical pointwise confidence bands per day");
    std::string ban_calibration, ban_segments, ban_outdir = ".", ban_set = "test", ban_day,
                ban_scheme = "z_space";
    std::vector<double> ban_levels{0.5, 0.9, 0.99};
    int ban_npaths = 5000, ban_substeps = 10, ban_threads = 0;
    SeedFlag ban_seed;
    ban->add_option("--calibration", ban_calibration, "calibration JSON")->required();
    ban->add_option("--segments", ban_segments, "segments JSON")->required();
    ban->add_option("--out-dir", ban_outdir, "output directory");
    ban->add_option("--set", ban_set, "train | test | all");
    ban->add_option("--day", ban_day, "one segment id only");
    ban->add_option("--levels", ban_levels, "central band probabilities");
    ban->add_option("--n-paths", ban_npaths, "simulations per day");
    ban->add_option("--substeps", ban_substeps, "Euler-Maruyama substeps per interval");
    ban->add_option("--scheme", ban_scheme, "z_space | v_space");
    ban->add_option("--threads", ban_threads, "worker cap (0 = hardware)");
    ban->add_option("--seed", ban_seed.given, "RNG seed (drawn and echoed when omitted)");

    // ---------------------------------------------------------- selftest ---
    auto* self = app.add_subcommand("selftest", "run the built-in property checks");
    std::uint64_t self_seed = 1;
    bool self_quick = false;
    self->add_option("--seed", self_seed, "RNG seed");
    self->add_flag("--quick", self_quick, "smaller sample sizes");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    const auto t_start = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };

    try {
        if (*synth) {
            synth_cfg.params.kind = parse_model(synth_model);
            synth_cfg.seed = synth_seed.resolve();
            const fsde::SynthCsvData data = fsde::make_synthetic_csv_data(synth_cfg);
            fsde::write_synthetic_csv(synth_out, data);

            fsde::RunManifest m;
            m.command = "synth";
            m.rerun_argv = rerun_argv(argc, argv, synth_seed);
            m.config = {{"days", synth_cfg.days},
                        {"providers", synth_cfg.providers},
                        {"curtail_days", synth_cfg.curtail_days},
                        {"capacity_mw", synth_cfg.capacity_mw},
                        {"start_date", synth_cfg.start_date},
                        {"theta0", synth_cfg.params.theta0},
                        {"alpha", synth_cfg.params.alpha},
                        {"model", synth_model},
                        {"epsilon", synth_cfg.epsilon}};
            m.outputs = {synth_out};
            m.seed = synth_cfg.seed;
            m.wall_time_s = elapsed();
            fsde::write_manifest(synth_out + ".manifest.json", m);
            std::printf("synth: %d day(s), %d provider(s), %zu curtailed, seed %llu%s -> %s\n",
                        synth_cfg.days, synth_cfg.providers, data.curtailed_days.size(),
                        static_cast<unsigned long long>(synth_cfg.seed),
                        synth_seed.drawn ? " (drawn)" : "", synth_out.c_str());
            return 0;
        }

        if (*ing) {
            if (!ing_config.empty()) {
                // Precedence: explicit flag > config file > built-in default.
                fsde::IngestConfig file_cfg;
                fsde::apply_config_file(ing_config, file_cfg);
                if (f_eps->count() == 0) ing_cfg.epsilon = file_cfg.epsilon;
                if (f_plat->count() == 0) ing_cfg.plateau_len = file_cfg.plateau_len;
                if (f_flat->count() == 0) ing_cfg.flat_tol = file_cfg.flat_tol;
                if (f_gap->count() == 0) ing_cfg.gap_tol = file_cfg.gap_tol;
                if (f_seg->count() == 0) ing_cfg.segment_hours = file_cfg.segment_hours;
                if (f_cap->count() == 0) ing_cfg.capacity_mw = file_cfg.capacity_mw;
            }
            const fsde::IngestOutcome outcome = fsde::ingest(ing_inputs, ing_cfg);
            fsde::save_segments(ing_out, outcome.segments);

            json report{{"total", outcome.report.total},
                        {"curtailed", outcome.report.curtailed},
                        {"retained", outcome.report.retained},
                        {"train", outcome.report.train},
                        {"test", outcome.report.test},
                        {"clamped", outcome.report.clamped},
                        {"providers", outcome.report.providers},
                        {"rows_rejected", outcome.report.row_errors.size()},
                        {"row_errors", outcome.report.row_errors}};
            std::ofstream rep(ing_out + ".report.json");
            rep << report.dump(1) << "\n";
            for (const auto& err : outcome.report.row_errors) std::fprintf(stderr, "rejected %s\n", err.c_str());
            std::printf("ingest: total %ld, curtailed %ld, retained %ld, train %ld, test %ld\n",
                        outcome.report.total, outcome.report.curtailed, outcome.report.retained,
                        outcome.report.train, outcome.report.test);

            fsde::RunManifest m;
            m.command = "ingest";
            m.rerun_argv = rerun_argv(argc, argv, SeedFlag{});
            m.config = {{"epsilon", ing_cfg.epsilon},
                        {"plateau_len", ing_cfg.plateau_len},
                        {"flat_tol", ing_cfg.flat_tol},
                        {"gap_tol", ing_cfg.gap_tol},
                        {"segment_hours", ing_cfg.segment_hours},
                        {"capacity_mw", ing_cfg.capacity_mw},
                        {"anchor_hour", ing_cfg.anchor_hour},
                        {"forecast_minutes", ing_cfg.forecast_minutes},
                        {"delta_minutes", ing_cfg.delta_minutes}};
            m.inputs = ing_inputs;
            m.outputs = {ing_out, ing_out + ".report.json"};
            m.wall_time_s = elapsed();
            fsde::write_manifest(ing_out + ".manifest.json", m);
            return 0;
        }

        if (*val) {
            const auto segments = fsde::load_segments(val_segments);
            const fsde::ModelParams params{val_theta0, val_alpha, parse_model(val_model)};
            long violations = 0;
            json per_segment = json::array();
            for (const auto& seg : segments) {
                if (seg.curtailed) continue;
                const auto curve = fsde::build_curve(seg, val_eps);
                std::vector<double> grid = seg.times_hours();
                for (double kt : curve.knot_times())
                    if (kt > grid.front() && kt < grid.back()) grid.push_back(kt);
                std::sort(grid.begin(), grid.end());
                const auto report = fsde::check_conditions(curve, params, grid);
                const long n = static_cast<long>(report.violations_a.size() +
                                                 report.violations_b.size());
                violations += n;
                json j{{"id", seg.id},
                       {"condition_a_ok", report.condition_a_ok},
                       {"condition_b_ok", report.condition_b_ok},
                       {"violations", n}};
                if (n > 0) {
                    json va = json::array(), vb = json::array();
                    for (const auto& v : report.violations_a)
                        va.push_back({{"time", v.time}, {"lhs", v.lhs}, {"rhs", v.rhs}});
                    for (const auto& v : report.violations_b)
                        vb.push_back({{"time", v.time}, {"lhs", v.lhs}, {"rhs", v.rhs}});
                    j["violations_a"] = va;
                    j["violations_b"] = vb;
                }
                per_segment.push_back(j);
            }
            json report{{"theta0", val_theta0},
                        {"alpha", val_alpha},
                        {"model", val_model},
                        {"epsilon", val_eps},
                        {"total_violations", violations},
                        {"segments", per_segment}};
            std::ofstream out(val_out);
            out << report.dump(1) << "\n";
            std::printf("validate: %ld violation(s) across %zu segment(s)\n", violations,
                        per_segment.size());

            fsde::RunManifest m;
            m.command = "validate";
            m.rerun_argv = rerun_argv(argc, argv, SeedFlag{});
            m.config = {{"theta0", val_theta0}, {"alpha", val_alpha}, {"model", val_model}, {"epsilon", val_eps}};
            m.inputs = {val_segments};
            m.outputs = {val_out};
            m.wall_time_s = elapsed();
            fsde::write_manifest(val_out + ".manifest.json", m);
            if (violations > 0) return 2;
            return 0;
        }

        if (*cal) {
            const auto segments = fsde::load_segments(cal_segments);
            if (cal_provider.empty()) cal_provider = default_provider(segments);
            auto [train, test] = fsde::provider_split(segments, cal_provider);
            (void)test;
            const auto prep = fsde::prepare(train, cal_eps);

            fsde::FitConfig cfg;
            cfg.lik.threads = cal_threads;
            cfg.lik.integrator.substeps = cal_substeps;
            cfg.optimizer.max_evals = cal_max_evals;
            const fsde::ModelKind kind = parse_model(cal_model);
            const fsde::FitMethod method = parse_method(cal_method);
            const fsde::CalibrationResult result = fsde::run_fit(prep, kind, method, cfg);

            json config_echo{{"segments", cal_segments},
                             {"provider", cal_provider},
                             {"method", cal_method},
                             {"model", cal_model},
                             {"epsilon", cal_eps},
                             {"substeps", cal_substeps},
                             {"threads", cal_threads},
                             {"max_evals", cal_max_evals},
                             {"train_segments", train.segments.size()}};
            const json j = fsde::calibration_to_json(result, cal_provider, cal_eps, config_echo);
            std::ofstream out(cal_out);
            out << j.dump(1) << "\n";

            if (result.delta)
                std::printf("calibrate %s/%s model %d: theta0 %.6g, alpha %.6g, delta %.6g, "
                            "product %.6g, loglik %.6f, AIC %.2f, BIC %.2f\n",
                            cal_provider.c_str(), cal_method.c_str(), cal_model,
                            result.params.theta0, result.params.alpha, *result.delta,
                            result.product(), result.loglik.value, result.criteria.aic,
                            result.criteria.bic);
            else
                std::printf("calibrate %s/%s model %d: theta0 %.6g, alpha %.6g, product %.6g, "
                            "loglik %.6f, AIC %.2f, BIC %.2f\n",
                            cal_provider.c_str(), cal_method.c_str(), cal_model,
                            result.params.theta0, result.params.alpha, result.product(),
                            result.loglik.value, result.criteria.aic, result.criteria.bic);
            if (!result.trace.converged)
                std::fprintf(stderr, "warning: optimizer did not converge within budget\n");
            if (result.loglik.flags.total() > 0)
                std::fprintf(stderr, "warning: %ld flagged transition(s)\n",
                             result.loglik.flags.total());

            fsde::RunManifest m;
            m.command = "calibrate";
            m.rerun_argv = rerun_argv(argc, argv, SeedFlag{});
            m.config = config_echo;
            m.inputs = {cal_segments};
            m.outputs = {cal_out};
            m.wall_time_s = elapsed();
            fsde::write_manifest(cal_out + ".manifest.json", m);
            return 0;
        }

        if (*cmp) {
            const auto segments = fsde::load_segments(cmp_segments);
            if (cmp_providers.empty()) cmp_providers = fsde::providers_in(segments);

            std::vector<fsde::ProviderData> providers;
            for (const auto& p : cmp_providers) {
                auto [train, test] = fsde::provider_split(segments, p);
                (void)test;
                providers.push_back({p, fsde::prepare(train, cmp_eps)});
            }
            std::vector<fsde::FitMethod> methods;
            for (const auto& m : cmp_methods) methods.push_back(parse_method(m));

            fsde::FitConfig cfg;
            cfg.lik.threads = cmp_threads;
            cfg.lik.integrator.substeps = cmp_substeps;
            const auto rows = fsde::compare_models(providers, cmp_models, methods, cfg);

            std::ofstream csv(cmp_prefix + ".csv");
            csv << "model,provider,method,theta0,alpha,product,loglik,n,k,aic,bic,flags,error\n";
            json jrows = json::array();
            for (const auto& row : rows) {
                if (row.result) {
                    const auto& r = *row.result;
                    csv << row.model << ',' << row.provider << ',' << to_string(row.method) << ','
                        << fsde::fmt_g(r.params.theta0) << ',' << fsde::fmt_g(r.params.alpha) << ','
                        << fsde::fmt_g(r.product()) << ',' << fsde::fmt_g(r.loglik.value) << ','
                        << r.loglik.n_transitions << ',' << r.criteria.k << ','
                        << fsde::fmt_g(r.criteria.aic) << ',' << fsde::fmt_g(r.criteria.bic) << ','
                        << r.loglik.flags.total() << ",\n";
                    jrows.push_back(fsde::calibration_to_json(r, row.provider, cmp_eps, {}));
                } else {
                    std::string err = row.error;
                    std::replace(err.begin(), err.end(), ',', ';');
                    csv << row.model << ',' << row.provider << ',' << to_string(row.method)
                        << ",,,,,,,,,," << err << "\n";
                    jrows.push_back({{"model", row.model},
                                     {"provider", row.provider},
                                     {"method", to_string(row.method)},
                                     {"error", row.error}});
                }
            }
            std::ofstream jout(cmp_prefix + ".json");
            jout << jrows.dump(1) << "\n";
            std::printf("compare: %zu row(s) -> %s.csv\n", rows.size(), cmp_prefix.c_str());

            fsde::RunManifest m;
            m.command = "compare";
            m.rerun_argv = rerun_argv(argc, argv, SeedFlag{});
            m.config = {{"providers", cmp_providers}, {"models", cmp_models},
                        {"methods", cmp_methods},    {"epsilon", cmp_eps},
                        {"substeps", cmp_substeps},  {"threads", cmp_threads}};
            m.inputs = {cmp_segments};
            m.outputs = {cmp_prefix + ".csv", cmp_prefix + ".json"};
            m.wall_time_s = elapsed();
            fsde::write_manifest(cmp_prefix + ".manifest.json", m);
            return 0;
        }

        if (*simc || *ban) {
            const bool is_bands = static_cast<bool>(*ban);
            const std::string cal_path = is_bands ? ban_calibration : sim_calibration;
            const std::string seg_path = is_bands ? ban_segments : sim_segments;
            const std::string outdir = is_bands ? ban_outdir : sim_outdir;
            const std::string which = is_bands ? ban_set : sim_set;
            const std::string day = is_bands ? ban_day : sim_day;
            const std::string scheme_name = is_bands ? ban_scheme : sim_scheme;
            const int npaths = is_bands ? ban_npaths : sim_npaths;
            const int substeps = is_bands ? ban_substeps : sim_substeps;
            const int threads = is_bands ? ban_threads : sim_threads;
            SeedFlag& seed = is_bands ? ban_seed : sim_seed;

            const fsde::LoadedCalibration calib = fsde::load_calibration(cal_path);
            const auto segments = fsde::load_segments(seg_path);
            fsde::SegmentSet set = select_set(segments, calib.provider, which);
            if (!day.empty()) {
                fsde::SegmentSet one;
                for (auto& s : set.segments)
                    if (s.id == day) one.segments.push_back(s);
                if (one.segments.empty())
                    throw fsde::data_error("no forecast coverage for day '" + day + "' in the " +
                                           which + " set");
                set = std::move(one);
            }

            fsde::SimConfig sim;
            sim.n_paths = npaths;
            sim.substeps = substeps;
            sim.threads = threads;
            sim.seed = seed.resolve();
            if (scheme_name == "z_space") sim.scheme = fsde::Scheme::ZSpace;
            else if (scheme_name == "v_space" || scheme_name == "v_space_clamped")
                sim.scheme = fsde::Scheme::VSpaceClamped;
            else throw fsde::usage_error("--scheme must be z_space or v_space_clamped");

            std::filesystem::create_directories(outdir);
            std::vector<std::string> outputs;
            std::vector<double> real_diffs, sim_diffs;

            long day_index = 0;
            for (const auto& seg : set.segments) {
                const auto curve = fsde::build_curve(seg, calib.epsilon);
                const auto times = seg.times_hours();
                fsde::SimConfig per_day = sim;
                per_day.seed = fsde::derive_seed(sim.seed, static_cast<std::uint64_t>(day_index++));
                const fsde::InitialSpec init = calib.delta
                                                   ? fsde::InitialSpec::delta_transition(*calib.delta)
                                                   : fsde::InitialSpec::fixed(0.0);
                const fsde::PathBundle bundle =
                    fsde::simulate_paths(calib.params, curve, times, per_day, init);

                if (is_bands) {
                    const fsde::BandSet bands = fsde::empirical_bands(bundle, ban_levels);
                    const std::string path = outdir + "/bands_" + seg.id + ".csv";
                    fsde::write_bands_csv(path, bands, seg.x);
                    outputs.push_back(path);
                    if (bands.low_sample_warning)
                        std::fprintf(stderr, "warning: %s: few paths for the widest level\n",
                                     seg.id.c_str());
                } else {
                    const std::string path = outdir + "/paths_" + seg.id + ".csv";
                    fsde::write_paths_csv(path, bundle);
                    outputs.push_back(path);
                    if (sim_hist_bins > 0) {
                        const auto v = fsde::compute_errors(seg, curve);
                        for (std::size_t i = 1; i < v.size(); ++i)
                            real_diffs.push_back(v[i] - v[i - 1]);
                        for (const auto& row : bundle.paths)
                            for (std::size_t i = 1; i < row.size(); ++i) {
                                const double v1 = row[i] - curve.value(times[i]);
                                const double v0 = row[i - 1] - curve.value(times[i - 1]);
                                sim_diffs.push_back(v1 - v0);
                            }
                    }
                }
                if (bundle.failed_paths > 0)
                    std::fprintf(stderr, "warning: %s: %ld path(s) aborted on non-finite state\n",
                                 seg.id.c_str(), bundle.failed_paths);
            }

            if (!is_bands && sim_hist_bins > 0 && !real_diffs.empty() && !sim_diffs.empty()) {
                auto minmax = [](const std::vector<double>& xs) {
                    auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
                    return std::pair<double, double>(*lo, *hi);
                };
                auto [rlo, rhi] = minmax(real_diffs);
                auto [slo, shi] = minmax(sim_diffs);
                const double lo = std::min(rlo, slo), hi = std::max(rhi, shi);
                // transition_histogram takes a value series; prepend 0 so the
                // diffs of the padded series equal our pooled diffs.
                auto as_series = [](const std::vector<double>& diffs) {
                    std::vector<double> s(diffs.size() + 1, 0.0);
                    for (std::size_t i = 0; i < diffs.size(); ++i) s[i + 1] = s[i] + diffs[i];
                    return s;
                };
                const auto hr = fsde::transition_histogram(as_series(real_diffs), sim_hist_bins, lo, hi);
                const auto hs = fsde::transition_histogram(as_series(sim_diffs), sim_hist_bins, lo, hi);
                fsde::write_histogram_csv(outdir + "/hist_real.csv", hr);
                fsde::write_histogram_csv(outdir + "/hist_sim.csv", hs);
                outputs.push_back(outdir + "/hist_real.csv");
                outputs.push_back(outdir + "/hist_sim.csv");
                std::printf("histogram TV distance: %.4f\n", fsde::histogram_tv_distance(hr, hs));
            }

            std::printf("%s: %zu day(s), %d path(s) each, seed %llu%s -> %s\n",
                        is_bands ? "bands" : "simulate", set.segments.size(), npaths,
                        static_cast<unsigned long long>(sim.seed), seed.drawn ? " (drawn)" : "",
                        outdir.c_str());

            fsde::RunManifest m;
            m.command = is_bands ? "bands" : "simulate";
            m.rerun_argv = rerun_argv(argc, argv, seed);
            m.config = {{"set", which},         {"day", day},
                        {"n_paths", npaths},    {"substeps", substeps},
                        {"scheme", scheme_name}, {"threads", threads}};
            if (is_bands) m.config["levels"] = ban_levels;
            m.inputs = {cal_path, seg_path};
            m.outputs = outputs;
            m.seed = sim.seed;
            m.wall_time_s = elapsed();
            fsde::write_manifest(outdir + (is_bands ? "/bands" : "/paths") + ".manifest.json", m);
            return 0;
        }

        if (*self) {
            return fsde::run_selftest(self_seed, stdout, self_quick) ? 0 : 3;
        }
    } catch (const fsde::usage_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const fsde::data_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::domain_error& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    }
    return 0;
}
