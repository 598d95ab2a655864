#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsde/calibrate.hpp"
#include "fsde/data.hpp"
#include "fsde/simulate.hpp"
#include "fsde/synthetic.hpp"
#include "fsde/util.hpp"

namespace fsde {

/// Problems with input data (exit code 2 at the CLI).
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad flags or configuration (exit code 1 at the CLI).
struct usage_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ------------------------------------------------------------ config file ---

struct IngestConfig {
    double epsilon = 0.02;
    int plateau_len = 9;
    double flat_tol = 0.005;
    double gap_tol = 0.1;
    double segment_hours = 24.0;
    double capacity_mw = 0.0;  ///< required; no sane default exists
    int anchor_hour = 13;      ///< UTC hour each daily segment starts at
    int forecast_minutes = 60; ///< knot spacing of the raw forecast
    int delta_minutes = 10;    ///< observation interval of the raw production
};

/// Flat key-value config file: `key = value`, one per line, `#` comments.
/// Accepted keys: epsilon, plateau_len, flat_tol, gap_tol, segment_hours,
/// capacity_mw.
inline void apply_config_file(const std::string& path, IngestConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw usage_error("cannot open config file: " + path);
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw usage_error("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string val = trim(stripped.substr(eq + 1));
        try {
            if (key == "epsilon") cfg.epsilon = std::stod(val);
            else if (key == "plateau_len") cfg.plateau_len = std::stoi(val);
            else if (key == "flat_tol") cfg.flat_tol = std::stod(val);
            else if (key == "gap_tol") cfg.gap_tol = std::stod(val);
            else if (key == "segment_hours") cfg.segment_hours = std::stod(val);
            else if (key == "capacity_mw") cfg.capacity_mw = std::stod(val);
            else throw usage_error("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        } catch (const usage_error&) {
            throw;
        } catch (const std::exception&) {
            throw usage_error("config line " + std::to_string(lineno) + ": bad value for '" + key + "'");
        }
    }
}

// -------------------------------------------------------------- raw CSV ----

struct CsvParseResult {
    std::map<std::string, RawSeries> providers;
    std::vector<std::string> row_errors;  ///< "file:line: message"
};

/// Reads `timestamp,production_mw,forecast_mw[,provider]` files. Rows with
/// missing or unparseable fields are rejected and reported with their line
/// numbers.
inline CsvParseResult read_raw_csv(const std::vector<std::string>& paths, double capacity_mw) {
    CsvParseResult out;
    for (const std::string& path : paths) {
        std::ifstream in(path);
        if (!in) throw data_error("cannot open input file: " + path);
        std::string line;
        long lineno = 0;
        bool has_provider = false;
        if (!std::getline(in, line)) throw data_error("empty input file: " + path);
        ++lineno;
        {
            std::string h = line;
            if (!h.empty() && h.back() == '\r') h.pop_back();
            if (h.rfind("timestamp,production_mw,forecast_mw", 0) != 0)
                throw data_error(path + ": unexpected header '" + h + "'");
            has_provider = h == "timestamp,production_mw,forecast_mw,provider";
        }
        auto reject = [&](const std::string& why) {
            out.row_errors.push_back(path + ":" + std::to_string(lineno) + ": " + why);
        };
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            std::vector<std::string> fields;
            std::stringstream ss(line);
            std::string f;
            while (std::getline(ss, f, ',')) fields.push_back(f);
            if (!line.empty() && line.back() == ',') fields.push_back("");
            const std::size_t expected = has_provider ? 4 : 3;
            if (fields.size() != expected) {
                reject("expected " + std::to_string(expected) + " fields, got " +
                       std::to_string(fields.size()));
                continue;
            }
            std::int64_t ts;
            double prod, fc;
            try {
                ts = parse_iso8601(fields[0]);
            } catch (const std::exception&) {
                reject("bad timestamp '" + fields[0] + "'");
                continue;
            }
            try {
                std::size_t used;
                prod = std::stod(fields[1], &used);
                if (used != fields[1].size()) throw std::invalid_argument("");
                fc = std::stod(fields[2], &used);
                if (used != fields[2].size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                reject("bad numeric field");
                continue;
            }
            if (prod < 0.0 || fc < 0.0) {
                reject("negative power value");
                continue;
            }
            const std::string provider = has_provider ? fields[3] : "A";
            if (provider.empty()) {
                reject("missing provider");
                continue;
            }
            RawSeries& series = out.providers[provider];
            series.provider = provider;
            series.capacity_mw = capacity_mw;
            series.timestamps.push_back(ts);
            series.production_mw.push_back(prod);
            series.forecast_mw.push_back(fc);
        }
    }
    return out;
}

// ----------------------------------------------------------------- ingest ---

struct IngestReport {
    long total = 0;      ///< complete daily segments found
    long curtailed = 0;
    long retained = 0;
    long train = 0;
    long test = 0;
    long clamped = 0;    ///< power values above capacity
    std::vector<std::string> providers;
    std::vector<std::string> row_errors;
};

struct IngestOutcome {
    std::vector<Segment> segments;  ///< complete segments, curtailed flagged
    IngestReport report;
};

inline IngestOutcome ingest(const std::vector<std::string>& paths, const IngestConfig& cfg) {
    if (!(cfg.capacity_mw > 0.0)) throw usage_error("capacity_mw must be set and positive");
    if (!(cfg.epsilon > 0.0 && cfg.epsilon < 0.5)) throw usage_error("epsilon must be in (0, 1/2)");
    CsvParseResult raw = read_raw_csv(paths, cfg.capacity_mw);
    if (raw.providers.empty()) throw data_error("no valid rows in input");

    IngestOutcome out;
    out.report.row_errors = raw.row_errors;

    if (cfg.delta_minutes <= 0 || cfg.forecast_minutes % cfg.delta_minutes != 0)
        throw usage_error("forecast_minutes must be a multiple of delta_minutes");
    const double delta_s = cfg.delta_minutes * 60.0;
    const long n_steps = std::lround(cfg.segment_hours * 3600.0 / delta_s);
    const long knot_step_s = cfg.forecast_minutes * 60;
    const long n_knots = std::lround(cfg.segment_hours * 60.0 / cfg.forecast_minutes) + 1;

    for (auto& [provider, series] : raw.providers) {
        out.report.providers.push_back(provider);
        NormalizedSeries norm = normalize(series);
        out.report.clamped += norm.clamped;

        std::map<std::int64_t, std::pair<double, double>> by_ts;
        for (std::size_t i = 0; i < norm.timestamps.size(); ++i)
            by_ts[norm.timestamps[i]] = {norm.x[i], norm.p[i]};
        if (by_ts.size() < 2) continue;

        const std::int64_t first = by_ts.begin()->first;
        const std::int64_t last = by_ts.rbegin()->first;
        // First anchor at or before the first sample.
        std::int64_t day0 = (first / 86400) * 86400 + cfg.anchor_hour * 3600;
        while (day0 > first) day0 -= 86400;

        for (std::int64_t start = day0; start + static_cast<std::int64_t>(cfg.segment_hours * 3600.0) <= last;
             start += 86400) {
            if (start < first) continue;
            Segment seg;
            seg.provider = provider;
            seg.start_epoch_s = start;
            seg.delta_s = delta_s;
            bool complete = true;
            for (long i = 0; i <= n_steps && complete; ++i) {
                auto it = by_ts.find(start + i * static_cast<std::int64_t>(delta_s));
                if (it == by_ts.end()) complete = false;
                else seg.x.push_back(it->second.first);
            }
            for (long k = 0; k < n_knots && complete; ++k) {
                auto it = by_ts.find(start + k * knot_step_s);
                if (it == by_ts.end()) complete = false;
                else seg.p_raw.push_back(it->second.second);
            }
            if (!complete) continue;
            seg.id = format_iso8601(start).substr(0, 10) + "_" + provider;
            seg.curtailed = detect_curtailment(
                seg, CurtailConfig{cfg.plateau_len, cfg.flat_tol, cfg.gap_tol});
            ++out.report.total;
            if (seg.curtailed) ++out.report.curtailed;
            else ++out.report.retained;
            out.segments.push_back(std::move(seg));
        }
    }

    if (out.report.retained == 0) throw data_error("ingest produced no usable segments");

    // Per-provider split counts for the report.
    for (const std::string& provider : out.report.providers) {
        std::vector<Segment> kept;
        for (const Segment& s : out.segments)
            if (s.provider == provider && !s.curtailed) kept.push_back(s);
        if (kept.size() < 2) {
            out.report.train += static_cast<long>(kept.size());
            continue;
        }
        auto [train, test] = split_train_test(kept);
        out.report.train += static_cast<long>(train.segments.size());
        out.report.test += static_cast<long>(test.segments.size());
    }
    return out;
}

// ---------------------------------------------------------- segments JSON ---

inline nlohmann::json segments_to_json(const std::vector<Segment>& segments) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Segment& s : segments) {
        arr.push_back({{"id", s.id},
                       {"provider", s.provider},
                       {"start", format_iso8601(s.start_epoch_s)},
                       {"delta_seconds", s.delta_s},
                       {"x", s.x},
                       {"p_raw", s.p_raw},
                       {"curtailed", s.curtailed}});
    }
    return arr;
}

inline void save_segments(const std::string& path, const std::vector<Segment>& segments) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path);
    out << segments_to_json(segments).dump(1) << "\n";
}

inline std::vector<Segment> load_segments(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open segments file: " + path);
    nlohmann::json arr;
    try {
        in >> arr;
    } catch (const std::exception& e) {
        throw data_error(path + ": bad JSON: " + e.what());
    }
    if (!arr.is_array()) throw data_error(path + ": expected a top-level array");
    std::vector<Segment> out;
    for (const auto& j : arr) {
        Segment s;
        s.id = j.at("id").get<std::string>();
        s.provider = j.at("provider").get<std::string>();
        s.start_epoch_s = parse_iso8601(j.at("start").get<std::string>());
        s.delta_s = j.at("delta_seconds").get<double>();
        s.x = j.at("x").get<std::vector<double>>();
        s.p_raw = j.at("p_raw").get<std::vector<double>>();
        s.curtailed = j.at("curtailed").get<bool>();
        s.validate();
        out.push_back(std::move(s));
    }
    if (out.empty()) throw data_error(path + ": no segments");
    return out;
}

/// Non-curtailed segments of one provider, split chronologically.
inline std::pair<SegmentSet, SegmentSet> provider_split(const std::vector<Segment>& all,
                                                        const std::string& provider) {
    std::vector<Segment> kept;
    for (const Segment& s : all)
        if (s.provider == provider && !s.curtailed) kept.push_back(s);
    if (kept.size() < 2) throw data_error("provider '" + provider + "' has fewer than 2 usable segments");
    return split_train_test(std::move(kept));
}

inline std::vector<std::string> providers_in(const std::vector<Segment>& segments) {
    std::vector<std::string> out;
    for (const Segment& s : segments)
        if (std::find(out.begin(), out.end(), s.provider) == out.end()) out.push_back(s.provider);
    std::sort(out.begin(), out.end());
    return out;
}

// ------------------------------------------------------- calibration JSON ---

inline nlohmann::json flags_to_json(const LogLikFlags& f) {
    return {{"variance_floored", f.variance_floored},
            {"variance_shrunk", f.variance_shrunk},
            {"obs_clamped", f.obs_clamped},
            {"z_clamped", f.z_clamped},
            {"skipped", f.skipped}};
}

inline nlohmann::json calibration_to_json(const CalibrationResult& r, const std::string& provider,
                                          double epsilon, const nlohmann::json& config_echo) {
    nlohmann::json j{{"model", r.params.kind == ModelKind::Plain ? 1 : 2},
                     {"provider", provider},
                     {"method", r.trace.method},
                     {"theta0", r.params.theta0},
                     {"alpha", r.params.alpha},
                     {"product", r.product()},
                     {"loglik", r.loglik.value},
                     {"n", r.loglik.n_transitions},
                     {"k", r.criteria.k},
                     {"aic", r.criteria.aic},
                     {"bic", r.criteria.bic},
                     {"epsilon", epsilon},
                     {"flags", flags_to_json(r.loglik.flags)},
                     {"config", config_echo}};
    if (r.delta) j["delta"] = *r.delta;
    nlohmann::json trace{{"evaluations", r.trace.evaluations},
                         {"converged", r.trace.converged},
                         {"guess",
                          {{"theta0_star", r.trace.guess.theta0_star},
                           {"alpha_star", r.trace.guess.alpha_star},
                           {"theta0_clamped", r.trace.guess.theta0_clamped}}}};
    if (r.fixed_point) {
        nlohmann::json fp{{"converged", r.fixed_point->converged},
                          {"residuals", r.fixed_point->residuals}};
        nlohmann::json its = nlohmann::json::array();
        for (const auto& it : r.fixed_point->iterates) its.push_back({it[0], it[1]});
        fp["iterates"] = its;
        trace["fixed_point"] = fp;
    }
    j["trace"] = trace;
    return j;
}

struct LoadedCalibration {
    ModelParams params;
    std::optional<double> delta;
    std::string provider;
    std::string method;
    double epsilon = 0.02;
};

inline LoadedCalibration load_calibration(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open calibration file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw data_error(path + ": bad JSON: " + e.what());
    }
    LoadedCalibration out;
    const int model = j.at("model").get<int>();
    out.params.kind = model == 1 ? ModelKind::Plain : ModelKind::DerivativeTracking;
    out.params.theta0 = j.at("theta0").get<double>();
    out.params.alpha = j.at("alpha").get<double>();
    if (j.contains("delta")) out.delta = j["delta"].get<double>();
    out.provider = j.value("provider", "A");
    out.method = j.value("method", "v_beta");
    out.epsilon = j.value("epsilon", 0.02);
    out.params.validate();
    return out;
}

// ---------------------------------------------------------- output writers ---

inline void write_synthetic_csv(const std::string& path, const SynthCsvData& d) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path);
    const bool multi = d.provider_names.size() > 1;
    out << "timestamp,production_mw,forecast_mw" << (multi ? ",provider" : "") << "\n";
    for (std::size_t p = 0; p < d.provider_names.size(); ++p)
        for (std::size_t i = 0; i < d.timestamps.size(); ++i) {
            out << format_iso8601(d.timestamps[i]) << ',' << fmt_g(d.production_mw[i]) << ','
                << fmt_g(d.forecast_mw[p][i]);
            if (multi) out << ',' << d.provider_names[p];
            out << "\n";
        }
}

inline void write_paths_csv(const std::string& path, const PathBundle& bundle) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path);
    out << "time,path_id,value\n";
    for (std::size_t p = 0; p < bundle.paths.size(); ++p)
        for (std::size_t t = 0; t < bundle.times.size(); ++t)
            out << fmt_g(bundle.times[t]) << ',' << p << ',' << fmt_g(bundle.paths[p][t]) << "\n";
}

inline void write_bands_csv(const std::string& path, const BandSet& bands,
                            const std::vector<double>& production) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path);
    const bool with_prod = production.size() == bands.times.size();
    out << "time,level,lower,upper" << (with_prod ? ",production" : "") << "\n";
    for (std::size_t l = 0; l < bands.levels.size(); ++l)
        for (std::size_t t = 0; t < bands.times.size(); ++t) {
            out << fmt_g(bands.times[t]) << ',' << fmt_g(bands.levels[l]) << ','
                << fmt_g(bands.lower[l][t]) << ',' << fmt_g(bands.upper[l][t]);
            if (with_prod) out << ',' << fmt_g(production[t]);
            out << "\n";
        }
}

inline void write_histogram_csv(const std::string& path, const Histogram& h) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path);
    out << "bin_left,bin_right,density\n";
    for (std::size_t b = 0; b < h.density.size(); ++b)
        out << fmt_g(h.edges[b]) << ',' << fmt_g(h.edges[b + 1]) << ',' << fmt_g(h.density[b])
            << "\n";
}

// ---------------------------------------------------------------- manifest ---

struct RunManifest {
    std::string command;
    std::vector<std::string> rerun_argv;  ///< full argv with the resolved seed
    nlohmann::json config;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::optional<std::uint64_t> seed;
    double wall_time_s = 0.0;
};

inline void write_manifest(const std::string& path, const RunManifest& m) {
    nlohmann::json j{{"command", m.command},
                     {"rerun_argv", m.rerun_argv},
                     {"config", m.config},
                     {"version", version},
                     {"wall_time_s", m.wall_time_s}};
    nlohmann::json inputs = nlohmann::json::array();
    for (const std::string& p : m.inputs) inputs.push_back({{"path", p}, {"digest", file_digest(p)}});
    j["inputs"] = inputs;
    j["outputs"] = m.outputs;
    if (m.seed) j["seed"] = *m.seed;
    std::ofstream out(path);
    if (!out) throw data_error("cannot write " + path);
    out << j.dump(1) << "\n";
}

}  // namespace fsde
