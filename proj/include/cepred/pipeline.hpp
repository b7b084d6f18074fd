#pragma once

// End-to-end wiring: CE log -> per-DIMM streams -> feature matrix -> labels
// -> repeated subsampling + cross-validation -> report. Also the atomic file
// writer every CLI artifact goes through.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cepred/celog.hpp"
#include "cepred/dataset.hpp"
#include "cepred/error.hpp"
#include "cepred/eval.hpp"
#include "cepred/features.hpp"
#include "cepred/forest.hpp"
#include "cepred/labeling.hpp"
#include "cepred/rng.hpp"

namespace cepred {

// Writes via a temp file and rename so failures never leave partial artifacts.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot open '" + tmp.string() + "' for writing");
        out << content;
        if (!out) throw DataError("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw DataError("read failed for '" + path.string() + "'");
    return ss.str();
}

// Per-DIMM event streams in file order (which is chronological per DIMM for
// any well-formed log; the engine rejects violations).
inline std::map<DimmId, std::vector<CeRecord>> group_streams(std::vector<CeRecord> records) {
    std::map<DimmId, std::vector<CeRecord>> streams;
    for (auto& rec : records) streams[rec.dimm].push_back(std::move(rec));
    return streams;
}

// Runs the feature engine over every stream; one row per event, labels all 0.
// DIMMs are processed independently and emitted in sorted id order.
inline FeatureMatrix extract_matrix(const std::map<DimmId, std::vector<CeRecord>>& streams,
                                    const EngineConfig& cfg, unsigned jobs = 1) {
    cfg.validate();
    std::vector<const std::pair<const DimmId, std::vector<CeRecord>>*> items;
    items.reserve(streams.size());
    for (const auto& kv : streams) items.push_back(&kv);

    struct DimmRows {
        std::vector<std::int64_t> ts;
        std::vector<std::vector<double>> vals;
    };
    std::vector<DimmRows> per_dimm(items.size());

    detail::parallel_for_tasks(items.size(), jobs, [&](std::size_t i) {
        const auto& [dimm, events] = *items[i];
        DimmTracker tracker(dimm, cfg);
        auto& out = per_dimm[i];
        out.ts.reserve(events.size());
        out.vals.reserve(events.size());
        for (const auto& rec : events) {
            tracker.ingest(rec);
            out.ts.push_back(rec.ts);
            out.vals.push_back(tracker.snapshot().values);
        }
    });

    FeatureMatrix m;
    for (std::size_t i = 0; i < items.size(); ++i) {
        std::uint32_t dimm_idx = m.intern_dimm(items[i]->first);
        for (std::size_t r = 0; r < per_dimm[i].ts.size(); ++r)
            m.add_row(dimm_idx, per_dimm[i].ts[r], 0, per_dimm[i].vals[r]);
    }
    return m;
}

// Applies largest-gap labels to failed DIMMs and drops their lead-window rows.
// Returns the surviving matrix; warnings name failed DIMMs that contribute no
// training samples.
inline FeatureMatrix label_matrix(const FeatureMatrix& m,
                                  const std::vector<FailureRecord>& failures, double lead_hours,
                                  std::vector<std::string>* warnings = nullptr) {
    if (lead_hours < 0) throw UsageError("lead time must be >= 0 hours");
    const std::int64_t lead_s = static_cast<std::int64_t>(std::llround(lead_hours * 3600.0));

    std::map<DimmId, std::int64_t> failure_ts;
    for (const auto& f : failures) failure_ts[f.dimm] = f.failure_time;

    auto rows_by_dimm = m.rows_by_dimm();
    std::vector<std::uint8_t> labels(m.n_rows(), 0);
    std::vector<bool> keep(m.n_rows(), true);

    for (std::size_t d = 0; d < m.dimm_ids().size(); ++d) {
        auto it = failure_ts.find(m.dimm_ids()[d]);
        if (it == failure_ts.end()) continue;
        const auto& rows = rows_by_dimm[d];
        if (rows.empty()) continue;
        std::vector<std::int64_t> ts;
        ts.reserve(rows.size());
        for (auto r : rows) ts.push_back(m.row_ts(r));
        std::size_t k = largest_gap_split(ts);
        std::size_t kept = 0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            labels[rows[i]] = i >= k ? 1 : 0;
            if (in_lead_window(ts[i], it->second, lead_s)) keep[rows[i]] = false;
            else ++kept;
        }
        if (kept == 0 && warnings)
            warnings->push_back("failed DIMM '" + m.dimm_ids()[d] +
                                "' has no samples outside the lead window; it contributes no "
                                "training data");
    }

    FeatureMatrix out;
    std::vector<double> vals(m.n_features());
    for (std::size_t r = 0; r < m.n_rows(); ++r) {
        if (!keep[r]) continue;
        auto row = m.row(r);
        vals.assign(row.begin(), row.end());
        out.add_row(out.intern_dimm(m.dimm_of_row(r)), m.row_ts(r), labels[r], vals);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Split manifest
// ---------------------------------------------------------------------------

inline nlohmann::json split_plan_to_json(const SplitPlan& plan) {
    nlohmann::json j;
    j["format"] = "cepred-split-1";
    j["lead_hours"] = plan.lead_hours;
    j["window_hours"] = plan.window_hours;
    j["mode"] = plan.mode;
    j["n_normal"] = plan.n_normal;
    j["master_seed"] = plan.master_seed;
    j["failed"] = plan.failed;
    nlohmann::json reps = nlohmann::json::array();
    for (const auto& r : plan.repeats) {
        reps.push_back({{"repeat", r.repeat},
                        {"seed", r.seed},
                        {"cv_normal", r.cv_normal},
                        {"test_normal", r.test_normal}});
    }
    j["repeats"] = std::move(reps);
    return j;
}

inline SplitPlan split_plan_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != std::string("cepred-split-1"))
        throw DataError("split manifest: unrecognized format");
    SplitPlan plan;
    plan.lead_hours = j.at("lead_hours").get<double>();
    plan.window_hours = j.at("window_hours").get<double>();
    plan.mode = j.at("mode").get<std::string>();
    plan.n_normal = j.at("n_normal").get<std::uint32_t>();
    plan.master_seed = j.at("master_seed").get<std::uint64_t>();
    plan.failed = j.at("failed").get<std::vector<DimmId>>();
    for (const auto& rj : j.at("repeats")) {
        RepeatSplit r;
        r.repeat = rj.at("repeat").get<std::uint32_t>();
        r.seed = rj.at("seed").get<std::uint64_t>();
        r.cv_normal = rj.at("cv_normal").get<std::vector<DimmId>>();
        r.test_normal = rj.at("test_normal").get<std::vector<DimmId>>();
        plan.repeats.push_back(std::move(r));
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    double window_hours = 168.0;
    std::vector<Mode> modes = {Mode::overall, Mode::fixed};
    double lead_hours = 3.0;
    std::uint32_t n_normal = 5000;
    std::uint32_t repeats = 5;
    std::uint32_t folds = 10;
    ForestParams forest;
    double decision_threshold = 0.5;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    bool run_baseline = true;
    EngineConfig engine;  // window_hours/mode overridden per run
};

struct RepeatReport {
    std::uint32_t repeat = 0;
    std::uint64_t seed = 0;
    std::vector<FoldOutcome> folds;
    ConfusionCounts counts;  // pooled over folds
    Metrics pooled;
    double normal_test_error = 0.0;
};

struct ModeReport {
    Mode mode = Mode::overall;
    std::vector<RepeatReport> repeats;
    double precision_mean = 0, precision_std = 0;
    double recall_mean = 0, recall_std = 0;
    double error_rate_mean = 0, error_rate_std = 0;
};

struct EvalReport {
    ExperimentConfig config;
    std::vector<ModeReport> modes;
    bool has_improvement = false;
    double precision_improvement = 0.0;  // overall vs fixed
    double recall_improvement = 0.0;
    BaselineSweep baseline;
    bool has_baseline = false;
};

namespace detail {

inline void mean_std(const std::vector<double>& xs, double& mean, double& std_out) {
    mean = 0;
    std_out = 0;
    if (xs.empty()) return;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    for (double x : xs) std_out += (x - mean) * (x - mean);
    std_out = std::sqrt(std_out / static_cast<double>(xs.size()));
}

}  // namespace detail

inline EvalReport run_experiment(const std::vector<CeRecord>& raw_records,
                                 const std::vector<FailureRecord>& failures,
                                 const ExperimentConfig& cfg,
                                 std::vector<std::string>* warnings = nullptr) {
    if (cfg.repeats == 0) throw UsageError("evaluate: repeats must be >= 1");

    auto streams = group_streams(filter_records(raw_records));

    std::set<DimmId> failed_set;
    for (const auto& f : failures) failed_set.insert(f.dimm);
    std::vector<DimmId> failed_ids(failed_set.begin(), failed_set.end());
    if (failed_ids.empty()) throw DataError("evaluate: failure list is empty");

    std::vector<DimmId> normal_ids;
    for (const auto& [dimm, events] : streams)
        if (!failed_set.count(dimm)) normal_ids.push_back(dimm);

    EngineConfig engine = cfg.engine;
    engine.window_hours = cfg.window_hours;
    engine.mode = Mode::overall;
    FeatureMatrix base = extract_matrix(streams, engine, cfg.jobs);
    FeatureMatrix labeled = label_matrix(base, failures, cfg.lead_hours, warnings);

    auto splits = plan_repeats(normal_ids, cfg.n_normal, cfg.repeats, cfg.seed);
    if (!splits.empty() && splits.front().test_normal.empty() && warnings)
        warnings->push_back("n_normal equals the normal population; the normal test set is empty");

    EvalReport report;
    report.config = cfg;

    for (Mode mode : cfg.modes) {
        // fixed-mode vectors are the overall vectors with non-window slots
        // zeroed; extraction state is identical in both modes
        FeatureMatrix matrix = mode == Mode::fixed ? labeled.masked_fixed() : labeled;

        ModeReport mr;
        mr.mode = mode;
        std::vector<double> precisions, recalls, errors;
        for (const auto& split : splits) {
            CvConfig cv;
            cv.folds = cfg.folds;
            cv.forest = cfg.forest;
            cv.decision_threshold = cfg.decision_threshold;
            // same seed for both modes: identical folds and bootstrap draws
            // make the ablation a paired comparison
            cv.seed = derive_seed(cfg.seed, 0xa11ceULL, split.repeat);
            cv.jobs = cfg.jobs;
            auto result = cross_validate(matrix, failed_ids, split.cv_normal, split.test_normal, cv);

            RepeatReport rr;
            rr.repeat = split.repeat;
            rr.seed = cv.seed;
            rr.folds = result.folds;
            rr.counts = result.total;
            rr.pooled = metrics(result.total);
            rr.normal_test_error = result.normal_test_error_mean;
            precisions.push_back(rr.pooled.precision);
            recalls.push_back(rr.pooled.recall);
            errors.push_back(rr.normal_test_error);
            mr.repeats.push_back(std::move(rr));
        }
        detail::mean_std(precisions, mr.precision_mean, mr.precision_std);
        detail::mean_std(recalls, mr.recall_mean, mr.recall_std);
        detail::mean_std(errors, mr.error_rate_mean, mr.error_rate_std);
        report.modes.push_back(std::move(mr));
    }

    const ModeReport* overall = nullptr;
    const ModeReport* fixed = nullptr;
    for (const auto& mr : report.modes) {
        if (mr.mode == Mode::overall) overall = &mr;
        if (mr.mode == Mode::fixed) fixed = &mr;
    }
    if (overall && fixed && fixed->precision_mean > 0 && fixed->recall_mean > 0) {
        report.has_improvement = true;
        report.precision_improvement =
            relative_improvement(overall->precision_mean, fixed->precision_mean);
        report.recall_improvement = relative_improvement(overall->recall_mean, fixed->recall_mean);
    }

    if (cfg.run_baseline) {
        // operational practice applied fleet-wide: flag a DIMM when its peak
        // CE rate over any w-hours window reaches the threshold
        std::vector<double> rates;
        std::vector<bool> truth;
        for (const auto& [dimm, events] : streams) {
            std::vector<std::int64_t> ts;
            ts.reserve(events.size());
            for (const auto& rec : events) ts.push_back(rec.ts);
            rates.push_back(max_window_rate(ts, cfg.window_hours));
            truth.push_back(failed_set.count(dimm) != 0);
        }
        // failed DIMMs whose every CE was filtered still count as missed
        for (const auto& id : failed_ids) {
            if (!streams.count(id)) {
                rates.push_back(0.0);
                truth.push_back(true);
            }
        }
        report.baseline = threshold_baseline(rates, truth);
        report.has_baseline = true;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

inline const char* strategy_label(Mode m) {
    return m == Mode::overall ? "overall-ce-evolution" : "fixed-window-size";
}

inline nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json j;
    j["format"] = "cepred-report-1";
    j["catalog_version"] = catalog_version();
    j["config"] = {{"window_hours", report.config.window_hours},
                   {"lead_hours", report.config.lead_hours},
                   {"n_normal", report.config.n_normal},
                   {"repeats", report.config.repeats},
                   {"folds", report.config.folds},
                   {"seed", report.config.seed},
                   {"decision_threshold", report.config.decision_threshold},
                   {"forest",
                    {{"n_trees", report.config.forest.n_trees},
                     {"max_depth", report.config.forest.max_depth},
                     {"min_samples_split", report.config.forest.min_samples_split},
                     {"features_per_split", report.config.forest.features_per_split}}}};

    nlohmann::json rows = nlohmann::json::array();
    for (const auto& mr : report.modes) {
        nlohmann::json row;
        row["strategy"] = strategy_label(mr.mode);
        row["w_hours"] = report.config.window_hours;
        row["n_normal"] = report.config.n_normal;
        row["precision_mean"] = mr.precision_mean;
        row["precision_std"] = mr.precision_std;
        row["recall_mean"] = mr.recall_mean;
        row["recall_std"] = mr.recall_std;
        row["error_rate_mean"] = mr.error_rate_mean;
        row["error_rate_std"] = mr.error_rate_std;
        nlohmann::json reps = nlohmann::json::array();
        for (const auto& rr : mr.repeats) {
            nlohmann::json rj;
            rj["repeat"] = rr.repeat;
            rj["seed"] = rr.seed;
            rj["tp"] = rr.counts.tp;
            rj["fp"] = rr.counts.fp;
            rj["fn"] = rr.counts.fn;
            rj["tn"] = rr.counts.tn;
            rj["precision"] = rr.pooled.precision;
            rj["precision_defined"] = rr.pooled.precision_defined;
            rj["recall"] = rr.pooled.recall;
            rj["recall_defined"] = rr.pooled.recall_defined;
            rj["normal_test_error"] = rr.normal_test_error;
            nlohmann::json folds = nlohmann::json::array();
            for (const auto& f : rr.folds) {
                Metrics fm = metrics(f.counts);
                folds.push_back({{"tp", f.counts.tp},
                                 {"fp", f.counts.fp},
                                 {"fn", f.counts.fn},
                                 {"tn", f.counts.tn},
                                 {"precision", fm.precision},
                                 {"recall", fm.recall},
                                 {"normal_test_error", f.normal_test_error}});
            }
            rj["folds"] = std::move(folds);
            reps.push_back(std::move(rj));
        }
        row["repeats"] = std::move(reps);
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);

    if (report.has_improvement) {
        j["improvement_overall_vs_fixed"] = {{"precision", report.precision_improvement},
                                             {"recall", report.recall_improvement}};
    }
    if (report.has_baseline && !report.baseline.rows.empty()) {
        auto row_json = [](const BaselineRow& r) {
            return nlohmann::json{{"threshold", r.threshold},
                                  {"precision", r.precision},
                                  {"precision_defined", r.precision_defined},
                                  {"recall", r.recall},
                                  {"error_rate", r.error_rate},
                                  {"tp", r.counts.tp},
                                  {"fp", r.counts.fp},
                                  {"fn", r.counts.fn},
                                  {"tn", r.counts.tn}};
        };
        j["baseline"] = {
            {"n_thresholds", report.baseline.rows.size()},
            {"best_precision", row_json(report.baseline.rows[report.baseline.best_precision])},
            {"best_recall", row_json(report.baseline.rows[report.baseline.best_recall])}};
    }
    return j;
}

inline std::string baseline_sweep_csv(const BaselineSweep& sweep) {
    std::string out = "threshold,precision,recall,error_rate\n";
    for (const auto& r : sweep.rows) {
        out += format_double(r.threshold);
        out += ',';
        out += format_double(r.precision);
        out += ',';
        out += format_double(r.recall);
        out += ',';
        out += format_double(r.error_rate);
        out += '\n';
    }
    return out;
}

inline std::string render_table(const EvalReport& report) {
    std::ostringstream out;
    char line[256];
    out << "strategy               w[h]   normal  precision        recall           error rate "
           "(normal test)\n";
    for (const auto& mr : report.modes) {
        std::snprintf(line, sizeof(line), "%-21s %6.5g %8u  %.3f +/- %.3f  %.3f +/- %.3f  %.4f +/- %.4f\n",
                      strategy_label(mr.mode), report.config.window_hours, report.config.n_normal,
                      mr.precision_mean, mr.precision_std, mr.recall_mean, mr.recall_std,
                      mr.error_rate_mean, mr.error_rate_std);
        out << line;
    }
    if (report.has_improvement) {
        std::snprintf(line, sizeof(line),
                      "improvement overall vs fixed: precision %+.1f%%, recall %+.1f%%\n",
                      100.0 * report.precision_improvement, 100.0 * report.recall_improvement);
        out << line;
    }
    if (report.has_baseline && !report.baseline.rows.empty()) {
        const auto& bp = report.baseline.rows[report.baseline.best_precision];
        const auto& br = report.baseline.rows[report.baseline.best_recall];
        std::snprintf(line, sizeof(line),
                      "baseline best precision: threshold=%g precision=%.3f recall=%.3f "
                      "error=%.4f\n",
                      bp.threshold, bp.precision, bp.recall, bp.error_rate);
        out << line;
        std::snprintf(line, sizeof(line),
                      "baseline best recall:    threshold=%g precision=%.3f recall=%.3f "
                      "error=%.4f\n",
                      br.threshold, br.precision, br.recall, br.error_rate);
        out << line;
    }
    return out.str();
}

// Catalog reference document; the version string here matches the one in
// feature CSV files and model files.
inline std::string catalog_reference() {
    std::ostringstream out;
    out << "CE feature catalog " << catalog_version() << "\n";
    out << "features: " << catalog_size() << "\n\n";
    out << "Window W is the half-open interval (t0-w, t0]; history H is (-inf, t0-w].\n"
        << "Rates are events per hour: W rates divide by w, H rates divide by the span\n"
        << "from the first CE to the window edge. Rates over an empty interval are 0.\n"
        << "Relative changes divide by max(history value, 1e-9). In fixed-window mode\n"
        << "every history/lifetime/delta slot is 0.\n\n";
    out << "idx  name                                scope     taxonomy\n";
    char line[160];
    const auto& defs = catalog();
    for (std::size_t i = 0; i < defs.size(); ++i) {
        std::snprintf(line, sizeof(line), "%3zu  %-35s %-9s %s\n", i, defs[i].name.c_str(),
                      scope_name(defs[i].scope), defs[i].taxonomy.c_str());
        out << line;
    }
    return out.str();
}

}  // namespace cepred
