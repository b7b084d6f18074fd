// cepred: DIMM failure prediction from correctable-error logs.
// Subcommands wire the pipeline end to end: simulate -> extract -> label ->
// train -> predict -> evaluate, plus the feature catalog reference.
//
// Exit codes: 0 success, 2 usage error, 3 data/validation error, 4 internal.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "cepred/celog.hpp"
#include "cepred/dataset.hpp"
#include "cepred/error.hpp"
#include "cepred/eval.hpp"
#include "cepred/features.hpp"
#include "cepred/forest.hpp"
#include "cepred/labeling.hpp"
#include "cepred/pipeline.hpp"
#include "cepred/simgen.hpp"

namespace {

using namespace cepred;

// Per-subcommand JSON config files. Keys are long option names without the
// leading dashes; values fill any option not given on the command line, so
// explicit flags always win.
struct ConfigHook {
    CLI::App* cmd = nullptr;
    std::string path;

    void add(CLI::App* c) {
        cmd = c;
        cmd->add_option("--config", path, "JSON config file; explicit flags take precedence");
    }

    void apply() const {
        if (path.empty()) return;
        nlohmann::json j = nlohmann::json::parse(read_file(path), nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw DataError("config file '" + path + "' is not a JSON object");
        for (auto& [key, value] : j.items()) {
            if (key == "config") continue;
            CLI::Option* opt = cmd->get_option_no_throw("--" + key);
            if (!opt) throw UsageError("config file '" + path + "': unknown option '" + key + "'");
            if (opt->count() > 0) continue;  // command line takes precedence
            if (value.is_boolean()) {
                if (value.get<bool>()) {
                    opt->add_result("true");
                    opt->run_callback();
                }
            } else {
                opt->add_result(value.is_string() ? value.get<std::string>() : value.dump());
                opt->run_callback();
            }
        }
    }

    // a value must have arrived either from the command line or the config
    void require(const char* name) const {
        if (cmd->count(name) == 0)
            throw UsageError(std::string(name) + " is required (flag or config file)");
    }
};

std::vector<CeRecord> load_filtered_log(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open CE log '" + path + "'");
    ParseResult parsed = parse_stream(in);
    if (!parsed.errors.empty()) {
        std::cerr << "warning: " << parsed.errors.size() << " malformed line(s) in '" << path
                  << "'";
        std::cerr << " (first at line " << parsed.errors.front().line << ": "
                  << parsed.errors.front().message << ")\n";
    }
    return filter_records(std::move(parsed.records));
}

std::vector<FailureRecord> load_failures(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open failure list '" + path + "'");
    return parse_failures_csv(in);
}

FeatureMatrix load_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open feature file '" + path + "'");
    return read_feature_csv(in);
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string out_dir;
    std::string fleet_config;
    std::uint32_t n_normal = 2000;
    std::uint32_t n_failing = 60;
    double duration_hours = 4320.0;
    std::uint64_t seed = 7;
    bool self_check = false;
};

void run_simulate(const SimulateArgs& args, const CLI::App* cmd) {
    FleetConfig cfg;
    if (!args.fleet_config.empty()) {
        nlohmann::json j = nlohmann::json::parse(read_file(args.fleet_config), nullptr, false);
        if (j.is_discarded()) throw DataError("fleet config is not valid JSON");
        cfg = fleet_config_from_json(j);
    }
    if (cmd->count("--n-normal")) cfg.n_normal = args.n_normal;
    if (cmd->count("--n-failing")) cfg.n_failing = args.n_failing;
    if (cmd->count("--duration-hours")) cfg.duration_hours = args.duration_hours;
    if (cmd->count("--seed")) cfg.seed = args.seed;

    FleetOutput fleet = generate(cfg);
    if (args.self_check) {
        auto report = validate_manifest(fleet.records, fleet.failures, fleet.manifest);
        if (!report.ok) {
            for (const auto& issue : report.issues) std::cerr << "self-check: " << issue << "\n";
            throw InternalError("simulator self-check failed");
        }
        std::cerr << "self-check: ok\n";
    }

    namespace fs = std::filesystem;
    fs::path dir(args.out_dir);
    {
        std::ostringstream ss;
        write_stream(ss, fleet.records);
        atomic_write(dir / "celog.jsonl", ss.str());
    }
    {
        std::ostringstream ss;
        write_failures_csv(ss, fleet.failures);
        atomic_write(dir / "failures.csv", ss.str());
    }
    atomic_write(dir / "manifest.json", manifest_to_json(fleet.manifest).dump(2) + "\n");
    std::cerr << "simulate: " << fleet.records.size() << " CEs, " << fleet.failures.size()
              << " failures -> " << dir.string() << "\n";
}

struct ExtractArgs {
    std::string ce_log;
    std::string out;
    double window_hours = 168.0;
    std::string mode = "overall";
    std::uint32_t repeat_threshold = 2;
    std::uint32_t neighbour_radius = 1;
    std::size_t key_cap = 65536;
    unsigned jobs = 1;
};

void run_extract(const ExtractArgs& args) {
    EngineConfig cfg;
    cfg.window_hours = args.window_hours;
    cfg.mode = parse_mode(args.mode);
    cfg.repeat_threshold = args.repeat_threshold;
    cfg.neighbour_radius = args.neighbour_radius;
    cfg.key_cap = args.key_cap;
    cfg.validate();

    auto streams = group_streams(load_filtered_log(args.ce_log));
    FeatureMatrix m = extract_matrix(streams, cfg, args.jobs);
    std::ostringstream ss;
    write_feature_csv(ss, m);
    atomic_write(args.out, ss.str());
    std::cerr << "extract: " << m.n_rows() << " samples over " << m.dimm_ids().size()
              << " DIMMs -> " << args.out << "\n";
}

struct LabelArgs {
    std::string features;
    std::string failures;
    std::string out;
    std::string split_out;
    double lead_hours = 3.0;
    std::uint32_t n_normal = 0;
    std::uint32_t repeats = 5;
    std::uint64_t seed = 1;
};

void run_label(const LabelArgs& args) {
    FeatureMatrix m = load_features(args.features);
    auto failures = load_failures(args.failures);
    std::vector<std::string> warnings;
    FeatureMatrix labeled = label_matrix(m, failures, args.lead_hours, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    std::set<DimmId> failed_set;
    for (const auto& f : failures) failed_set.insert(f.dimm);
    std::vector<DimmId> normal_ids;
    for (const auto& id : m.dimm_ids())
        if (!failed_set.count(id)) normal_ids.push_back(id);

    SplitPlan plan;
    plan.lead_hours = args.lead_hours;
    plan.n_normal = args.n_normal;
    plan.master_seed = args.seed;
    plan.failed.assign(failed_set.begin(), failed_set.end());
    plan.repeats = plan_repeats(normal_ids, args.n_normal, args.repeats, args.seed);
    if (!plan.repeats.empty() && plan.repeats.front().test_normal.empty())
        std::cerr << "warning: n_normal equals the normal population; normal test set is empty\n";

    std::ostringstream ss;
    write_feature_csv(ss, labeled);
    atomic_write(args.out, ss.str());
    if (!args.split_out.empty())
        atomic_write(args.split_out, split_plan_to_json(plan).dump(2) + "\n");
    std::cerr << "label: " << labeled.n_rows() << " samples kept of " << m.n_rows() << " -> "
              << args.out << "\n";
}

struct TrainArgs {
    std::string features;
    std::string out;
    std::string split;
    std::uint32_t repeat = 0;
    ForestParams forest;
    unsigned jobs = 1;
};

void run_train(const TrainArgs& args) {
    FeatureMatrix m = load_features(args.features);
    std::vector<std::uint32_t> rows;
    if (!args.split.empty()) {
        nlohmann::json j = nlohmann::json::parse(read_file(args.split), nullptr, false);
        if (j.is_discarded()) throw DataError("split manifest is not valid JSON");
        SplitPlan plan = split_plan_from_json(j);
        if (args.repeat >= plan.repeats.size())
            throw DataError("split manifest has " + std::to_string(plan.repeats.size()) +
                            " repeats; --repeat " + std::to_string(args.repeat) + " out of range");
        std::set<DimmId> train_set(plan.failed.begin(), plan.failed.end());
        for (const auto& id : plan.repeats[args.repeat].cv_normal) train_set.insert(id);
        for (std::size_t r = 0; r < m.n_rows(); ++r)
            if (train_set.count(m.dimm_of_row(r))) rows.push_back(static_cast<std::uint32_t>(r));
    } else {
        rows.resize(m.n_rows());
        for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = static_cast<std::uint32_t>(r);
    }
    TrainedForest forest = train_forest(m, rows, args.forest, args.jobs);
    atomic_write(args.out, forest_to_json(forest).dump() + "\n");
    std::cerr << "train: " << forest.trees.size() << " trees on " << rows.size()
              << " samples -> " << args.out << "\n";
}

struct PredictArgs {
    std::string model;
    std::string features;
    std::string out;
    double threshold = 0.5;
};

void run_predict(const PredictArgs& args) {
    nlohmann::json j = nlohmann::json::parse(read_file(args.model), nullptr, false);
    if (j.is_discarded()) throw DataError("model file is not valid JSON");
    TrainedForest forest = forest_from_json(j);
    FeatureMatrix m = load_features(args.features);

    std::vector<DimmId> ids = m.dimm_ids();
    std::sort(ids.begin(), ids.end());
    auto rows_by_dimm = m.rows_by_dimm();

    std::string out = "dimm,fail,first_alarm_ts,max_proba\n";
    for (const auto& id : ids) {
        auto verdict = predict_dimm(forest, m, rows_by_dimm[m.dimm_index(id)], args.threshold);
        out += id;
        out += verdict.fail ? ",1," : ",0,";
        if (verdict.fail) out += std::to_string(verdict.first_alarm_ts);
        out += ',';
        out += format_double(verdict.max_proba);
        out += '\n';
    }
    atomic_write(args.out, out);
    std::cerr << "predict: " << ids.size() << " DIMMs -> " << args.out << "\n";
}

struct EvaluateArgs {
    std::string ce_log;
    std::string failures;
    std::string out_dir;
    double window_hours = 168.0;
    std::string mode = "both";
    double lead_hours = 3.0;
    std::uint32_t n_normal = 5000;
    std::uint32_t repeats = 5;
    std::uint32_t folds = 10;
    ForestParams forest;
    double threshold = 0.5;
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    bool no_baseline = false;
};

void run_evaluate(const EvaluateArgs& args) {
    ExperimentConfig cfg;
    cfg.window_hours = args.window_hours;
    if (args.mode == "both") cfg.modes = {Mode::overall, Mode::fixed};
    else cfg.modes = {parse_mode(args.mode)};
    cfg.lead_hours = args.lead_hours;
    cfg.n_normal = args.n_normal;
    cfg.repeats = args.repeats;
    cfg.folds = args.folds;
    cfg.forest = args.forest;
    cfg.decision_threshold = args.threshold;
    cfg.seed = args.seed;
    cfg.jobs = args.jobs;
    cfg.run_baseline = !args.no_baseline;

    std::ifstream log_in(args.ce_log, std::ios::binary);
    if (!log_in) throw DataError("cannot open CE log '" + args.ce_log + "'");
    ParseResult parsed = parse_stream(log_in);
    if (!parsed.errors.empty())
        std::cerr << "warning: " << parsed.errors.size() << " malformed line(s) in '"
                  << args.ce_log << "'\n";
    auto failures = load_failures(args.failures);

    std::vector<std::string> warnings;
    EvalReport report = run_experiment(parsed.records, failures, cfg, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    namespace fs = std::filesystem;
    fs::path dir(args.out_dir);
    atomic_write(dir / "report.json", report_to_json(report).dump(2) + "\n");
    std::string table = render_table(report);
    atomic_write(dir / "report.txt", table);
    if (report.has_baseline)
        atomic_write(dir / "baseline.csv", baseline_sweep_csv(report.baseline));
    std::cerr << table;
    std::cerr << "evaluate: report -> " << (dir / "report.json").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DIMM failure prediction from correctable-error logs"};
    app.require_subcommand(1);

    SimulateArgs sim;
    ConfigHook sim_cfg;
    CLI::App* c_sim = app.add_subcommand("simulate", "generate a synthetic CE fleet");
    sim_cfg.add(c_sim);
    c_sim->add_option("--out-dir", sim.out_dir, "output directory for celog.jsonl, failures.csv, manifest.json");
    c_sim->add_option("--fleet-config", sim.fleet_config, "JSON fleet config (fault mix, per-kind models)");
    c_sim->add_option("--n-normal", sim.n_normal, "healthy DIMM count");
    c_sim->add_option("--n-failing", sim.n_failing, "failing DIMM count");
    c_sim->add_option("--duration-hours", sim.duration_hours, "fleet observation span");
    c_sim->add_option("--seed", sim.seed, "master seed");
    c_sim->add_flag("--self-check", sim.self_check, "validate the stream against the manifest");
    c_sim->callback([&] {
        sim_cfg.apply();
        sim_cfg.require("--out-dir");
        run_simulate(sim, c_sim);
    });

    ExtractArgs ext;
    ConfigHook ext_cfg;
    CLI::App* c_ext = app.add_subcommand("extract", "compute the feature matrix from a CE log");
    ext_cfg.add(c_ext);
    c_ext->add_option("--ce-log", ext.ce_log, "CE log (JSONL)");
    c_ext->add_option("--out", ext.out, "feature CSV output");
    c_ext->add_option("--window-hours,--w", ext.window_hours, "observation window w in hours");
    c_ext->add_option("--mode", ext.mode, "overall|fixed")->check(CLI::IsMember({"overall", "fixed"}));
    c_ext->add_option("--repeat-threshold", ext.repeat_threshold, "CEs per key to count as repeating");
    c_ext->add_option("--neighbour-radius", ext.neighbour_radius, "adjacency radius");
    c_ext->add_option("--key-cap", ext.key_cap, "per-set key cap");
    c_ext->add_option("--jobs", ext.jobs, "worker threads");
    c_ext->callback([&] {
        ext_cfg.apply();
        ext_cfg.require("--ce-log");
        ext_cfg.require("--out");
        run_extract(ext);
    });

    LabelArgs lab;
    ConfigHook lab_cfg;
    CLI::App* c_lab = app.add_subcommand("label", "label samples and plan subsampling repeats");
    lab_cfg.add(c_lab);
    c_lab->add_option("--features", lab.features, "feature CSV from extract");
    c_lab->add_option("--failures", lab.failures, "failure list CSV");
    c_lab->add_option("--out", lab.out, "labeled CSV output");
    c_lab->add_option("--split-out", lab.split_out, "split manifest JSON output");
    c_lab->add_option("--lead-hours", lab.lead_hours, "lead time m in hours");
    c_lab->add_option("--n-normal", lab.n_normal, "normal DIMMs subsampled per repeat");
    c_lab->add_option("--repeats", lab.repeats, "sampling repeats");
    c_lab->add_option("--seed", lab.seed, "master seed");
    c_lab->callback([&] {
        lab_cfg.apply();
        lab_cfg.require("--features");
        lab_cfg.require("--failures");
        lab_cfg.require("--out");
        lab_cfg.require("--n-normal");
        run_label(lab);
    });

    TrainArgs tra;
    ConfigHook tra_cfg;
    CLI::App* c_tra = app.add_subcommand("train", "train a random forest on a labeled CSV");
    tra_cfg.add(c_tra);
    c_tra->add_option("--features", tra.features, "labeled feature CSV");
    c_tra->add_option("--out", tra.out, "model JSON output");
    c_tra->add_option("--split", tra.split, "split manifest; restricts to one repeat's training pool");
    c_tra->add_option("--repeat", tra.repeat, "repeat index within --split");
    c_tra->add_option("--trees", tra.forest.n_trees, "number of trees");
    c_tra->add_option("--max-depth", tra.forest.max_depth, "max tree depth (-1: unbounded)");
    c_tra->add_option("--min-samples-split", tra.forest.min_samples_split, "min samples to split");
    c_tra->add_option("--mtry", tra.forest.features_per_split, "features per split (-1: sqrt(d))");
    c_tra->add_option("--seed", tra.forest.seed, "forest seed");
    c_tra->add_option("--jobs", tra.jobs, "worker threads");
    c_tra->callback([&] {
        tra_cfg.apply();
        tra_cfg.require("--features");
        tra_cfg.require("--out");
        run_train(tra);
    });

    PredictArgs pre;
    ConfigHook pre_cfg;
    CLI::App* c_pre = app.add_subcommand("predict", "per-DIMM fail verdicts from a model");
    pre_cfg.add(c_pre);
    c_pre->add_option("--model", pre.model, "model JSON");
    c_pre->add_option("--features", pre.features, "feature CSV");
    c_pre->add_option("--out", pre.out, "verdict CSV output");
    c_pre->add_option("--threshold", pre.threshold, "alarm threshold on the degradation probability");
    c_pre->callback([&] {
        pre_cfg.apply();
        pre_cfg.require("--model");
        pre_cfg.require("--features");
        pre_cfg.require("--out");
        run_predict(pre);
    });

    EvaluateArgs eva;
    ConfigHook eva_cfg;
    CLI::App* c_eva = app.add_subcommand("evaluate", "repeated subsampling + k-fold CV + baseline");
    eva_cfg.add(c_eva);
    c_eva->add_option("--ce-log", eva.ce_log, "CE log (JSONL)");
    c_eva->add_option("--failures", eva.failures, "failure list CSV");
    c_eva->add_option("--out-dir", eva.out_dir, "output directory");
    c_eva->add_option("--w,--window-hours", eva.window_hours, "observation window w in hours");
    c_eva->add_option("--mode", eva.mode, "overall|fixed|both")->check(CLI::IsMember({"overall", "fixed", "both"}));
    c_eva->add_option("--lead-hours", eva.lead_hours, "lead time m in hours");
    c_eva->add_option("--n-normal", eva.n_normal, "normal DIMMs subsampled per repeat");
    c_eva->add_option("--repeats", eva.repeats, "sampling repeats");
    c_eva->add_option("--folds", eva.folds, "cross-validation folds");
    c_eva->add_option("--trees", eva.forest.n_trees, "number of trees");
    c_eva->add_option("--max-depth", eva.forest.max_depth, "max tree depth (-1: unbounded)");
    c_eva->add_option("--min-samples-split", eva.forest.min_samples_split, "min samples to split");
    c_eva->add_option("--mtry", eva.forest.features_per_split, "features per split (-1: sqrt(d))");
    c_eva->add_option("--threshold", eva.threshold, "alarm threshold");
    c_eva->add_option("--seed", eva.seed, "master seed");
    c_eva->add_option("--jobs", eva.jobs, "worker threads");
    c_eva->add_flag("--no-baseline", eva.no_baseline, "skip the CE-rate threshold baseline");
    c_eva->callback([&] {
        eva_cfg.apply();
        eva_cfg.require("--ce-log");
        eva_cfg.require("--failures");
        eva_cfg.require("--out-dir");
        eva_cfg.require("--n-normal");
        run_evaluate(eva);
    });

    std::string catalog_out;
    CLI::App* c_cat = app.add_subcommand("catalog", "write the feature catalog reference");
    c_cat->add_option("--out", catalog_out, "reference document output")->required();
    c_cat->callback([&] { atomic_write(catalog_out, cepred::catalog_reference()); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    } catch (const cepred::UsageError& e) {
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    } catch (const cepred::DataError& e) {
        std::cerr << "error: data: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
