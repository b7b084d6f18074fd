#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cepred/pipeline.hpp"
#include "cepred/simgen.hpp"

using namespace cepred;
namespace fs = std::filesystem;

namespace {

FleetConfig test_fleet() {
    FleetConfig cfg;
    cfg.n_normal = 120;
    cfg.n_failing = 14;
    cfg.duration_hours = 2000.0;
    cfg.seed = 21;
    return cfg;
}

ExperimentConfig small_experiment() {
    ExperimentConfig cfg;
    cfg.window_hours = 168.0;
    cfg.lead_hours = 3.0;
    cfg.n_normal = 60;
    cfg.repeats = 2;
    cfg.folds = 4;
    cfg.forest.n_trees = 15;
    cfg.forest.max_depth = 12;
    cfg.seed = 5;
    cfg.jobs = 2;
    return cfg;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("cepred_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run_cli(const std::string& args) {
    std::string cmd = std::string(CEPRED_BIN) + " " + args + " 2>/dev/null";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) { return read_file(p); }

}  // namespace

TEST_CASE("label_matrix: gap labels plus lead-time exclusion") {
    FeatureMatrix m;
    std::vector<double> row(m.n_features(), 0.0);
    const std::int64_t H = 3600;
    auto add = [&](const DimmId& id, std::int64_t ts) {
        m.add_row(m.intern_dimm(id), ts, 0, row);
    };
    // failed DIMM: burst after a big gap; failure at 1000h, m=3h
    add("F1", 10 * H);
    add("F1", 20 * H);
    add("F1", 990 * H);
    add("F1", 998 * H);  // inside the lead window, dropped
    add("F1", 999 * H);  // inside the lead window, dropped
    add("N1", 50 * H);

    auto labeled = label_matrix(m, {{"F1", 1000 * H}}, 3.0);
    REQUIRE(labeled.n_rows() == 4);
    // F1 rows: 10h,20h label 0; 990h label 1 (largest gap 20->990)
    CHECK(labeled.row_label(0) == 0);
    CHECK(labeled.row_label(1) == 0);
    CHECK(labeled.row_label(2) == 1);
    CHECK(labeled.dimm_of_row(3) == "N1");
    CHECK(labeled.row_label(3) == 0);

    // m = 0 keeps everything
    auto noexcl = label_matrix(m, {{"F1", 1000 * H}}, 0.0);
    CHECK(noexcl.n_rows() == 6);

    // all samples inside the lead window: warning, no contribution
    std::vector<std::string> warnings;
    auto all_gone = label_matrix(m, {{"F1", 10000 * H}}, 20000.0, &warnings);
    CHECK(all_gone.n_rows() == 1);  // only N1 survives
    REQUIRE_FALSE(warnings.empty());
    CHECK(warnings.front().find("F1") != std::string::npos);
}

TEST_CASE("extract_matrix is deterministic and parallel-safe") {
    auto fleet = generate(test_fleet());
    auto streams = group_streams(filter_records(fleet.records));
    EngineConfig cfg;
    cfg.window_hours = 168.0;
    auto m1 = extract_matrix(streams, cfg, 1);
    auto m2 = extract_matrix(streams, cfg, 4);
    std::ostringstream s1, s2;
    write_feature_csv(s1, m1);
    write_feature_csv(s2, m2);
    CHECK(s1.str() == s2.str());
    CHECK(m1.n_rows() > 0);
}

TEST_CASE("feature CSV round-trips through write/read") {
    auto fleet = generate(test_fleet());
    auto streams = group_streams(filter_records(fleet.records));
    EngineConfig cfg;
    auto m = extract_matrix(streams, cfg, 2);
    auto labeled = label_matrix(m, fleet.failures, 3.0);

    std::ostringstream out;
    write_feature_csv(out, labeled);
    std::istringstream in(out.str());
    auto back = read_feature_csv(in);
    std::ostringstream out2;
    write_feature_csv(out2, back);
    CHECK(out.str() == out2.str());
}

TEST_CASE("run_experiment produces a self-consistent deterministic report") {
    auto fleet = generate(test_fleet());
    auto cfg = small_experiment();
    auto report = run_experiment(fleet.records, fleet.failures, cfg);

    REQUIRE(report.modes.size() == 2);
    for (const auto& mr : report.modes) {
        REQUIRE(mr.repeats.size() == cfg.repeats);
        for (const auto& rr : mr.repeats) {
            CHECK(rr.counts.tp + rr.counts.fn == fleet.failures.size());
            CHECK(rr.counts.fp + rr.counts.tn == cfg.n_normal);
            REQUIRE(rr.folds.size() == cfg.folds);
        }
        // means lie within [min, max] of the repeat values
        double lo = 1e9, hi = -1e9;
        for (const auto& rr : mr.repeats) {
            lo = std::min(lo, rr.pooled.precision);
            hi = std::max(hi, rr.pooled.precision);
        }
        CHECK(mr.precision_mean >= lo);
        CHECK(mr.precision_mean <= hi);
        CHECK(mr.precision_std >= 0.0);
    }
    REQUIRE(report.has_baseline);
    CHECK_FALSE(report.baseline.rows.empty());

    auto report2 = run_experiment(fleet.records, fleet.failures, cfg);
    CHECK(report_to_json(report).dump() == report_to_json(report2).dump());

    auto cfg_serial = cfg;
    cfg_serial.jobs = 1;
    auto report3 = run_experiment(fleet.records, fleet.failures, cfg_serial);
    CHECK(report_to_json(report).dump() == report_to_json(report3).dump());
}

TEST_CASE("std is zero when all repeats agree") {
    std::vector<double> xs = {0.5, 0.5, 0.5};
    double mean = 0, sd = 1;
    detail::mean_std(xs, mean, sd);
    CHECK(mean == 0.5);
    CHECK(sd == 0.0);
}

TEST_CASE("cli: full pipeline end to end") {
    TempDir dir;
    const std::string d = dir.path.string();

    REQUIRE(run_cli("simulate --out-dir " + d +
                    " --n-normal 120 --n-failing 14 --duration-hours 2000 --seed 21 "
                    "--self-check") == 0);
    REQUIRE(fs::exists(dir.path / "celog.jsonl"));
    REQUIRE(fs::exists(dir.path / "failures.csv"));
    REQUIRE(fs::exists(dir.path / "manifest.json"));

    REQUIRE(run_cli("extract --ce-log " + d + "/celog.jsonl --out " + d +
                    "/features.csv --window-hours 168 --mode overall --jobs 2") == 0);
    REQUIRE(run_cli("label --features " + d + "/features.csv --failures " + d +
                    "/failures.csv --out " + d + "/labeled.csv --split-out " + d +
                    "/split.json --lead-hours 3 --n-normal 60 --repeats 2 --seed 5") == 0);
    REQUIRE(run_cli("train --features " + d + "/labeled.csv --out " + d +
                    "/model.json --split " + d +
                    "/split.json --repeat 0 --trees 15 --max-depth 12 --seed 5 --jobs 2") == 0);
    REQUIRE(run_cli("predict --model " + d + "/model.json --features " + d +
                    "/labeled.csv --out " + d + "/verdicts.csv") == 0);

    std::string verdicts = slurp(dir.path / "verdicts.csv");
    CHECK(verdicts.rfind("dimm,fail,first_alarm_ts,max_proba\n", 0) == 0);
    CHECK(verdicts.find("F00000,") != std::string::npos);

    REQUIRE(run_cli("evaluate --ce-log " + d + "/celog.jsonl --failures " + d +
                    "/failures.csv --out-dir " + d +
                    "/eval --w 168 --mode both --n-normal 60 --repeats 2 --folds 4 "
                    "--trees 15 --max-depth 12 --seed 5 --jobs 2") == 0);
    REQUIRE(fs::exists(dir.path / "eval/report.json"));
    REQUIRE(fs::exists(dir.path / "eval/report.txt"));
    REQUIRE(fs::exists(dir.path / "eval/baseline.csv"));

    std::string baseline = slurp(dir.path / "eval/baseline.csv");
    CHECK(baseline.rfind("threshold,precision,recall,error_rate\n", 0) == 0);

    // determinism: byte-identical artifacts across reruns and jobs counts
    REQUIRE(run_cli("evaluate --ce-log " + d + "/celog.jsonl --failures " + d +
                    "/failures.csv --out-dir " + d +
                    "/eval2 --w 168 --mode both --n-normal 60 --repeats 2 --folds 4 "
                    "--trees 15 --max-depth 12 --seed 5 --jobs 1") == 0);
    CHECK(slurp(dir.path / "eval/report.json") == slurp(dir.path / "eval2/report.json"));
    CHECK(slurp(dir.path / "eval/baseline.csv") == slurp(dir.path / "eval2/baseline.csv"));

    // config file + flag override: flags win
    atomic_write(dir.path / "extract.json",
                 "{\"ce-log\":\"" + d + "/celog.jsonl\",\"out\":\"" + d +
                     "/f2.csv\",\"window-hours\":3}\n");
    REQUIRE(run_cli("extract --config " + d + "/extract.json --out " + d + "/f3.csv") == 0);
    REQUIRE(fs::exists(dir.path / "f3.csv"));
    CHECK_FALSE(fs::exists(dir.path / "f2.csv"));
}

TEST_CASE("cli: empty CE log extracts a header-only CSV") {
    TempDir dir;
    atomic_write(dir.path / "empty.jsonl", "");
    REQUIRE(run_cli("extract --ce-log " + dir.path.string() + "/empty.jsonl --out " +
                    dir.path.string() + "/features.csv") == 0);
    std::string csv = slurp(dir.path / "features.csv");
    std::size_t newlines = std::count(csv.begin(), csv.end(), '\n');
    CHECK(newlines == 2);  // catalog comment + header
    CHECK(csv.find("dimm,ts,label,general.ce_count_W") != std::string::npos);
}

TEST_CASE("cli: exit codes") {
    TempDir dir;
    const std::string d = dir.path.string();
    CHECK(run_cli("extract --no-such-flag") == 2);
    CHECK(run_cli("nonsense") == 2);
    CHECK(run_cli("extract --ce-log " + d + "/missing.jsonl --out " + d + "/x.csv") == 3);
    CHECK(run_cli("extract --ce-log " + d + "/missing.jsonl --out " + d +
                  "/x.csv --window-hours 0") == 2);

    // catalog-version mismatch is a hard data error
    atomic_write(dir.path / "bad.csv", "# catalog cecat-0-00000000\ndimm,ts,label\n");
    CHECK(run_cli("train --features " + d + "/bad.csv --out " + d + "/m.json") == 3);

    // no partial artifact left behind
    CHECK_FALSE(fs::exists(dir.path / "x.csv"));
    CHECK_FALSE(fs::exists(dir.path / "m.json"));
}
