#pragma once

// Seeded synthetic fleet generator. Healthy DIMMs emit homogeneous-Poisson
// transient CEs at uniform addresses; each failing DIMM draws a fault model
// and emits a sparse precursor phase on its fault locus followed by a denser
// burst phase ending at the failure time. Per-DIMM streams are generated
// independently from derived seeds, then merged, so parallel and serial
// generation produce identical output.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cepred/celog.hpp"
#include "cepred/error.hpp"
#include "cepred/rng.hpp"

namespace cepred {

enum class FaultKind { transient, stuck_cell, faulty_row, faulty_column, faulty_bank };

inline const char* fault_kind_name(FaultKind k) {
    switch (k) {
        case FaultKind::transient: return "transient";
        case FaultKind::stuck_cell: return "stuck_cell";
        case FaultKind::faulty_row: return "faulty_row";
        case FaultKind::faulty_column: return "faulty_column";
        case FaultKind::faulty_bank: return "faulty_bank";
    }
    return "?";
}

inline FaultKind parse_fault_kind(const std::string& s) {
    if (s == "transient") return FaultKind::transient;
    if (s == "stuck_cell") return FaultKind::stuck_cell;
    if (s == "faulty_row") return FaultKind::faulty_row;
    if (s == "faulty_column") return FaultKind::faulty_column;
    if (s == "faulty_bank") return FaultKind::faulty_bank;
    throw DataError("unknown fault kind '" + s + "'");
}

struct FaultModel {
    double precursor_rate = 0.01;   // events/hour during the precursor phase
    double precursor_hours = 500.0;
    double burst_rate = 1.0;        // events/hour during the burst phase
    double burst_hours = 48.0;
    double adjacent_prob = 0.05;    // chance an event leaks to a neighbouring address
};

struct FleetConfig {
    std::uint32_t n_normal = 2000;
    std::uint32_t n_failing = 60;
    double duration_hours = 4320.0;  // 180 days
    Geometry geometry;
    double normal_rate = 0.02;  // transient CEs/hour for healthy DIMMs
    double read_fraction = 0.8;  // remainder are ce.scrub
    double uce_fraction = 0.005;
    double missing_addr_fraction = 0.005;
    std::vector<std::pair<FaultKind, double>> fault_mix = {
        {FaultKind::stuck_cell, 0.40},
        {FaultKind::faulty_row, 0.25},
        {FaultKind::faulty_column, 0.25},
        {FaultKind::faulty_bank, 0.10},
    };
    std::map<FaultKind, FaultModel> models = default_fault_models();
    std::uint64_t seed = 7;

    static std::map<FaultKind, FaultModel> default_fault_models();
    void validate() const;
};

inline std::map<FaultKind, FaultModel> FleetConfig::default_fault_models() {
    std::map<FaultKind, FaultModel> m;
    m[FaultKind::stuck_cell] = FaultModel{0.01, 500.0, 1.0, 48.0, 0.05};
    m[FaultKind::faulty_row] = FaultModel{0.01, 500.0, 0.35, 48.0, 0.05};
    m[FaultKind::faulty_column] = FaultModel{0.01, 500.0, 0.35, 48.0, 0.05};
    m[FaultKind::faulty_bank] = FaultModel{0.01, 500.0, 0.15, 48.0, 0.05};
    m[FaultKind::transient] = FaultModel{0.01, 500.0, 0.25, 48.0, 0.0};
    return m;
}

inline void FleetConfig::validate() const {
    geometry.validate();
    if (!(duration_hours > 0)) throw DataError("fleet config: duration must be > 0");
    if (normal_rate < 0) throw DataError("fleet config: normal rate must be >= 0");
    if (read_fraction < 0 || read_fraction > 1)
        throw DataError("fleet config: read fraction must be in [0,1]");
    if (uce_fraction < 0 || uce_fraction >= 1 || missing_addr_fraction < 0 ||
        missing_addr_fraction >= 1)
        throw DataError("fleet config: noise fractions must be in [0,1)");
    if (n_failing > 0) {
        double total_weight = 0;
        for (auto& [kind, weight] : fault_mix) {
            if (weight < 0) throw DataError("fleet config: fault mix weights must be >= 0");
            total_weight += weight;
            auto it = models.find(kind);
            if (it == models.end())
                throw DataError(std::string("fleet config: no model for fault kind '") +
                                fault_kind_name(kind) + "'");
            const FaultModel& fm = it->second;
            if (fm.precursor_rate < 0 || fm.burst_rate < 0)
                throw DataError("fleet config: fault rates must be >= 0");
            if (!(fm.burst_rate > fm.precursor_rate))
                throw DataError(std::string("fleet config: burst rate must exceed precursor "
                                            "rate for fault kind '") +
                                fault_kind_name(kind) + "'");
            if (fm.precursor_hours + fm.burst_hours > duration_hours)
                throw DataError(std::string("fleet config: precursor+burst span exceeds fleet "
                                            "duration for fault kind '") +
                                fault_kind_name(kind) + "'");
            if (fm.adjacent_prob < 0 || fm.adjacent_prob >= 1)
                throw DataError("fleet config: adjacent_prob must be in [0,1)");
        }
        if (!(total_weight > 0)) throw DataError("fleet config: fault mix weights sum to zero");
    }
}

struct FaultLocus {
    std::optional<std::uint32_t> bank;
    std::optional<std::uint32_t> row;
    std::optional<std::uint32_t> col;
};

struct DimmTruth {
    DimmId dimm;
    bool failing = false;
    FaultKind kind = FaultKind::transient;
    FaultLocus locus;
    std::int64_t precursor_start_ts = 0;
    std::int64_t burst_start_ts = 0;
    std::int64_t failure_ts = 0;
    std::uint64_t n_precursor = 0;
    std::uint64_t n_burst = 0;
    std::uint64_t n_total = 0;
};

struct FleetManifest {
    std::uint64_t seed = 0;
    std::uint32_t n_normal = 0;
    std::uint32_t n_failing = 0;
    double duration_hours = 0;
    std::vector<DimmTruth> dimms;
};

struct FleetOutput {
    std::vector<CeRecord> records;  // globally time-sorted
    std::vector<FailureRecord> failures;
    FleetManifest manifest;
};

namespace detail {

struct EventDraw {
    Rng& rng;
    const FleetConfig& cfg;

    // nudged by at most 1 in a uniformly chosen direction, clamped to geometry
    std::uint32_t nudge(std::uint32_t v, std::uint32_t limit) {
        bool up = rng.next_bernoulli(0.5);
        if (up) return v + 1 < limit ? v + 1 : (v > 0 ? v - 1 : v);
        return v > 0 ? v - 1 : (v + 1 < limit ? v + 1 : v);
    }

    CeRecord make(const DimmId& dimm, double t_hours, const FaultLocus& locus,
                  double adjacent_prob) {
        CeRecord rec;
        rec.ts = static_cast<std::int64_t>(std::llround(t_hours * 3600.0));
        rec.dimm = dimm;
        rec.type = rng.next_bernoulli(cfg.read_fraction) ? "ce.read" : "ce.scrub";

        std::uint32_t bank = locus.bank ? *locus.bank : rng.next_index(cfg.geometry.banks);
        std::uint32_t row = locus.row ? *locus.row : rng.next_index(cfg.geometry.rows);
        std::uint32_t col = locus.col ? *locus.col : rng.next_index(cfg.geometry.columns);
        if (adjacent_prob > 0 && rng.next_bernoulli(adjacent_prob)) {
            if (locus.row && locus.col) {
                // stuck cell: leak within the Chebyshev ring around the cell
                if (rng.next_bernoulli(0.5)) row = nudge(row, cfg.geometry.rows);
                else col = nudge(col, cfg.geometry.columns);
            } else if (locus.row) {
                row = nudge(row, cfg.geometry.rows);
            } else if (locus.col) {
                col = nudge(col, cfg.geometry.columns);
            } else if (locus.bank) {
                bank = nudge(bank, cfg.geometry.banks);
            }
        }
        rec.bank = bank;
        rec.row = row;
        rec.col = col;

        // preprocessing noise: rare uce.read records and incomplete addresses
        if (rng.next_bernoulli(cfg.uce_fraction)) rec.type = "uce.read";
        if (rng.next_bernoulli(cfg.missing_addr_fraction)) {
            switch (rng.next_index(3)) {
                case 0: rec.bank.reset(); break;
                case 1: rec.row.reset(); break;
                default: rec.col.reset(); break;
            }
        }
        return rec;
    }
};

inline std::vector<double> poisson_arrivals(Rng& rng, double rate, double start_h, double end_h) {
    std::vector<double> out;
    if (rate <= 0 || end_h <= start_h) return out;
    double t = start_h;
    while (true) {
        t += rng.next_exponential(rate);
        if (t >= end_h) break;
        out.push_back(t);
    }
    return out;
}

}  // namespace detail

inline FleetOutput generate(const FleetConfig& cfg) {
    cfg.validate();

    FleetOutput out;
    out.manifest.seed = cfg.seed;
    out.manifest.n_normal = cfg.n_normal;
    out.manifest.n_failing = cfg.n_failing;
    out.manifest.duration_hours = cfg.duration_hours;

    double mix_total = 0;
    for (auto& [kind, weight] : cfg.fault_mix) mix_total += weight;

    struct Tagged {
        CeRecord rec;
        std::uint64_t seq;
    };
    std::vector<Tagged> events;

    auto emit_dimm = [&](const DimmId& dimm, std::uint64_t dimm_ordinal, bool failing) {
        Rng rng(derive_seed(cfg.seed, 0xd1e30aULL, dimm_ordinal));
        detail::EventDraw draw{rng, cfg};
        DimmTruth truth;
        truth.dimm = dimm;
        truth.failing = failing;

        std::vector<CeRecord> recs;
        if (!failing) {
            for (double t : detail::poisson_arrivals(rng, cfg.normal_rate, 0, cfg.duration_hours))
                recs.push_back(draw.make(dimm, t, {}, 0.0));
            truth.n_total = recs.size();
        } else {
            double pick = rng.next_unit() * mix_total;
            FaultKind kind = cfg.fault_mix.back().first;
            for (auto& [k, weight] : cfg.fault_mix) {
                if (pick < weight) {
                    kind = k;
                    break;
                }
                pick -= weight;
            }
            const FaultModel& fm = cfg.models.at(kind);
            truth.kind = kind;

            FaultLocus locus;
            switch (kind) {
                case FaultKind::stuck_cell:
                    locus.bank = rng.next_index(cfg.geometry.banks);
                    locus.row = rng.next_index(cfg.geometry.rows);
                    locus.col = rng.next_index(cfg.geometry.columns);
                    break;
                case FaultKind::faulty_row:
                    locus.bank = rng.next_index(cfg.geometry.banks);
                    locus.row = rng.next_index(cfg.geometry.rows);
                    break;
                case FaultKind::faulty_column:
                    locus.bank = rng.next_index(cfg.geometry.banks);
                    locus.col = rng.next_index(cfg.geometry.columns);
                    break;
                case FaultKind::faulty_bank:
                    locus.bank = rng.next_index(cfg.geometry.banks);
                    break;
                case FaultKind::transient:
                    break;  // degradation shows only as an elevated rate
            }
            truth.locus = locus;

            const double span = fm.precursor_hours + fm.burst_hours;
            const double failure_h = span + rng.next_unit() * (cfg.duration_hours - span);
            const double burst_start_h = failure_h - fm.burst_hours;
            const double precursor_start_h = burst_start_h - fm.precursor_hours;

            // resample until the realized rates honour burst > precursor, so
            // the manifest's temporal signature holds for every failing DIMM
            std::vector<double> precursor, burst;
            while (true) {
                precursor =
                    detail::poisson_arrivals(rng, fm.precursor_rate, precursor_start_h,
                                             burst_start_h);
                burst = detail::poisson_arrivals(rng, fm.burst_rate, burst_start_h, failure_h);
                double rate_p = static_cast<double>(precursor.size()) / fm.precursor_hours;
                double rate_b = static_cast<double>(burst.size()) / fm.burst_hours;
                if (rate_b > rate_p) break;
            }

            for (double t : precursor) recs.push_back(draw.make(dimm, t, locus, fm.adjacent_prob));
            for (double t : burst) recs.push_back(draw.make(dimm, t, locus, fm.adjacent_prob));

            truth.precursor_start_ts =
                static_cast<std::int64_t>(std::llround(precursor_start_h * 3600.0));
            truth.burst_start_ts = static_cast<std::int64_t>(std::llround(burst_start_h * 3600.0));
            truth.failure_ts = static_cast<std::int64_t>(std::llround(failure_h * 3600.0));
            truth.n_precursor = precursor.size();
            truth.n_burst = burst.size();
            truth.n_total = recs.size();
            out.failures.push_back({dimm, truth.failure_ts});
        }

        std::uint64_t seq = 0;
        for (auto& rec : recs) events.push_back({std::move(rec), seq++});
        out.manifest.dimms.push_back(std::move(truth));
    };

    char buf[32];
    for (std::uint32_t i = 0; i < cfg.n_normal; ++i) {
        std::snprintf(buf, sizeof(buf), "N%05u", i);
        emit_dimm(buf, i, false);
    }
    for (std::uint32_t i = 0; i < cfg.n_failing; ++i) {
        std::snprintf(buf, sizeof(buf), "F%05u", i);
        emit_dimm(buf, cfg.n_normal + i, true);
    }

    std::sort(events.begin(), events.end(), [](const Tagged& a, const Tagged& b) {
        if (a.rec.ts != b.rec.ts) return a.rec.ts < b.rec.ts;
        if (a.rec.dimm != b.rec.dimm) return a.rec.dimm < b.rec.dimm;
        return a.seq < b.seq;
    });
    out.records.reserve(events.size());
    for (auto& e : events) out.records.push_back(std::move(e.rec));
    return out;
}

// ---------------------------------------------------------------------------
// Manifest self-check
// ---------------------------------------------------------------------------

struct ValidationReport {
    bool ok = true;
    std::vector<std::string> issues;

    void fail(std::string msg) {
        ok = false;
        issues.push_back(std::move(msg));
    }
};

inline ValidationReport validate_manifest(const std::vector<CeRecord>& records,
                                          const std::vector<FailureRecord>& failures,
                                          const FleetManifest& manifest) {
    ValidationReport report;

    std::map<DimmId, std::vector<const CeRecord*>> by_dimm;
    for (const auto& rec : records) by_dimm[rec.dimm].push_back(&rec);

    std::map<DimmId, std::int64_t> failure_ts;
    for (const auto& f : failures) failure_ts[f.dimm] = f.failure_time;

    for (const auto& truth : manifest.dimms) {
        auto it = by_dimm.find(truth.dimm);
        const std::size_t observed = it == by_dimm.end() ? 0 : it->second.size();
        if (observed != truth.n_total) {
            report.fail("DIMM " + truth.dimm + ": stream has " + std::to_string(observed) +
                        " CEs, manifest says " + std::to_string(truth.n_total));
            continue;
        }
        if (!truth.failing) {
            if (failure_ts.count(truth.dimm))
                report.fail("DIMM " + truth.dimm + ": normal DIMM has a failure record");
            continue;
        }

        auto fip = failure_ts.find(truth.dimm);
        if (fip == failure_ts.end()) {
            report.fail("DIMM " + truth.dimm + ": failing DIMM missing from failure list");
            continue;
        }
        if (fip->second != truth.failure_ts)
            report.fail("DIMM " + truth.dimm + ": failure time mismatch");

        std::uint64_t n_precursor = 0, n_burst = 0;
        bool locus_ok = true;
        if (it != by_dimm.end()) {
            for (const CeRecord* rec : it->second) {
                if (rec->ts < truth.burst_start_ts) ++n_precursor;
                else ++n_burst;
                // every addressable event must sit within radius 1 of the locus
                auto within = [](std::uint32_t v, std::uint32_t locus_v) {
                    return v + 1 >= locus_v && v <= locus_v + 1;
                };
                if (truth.locus.bank && rec->bank && !within(*rec->bank, *truth.locus.bank))
                    locus_ok = false;
                if (truth.locus.row && rec->row && !within(*rec->row, *truth.locus.row))
                    locus_ok = false;
                if (truth.locus.col && rec->col && !within(*rec->col, *truth.locus.col))
                    locus_ok = false;
            }
        }
        if (n_precursor != truth.n_precursor)
            report.fail("DIMM " + truth.dimm + ": precursor-phase count " +
                        std::to_string(n_precursor) + " != manifest " +
                        std::to_string(truth.n_precursor));
        if (n_burst != truth.n_burst)
            report.fail("DIMM " + truth.dimm + ": burst-phase count " + std::to_string(n_burst) +
                        " != manifest " + std::to_string(truth.n_burst));
        if (!locus_ok)
            report.fail("DIMM " + truth.dimm + ": events stray from the fault locus");

        double rate_p = truth.n_precursor > 0
                            ? static_cast<double>(truth.n_precursor) /
                                  (static_cast<double>(truth.burst_start_ts -
                                                       truth.precursor_start_ts) /
                                   3600.0)
                            : 0.0;
        double rate_b = static_cast<double>(truth.n_burst) /
                        (static_cast<double>(truth.failure_ts - truth.burst_start_ts) / 3600.0);
        if (!(rate_b > rate_p))
            report.fail("DIMM " + truth.dimm + ": burst-phase CE rate does not exceed the "
                        "precursor rate");
    }

    // stream must not contain DIMMs the manifest does not know
    for (const auto& [dimm, recs] : by_dimm) {
        bool known = false;
        for (const auto& truth : manifest.dimms)
            if (truth.dimm == dimm) {
                known = true;
                break;
            }
        if (!known) report.fail("DIMM " + dimm + ": present in stream but not in manifest");
    }
    return report;
}

// ---------------------------------------------------------------------------
// Config / manifest JSON
// ---------------------------------------------------------------------------

inline nlohmann::json fleet_config_to_json(const FleetConfig& cfg) {
    nlohmann::json j;
    j["n_normal"] = cfg.n_normal;
    j["n_failing"] = cfg.n_failing;
    j["duration_hours"] = cfg.duration_hours;
    j["seed"] = cfg.seed;
    j["geometry"] = {{"banks", cfg.geometry.banks},
                     {"rows", cfg.geometry.rows},
                     {"columns", cfg.geometry.columns}};
    j["normal_rate"] = cfg.normal_rate;
    j["read_fraction"] = cfg.read_fraction;
    j["uce_fraction"] = cfg.uce_fraction;
    j["missing_addr_fraction"] = cfg.missing_addr_fraction;
    nlohmann::json mix;
    for (auto& [kind, weight] : cfg.fault_mix) mix[fault_kind_name(kind)] = weight;
    j["fault_mix"] = mix;
    nlohmann::json models;
    for (auto& [kind, fm] : cfg.models) {
        models[fault_kind_name(kind)] = {{"precursor_rate", fm.precursor_rate},
                                         {"precursor_hours", fm.precursor_hours},
                                         {"burst_rate", fm.burst_rate},
                                         {"burst_hours", fm.burst_hours},
                                         {"adjacent_prob", fm.adjacent_prob}};
    }
    j["fault_models"] = models;
    return j;
}

inline FleetConfig fleet_config_from_json(const nlohmann::json& j) {
    FleetConfig cfg;
    if (!j.is_object()) throw DataError("fleet config: expected a JSON object");
    cfg.n_normal = j.value("n_normal", cfg.n_normal);
    cfg.n_failing = j.value("n_failing", cfg.n_failing);
    cfg.duration_hours = j.value("duration_hours", cfg.duration_hours);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("geometry")) {
        const auto& g = j.at("geometry");
        cfg.geometry.banks = g.value("banks", cfg.geometry.banks);
        cfg.geometry.rows = g.value("rows", cfg.geometry.rows);
        cfg.geometry.columns = g.value("columns", cfg.geometry.columns);
    }
    cfg.normal_rate = j.value("normal_rate", cfg.normal_rate);
    cfg.read_fraction = j.value("read_fraction", cfg.read_fraction);
    cfg.uce_fraction = j.value("uce_fraction", cfg.uce_fraction);
    cfg.missing_addr_fraction = j.value("missing_addr_fraction", cfg.missing_addr_fraction);
    if (j.contains("fault_mix")) {
        cfg.fault_mix.clear();
        for (auto& [name, weight] : j.at("fault_mix").items())
            cfg.fault_mix.emplace_back(parse_fault_kind(name), weight.get<double>());
    }
    if (j.contains("fault_models")) {
        for (auto& [name, mj] : j.at("fault_models").items()) {
            FaultKind kind = parse_fault_kind(name);
            FaultModel fm = cfg.models.count(kind) ? cfg.models[kind] : FaultModel{};
            fm.precursor_rate = mj.value("precursor_rate", fm.precursor_rate);
            fm.precursor_hours = mj.value("precursor_hours", fm.precursor_hours);
            fm.burst_rate = mj.value("burst_rate", fm.burst_rate);
            fm.burst_hours = mj.value("burst_hours", fm.burst_hours);
            fm.adjacent_prob = mj.value("adjacent_prob", fm.adjacent_prob);
            cfg.models[kind] = fm;
        }
    }
    return cfg;
}

inline nlohmann::json manifest_to_json(const FleetManifest& m) {
    nlohmann::json j;
    j["seed"] = m.seed;
    j["n_normal"] = m.n_normal;
    j["n_failing"] = m.n_failing;
    j["duration_hours"] = m.duration_hours;
    nlohmann::json dimms = nlohmann::json::array();
    for (const auto& t : m.dimms) {
        nlohmann::json d;
        d["dimm"] = t.dimm;
        d["failing"] = t.failing;
        d["n_total"] = t.n_total;
        if (t.failing) {
            d["kind"] = fault_kind_name(t.kind);
            nlohmann::json locus;
            if (t.locus.bank) locus["bank"] = *t.locus.bank;
            if (t.locus.row) locus["row"] = *t.locus.row;
            if (t.locus.col) locus["col"] = *t.locus.col;
            d["locus"] = locus;
            d["precursor_start_ts"] = t.precursor_start_ts;
            d["burst_start_ts"] = t.burst_start_ts;
            d["failure_ts"] = t.failure_ts;
            d["n_precursor"] = t.n_precursor;
            d["n_burst"] = t.n_burst;
        }
        dimms.push_back(std::move(d));
    }
    j["dimms"] = std::move(dimms);
    return j;
}

inline FleetManifest manifest_from_json(const nlohmann::json& j) {
    FleetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.n_normal = j.at("n_normal").get<std::uint32_t>();
    m.n_failing = j.at("n_failing").get<std::uint32_t>();
    m.duration_hours = j.at("duration_hours").get<double>();
    for (const auto& d : j.at("dimms")) {
        DimmTruth t;
        t.dimm = d.at("dimm").get<std::string>();
        t.failing = d.at("failing").get<bool>();
        t.n_total = d.at("n_total").get<std::uint64_t>();
        if (t.failing) {
            t.kind = parse_fault_kind(d.at("kind").get<std::string>());
            const auto& locus = d.at("locus");
            if (locus.contains("bank")) t.locus.bank = locus.at("bank").get<std::uint32_t>();
            if (locus.contains("row")) t.locus.row = locus.at("row").get<std::uint32_t>();
            if (locus.contains("col")) t.locus.col = locus.at("col").get<std::uint32_t>();
            t.precursor_start_ts = d.at("precursor_start_ts").get<std::int64_t>();
            t.burst_start_ts = d.at("burst_start_ts").get<std::int64_t>();
            t.failure_ts = d.at("failure_ts").get<std::int64_t>();
            t.n_precursor = d.at("n_precursor").get<std::uint64_t>();
            t.n_burst = d.at("n_burst").get<std::uint64_t>();
        }
        m.dimms.push_back(std::move(t));
    }
    return m;
}

}  // namespace cepred
