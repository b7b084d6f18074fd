#pragma once

// Experimental protocol: DIMM-level confusion counts, grouped stratified
// k-fold cross-validation, normal-test error rate and the operational
// CE-rate threshold baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cepred/dataset.hpp"
#include "cepred/error.hpp"
#include "cepred/forest.hpp"
#include "cepred/rng.hpp"

namespace cepred {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
};

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    bool precision_defined = true;  // false when tp+fp == 0
    bool recall_defined = true;     // false when tp+fn == 0
};

// Zero denominators report 0 with the defined-flag cleared instead of NaN.
inline Metrics metrics(const ConfusionCounts& c) {
    Metrics m;
    if (c.tp + c.fp == 0) {
        m.precision_defined = false;
    } else {
        m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    }
    if (c.tp + c.fn == 0) {
        m.recall_defined = false;
    } else {
        m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    }
    return m;
}

inline double error_rate_normal(std::uint64_t flagged, std::uint64_t total) {
    if (total == 0) throw DataError("error_rate_normal: empty normal test set");
    return static_cast<double>(flagged) / static_cast<double>(total);
}

inline double relative_improvement(double a, double b) {
    if (!(b > 0.0)) throw DataError("relative_improvement: baseline value must be > 0");
    return (a - b) / b;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

struct CvConfig {
    std::uint32_t folds = 10;
    ForestParams forest;
    double decision_threshold = 0.5;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
};

struct DimmPrediction {
    DimmId dimm;
    bool failed_truth = false;
    bool predicted = false;
    std::int64_t first_alarm_ts = -1;
    double max_proba = 0.0;
    std::uint32_t fold = 0;
};

struct FoldOutcome {
    ConfusionCounts counts;
    double normal_test_error = 0.0;  // fold model scored on the held-out normal test set
};

struct CrossValResult {
    std::vector<FoldOutcome> folds;
    ConfusionCounts total;                 // pooled over folds: each CV DIMM scored once
    double normal_test_error_mean = 0.0;   // mean of the per-fold normal-test error
    std::vector<DimmPrediction> log;       // one entry per CV DIMM, fold order
};

namespace detail {

inline std::vector<std::vector<DimmId>> partition_folds(std::vector<DimmId> ids,
                                                        std::uint32_t k, Rng& rng) {
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = ids.size(); i > 1; --i)
        std::swap(ids[i - 1], ids[rng.next_below(i)]);
    std::vector<std::vector<DimmId>> folds(k);
    for (std::size_t i = 0; i < ids.size(); ++i) folds[i % k].push_back(ids[i]);
    return folds;
}

}  // namespace detail

// Grouped, stratified k-fold CV at DIMM granularity: all samples of a DIMM
// stay in one fold, failed and normal DIMMs are partitioned separately. Each
// fold's model also scores the normal test set.
inline CrossValResult cross_validate(const FeatureMatrix& m,
                                     const std::vector<DimmId>& failed_ids,
                                     const std::vector<DimmId>& cv_normal_ids,
                                     const std::vector<DimmId>& test_normal_ids,
                                     const CvConfig& cfg) {
    if (cfg.folds < 2) throw UsageError("cross_validate: need k >= 2 folds");
    if (failed_ids.size() < cfg.folds)
        throw DataError("cross_validate: " + std::to_string(failed_ids.size()) +
                        " failed DIMMs cannot fill " + std::to_string(cfg.folds) +
                        " folds; use a smaller k");

    Rng fold_rng(derive_seed(cfg.seed, 0xf01d5ULL));
    auto failed_folds = detail::partition_folds(failed_ids, cfg.folds, fold_rng);
    auto normal_folds = detail::partition_folds(cv_normal_ids, cfg.folds, fold_rng);

    auto rows_by_dimm = m.rows_by_dimm();
    auto rows_of = [&](const DimmId& id) -> const std::vector<std::uint32_t>& {
        static const std::vector<std::uint32_t> empty;
        if (!m.has_dimm(id)) return empty;  // failed DIMM that never logged a CE
        return rows_by_dimm[m.dimm_index(id)];
    };

    struct FoldScratch {
        FoldOutcome outcome;
        std::vector<DimmPrediction> log;
    };
    std::vector<FoldScratch> scratch(cfg.folds);

    detail::parallel_for_tasks(cfg.folds, cfg.jobs, [&](std::size_t fold) {
        std::vector<std::uint32_t> train_rows;
        for (std::uint32_t f2 = 0; f2 < cfg.folds; ++f2) {
            if (f2 == fold) continue;
            for (const auto& id : failed_folds[f2])
                for (auto r : rows_of(id)) train_rows.push_back(r);
            for (const auto& id : normal_folds[f2])
                for (auto r : rows_of(id)) train_rows.push_back(r);
        }
        ForestParams hp = cfg.forest;
        hp.seed = derive_seed(cfg.seed, 0x7e57ULL, fold);
        TrainedForest forest = train_forest(m, train_rows, hp, 1);

        auto& out = scratch[fold];
        auto score = [&](const DimmId& id, bool truth) {
            auto verdict = predict_dimm(forest, m, rows_of(id), cfg.decision_threshold);
            if (truth) {
                if (verdict.fail) ++out.outcome.counts.tp;
                else ++out.outcome.counts.fn;
            } else {
                if (verdict.fail) ++out.outcome.counts.fp;
                else ++out.outcome.counts.tn;
            }
            out.log.push_back({id, truth, verdict.fail, verdict.first_alarm_ts, verdict.max_proba,
                               static_cast<std::uint32_t>(fold)});
        };
        for (const auto& id : failed_folds[fold]) score(id, true);
        for (const auto& id : normal_folds[fold]) score(id, false);

        if (!test_normal_ids.empty()) {
            std::uint64_t flagged = 0;
            for (const auto& id : test_normal_ids)
                if (predict_dimm(forest, m, rows_of(id), cfg.decision_threshold).fail) ++flagged;
            out.outcome.normal_test_error = error_rate_normal(flagged, test_normal_ids.size());
        }
    });

    CrossValResult result;
    for (std::uint32_t fold = 0; fold < cfg.folds; ++fold) {
        result.folds.push_back(scratch[fold].outcome);
        result.total += scratch[fold].outcome.counts;
        result.normal_test_error_mean += scratch[fold].outcome.normal_test_error;
        for (auto& entry : scratch[fold].log) result.log.push_back(std::move(entry));
    }
    result.normal_test_error_mean /= static_cast<double>(cfg.folds);
    return result;
}

// ---------------------------------------------------------------------------
// Operational threshold baseline
// ---------------------------------------------------------------------------

// Maximum CE rate (events/hour) over any window of length w, equivalently the
// max over windows ending at an event.
inline double max_window_rate(std::span<const std::int64_t> ts, double w_hours) {
    if (ts.empty()) return 0.0;
    const std::int64_t w_s = static_cast<std::int64_t>(std::llround(w_hours * 3600.0));
    std::size_t lo = 0, best = 1;
    for (std::size_t hi = 0; hi < ts.size(); ++hi) {
        while (ts[lo] <= ts[hi] - w_s) ++lo;
        best = std::max(best, hi - lo + 1);
    }
    return static_cast<double>(best) / w_hours;
}

struct BaselineRow {
    double threshold = 0.0;
    ConfusionCounts counts;
    double precision = 0.0;
    double recall = 0.0;
    double error_rate = 0.0;
    bool precision_defined = true;
};

struct BaselineSweep {
    std::vector<BaselineRow> rows;   // ascending threshold
    std::size_t best_precision = 0;  // index into rows
    std::size_t best_recall = 0;
};

// Sweeps every distinct observed max-rate value as a flagging threshold
// (flag when max rate >= threshold) and reports the full operating curve.
inline BaselineSweep threshold_baseline(const std::vector<double>& max_rates,
                                        const std::vector<bool>& failed_truth) {
    if (max_rates.size() != failed_truth.size())
        throw InternalError("threshold_baseline: size mismatch");
    BaselineSweep sweep;
    std::vector<double> thresholds = max_rates;
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    for (double th : thresholds) {
        BaselineRow row;
        row.threshold = th;
        std::uint64_t flagged_normal = 0, total_normal = 0;
        for (std::size_t i = 0; i < max_rates.size(); ++i) {
            bool flag = max_rates[i] >= th;
            if (failed_truth[i]) {
                if (flag) ++row.counts.tp;
                else ++row.counts.fn;
            } else {
                ++total_normal;
                if (flag) {
                    ++row.counts.fp;
                    ++flagged_normal;
                } else {
                    ++row.counts.tn;
                }
            }
        }
        Metrics m = metrics(row.counts);
        row.precision = m.precision;
        row.recall = m.recall;
        row.precision_defined = m.precision_defined;
        row.error_rate = total_normal ? static_cast<double>(flagged_normal) /
                                            static_cast<double>(total_normal)
                                      : 0.0;
        sweep.rows.push_back(row);
    }

    for (std::size_t i = 0; i < sweep.rows.size(); ++i) {
        const auto& r = sweep.rows[i];
        const auto& bp = sweep.rows[sweep.best_precision];
        const auto& br = sweep.rows[sweep.best_recall];
        if (r.precision_defined &&
            (!bp.precision_defined || r.precision > bp.precision ||
             (r.precision == bp.precision && r.recall > bp.recall)))
            sweep.best_precision = i;
        if (r.recall > br.recall || (r.recall == br.recall && r.precision > br.precision))
            sweep.best_recall = i;
    }
    return sweep;
}

}  // namespace cepred
