#pragma once

// Degradation labels for failed-DIMM CE sequences: split at the largest
// inter-arrival gap (everything from the gap onwards is degraded), then drop
// the lead-time tail from the training set.

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cepred/celog.hpp"
#include "cepred/error.hpp"
#include "cepred/rng.hpp"

namespace cepred {

// Index k of the first degraded event: events[0..k-1] -> 0, events[k..] -> 1.
// A single event is degraded (k = 0); ties pick the earliest maximal gap.
inline std::size_t largest_gap_split(std::span<const std::int64_t> ts) {
    if (ts.empty()) throw DataError("largest_gap_split: empty event sequence");
    if (ts.size() == 1) return 0;
    std::size_t best = 1;
    std::int64_t best_gap = ts[1] - ts[0];
    for (std::size_t i = 2; i < ts.size(); ++i) {
        std::int64_t gap = ts[i] - ts[i - 1];
        if (gap > best_gap) {
            best_gap = gap;
            best = i;
        }
    }
    return best;
}

inline std::vector<std::uint8_t> gap_labels(std::span<const std::int64_t> ts) {
    std::size_t k = largest_gap_split(ts);
    std::vector<std::uint8_t> labels(ts.size(), 0);
    for (std::size_t i = k; i < ts.size(); ++i) labels[i] = 1;
    return labels;
}

// Training samples with ts > failure_time - m are excluded. Purely time-based;
// labels are assigned before this on the full sequence.
inline bool in_lead_window(std::int64_t ts, std::int64_t failure_ts, std::int64_t lead_seconds) {
    return ts > failure_ts - lead_seconds;
}

struct RepeatSplit {
    std::uint32_t repeat = 0;
    std::uint64_t seed = 0;
    std::vector<DimmId> cv_normal;    // subsampled for training / cross-validation
    std::vector<DimmId> test_normal;  // held out as the normal test set
};

struct SplitPlan {
    double lead_hours = 3.0;
    double window_hours = 168.0;
    std::string mode = "overall";
    std::uint32_t n_normal = 0;
    std::uint64_t master_seed = 0;
    std::vector<DimmId> failed;
    std::vector<RepeatSplit> repeats;
};

// Seeded repeat splits over the normal population. Failed DIMMs participate
// in every repeat; normal DIMMs are subsampled without replacement and the
// remainder forms the normal test set. Deterministic given the seed.
inline std::vector<RepeatSplit> plan_repeats(std::vector<DimmId> normal_ids,
                                             std::uint32_t n_normal, std::uint32_t repeats,
                                             std::uint64_t master_seed) {
    std::sort(normal_ids.begin(), normal_ids.end());
    if (n_normal > normal_ids.size())
        throw DataError("n_normal=" + std::to_string(n_normal) + " exceeds normal population of " +
                        std::to_string(normal_ids.size()) + " DIMMs");
    std::vector<RepeatSplit> out;
    out.reserve(repeats);
    for (std::uint32_t r = 0; r < repeats; ++r) {
        RepeatSplit split;
        split.repeat = r;
        split.seed = derive_seed(master_seed, 0x5a3f0001ULL, r);
        std::vector<DimmId> pool = normal_ids;
        Rng rng(split.seed);
        // partial Fisher-Yates: first n_normal entries are the sample
        for (std::uint32_t i = 0; i < n_normal; ++i) {
            std::size_t j = i + static_cast<std::size_t>(rng.next_below(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        split.cv_normal.assign(pool.begin(), pool.begin() + n_normal);
        split.test_normal.assign(pool.begin() + n_normal, pool.end());
        std::sort(split.cv_normal.begin(), split.cv_normal.end());
        std::sort(split.test_normal.begin(), split.test_normal.end());
        out.push_back(std::move(split));
    }
    return out;
}

}  // namespace cepred
