#pragma once

// Seeded random event streams for property tests. Small geometries make
// repeats, adjacency and multibank collisions common.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "cepred/celog.hpp"
#include "cepred/rng.hpp"

namespace cepred::testing {

struct StreamSpec {
    std::size_t min_events = 1;
    std::size_t max_events = 500;
    double max_hours = 2000.0;
    std::uint32_t banks = 4;
    std::uint32_t rows = 8;
    std::uint32_t cols = 8;
};

inline std::vector<CeRecord> random_stream(std::uint64_t seed, const StreamSpec& spec = {}) {
    Rng rng(seed);
    std::size_t n = spec.min_events +
                    static_cast<std::size_t>(rng.next_below(spec.max_events - spec.min_events + 1));
    std::vector<std::int64_t> ts(n);
    for (auto& t : ts)
        t = static_cast<std::int64_t>(rng.next_below(
            static_cast<std::uint64_t>(spec.max_hours * 3600.0) + 1));
    std::sort(ts.begin(), ts.end());

    std::vector<CeRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        CeRecord rec;
        rec.ts = ts[i];
        rec.dimm = "T0";
        double roll = rng.next_unit();
        rec.type = roll < 0.60 ? "ce.read" : (roll < 0.95 ? "ce.scrub" : "ce.other");
        rec.bank = rng.next_index(spec.banks);
        rec.row = rng.next_index(spec.rows);
        rec.col = rng.next_index(spec.cols);
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace cepred::testing
