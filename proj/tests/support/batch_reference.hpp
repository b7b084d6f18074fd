#pragma once

// Test-only reference for the feature engine: recomputes every catalog
// feature from scratch by the literal interval definitions. Events are
// partitioned into W = (t0-w, t0] and H = (-inf, t0-w] by timestamp and
// aggregated naively with plain maps. Shares nothing with the incremental
// path beyond the catalog itself.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <vector>

#include "cepred/celog.hpp"
#include "cepred/features.hpp"

namespace cepred::testing {

namespace ref_detail {

using BankRow = std::pair<std::uint32_t, std::uint32_t>;   // (bank, index)
using Cell = std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>;

struct Tallies {
    std::size_t count = 0;
    std::size_t reads = 0;
    std::size_t scrubs = 0;
    std::map<std::uint32_t, std::size_t> banks;
    std::map<BankRow, std::size_t> rows;
    std::map<BankRow, std::size_t> cols;
    std::map<Cell, std::size_t> cells;

    void absorb(const CeRecord& e) {
        ++count;
        if (e.type == "ce.read") ++reads;
        else if (e.type == "ce.scrub") ++scrubs;
        ++banks[*e.bank];
        ++rows[{*e.bank, *e.row}];
        ++cols[{*e.bank, *e.col}];
        ++cells[{*e.bank, *e.row, *e.col}];
    }
};

template <class K>
std::size_t count_repeats(const std::map<K, std::size_t>& m, std::uint32_t r_min) {
    std::size_t n = 0;
    for (const auto& [k, c] : m)
        if (c >= r_min) ++n;
    return n;
}

template <class K>
std::size_t max_count(const std::map<K, std::size_t>& m) {
    std::size_t best = 0;
    for (const auto& [k, c] : m) best = std::max(best, c);
    return best;
}

template <class K>
std::size_t count_new(const std::map<K, std::size_t>& w, const std::map<K, std::size_t>& h) {
    std::size_t n = 0;
    for (const auto& [k, c] : w)
        if (!h.count(k)) ++n;
    return n;
}

// unordered pairs of distinct line keys in the same bank with |delta| <= radius
inline std::size_t line_pairs(const std::map<BankRow, std::size_t>& m, std::uint32_t radius) {
    std::size_t pairs = 0;
    for (const auto& [k, c] : m)
        for (std::uint32_t d = 1; d <= radius; ++d)
            if (k.second <= 0xffffffffu - d && m.count({k.first, k.second + d})) ++pairs;
    return pairs;
}

inline std::size_t line_keys_with_neighbour(const std::map<BankRow, std::size_t>& m,
                                            std::uint32_t radius) {
    std::size_t n = 0;
    for (const auto& [k, c] : m) {
        bool found = false;
        for (std::uint32_t d = 1; d <= radius && !found; ++d) {
            if (k.second <= 0xffffffffu - d && m.count({k.first, k.second + d})) found = true;
            else if (k.second >= d && m.count({k.first, k.second - d})) found = true;
        }
        if (found) ++n;
    }
    return n;
}

inline std::size_t cell_pairs(const std::map<Cell, std::size_t>& m, std::uint32_t radius) {
    std::size_t pairs = 0;
    std::int64_t rad = radius;
    for (const auto& [k, c] : m) {
        auto [bank, row, col] = k;
        for (std::int64_t dr = -rad; dr <= rad; ++dr) {
            for (std::int64_t dc = -rad; dc <= rad; ++dc) {
                if (dr < 0 || (dr == 0 && dc <= 0)) continue;  // positive half only
                std::int64_t nr = std::int64_t(row) + dr, nc = std::int64_t(col) + dc;
                if (nr < 0 || nc < 0) continue;
                if (m.count({bank, std::uint32_t(nr), std::uint32_t(nc)})) ++pairs;
            }
        }
    }
    return pairs;
}

inline std::size_t cell_keys_with_neighbour(const std::map<Cell, std::size_t>& m,
                                            std::uint32_t radius) {
    std::size_t n = 0;
    std::int64_t rad = radius;
    for (const auto& [k, c] : m) {
        auto [bank, row, col] = k;
        bool found = false;
        for (std::int64_t dr = -rad; dr <= rad && !found; ++dr) {
            for (std::int64_t dc = -rad; dc <= rad && !found; ++dc) {
                if (dr == 0 && dc == 0) continue;
                std::int64_t nr = std::int64_t(row) + dr, nc = std::int64_t(col) + dc;
                if (nr < 0 || nc < 0) continue;
                if (m.count({bank, std::uint32_t(nr), std::uint32_t(nc)})) found = true;
            }
        }
        if (found) ++n;
    }
    return n;
}

inline std::size_t line_multibank(const std::map<BankRow, std::size_t>& m) {
    std::map<std::uint32_t, std::set<std::uint32_t>> index_banks;
    for (const auto& [k, c] : m) index_banks[k.second].insert(k.first);
    std::size_t n = 0;
    for (const auto& [idx, banks] : index_banks)
        if (banks.size() >= 2) ++n;
    return n;
}

inline std::size_t cell_multibank(const std::map<Cell, std::size_t>& m) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::set<std::uint32_t>> rc_banks;
    for (const auto& [k, c] : m) {
        auto [bank, row, col] = k;
        rc_banks[{row, col}].insert(bank);
    }
    std::size_t n = 0;
    for (const auto& [rc, banks] : rc_banks)
        if (banks.size() >= 2) ++n;
    return n;
}

}  // namespace ref_detail

// Recomputes the full catalog for the prefix events[0..prefix_end] at
// t0 = events[prefix_end].ts.
inline FeatureVector batch_recompute(std::span<const CeRecord> events, std::size_t prefix_end,
                                     const EngineConfig& cfg) {
    using namespace ref_detail;
    const std::int64_t t0 = events[prefix_end].ts;
    const std::int64_t w_s = cfg.window_seconds();
    const std::int64_t t_first = events[0].ts;

    Tallies w, h, life;
    for (std::size_t i = 0; i <= prefix_end; ++i) {
        const CeRecord& e = events[i];
        if (e.ts > t0 - w_s) w.absorb(e);
        else h.absorb(e);
        life.absorb(e);
    }

    const double w_hours = cfg.window_hours;
    const double span_h = [&] {
        if (h.count == 0) return 0.0;
        std::int64_t span = (t0 - w_s) - t_first;
        return span > 0 ? double(span) / 3600.0 : 0.0;
    }();
    auto rate = [](double count, double hours) {
        return (count > 0 && hours > 0) ? count / hours : 0.0;
    };
    auto rel = [](double a, double b) { return (a - b) / std::max(b, kRelChangeEps); };

    std::map<std::string, double> f;
    const double rate_w = rate(double(w.count), w_hours);
    const double rate_h = rate(double(h.count), span_h);
    f["general.ce_count_W"] = double(w.count);
    f["general.ce_count_H"] = double(h.count);
    f["general.ce_rate_W"] = rate_w;
    f["general.ce_rate_H"] = rate_h;
    f["general.rel_change_ce_rate"] = rel(rate_w, rate_h);
    f["general.ce_read_count_W"] = double(w.reads);
    f["general.ce_scrub_count_W"] = double(w.scrubs);
    f["general.ce_read_count_H"] = double(h.reads);
    f["general.ce_scrub_count_H"] = double(h.scrubs);
    f["general.rel_change_ce_read_rate"] =
        rel(rate(double(w.reads), w_hours), rate(double(h.reads), span_h));
    f["general.rel_change_ce_scrub_rate"] =
        rel(rate(double(w.scrubs), w_hours), rate(double(h.scrubs), span_h));
    f["general.time_since_first_ce"] = double(t0 - t_first) / 3600.0;
    f["general.time_since_prev_ce"] =
        prefix_end > 0 ? double(t0 - events[prefix_end - 1].ts) / 3600.0 : 0.0;

    f["bank.distinct_banks_W"] = double(w.banks.size());
    f["bank.distinct_banks_H"] = double(h.banks.size());
    f["bank.distinct_banks_lifetime"] = double(life.banks.size());
    f["bank.new_banks_W"] = double(count_new(w.banks, h.banks));
    f["bank.max_ce_per_bank_W"] = double(max_count(w.banks));
    f["bank.mean_ce_per_bank_W"] =
        w.banks.empty() ? 0.0 : double(w.count) / double(w.banks.size());

    const std::uint32_t r_min = cfg.repeat_threshold;
    const std::uint32_t radius = cfg.neighbour_radius;
    f["row.rows_with_ce_W"] = double(w.rows.size());
    f["row.rows_with_repeat_W"] = double(count_repeats(w.rows, r_min));
    f["row.rows_with_repeat_lifetime"] = double(count_repeats(life.rows, r_min));
    f["row.max_ce_per_row_W"] = double(max_count(w.rows));
    f["row.new_rows_W"] = double(count_new(w.rows, h.rows));
    f["row.adjacent_row_pairs_W"] = double(line_pairs(w.rows, radius));
    f["row.rows_with_neighbour_lifetime"] = double(line_keys_with_neighbour(life.rows, radius));
    f["row.row_multibank_W"] = double(line_multibank(w.rows));
    f["row.row_multibank_lifetime"] = double(line_multibank(life.rows));

    f["col.cols_with_ce_W"] = double(w.cols.size());
    f["col.cols_with_repeat_W"] = double(count_repeats(w.cols, r_min));
    f["col.cols_with_repeat_lifetime"] = double(count_repeats(life.cols, r_min));
    f["col.max_ce_per_col_W"] = double(max_count(w.cols));
    f["col.new_cols_W"] = double(count_new(w.cols, h.cols));
    f["col.adjacent_col_pairs_W"] = double(line_pairs(w.cols, radius));
    f["col.cols_with_neighbour_lifetime"] = double(line_keys_with_neighbour(life.cols, radius));
    f["col.col_multibank_W"] = double(line_multibank(w.cols));
    f["col.col_multibank_lifetime"] = double(line_multibank(life.cols));

    f["cell.cells_with_ce_W"] = double(w.cells.size());
    f["cell.cells_with_repeat_W"] = double(count_repeats(w.cells, r_min));
    f["cell.cells_with_repeat_lifetime"] = double(count_repeats(life.cells, r_min));
    f["cell.max_ce_per_cell_W"] = double(max_count(w.cells));
    f["cell.new_cells_W"] = double(count_new(w.cells, h.cells));
    f["cell.adjacent_cells_W"] = double(cell_pairs(w.cells, radius));
    f["cell.cells_with_neighbour_lifetime"] = double(cell_keys_with_neighbour(life.cells, radius));
    f["cell.cell_multibank_W"] = double(cell_multibank(w.cells));
    f["cell.cell_multibank_lifetime"] = double(cell_multibank(life.cells));

    FeatureVector out;
    out.values.reserve(catalog_size());
    for (const auto& def : catalog()) out.values.push_back(f.at(def.name));
    if (cfg.mode == Mode::fixed) {
        const auto& defs = catalog();
        for (std::size_t i = 0; i < defs.size(); ++i)
            if (defs[i].scope != Scope::window) out.values[i] = 0.0;
    }
    return out;
}

}  // namespace cepred::testing
