#pragma once

// Per-DIMM incremental feature engine over two disjoint intervals:
//
//   W = (t0-w, t0]    sliding observation window, backed by an event buffer
//   H = (-inf, t0-w]  append-only history aggregates
//
// plus lifetime aggregates over W ∪ H maintained directly. Ingest cost is
// O(expired events + 1) aggregate updates; snapshot additionally scans the
// (small) window key maps for the max/mean features.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cepred/celog.hpp"
#include "cepred/error.hpp"

namespace cepred {

enum class Scope { window, history, lifetime, delta };

inline const char* scope_name(Scope s) {
    switch (s) {
        case Scope::window: return "W";
        case Scope::history: return "H";
        case Scope::lifetime: return "lifetime";
        case Scope::delta: return "delta";
    }
    return "?";
}

enum class Mode { overall, fixed };

inline const char* mode_name(Mode m) { return m == Mode::overall ? "overall" : "fixed"; }

inline Mode parse_mode(const std::string& s) {
    if (s == "overall") return Mode::overall;
    if (s == "fixed") return Mode::fixed;
    throw UsageError("mode must be 'overall' or 'fixed', got '" + s + "'");
}

struct FeatureDef {
    std::string name;
    std::string taxonomy;
    Scope scope;
};

// Relative-change features divide by max(history value, eps) so that an
// empty history yields a large finite value instead of inf/NaN.
inline constexpr double kRelChangeEps = 1e-9;

struct EngineConfig {
    double window_hours = 168.0;
    Mode mode = Mode::overall;
    std::uint32_t repeat_threshold = 2;  // CEs on one key before it counts as repeating
    std::uint32_t neighbour_radius = 1;  // rows/columns: |delta|, cells: Chebyshev
    std::size_t key_cap = 65536;         // per key-set; overflow freezes cardinality

    std::int64_t window_seconds() const {
        return static_cast<std::int64_t>(std::llround(window_hours * 3600.0));
    }

    void validate() const {
        if (!(window_hours > 0)) throw UsageError("window length must be > 0 hours");
        if (repeat_threshold < 2) throw UsageError("repeat threshold must be >= 2");
        if (neighbour_radius < 1 || neighbour_radius > 8)
            throw UsageError("neighbour radius must be in [1, 8]");
        if (key_cap < 16) throw UsageError("key-set cap must be >= 16");
    }
};

struct FeatureVector {
    std::vector<double> values;  // catalog order, length catalog().size()
};

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

inline std::vector<FeatureDef> make_catalog() {
    std::vector<FeatureDef> c;
    auto add = [&](const char* name, const char* taxonomy, Scope scope) {
        c.push_back({name, taxonomy, scope});
    };

    // general DIMM statistics
    add("general.ce_count_W", "general", Scope::window);
    add("general.ce_count_H", "general", Scope::history);
    add("general.ce_rate_W", "general", Scope::window);
    add("general.ce_rate_H", "general", Scope::history);
    add("general.rel_change_ce_rate", "general", Scope::delta);
    add("general.ce_read_count_W", "general", Scope::window);
    add("general.ce_scrub_count_W", "general", Scope::window);
    add("general.ce_read_count_H", "general", Scope::history);
    add("general.ce_scrub_count_H", "general", Scope::history);
    add("general.rel_change_ce_read_rate", "general", Scope::delta);
    add("general.rel_change_ce_scrub_rate", "general", Scope::delta);
    add("general.time_since_first_ce", "general", Scope::lifetime);
    add("general.time_since_prev_ce", "general", Scope::lifetime);

    // bank level
    add("bank.distinct_banks_W", "bank", Scope::window);
    add("bank.distinct_banks_H", "bank", Scope::history);
    add("bank.distinct_banks_lifetime", "bank", Scope::lifetime);
    add("bank.new_banks_W", "bank", Scope::delta);
    add("bank.max_ce_per_bank_W", "bank", Scope::window);
    add("bank.mean_ce_per_bank_W", "bank", Scope::window);

    // row level, keys are (bank,row) unless bank-agnostic
    add("row.rows_with_ce_W", "row/repeating", Scope::window);
    add("row.rows_with_repeat_W", "row/repeating", Scope::window);
    add("row.rows_with_repeat_lifetime", "row/repeating", Scope::lifetime);
    add("row.max_ce_per_row_W", "row/repeating", Scope::window);
    add("row.new_rows_W", "row/repeating", Scope::delta);
    add("row.adjacent_row_pairs_W", "row/neighbourhood", Scope::window);
    add("row.rows_with_neighbour_lifetime", "row/neighbourhood", Scope::lifetime);
    add("row.row_multibank_W", "row/bank-agnostic", Scope::window);
    add("row.row_multibank_lifetime", "row/bank-agnostic", Scope::lifetime);

    // column level, keys are (bank,column)
    add("col.cols_with_ce_W", "column/repeating", Scope::window);
    add("col.cols_with_repeat_W", "column/repeating", Scope::window);
    add("col.cols_with_repeat_lifetime", "column/repeating", Scope::lifetime);
    add("col.max_ce_per_col_W", "column/repeating", Scope::window);
    add("col.new_cols_W", "column/repeating", Scope::delta);
    add("col.adjacent_col_pairs_W", "column/neighbourhood", Scope::window);
    add("col.cols_with_neighbour_lifetime", "column/neighbourhood", Scope::lifetime);
    add("col.col_multibank_W", "column/bank-agnostic", Scope::window);
    add("col.col_multibank_lifetime", "column/bank-agnostic", Scope::lifetime);

    // cell level, keys are (bank,row,column)
    add("cell.cells_with_ce_W", "cell/repeating", Scope::window);
    add("cell.cells_with_repeat_W", "cell/repeating", Scope::window);
    add("cell.cells_with_repeat_lifetime", "cell/repeating", Scope::lifetime);
    add("cell.max_ce_per_cell_W", "cell/repeating", Scope::window);
    add("cell.new_cells_W", "cell/repeating", Scope::delta);
    add("cell.adjacent_cells_W", "cell/neighbourhood", Scope::window);
    add("cell.cells_with_neighbour_lifetime", "cell/neighbourhood", Scope::lifetime);
    add("cell.cell_multibank_W", "cell/bank-agnostic", Scope::window);
    add("cell.cell_multibank_lifetime", "cell/bank-agnostic", Scope::lifetime);

    return c;
}

inline const std::vector<FeatureDef>& catalog() {
    static const std::vector<FeatureDef> c = make_catalog();
    return c;
}

inline std::size_t catalog_size() { return catalog().size(); }

// 1-based would be easy to get wrong; throws on unknown names.
inline std::size_t catalog_index(const std::string& name) {
    const auto& c = catalog();
    for (std::size_t i = 0; i < c.size(); ++i)
        if (c[i].name == name) return i;
    throw InternalError("unknown feature name: " + name);
}

// Version string derived from the ordered names and scopes; embedded in the
// feature matrix files, the catalog reference document and trained models.
inline const std::string& catalog_version() {
    static const std::string v = [] {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        auto mix = [&](const std::string& s) {
            for (unsigned char ch : s) {
                h ^= ch;
                h *= 0x100000001b3ULL;
            }
        };
        for (const auto& f : catalog()) {
            mix(f.name);
            mix(":");
            mix(scope_name(f.scope));
            mix(";");
        }
        char buf[32];
        std::snprintf(buf, sizeof(buf), "cecat-%zu-%08x", catalog().size(),
                      static_cast<std::uint32_t>(h ^ (h >> 32)));
        return std::string(buf);
    }();
    return v;
}

// ---------------------------------------------------------------------------
// Keyed aggregates
// ---------------------------------------------------------------------------

namespace detail {

struct CellKey {
    std::uint32_t bank = 0, row = 0, col = 0;
    friend bool operator==(const CellKey&, const CellKey&) = default;
};

struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const {
        std::uint64_t s = (std::uint64_t(k.bank) << 42) ^ (std::uint64_t(k.row) << 10) ^ k.col;
        return splitmix_hash(s);
    }
    static std::size_t splitmix_hash(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return static_cast<std::size_t>(z ^ (z >> 31));
    }
};

struct U64Hash {
    std::size_t operator()(std::uint64_t v) const { return CellKeyHash::splitmix_hash(v); }
};

inline std::uint64_t bank_line_key(std::uint32_t bank, std::uint32_t index) {
    return (std::uint64_t(bank) << 32) | index;
}

inline std::uint64_t row_col_key(std::uint32_t row, std::uint32_t col) {
    return (std::uint64_t(row) << 32) | col;
}

struct KeyEntry {
    std::uint32_t count = 0;
    std::uint32_t nbr_degree = 0;  // present neighbours within the radius
};

// One keyed family ((bank,row), (bank,col) or (bank,row,col)) with the derived
// counters every catalog feature reads: distinct keys, repeating keys,
// adjacent pairs, keys-with-neighbour and the bank-agnostic multibank count.
template <class Key, class Hash, class NeighbourFn, class AgnosticFn>
class KeyFamily {
public:
    KeyFamily(std::uint32_t repeat_threshold, std::uint32_t radius, std::size_t cap,
              NeighbourFn neighbours, AgnosticFn agnostic)
        : r_min_(repeat_threshold), radius_(radius), cap_(cap),
          neighbours_(neighbours), agnostic_(agnostic) {}

    // Returns true when the key transitioned absent -> present.
    bool add(const Key& key) {
        auto it = keys_.find(key);
        if (it != keys_.end()) {
            if (++it->second.count == r_min_) ++repeat_keys_;
            return false;
        }
        if (keys_.size() >= cap_) {
            saturated_ = true;
            return false;
        }
        KeyEntry entry;
        entry.count = 1;
        if (r_min_ <= 1) ++repeat_keys_;
        attach_neighbours(key, entry);
        keys_.emplace(key, entry);
        bump_agnostic(key, +1);
        return true;
    }

    // Returns true when the key transitioned present -> absent.
    bool remove(const Key& key) {
        auto it = keys_.find(key);
        if (it == keys_.end()) return false;  // key skipped at insert (saturated)
        if (it->second.count == r_min_) --repeat_keys_;
        if (--it->second.count > 0) return false;
        detach_neighbours(key, it->second);
        keys_.erase(it);
        bump_agnostic(key, -1);
        return true;
    }

    bool contains(const Key& key) const { return keys_.count(key) != 0; }

    std::size_t distinct() const { return keys_.size(); }
    std::uint64_t repeat_keys() const { return repeat_keys_; }
    std::uint64_t adjacent_pairs() const { return adjacent_pairs_; }
    std::uint64_t keys_with_neighbour() const { return keys_with_neighbour_; }
    std::uint64_t multibank() const { return multibank_; }
    bool saturated() const { return saturated_; }

    std::uint32_t max_count() const {
        std::uint32_t best = 0;
        for (const auto& [k, e] : keys_) best = std::max(best, e.count);
        return best;
    }

private:
    void attach_neighbours(const Key& key, KeyEntry& entry) {
        neighbours_(key, radius_, [&](const Key& nbr) {
            auto nit = keys_.find(nbr);
            if (nit == keys_.end()) return;
            ++adjacent_pairs_;
            if (nit->second.nbr_degree++ == 0) ++keys_with_neighbour_;
            ++entry.nbr_degree;
        });
        if (entry.nbr_degree > 0) ++keys_with_neighbour_;
    }

    void detach_neighbours(const Key& key, const KeyEntry& entry) {
        neighbours_(key, radius_, [&](const Key& nbr) {
            auto nit = keys_.find(nbr);
            if (nit == keys_.end()) return;
            --adjacent_pairs_;
            if (--nit->second.nbr_degree == 0) --keys_with_neighbour_;
        });
        if (entry.nbr_degree > 0) --keys_with_neighbour_;
    }

    void bump_agnostic(const Key& key, int delta) {
        std::uint64_t idx;
        if (!agnostic_(key, idx)) return;
        auto& n = agnostic_counts_[idx];
        if (delta > 0) {
            if (++n == 2) ++multibank_;
        } else {
            if (n-- == 2) --multibank_;
            if (n == 0) agnostic_counts_.erase(idx);
        }
    }

    std::uint32_t r_min_, radius_;
    std::size_t cap_;
    NeighbourFn neighbours_;
    AgnosticFn agnostic_;
    std::unordered_map<Key, KeyEntry, Hash> keys_;
    std::unordered_map<std::uint64_t, std::uint32_t, U64Hash> agnostic_counts_;
    std::uint64_t repeat_keys_ = 0;
    std::uint64_t adjacent_pairs_ = 0;
    std::uint64_t keys_with_neighbour_ = 0;
    std::uint64_t multibank_ = 0;
    bool saturated_ = false;
};

// Neighbour enumerators. Rows/columns: same bank, index within radius.
// Cells: same bank, Chebyshev distance <= radius.
struct LineNeighbours {
    template <class Fn>
    void operator()(std::uint64_t key, std::uint32_t radius, Fn&& fn) const {
        std::uint32_t bank = static_cast<std::uint32_t>(key >> 32);
        std::uint32_t idx = static_cast<std::uint32_t>(key);
        for (std::uint32_t d = 1; d <= radius; ++d) {
            if (idx >= d) fn(bank_line_key(bank, idx - d));
            if (idx <= 0xffffffffu - d) fn(bank_line_key(bank, idx + d));
        }
    }
};

struct CellNeighbours {
    template <class Fn>
    void operator()(const CellKey& key, std::uint32_t radius, Fn&& fn) const {
        std::int64_t r = key.row, c = key.col, rad = radius;
        for (std::int64_t dr = -rad; dr <= rad; ++dr) {
            for (std::int64_t dc = -rad; dc <= rad; ++dc) {
                if (dr == 0 && dc == 0) continue;
                std::int64_t nr = r + dr, nc = c + dc;
                if (nr < 0 || nc < 0 || nr > 0xffffffffLL || nc > 0xffffffffLL) continue;
                fn(CellKey{key.bank, static_cast<std::uint32_t>(nr),
                           static_cast<std::uint32_t>(nc)});
            }
        }
    }
};

// Bank-agnostic projections for the multibank counters.
struct LineAgnostic {
    bool operator()(std::uint64_t key, std::uint64_t& out) const {
        out = static_cast<std::uint32_t>(key);  // row or column index
        return true;
    }
};

struct CellAgnostic {
    bool operator()(const CellKey& key, std::uint64_t& out) const {
        out = row_col_key(key.row, key.col);
        return true;
    }
};

struct NoNeighbours {
    template <class Fn>
    void operator()(std::uint64_t, std::uint32_t, Fn&&) const {}
};

struct NoAgnostic {
    bool operator()(std::uint64_t, std::uint64_t&) const { return false; }
};

}  // namespace detail

// Aggregates for one interval. History and lifetime only ever add; the window
// also removes as events expire.
class AddressAggregates {
public:
    AddressAggregates(std::uint32_t repeat_threshold, std::uint32_t radius, std::size_t cap)
        : banks_(repeat_threshold, radius, cap, detail::NoNeighbours{}, detail::NoAgnostic{}),
          rows_(repeat_threshold, radius, cap, detail::LineNeighbours{}, detail::LineAgnostic{}),
          cols_(repeat_threshold, radius, cap, detail::LineNeighbours{}, detail::LineAgnostic{}),
          cells_(repeat_threshold, radius, cap, detail::CellNeighbours{}, detail::CellAgnostic{}) {}

    struct Transitions {
        bool bank_inserted = false;
        bool row_inserted = false;
        bool col_inserted = false;
        bool cell_inserted = false;
        bool bank_erased = false;
        bool row_erased = false;
        bool col_erased = false;
        bool cell_erased = false;
    };

    Transitions add(const CeRecord& rec) {
        ++ce_count_;
        if (rec.type == "ce.read") ++read_count_;
        else if (rec.type == "ce.scrub") ++scrub_count_;
        if (ce_count_ == 1 || rec.ts < first_ts_) first_ts_ = rec.ts;
        if (ce_count_ == 1 || rec.ts > last_ts_) last_ts_ = rec.ts;
        Transitions t;
        t.bank_inserted = banks_.add(detail::bank_line_key(0, *rec.bank));
        t.row_inserted = rows_.add(detail::bank_line_key(*rec.bank, *rec.row));
        t.col_inserted = cols_.add(detail::bank_line_key(*rec.bank, *rec.col));
        t.cell_inserted = cells_.add(detail::CellKey{*rec.bank, *rec.row, *rec.col});
        return t;
    }

    Transitions remove(const CeRecord& rec) {
        --ce_count_;
        if (rec.type == "ce.read") --read_count_;
        else if (rec.type == "ce.scrub") --scrub_count_;
        Transitions t;
        t.bank_erased = banks_.remove(detail::bank_line_key(0, *rec.bank));
        t.row_erased = rows_.remove(detail::bank_line_key(*rec.bank, *rec.row));
        t.col_erased = cols_.remove(detail::bank_line_key(*rec.bank, *rec.col));
        t.cell_erased = cells_.remove(detail::CellKey{*rec.bank, *rec.row, *rec.col});
        return t;
    }

    std::uint64_t ce_count() const { return ce_count_; }
    std::uint64_t read_count() const { return read_count_; }
    std::uint64_t scrub_count() const { return scrub_count_; }
    std::int64_t first_ts() const { return first_ts_; }
    std::int64_t last_ts() const { return last_ts_; }

    bool has_bank(std::uint32_t bank) const {
        return banks_.contains(detail::bank_line_key(0, bank));
    }
    bool has_row(std::uint32_t bank, std::uint32_t row) const {
        return rows_.contains(detail::bank_line_key(bank, row));
    }
    bool has_col(std::uint32_t bank, std::uint32_t col) const {
        return cols_.contains(detail::bank_line_key(bank, col));
    }
    bool has_cell(std::uint32_t bank, std::uint32_t row, std::uint32_t col) const {
        return cells_.contains(detail::CellKey{bank, row, col});
    }

    const auto& banks() const { return banks_; }
    const auto& rows() const { return rows_; }
    const auto& cols() const { return cols_; }
    const auto& cells() const { return cells_; }

    bool any_saturated() const {
        return banks_.saturated() || rows_.saturated() || cols_.saturated() ||
               cells_.saturated();
    }

private:
    std::uint64_t ce_count_ = 0;
    std::uint64_t read_count_ = 0;
    std::uint64_t scrub_count_ = 0;
    std::int64_t first_ts_ = 0;
    std::int64_t last_ts_ = 0;
    detail::KeyFamily<std::uint64_t, detail::U64Hash, detail::NoNeighbours, detail::NoAgnostic>
        banks_;
    detail::KeyFamily<std::uint64_t, detail::U64Hash, detail::LineNeighbours, detail::LineAgnostic>
        rows_;
    detail::KeyFamily<std::uint64_t, detail::U64Hash, detail::LineNeighbours, detail::LineAgnostic>
        cols_;
    detail::KeyFamily<detail::CellKey, detail::CellKeyHash, detail::CellNeighbours,
                      detail::CellAgnostic>
        cells_;
};

// ---------------------------------------------------------------------------
// Tracker
// ---------------------------------------------------------------------------

class DimmTracker {
public:
    explicit DimmTracker(DimmId dimm, const EngineConfig& cfg = {})
        : dimm_(std::move(dimm)), cfg_(cfg),
          window_(cfg.repeat_threshold, cfg.neighbour_radius, cfg.key_cap),
          history_(cfg.repeat_threshold, cfg.neighbour_radius, cfg.key_cap),
          lifetime_(cfg.repeat_threshold, cfg.neighbour_radius, cfg.key_cap) {
        cfg.validate();
    }

    const DimmId& dimm() const { return dimm_; }
    const EngineConfig& config() const { return cfg_; }
    std::uint64_t events_ingested() const { return n_ingested_; }
    std::uint64_t events_expired() const { return n_expired_; }
    bool empty() const { return n_ingested_ == 0; }
    std::int64_t current_ts() const { return t0_; }

    // Folds expired window events into history, then absorbs the new event.
    // Events must arrive in non-decreasing timestamp order per DIMM.
    void ingest(const CeRecord& rec) {
        if (!rec.has_full_address())
            throw DataError("fengine: record for DIMM '" + dimm_ +
                            "' is missing an address field (filter first)");
        if (n_ingested_ > 0 && rec.ts < t0_)
            throw OrderingError("fengine: out-of-order event for DIMM '" + dimm_ + "': got ts=" +
                                std::to_string(rec.ts) + " after ts=" + std::to_string(t0_));

        const std::int64_t horizon = rec.ts - cfg_.window_seconds();
        while (!buffer_.empty() && buffer_.front().ts <= horizon) {
            const CeRecord& old = buffer_.front();
            auto wt = window_.remove(old);
            auto ht = history_.add(old);
            if (wt.bank_erased) fresh_banks_.erase(*old.bank);
            if (wt.row_erased) fresh_rows_.erase(detail::bank_line_key(*old.bank, *old.row));
            if (wt.col_erased) fresh_cols_.erase(detail::bank_line_key(*old.bank, *old.col));
            if (wt.cell_erased) fresh_cells_.erase(detail::CellKey{*old.bank, *old.row, *old.col});
            // A key entering history stops being new even if still in W.
            if (ht.bank_inserted) fresh_banks_.erase(*old.bank);
            if (ht.row_inserted) fresh_rows_.erase(detail::bank_line_key(*old.bank, *old.row));
            if (ht.col_inserted) fresh_cols_.erase(detail::bank_line_key(*old.bank, *old.col));
            if (ht.cell_inserted)
                fresh_cells_.erase(detail::CellKey{*old.bank, *old.row, *old.col});
            buffer_.pop_front();
            ++n_expired_;
        }

        t_prev_ = (n_ingested_ == 0) ? rec.ts : t0_;
        t0_ = rec.ts;
        if (n_ingested_ == 0) t_first_ = rec.ts;

        auto wt = window_.add(rec);
        if (wt.bank_inserted && !history_.has_bank(*rec.bank)) fresh_banks_.insert(*rec.bank);
        if (wt.row_inserted && !history_.has_row(*rec.bank, *rec.row))
            fresh_rows_.insert(detail::bank_line_key(*rec.bank, *rec.row));
        if (wt.col_inserted && !history_.has_col(*rec.bank, *rec.col))
            fresh_cols_.insert(detail::bank_line_key(*rec.bank, *rec.col));
        if (wt.cell_inserted && !history_.has_cell(*rec.bank, *rec.row, *rec.col))
            fresh_cells_.insert(detail::CellKey{*rec.bank, *rec.row, *rec.col});
        lifetime_.add(rec);
        buffer_.push_back(rec);
        ++n_ingested_;
    }

    // Pure; evaluates the full catalog at t0. In fixed mode every history,
    // lifetime and delta slot is exactly 0.
    FeatureVector snapshot() const {
        if (n_ingested_ == 0)
            throw DataError("fengine: snapshot on empty state for DIMM '" + dimm_ +
                            "' (no t0 defined)");
        FeatureVector out;
        out.values.resize(catalog_size(), 0.0);
        std::size_t i = 0;
        auto put = [&](double v) { out.values[i++] = v; };

        const double w_hours = cfg_.window_hours;
        const double span_h_hours = history_span_hours();
        auto rate = [](double count, double hours) {
            return (count > 0 && hours > 0) ? count / hours : 0.0;
        };
        auto rel_change = [](double w, double h) { return (w - h) / std::max(h, kRelChangeEps); };

        const double ce_w = static_cast<double>(window_.ce_count());
        const double ce_h = static_cast<double>(history_.ce_count());
        const double rate_w = rate(ce_w, w_hours);
        const double rate_h = rate(ce_h, span_h_hours);

        // general
        put(ce_w);
        put(ce_h);
        put(rate_w);
        put(rate_h);
        put(rel_change(rate_w, rate_h));
        put(static_cast<double>(window_.read_count()));
        put(static_cast<double>(window_.scrub_count()));
        put(static_cast<double>(history_.read_count()));
        put(static_cast<double>(history_.scrub_count()));
        put(rel_change(rate(static_cast<double>(window_.read_count()), w_hours),
                       rate(static_cast<double>(history_.read_count()), span_h_hours)));
        put(rel_change(rate(static_cast<double>(window_.scrub_count()), w_hours),
                       rate(static_cast<double>(history_.scrub_count()), span_h_hours)));
        put(static_cast<double>(t0_ - t_first_) / 3600.0);
        put(static_cast<double>(t0_ - t_prev_) / 3600.0);

        // bank
        const double banks_w = static_cast<double>(window_.banks().distinct());
        put(banks_w);
        put(static_cast<double>(history_.banks().distinct()));
        put(static_cast<double>(lifetime_.banks().distinct()));
        put(static_cast<double>(fresh_banks_.size()));
        put(static_cast<double>(window_.banks().max_count()));
        put(banks_w > 0 ? ce_w / banks_w : 0.0);

        // row
        put(static_cast<double>(window_.rows().distinct()));
        put(static_cast<double>(window_.rows().repeat_keys()));
        put(static_cast<double>(lifetime_.rows().repeat_keys()));
        put(static_cast<double>(window_.rows().max_count()));
        put(static_cast<double>(fresh_rows_.size()));
        put(static_cast<double>(window_.rows().adjacent_pairs()));
        put(static_cast<double>(lifetime_.rows().keys_with_neighbour()));
        put(static_cast<double>(window_.rows().multibank()));
        put(static_cast<double>(lifetime_.rows().multibank()));

        // column
        put(static_cast<double>(window_.cols().distinct()));
        put(static_cast<double>(window_.cols().repeat_keys()));
        put(static_cast<double>(lifetime_.cols().repeat_keys()));
        put(static_cast<double>(window_.cols().max_count()));
        put(static_cast<double>(fresh_cols_.size()));
        put(static_cast<double>(window_.cols().adjacent_pairs()));
        put(static_cast<double>(lifetime_.cols().keys_with_neighbour()));
        put(static_cast<double>(window_.cols().multibank()));
        put(static_cast<double>(lifetime_.cols().multibank()));

        // cell
        put(static_cast<double>(window_.cells().distinct()));
        put(static_cast<double>(window_.cells().repeat_keys()));
        put(static_cast<double>(lifetime_.cells().repeat_keys()));
        put(static_cast<double>(window_.cells().max_count()));
        put(static_cast<double>(fresh_cells_.size()));
        put(static_cast<double>(window_.cells().adjacent_pairs()));
        put(static_cast<double>(lifetime_.cells().keys_with_neighbour()));
        put(static_cast<double>(window_.cells().multibank()));
        put(static_cast<double>(lifetime_.cells().multibank()));

        if (i != out.values.size())
            throw InternalError("fengine: snapshot slot count mismatch");

        if (cfg_.mode == Mode::fixed) apply_fixed_mask(out.values);
        return out;
    }

    bool saturated() const {
        return window_.any_saturated() || history_.any_saturated() || lifetime_.any_saturated();
    }

    // Zeroes every non-window slot in place; snapshot(fixed) == mask(snapshot(overall)).
    static void apply_fixed_mask(std::vector<double>& values) {
        const auto& c = catalog();
        for (std::size_t k = 0; k < c.size(); ++k)
            if (c[k].scope != Scope::window) values[k] = 0.0;
    }

private:
    double history_span_hours() const {
        if (history_.ce_count() == 0) return 0.0;
        std::int64_t span = (t0_ - cfg_.window_seconds()) - t_first_;
        return span > 0 ? static_cast<double>(span) / 3600.0 : 0.0;
    }

    DimmId dimm_;
    EngineConfig cfg_;
    std::deque<CeRecord> buffer_;
    AddressAggregates window_;
    AddressAggregates history_;
    AddressAggregates lifetime_;
    std::unordered_set<std::uint32_t> fresh_banks_;
    std::unordered_set<std::uint64_t, detail::U64Hash> fresh_rows_;
    std::unordered_set<std::uint64_t, detail::U64Hash> fresh_cols_;
    std::unordered_set<detail::CellKey, detail::CellKeyHash> fresh_cells_;
    std::int64_t t_first_ = 0;
    std::int64_t t_prev_ = 0;
    std::int64_t t0_ = 0;
    std::uint64_t n_ingested_ = 0;
    std::uint64_t n_expired_ = 0;
};

}  // namespace cepred
