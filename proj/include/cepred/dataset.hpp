#pragma once

// Row-major labeled feature matrix plus its on-disk CSV form:
//   # catalog <version>
//   dimm,ts,label,<catalog names in order>
// Values are written in shortest round-trip form so read(write(m)) == m.

#include <charconv>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cepred/error.hpp"
#include "cepred/features.hpp"

namespace cepred {

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc())
        throw InternalError("format_double: to_chars failed");
    return std::string(buf, res.ptr);
}

class FeatureMatrix {
public:
    FeatureMatrix() : n_features_(catalog_size()) {}

    std::size_t n_features() const { return n_features_; }
    std::size_t n_rows() const { return row_ts_.size(); }

    std::uint32_t intern_dimm(const DimmId& dimm) {
        auto it = dimm_index_.find(dimm);
        if (it != dimm_index_.end()) return it->second;
        std::uint32_t idx = static_cast<std::uint32_t>(dimm_ids_.size());
        dimm_ids_.push_back(dimm);
        dimm_index_.emplace(dimm, idx);
        return idx;
    }

    void add_row(std::uint32_t dimm_idx, std::int64_t ts, std::uint8_t label,
                 const std::vector<double>& values) {
        if (values.size() != n_features_)
            throw InternalError("feature matrix: row length mismatch");
        row_dimm_.push_back(dimm_idx);
        row_ts_.push_back(ts);
        row_label_.push_back(label);
        values_.insert(values_.end(), values.begin(), values.end());
    }

    std::span<const double> row(std::size_t r) const {
        return {values_.data() + r * n_features_, n_features_};
    }
    double value(std::size_t r, std::size_t f) const { return values_[r * n_features_ + f]; }

    std::uint32_t row_dimm(std::size_t r) const { return row_dimm_[r]; }
    std::int64_t row_ts(std::size_t r) const { return row_ts_[r]; }
    std::uint8_t row_label(std::size_t r) const { return row_label_[r]; }
    void set_row_label(std::size_t r, std::uint8_t v) { row_label_[r] = v; }

    const std::vector<DimmId>& dimm_ids() const { return dimm_ids_; }
    const DimmId& dimm_of_row(std::size_t r) const { return dimm_ids_[row_dimm_[r]]; }

    bool has_dimm(const DimmId& dimm) const { return dimm_index_.count(dimm) != 0; }
    std::uint32_t dimm_index(const DimmId& dimm) const {
        auto it = dimm_index_.find(dimm);
        if (it == dimm_index_.end()) throw DataError("unknown DIMM '" + dimm + "'");
        return it->second;
    }

    // Rows of each DIMM in file order (chronological when produced by extract).
    std::vector<std::vector<std::uint32_t>> rows_by_dimm() const {
        std::vector<std::vector<std::uint32_t>> out(dimm_ids_.size());
        for (std::size_t r = 0; r < n_rows(); ++r)
            out[row_dimm_[r]].push_back(static_cast<std::uint32_t>(r));
        return out;
    }

    // Copy with every non-window feature column zeroed (fixed-window ablation).
    FeatureMatrix masked_fixed() const {
        FeatureMatrix m = *this;
        const auto& defs = catalog();
        for (std::size_t r = 0; r < m.n_rows(); ++r) {
            double* vals = m.values_.data() + r * n_features_;
            for (std::size_t f = 0; f < n_features_; ++f)
                if (defs[f].scope != Scope::window) vals[f] = 0.0;
        }
        return m;
    }

private:
    std::size_t n_features_;
    std::vector<DimmId> dimm_ids_;
    std::unordered_map<DimmId, std::uint32_t> dimm_index_;
    std::vector<std::uint32_t> row_dimm_;
    std::vector<std::int64_t> row_ts_;
    std::vector<std::uint8_t> row_label_;
    std::vector<double> values_;
};

inline void write_feature_csv(std::ostream& out, const FeatureMatrix& m) {
    out << "# catalog " << catalog_version() << '\n';
    out << "dimm,ts,label";
    for (const auto& f : catalog()) out << ',' << f.name;
    out << '\n';
    for (std::size_t r = 0; r < m.n_rows(); ++r) {
        out << m.dimm_of_row(r) << ',' << m.row_ts(r) << ',' << int(m.row_label(r));
        auto vals = m.row(r);
        for (double v : vals) out << ',' << format_double(v);
        out << '\n';
    }
}

inline FeatureMatrix read_feature_csv(std::istream& in) {
    FeatureMatrix m;
    std::string line;
    std::size_t line_no = 0;

    // optional comment lines, then the header
    std::string header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            if (line.rfind("# catalog ", 0) == 0) {
                std::string v = line.substr(10);
                if (v != catalog_version())
                    throw DataError("feature file catalog version '" + v +
                                    "' does not match this build's '" + catalog_version() + "'");
            }
            continue;
        }
        header = line;
        break;
    }
    if (header.empty()) return m;

    std::string expected = "dimm,ts,label";
    for (const auto& f : catalog()) expected += "," + f.name;
    if (header != expected)
        throw DataError("feature file header does not match catalog " + catalog_version() +
                        " (column names or order differ)");

    const std::size_t d = catalog_size();
    std::vector<double> vals(d);
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const char* p = line.data();
        const char* end = p + line.size();

        auto next_field = [&](const char*& cur) {
            const char* start = cur;
            while (cur < end && *cur != ',') ++cur;
            return std::string_view(start, static_cast<std::size_t>(cur - start));
        };
        auto expect_comma = [&](const char*& cur) {
            if (cur >= end || *cur != ',')
                throw DataError("feature file line " + std::to_string(line_no) +
                                ": too few columns");
            ++cur;
        };

        auto dimm_sv = next_field(p);
        if (dimm_sv.empty())
            throw DataError("feature file line " + std::to_string(line_no) + ": empty dimm");
        expect_comma(p);

        std::int64_t ts = 0;
        auto ts_res = std::from_chars(p, end, ts);
        if (ts_res.ec != std::errc())
            throw DataError("feature file line " + std::to_string(line_no) + ": bad ts");
        p = ts_res.ptr;
        expect_comma(p);

        int label = 0;
        auto lb_res = std::from_chars(p, end, label);
        if (lb_res.ec != std::errc() || (label != 0 && label != 1))
            throw DataError("feature file line " + std::to_string(line_no) + ": bad label");
        p = lb_res.ptr;

        for (std::size_t f = 0; f < d; ++f) {
            expect_comma(p);
            auto res = std::from_chars(p, end, vals[f]);
            if (res.ec != std::errc())
                throw DataError("feature file line " + std::to_string(line_no) +
                                ": bad value in column " + std::to_string(f + 4));
            p = res.ptr;
        }
        if (p != end)
            throw DataError("feature file line " + std::to_string(line_no) + ": extra columns");

        m.add_row(m.intern_dimm(std::string(dimm_sv)), ts, static_cast<std::uint8_t>(label), vals);
    }
    return m;
}

}  // namespace cepred
