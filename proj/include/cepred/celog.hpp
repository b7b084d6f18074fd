#pragma once

// Correctable-error log schema, line-delimited JSON parsing/serialization and
// the preprocessing filters applied before feature extraction.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cepred/error.hpp"

namespace cepred {

using DimmId = std::string;

struct Geometry {
    std::uint32_t banks = 16;
    std::uint32_t rows = 131072;
    std::uint32_t columns = 1024;

    void validate() const {
        if (banks == 0 || rows == 0 || columns == 0)
            throw DataError("geometry counts must be strictly positive");
    }
};

// One CE event as logged. Address fields are optional on the wire; records
// that survive filter_records() with require_address carry all three.
struct CeRecord {
    std::int64_t ts = 0;  // seconds since epoch
    DimmId dimm;
    std::string type;  // e.g. ce.read, ce.scrub, uce.read
    std::optional<std::uint32_t> rank;
    std::optional<std::uint32_t> bank;
    std::optional<std::uint32_t> row;
    std::optional<std::uint32_t> col;

    bool has_full_address() const { return bank && row && col; }

    friend bool operator==(const CeRecord&, const CeRecord&) = default;
};

struct FailureRecord {
    DimmId dimm;
    std::int64_t failure_time = 0;  // seconds since epoch
};

struct ParseIssue {
    std::size_t line = 0;  // 1-based
    std::string message;
};

struct ParseResult {
    std::vector<CeRecord> records;
    std::vector<ParseIssue> errors;
};

namespace detail {

inline bool read_u32_field(const nlohmann::json& j, const char* key,
                           std::optional<std::uint32_t>& out, std::string& err) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return true;
    if (!it->is_number_integer() || it->get<std::int64_t>() < 0 ||
        it->get<std::int64_t>() > 0xffffffffLL) {
        err = std::string("field '") + key + "' must be a non-negative integer";
        return false;
    }
    out = static_cast<std::uint32_t>(it->get<std::int64_t>());
    return true;
}

}  // namespace detail

// Parses one JSONL line into a record. Field names: ts, dimm, type, rank,
// bank, row, col. Unknown keys are ignored.
inline bool parse_record_line(const std::string& line, CeRecord& out, std::string& err) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        err = "not a JSON object";
        return false;
    }
    auto ts = j.find("ts");
    if (ts == j.end() || !ts->is_number_integer()) {
        err = "missing or non-integer field 'ts'";
        return false;
    }
    if (ts->get<std::int64_t>() < 0) {
        err = "field 'ts' must be >= 0";
        return false;
    }
    auto dimm = j.find("dimm");
    if (dimm == j.end() || !dimm->is_string() || dimm->get<std::string>().empty()) {
        err = "missing or empty field 'dimm'";
        return false;
    }
    auto type = j.find("type");
    if (type == j.end() || !type->is_string() || type->get<std::string>().empty()) {
        err = "missing or empty field 'type'";
        return false;
    }
    CeRecord rec;
    rec.ts = ts->get<std::int64_t>();
    rec.dimm = dimm->get<std::string>();
    rec.type = type->get<std::string>();
    if (!detail::read_u32_field(j, "rank", rec.rank, err)) return false;
    if (!detail::read_u32_field(j, "bank", rec.bank, err)) return false;
    if (!detail::read_u32_field(j, "row", rec.row, err)) return false;
    if (!detail::read_u32_field(j, "col", rec.col, err)) return false;
    out = std::move(rec);
    return true;
}

// Reads a line-delimited stream in file order. Malformed lines are collected
// with their line numbers, never silently dropped. Blank lines are skipped.
inline ParseResult parse_stream(std::istream& in) {
    ParseResult result;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        CeRecord rec;
        std::string err;
        if (parse_record_line(line, rec, err)) {
            result.records.push_back(std::move(rec));
        } else {
            result.errors.push_back({line_no, err});
        }
    }
    if (in.bad()) throw DataError("I/O failure while reading CE log stream");
    return result;
}

inline std::string serialize_record(const CeRecord& rec) {
    nlohmann::json j;
    j["ts"] = rec.ts;
    j["dimm"] = rec.dimm;
    j["type"] = rec.type;
    if (rec.rank) j["rank"] = *rec.rank;
    if (rec.bank) j["bank"] = *rec.bank;
    if (rec.row) j["row"] = *rec.row;
    if (rec.col) j["col"] = *rec.col;
    return j.dump();
}

inline void write_stream(std::ostream& out, const std::vector<CeRecord>& records) {
    for (const auto& rec : records) out << serialize_record(rec) << '\n';
}

struct FilterConfig {
    std::set<std::string> drop_types{"uce.read"};
    bool require_address = true;  // bank, row and column must all be present
};

// Order-preserving, idempotent preprocessing filter.
inline std::vector<CeRecord> filter_records(std::vector<CeRecord> records,
                                            const FilterConfig& cfg = {}) {
    std::erase_if(records, [&](const CeRecord& r) {
        if (cfg.drop_types.count(r.type)) return true;
        if (cfg.require_address && !r.has_full_address()) return true;
        return false;
    });
    return records;
}

// Optional address sanity check against a declared geometry.
inline std::vector<ParseIssue> check_geometry(const std::vector<CeRecord>& records,
                                              const Geometry& geom) {
    geom.validate();
    std::vector<ParseIssue> issues;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.bank && *r.bank >= geom.banks)
            issues.push_back({i + 1, "bank " + std::to_string(*r.bank) + " out of range"});
        if (r.row && *r.row >= geom.rows)
            issues.push_back({i + 1, "row " + std::to_string(*r.row) + " out of range"});
        if (r.col && *r.col >= geom.columns)
            issues.push_back({i + 1, "col " + std::to_string(*r.col) + " out of range"});
    }
    return issues;
}

// Failure list file: CSV with header `dimm,failure_time`, one row per failed
// DIMM. Duplicate DIMMs are rejected.
inline std::vector<FailureRecord> parse_failures_csv(std::istream& in) {
    std::vector<FailureRecord> out;
    std::string line;
    if (!std::getline(in, line)) return out;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "dimm,failure_time")
        throw DataError("failure list: expected header 'dimm,failure_time', got '" + line + "'");
    std::set<DimmId> seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos || comma == 0)
            throw DataError("failure list line " + std::to_string(line_no) + ": malformed row");
        FailureRecord rec;
        rec.dimm = line.substr(0, comma);
        try {
            rec.failure_time = std::stoll(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw DataError("failure list line " + std::to_string(line_no) +
                            ": non-integer failure_time");
        }
        if (rec.failure_time < 0)
            throw DataError("failure list line " + std::to_string(line_no) +
                            ": failure_time must be >= 0");
        if (!seen.insert(rec.dimm).second)
            throw DataError("failure list: duplicate DIMM '" + rec.dimm + "'");
        out.push_back(std::move(rec));
    }
    return out;
}

inline void write_failures_csv(std::ostream& out, const std::vector<FailureRecord>& failures) {
    out << "dimm,failure_time\n";
    for (const auto& f : failures) out << f.dimm << ',' << f.failure_time << '\n';
}

}  // namespace cepred
