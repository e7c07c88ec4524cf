// Copyright 2026 The TRAMS Authors
// SPDX-License-Identifier: Apache-2.0

#include <charconv>
#include <cmath>
#include <ctime>

#include <nlohmann/json.hpp>

#include "trams/cli_io.hpp"

namespace trams {

std::string format_number(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

double parse_number(std::string_view text) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw CorruptFileError("not a number: '" + std::string(text) + "'");
    }
    return v;
}

void Table::add_row(std::vector<std::string> row) {
    if (row.size() != columns.size()) {
        throw UsageError("table row has " + std::to_string(row.size()) + " cells, expected " +
                         std::to_string(columns.size()));
    }
    rows.push_back(std::move(row));
}

std::size_t Table::column(std::string_view name) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
        if (columns[c] == name) return c;
    throw UsageError("table has no column '" + std::string(name) + "'");
}

double Table::number(std::size_t row, std::string_view name) const {
    return parse_number(rows.at(row).at(column(name)));
}

namespace {

std::string csv_cell(const std::string& cell) {
    if (cell.find_first_of(",\"\r\n") == std::string::npos) return cell;
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

void csv_line(std::string& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += csv_cell(cells[i]);
    }
    out += '\n';
}

}  // namespace

std::string to_csv(const Table& table) {
    std::string out;
    csv_line(out, table.columns);
    for (const auto& row : table.rows) csv_line(out, row);
    return out;
}

Table parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string cell;
    bool quoted = false;
    bool any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell += c;
            }
            continue;
        }
        any = true;
        if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            record.push_back(std::move(cell));
            cell.clear();
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            record.push_back(std::move(cell));
            cell.clear();
            records.push_back(std::move(record));
            record.clear();
            any = false;
        } else {
            cell += c;
        }
    }
    if (quoted) throw CorruptFileError("csv: unterminated quoted cell");
    if (any || !cell.empty() || !record.empty()) {
        record.push_back(std::move(cell));
        records.push_back(std::move(record));
    }
    if (records.empty()) throw CorruptFileError("csv: missing header row");
    Table t;
    t.columns = std::move(records.front());
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].size() != t.columns.size()) {
            throw CorruptFileError("csv: row " + std::to_string(r) + " has " + std::to_string(records[r].size()) +
                                   " cells, header has " + std::to_string(t.columns.size()));
        }
        t.rows.push_back(std::move(records[r]));
    }
    return t;
}

void write_csv(const Table& table, const std::filesystem::path& path) { write_text_file(path, to_csv(table)); }

Table read_csv(const std::filesystem::path& path) { return parse_csv(read_text_file(path)); }

ReportFormat parse_report_format(std::string_view name) {
    if (name == "json") return ReportFormat::json;
    if (name == "csv") return ReportFormat::csv;
    throw UsageError("unknown report format '" + std::string(name) + "' (expected json or csv)");
}

const std::vector<std::string>& eval_report_fields() {
    static const std::vector<std::string> fields = {
        "strategy",   "metric_direction", "pool_capacity", "selected_m", "segment_len",
        "total_nll_nats", "token_count",  "perplexity",    "bpc",        "memory_mass",
        "utilization", "segments",        "wall_time_s",   "peak_resident_bytes"};
    return fields;
}

namespace {

std::vector<std::string> eval_report_cells(const EvalReport& r) {
    return {r.strategy,
            r.metric_direction,
            std::to_string(r.pool_capacity),
            std::to_string(r.selected_m),
            std::to_string(r.segment_len),
            format_number(r.total_nll_nats),
            std::to_string(r.token_count),
            format_number(r.perplexity),
            format_number(r.bpc),
            format_number(r.memory_mass),
            format_number(r.utilization),
            std::to_string(r.segments),
            format_number(r.wall_time_s),
            std::to_string(r.peak_resident_bytes)};
}

nlohmann::ordered_json number_array(const std::vector<double>& values) {
    auto a = nlohmann::ordered_json::array();
    for (double v : values) a.push_back(nlohmann::ordered_json::parse(std::isfinite(v) ? format_number(v) : "null"));
    return a;
}

}  // namespace

std::string eval_report_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    const auto cells = eval_report_cells(r);
    const auto& fields = eval_report_fields();
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i < 2) j[fields[i]] = cells[i];
        else if (cells[i] == "nan" || cells[i] == "inf" || cells[i] == "-inf") j[fields[i]] = cells[i];
        else j[fields[i]] = nlohmann::ordered_json::parse(cells[i]);
    }
    j["segment_nll"] = number_array(r.segment_nll);
    j["segment_utilization"] = number_array(r.segment_utilization);
    return j.dump(2) + "\n";
}

Table eval_report_table(const std::vector<EvalReport>& reports) {
    Table t;
    t.columns = eval_report_fields();
    for (const auto& r : reports) t.add_row(eval_report_cells(r));
    return t;
}

EvalReport eval_report_from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFileError(std::string("eval report: invalid JSON: ") + e.what());
    }
    EvalReport r;
    auto real = [&](const char* key) {
        const auto& v = j.at(key);
        return v.is_string() ? parse_number(v.get<std::string>()) : v.get<double>();
    };
    auto reals = [&](const char* key) {
        std::vector<double> out;
        for (const auto& v : j.at(key)) out.push_back(v.is_null() ? std::nan("") : v.get<double>());
        return out;
    };
    try {
        r.strategy = j.at("strategy").get<std::string>();
        r.metric_direction = j.at("metric_direction").get<std::string>();
        r.pool_capacity = j.at("pool_capacity").get<std::size_t>();
        r.selected_m = j.at("selected_m").get<std::size_t>();
        r.segment_len = j.at("segment_len").get<std::size_t>();
        r.total_nll_nats = real("total_nll_nats");
        r.token_count = j.at("token_count").get<std::size_t>();
        r.perplexity = real("perplexity");
        r.bpc = real("bpc");
        r.memory_mass = real("memory_mass");
        r.utilization = real("utilization");
        r.segments = j.at("segments").get<std::size_t>();
        r.wall_time_s = real("wall_time_s");
        r.peak_resident_bytes = j.at("peak_resident_bytes").get<std::size_t>();
        r.segment_nll = reals("segment_nll");
        r.segment_utilization = reals("segment_utilization");
    } catch (const nlohmann::json::exception& e) {
        throw CorruptFileError(std::string("eval report: ") + e.what());
    }
    return r;
}

void write_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format) {
    if (format == ReportFormat::json) write_text_file(path, eval_report_json(report));
    else write_csv(eval_report_table({report}), path);
}

std::string experiment_file_name(std::string_view experiment, bool fixed, std::string_view extension) {
    std::string stamp = "00000000T000000";
    if (!fixed) {
        const std::time_t now = std::time(nullptr);
        std::tm utc{};
        gmtime_r(&now, &utc);
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%S", &utc);
        stamp = buf;
    }
    return std::string(experiment) + "-" + stamp + "." + std::string(extension);
}

}  // namespace trams
