#include "cvqkd/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "cvqkd/common.hpp"

namespace cvqkd::csv {

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

namespace {

bool needs_quotes(std::string_view s) {
    return s.find_first_of(",\"\r\n") != std::string_view::npos;
}

}  // namespace

Writer& Writer::field(std::string_view s) {
    if (!first_) out_ << ',';
    first_ = false;
    if (needs_quotes(s)) {
        out_ << '"';
        for (char c : s) {
            if (c == '"') out_ << '"';
            out_ << c;
        }
        out_ << '"';
    } else {
        out_ << s;
    }
    return *this;
}

Writer& Writer::field(double v) { return field(std::string_view(format_double(v))); }
Writer& Writer::field(long long v) { return field(std::string_view(std::to_string(v))); }
Writer& Writer::field(unsigned long long v) { return field(std::string_view(std::to_string(v))); }

void Writer::end_row() {
    out_ << "\r\n";
    first_ = true;
}

void Writer::row(const std::vector<std::string>& fields) {
    for (const auto& f : fields) field(std::string_view(f));
    end_row();
}

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw Error(Errc::io, "missing CSV column '" + std::string(name) + "'");
}

Table parse(std::istream& in) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string fieldbuf;
    bool in_quotes = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    fieldbuf += '"';
                } else {
                    in_quotes = false;
                }
            } else {
                fieldbuf += c;
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            record.push_back(std::move(fieldbuf));
            fieldbuf.clear();
        } else if (c == '\r' || c == '\n') {
            if (c == '\r' && in.peek() == '\n') in.get(c);
            record.push_back(std::move(fieldbuf));
            fieldbuf.clear();
            records.push_back(std::move(record));
            record.clear();
            any = false;
        } else {
            fieldbuf += c;
        }
    }
    if (in_quotes) throw Error(Errc::io, "unterminated quoted CSV field");
    if (any) {
        record.push_back(std::move(fieldbuf));
        records.push_back(std::move(record));
    }
    if (records.empty()) throw Error(Errc::io, "empty CSV document");

    Table t;
    t.header = std::move(records.front());
    for (std::size_t i = 1; i < records.size(); ++i) {
        if (records[i].size() == 1 && records[i][0].empty()) continue;
        if (records[i].size() != t.header.size()) {
            throw Error(Errc::io, "CSV row " + std::to_string(i) + " has " +
                                      std::to_string(records[i].size()) + " fields, header has " +
                                      std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(records[i]));
    }
    return t;
}

Table read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io, "cannot open " + path);
    return parse(in);
}

}  // namespace cvqkd::csv
