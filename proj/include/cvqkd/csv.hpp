// Minimal RFC-4180 style CSV helpers. Floats are written with 9 significant digits.
#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace cvqkd::csv {

std::string format_double(double v);

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    Writer& field(std::string_view s);
    Writer& field(double v);
    Writer& field(long long v);
    Writer& field(unsigned long long v);
    Writer& field(int v) { return field(static_cast<long long>(v)); }
    Writer& field(std::size_t v) { return field(static_cast<unsigned long long>(v)); }
    void end_row();

    void row(const std::vector<std::string>& fields);

private:
    std::ostream& out_;
    bool first_ = true;
};

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Column index by name; throws cvqkd::Error(Errc::io) when absent.
    std::size_t column(std::string_view name) const;
};

/// Parses a CSV document with a mandatory header row.
Table parse(std::istream& in);
Table read_file(const std::string& path);

}  // namespace cvqkd::csv
