#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nlv::csv {

/// Header-indexed in-memory CSV table. Quoted fields with embedded commas
/// and doubled quotes are supported; line endings may be LF or CRLF.
class Table {
public:
    Table() = default;
    explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

    static Table read(const std::filesystem::path& path);
    static Table parse(std::istream& in, std::string_view source_name = "<stream>");

    const std::vector<std::string>& header() const { return header_; }
    std::size_t rows() const { return rows_.size(); }
    const std::vector<std::string>& row(std::size_t r) const { return rows_[r]; }

    std::optional<std::size_t> find_column(std::string_view name) const;
    /// Throws SchemaError naming the column when absent.
    std::size_t column(std::string_view name) const;

    /// 1-based line number of data row r in the source file (header is line 1).
    std::size_t line_of(std::size_t r) const { return lines_[r]; }
    const std::string& source() const { return source_; }

    /// Appends a row; throws if its width differs from the header.
    void add_row(std::vector<std::string> fields);
    void write(std::ostream& out) const;
    void write(const std::filesystem::path& path) const;

private:
    std::string source_;
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
    std::vector<std::size_t> lines_;
};

std::vector<std::string> split_line(std::string_view line);

/// Strict numeric parse; throws ValidationError with the given context.
double parse_double(std::string_view text, std::string_view context);

/// Shortest round-trip decimal representation, used for all numeric output
/// so that re-running a stage produces byte-identical files.
std::string format_double(double value);

/// Quotes a field when it contains a comma, quote, or leading/trailing space.
std::string escape_field(std::string_view field);

}  // namespace nlv::csv
