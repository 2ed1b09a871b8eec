#pragma once

#include <filesystem>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "agealign/error.hpp"
#include "agealign/types.hpp"

namespace agealign {

/// One parsed CSV record plus the 1-based line it started on.
struct CsvRow {
    std::size_t line = 0;
    std::vector<std::string> fields;
};

/// RFC 4180 reader: quoted fields may contain commas, quotes ("") and newlines.
/// The first row is returned as the header.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<CsvRow> rows;

    // Index of a header column, or -1.
    int column(std::string_view name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);

std::vector<json> read_jsonl(std::istream& in);
std::vector<json> read_jsonl(const std::filesystem::path& path);

template <class T>
std::vector<T> read_jsonl_as(const std::filesystem::path& path) {
    std::vector<T> out;
    for (const auto& j : read_jsonl(path)) out.push_back(j.template get<T>());
    return out;
}

template <class T>
void write_jsonl(std::ostream& out, const std::vector<T>& items) {
    for (const auto& item : items) out << json(item).dump() << '\n';
}

template <class T>
std::string to_jsonl(const std::vector<T>& items) {
    std::string s;
    for (const auto& item : items) {
        s += json(item).dump();
        s += '\n';
    }
    return s;
}

json read_json(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over the target.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

// Called between writing the temp file and the rename; tests use it to inject crashes.
using WriteHook = std::function<void(const std::filesystem::path& tmp, const std::filesystem::path& target)>;
void set_write_hook(WriteHook hook);

}  // namespace agealign
