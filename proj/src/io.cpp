#include "agealign/io.hpp"

#include <fstream>
#include <sstream>

namespace agealign {

int CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

CsvTable read_csv(std::istream& in) {
    CsvTable table;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t line = 1;
    std::size_t record_line = 1;
    bool have_header = false;

    auto end_record = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
        const bool blank = record.size() == 1 && record[0].empty();
        if (!blank) {
            if (!have_header) {
                table.header = std::move(record);
                if (!table.header.empty() && table.header[0].rfind("\xEF\xBB\xBF", 0) == 0)
                    table.header[0].erase(0, 3);
                have_header = true;
            } else {
                table.rows.push_back({record_line, std::move(record)});
            }
        }
        record.clear();
    };

    char c;
    while (in.get(c)) {
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field += '"';
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field += c;
            }
            continue;
        }
        switch (c) {
            case '"':
                if (field_started && !field.empty())
                    throw Error(ErrorKind::Parse, "line " + std::to_string(line) + ": stray quote");
                in_quotes = true;
                field_started = true;
                break;
            case ',':
                record.push_back(std::move(field));
                field.clear();
                field_started = false;
                break;
            case '\r':
                break;
            case '\n':
                end_record();
                ++line;
                record_line = line;
                break;
            default:
                field += c;
                field_started = true;
        }
    }
    if (in_quotes) throw Error(ErrorKind::Parse, "line " + std::to_string(record_line) + ": unterminated quote");
    if (!field.empty() || !record.empty()) end_record();
    return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::NotFound, "cannot open " + path.string());
    return read_csv(in);
}

std::vector<json> read_jsonl(std::istream& in) {
    std::vector<json> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw Error(ErrorKind::Parse, "line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::NotFound, "cannot open " + path.string());
    return read_jsonl(in);
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::NotFound, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json(const std::filesystem::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
    }
}

namespace {
WriteHook g_write_hook;
}

void set_write_hook(WriteHook hook) { g_write_hook = std::move(hook); }

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::NotFound, "cannot write " + tmp.string());
        out << contents;
        out.flush();
        if (!out) throw Error(ErrorKind::NotFound, "short write to " + tmp.string());
    }
    if (g_write_hook) g_write_hook(tmp, path);
    std::filesystem::rename(tmp, path);
}

}  // namespace agealign
