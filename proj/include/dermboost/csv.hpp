#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dermboost/errors.hpp"

namespace dermboost {

// Shortest representation that round-trips through from_chars.
inline std::string format_double(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

inline bool parse_double(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto r = std::from_chars(first, last, out);
    return r.ec == std::errc() && r.ptr == last;
}

inline bool parse_int(const std::string& s, long long& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto r = std::from_chars(first, last, out);
    return r.ec == std::errc() && r.ptr == last;
}

// Streaming reader for comma-separated files. Handles quoted fields and
// tolerates CRLF; all emitted files use plain LF.
class csv_reader {
public:
    explicit csv_reader(const std::filesystem::path& path) : in_(path) {
        if (!in_) throw io_error("cannot open " + path.string());
        path_ = path.string();
        if (!read_record(header_)) throw parse_error(path_ + ": empty file");
    }

    const std::vector<std::string>& header() const { return header_; }

    // Fills `row`; returns false at end of file. Blank lines are skipped.
    bool next(std::vector<std::string>& row) {
        while (read_record(row)) {
            ++data_row_;
            if (row.size() == 1 && row[0].empty()) continue;
            if (row.size() != header_.size())
                throw parse_error(path_ + ": row " + std::to_string(data_row_) +
                                  " has " + std::to_string(row.size()) +
                                  " fields, expected " + std::to_string(header_.size()));
            return true;
        }
        return false;
    }

    // 1-based index of the most recently returned data row.
    std::size_t data_row() const { return data_row_; }

    int column_of(const std::string& name) const {
        for (std::size_t i = 0; i < header_.size(); ++i)
            if (header_[i] == name) return static_cast<int>(i);
        return -1;
    }

private:
    bool read_record(std::vector<std::string>& fields) {
        std::string line;
        if (!std::getline(in_, line)) return false;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        fields.clear();
        std::string cur;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            const char c = line[i];
            if (quoted) {
                if (c == '"') {
                    if (i + 1 < line.size() && line[i + 1] == '"') {
                        cur.push_back('"');
                        ++i;
                    } else {
                        quoted = false;
                    }
                } else {
                    cur.push_back(c);
                }
            } else if (c == '"' && cur.empty()) {
                quoted = true;
            } else if (c == ',') {
                fields.push_back(std::move(cur));
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        fields.push_back(std::move(cur));
        return true;
    }

    std::ifstream in_;
    std::string path_;
    std::vector<std::string> header_;
    std::size_t data_row_ = 0;
};

class csv_writer {
public:
    explicit csv_writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_) throw io_error("cannot write " + path.string());
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_.put(',');
            write_field(fields[i]);
        }
        out_.put('\n');
    }

private:
    void write_field(const std::string& f) {
        if (f.find_first_of(",\"\n") == std::string::npos) {
            out_ << f;
            return;
        }
        out_.put('"');
        for (char c : f) {
            if (c == '"') out_.put('"');
            out_.put(c);
        }
        out_.put('"');
    }

    std::ofstream out_;
};

}  // namespace dermboost
