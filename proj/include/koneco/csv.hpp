#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace koneco {

struct CsvRow {
    std::vector<std::string> fields;
    std::size_t line = 0;  // 1-based line where the row starts
};

// Comma-separated, double-quote quoting with "" escapes, tolerant of CRLF.
// Quoted fields may span lines.
class CsvReader {
  public:
    explicit CsvReader(std::istream& in) : in_(in) {}

    bool next(CsvRow& row) {
        row.fields.clear();
        std::string field;
        bool in_quotes = false;
        bool any = false;
        int c;
        row.line = line_;
        while ((c = in_.get()) != EOF) {
            any = true;
            char ch = static_cast<char>(c);
            if (in_quotes) {
                if (ch == '"') {
                    if (in_.peek() == '"') {
                        in_.get();
                        field.push_back('"');
                    } else {
                        in_quotes = false;
                    }
                } else {
                    if (ch == '\n') ++line_;
                    field.push_back(ch);
                }
            } else if (ch == '"') {
                in_quotes = true;
            } else if (ch == ',') {
                row.fields.push_back(std::move(field));
                field.clear();
            } else if (ch == '\n') {
                ++line_;
                break;
            } else if (ch != '\r') {
                field.push_back(ch);
            }
        }
        if (!any) return false;
        row.fields.push_back(std::move(field));
        return true;
    }

  private:
    std::istream& in_;
    std::size_t line_ = 1;
};

inline void write_csv_field(std::ostream& out, std::string_view field) {
    bool needs_quotes = field.find_first_of(",\"\n\r") != std::string_view::npos;
    if (!needs_quotes) {
        out << field;
        return;
    }
    out << '"';
    for (char c : field) {
        if (c == '"') out << "\"\"";
        else out << c;
    }
    out << '"';
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        write_csv_field(out, fields[i]);
    }
    out << '\n';
}

}  // namespace koneco
