#include "interpret3c/csv.hpp"

#include "interpret3c/common.hpp"

#include <fstream>

namespace i3c::csv {

std::vector<std::string> Reader::header() {
    Row row;
    if (!next(row)) throw MalformedRow("csv: missing header row");
    return row.fields;
}

bool Reader::next(Row& row) {
    std::string line;
    while (std::getline(in_, line)) {
        ++line_;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        row.line_number = line_;
        row.fields = split(line, ',');
        return true;
    }
    return false;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << fields[i];
    }
    out << '\n';
}

std::vector<Row> read_file(const std::string& path, std::vector<std::string>& header_out) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    Reader reader(in);
    header_out = reader.header();
    std::vector<Row> rows;
    Row row;
    while (reader.next(row)) rows.push_back(row);
    return rows;
}

} // namespace i3c::csv
