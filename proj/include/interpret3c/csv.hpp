#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace i3c::csv {

// Minimal comma-separated reader. Fields in this project never contain commas
// or quotes, so no quoting rules are implemented.
struct Row {
    size_t line_number = 0; // 1-based, header included
    std::vector<std::string> fields;
};

class Reader {
  public:
    explicit Reader(std::istream& in) : in_(in) {}

    // Reads the header row; throws MalformedRow if the stream is empty.
    std::vector<std::string> header();
    // Returns false at end of input. Skips blank lines.
    bool next(Row& row);

  private:
    std::istream& in_;
    size_t line_ = 0;
};

void write_row(std::ostream& out, const std::vector<std::string>& fields);

// Opens and fully materializes a CSV file; throws IoError when unreadable.
std::vector<Row> read_file(const std::string& path, std::vector<std::string>& header_out);

} // namespace i3c::csv
