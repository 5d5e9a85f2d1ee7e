#ifndef EDNO_CSV_HPP
#define EDNO_CSV_HPP

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "edno/errors.hpp"

namespace edno {

/// Deterministic numeric formatting for logs and result files: same value,
/// same bytes.
inline std::string fmt_num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : os_(path, std::ios::trunc) {
        if (!os_) throw IoError("cannot open for writing: " + path);
    }

    void comment(const std::string& text) { os_ << "# " << text << "\n"; }

    void row(const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) os_ << ",";
            os_ << cells[i];
        }
        os_ << "\n";
    }

    void flush() { os_.flush(); }

private:
    std::ofstream os_;
};

} // namespace edno

#endif
