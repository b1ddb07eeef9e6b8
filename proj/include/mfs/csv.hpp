#ifndef MFS_CSV_HPP
#define MFS_CSV_HPP

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mfs/common.hpp"

namespace mfs {

/// Writes rows of decimals with fixed 17-significant-digit formatting so
/// artifacts diff cleanly and round-trip exactly.
class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path) {
        require(out_.good(), "cannot open " + path);
        out_.precision(17);
    }

    void header(const std::vector<std::string>& cols) {
        for (std::size_t k = 0; k < cols.size(); ++k)
            out_ << (k ? "," : "") << cols[k];
        out_ << "\n";
    }

    CsvWriter& field(double v) {
        sep();
        out_ << format(v);
        return *this;
    }
    CsvWriter& field(int v) {
        sep();
        out_ << v;
        return *this;
    }
    CsvWriter& field(long v) {
        sep();
        out_ << v;
        return *this;
    }
    CsvWriter& field(const std::string& v) {
        sep();
        out_ << v;
        return *this;
    }
    void endrow() {
        out_ << "\n";
        first_ = true;
    }

    static std::string format(double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    }

private:
    void sep() {
        if (!first_) out_ << ",";
        first_ = false;
    }

    std::ofstream out_;
    bool first_ = true;
};

} // namespace mfs

#endif
