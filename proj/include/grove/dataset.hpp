#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace grove {

// One training example: features in [0,1]^d, a real response, and an optional
// binary treatment indicator.
struct Sample {
    std::vector<double> x;
    double y = 0.0;
    std::optional<int> w;
};

// Immutable after construction; safe to share across concurrent readers.
// Features are stored row-major for cache-friendly tree growth.
class Dataset {
public:
    Dataset(int d, bool has_treatment) : d_(d), has_treatment_(has_treatment) {
        if (d < 1) throw std::invalid_argument("Dataset: dimension must be >= 1");
    }

    void add(const Sample& s) {
        if (static_cast<int>(s.x.size()) != d_) {
            throw std::invalid_argument("Dataset: sample dimension mismatch");
        }
        for (double v : s.x) {
            if (!(v >= 0.0 && v <= 1.0)) {
                throw std::invalid_argument("Dataset: feature out of range");
            }
        }
        if (has_treatment_) {
            if (!s.w.has_value()) throw std::invalid_argument("Dataset: missing treatment");
            if (*s.w != 0 && *s.w != 1) throw std::invalid_argument("Dataset: treatment not binary");
            w_.push_back(static_cast<unsigned char>(*s.w));
        } else if (s.w.has_value()) {
            throw std::invalid_argument("Dataset: unexpected treatment value");
        }
        xs_.insert(xs_.end(), s.x.begin(), s.x.end());
        y_.push_back(s.y);
    }

    int n() const { return static_cast<int>(y_.size()); }
    int d() const { return d_; }
    bool has_treatment() const { return has_treatment_; }

    double x(int row, int feature) const { return xs_[static_cast<std::size_t>(row) * d_ + feature]; }
    double y(int row) const { return y_[row]; }
    int w(int row) const { return w_[row]; }

    std::vector<double> row(int i) const {
        return std::vector<double>(xs_.begin() + static_cast<std::size_t>(i) * d_,
                                   xs_.begin() + static_cast<std::size_t>(i + 1) * d_);
    }

    int count_treated() const {
        int c = 0;
        for (unsigned char v : w_) c += v;
        return c;
    }

private:
    int d_;
    bool has_treatment_;
    std::vector<double> xs_;
    std::vector<double> y_;
    std::vector<unsigned char> w_;
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline bool parse_double(std::string_view field, double& out) {
    const char* first = field.data();
    const char* last = field.data() + field.size();
    const auto res = std::from_chars(first, last, out);
    return res.ec == std::errc() && res.ptr == last;
}

}  // namespace detail

// Reads a dataset CSV with header x1,...,xd,y[,w]; d is inferred from the
// header. Rows are parsed in file order and every failure names the 1-based
// data row. Validation happens here, before any training can start.
inline Dataset load_dataset(const std::string& path, bool expect_treatment) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty dataset file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = detail::split_csv_line(line);
    int d = 0;
    while (d < static_cast<int>(header.size()) &&
           header[d] == "x" + std::to_string(d + 1)) {
        ++d;
    }
    if (d == 0) throw std::runtime_error("malformed header: expected x1,...,xd,y[,w]");
    std::size_t col = static_cast<std::size_t>(d);
    if (col >= header.size() || header[col] != "y") {
        throw std::runtime_error("malformed header: expected y after feature columns");
    }
    ++col;
    bool has_w = false;
    if (col < header.size()) {
        if (header[col] != "w" || col + 1 != header.size()) {
            throw std::runtime_error("malformed header: trailing columns after y must be a single w");
        }
        has_w = true;
    }
    if (expect_treatment && !has_w) {
        throw std::runtime_error("missing w column: treatment expected");
    }

    Dataset data(d, has_w);
    const std::size_t expected_fields = static_cast<std::size_t>(d) + 1 + (has_w ? 1 : 0);
    int row_number = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row_number;
        const auto fields = detail::split_csv_line(line);
        const std::string row_tag = ", row " + std::to_string(row_number);
        if (fields.size() != expected_fields) throw std::runtime_error("malformed row" + row_tag);

        Sample s;
        s.x.resize(d);
        for (int j = 0; j < d; ++j) {
            if (!detail::parse_double(fields[j], s.x[j])) {
                throw std::runtime_error("malformed row" + row_tag);
            }
            if (!(s.x[j] >= 0.0 && s.x[j] <= 1.0)) {
                throw std::runtime_error("feature out of range" + row_tag);
            }
        }
        if (!detail::parse_double(fields[d], s.y)) {
            throw std::runtime_error("malformed row" + row_tag);
        }
        if (has_w) {
            const auto f = fields[d + 1];
            if (f == "0") s.w = 0;
            else if (f == "1") s.w = 1;
            else {
                double v;
                if (!detail::parse_double(f, v)) throw std::runtime_error("malformed row" + row_tag);
                if (v == 0.0) s.w = 0;
                else if (v == 1.0) s.w = 1;
                else throw std::runtime_error("treatment not binary" + row_tag);
            }
        }
        data.add(s);
    }
    if (data.n() < 1) throw std::runtime_error("dataset has no rows: " + path);
    return data;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// Writes the CSV format read by load_dataset. Doubles carry 17 significant
// digits so load(save(data)) reproduces data exactly.
inline void save_dataset(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    for (int j = 0; j < data.d(); ++j) out << "x" << (j + 1) << ",";
    out << "y";
    if (data.has_treatment()) out << ",w";
    out << "\n";
    for (int i = 0; i < data.n(); ++i) {
        for (int j = 0; j < data.d(); ++j) out << detail::format_double(data.x(i, j)) << ",";
        out << detail::format_double(data.y(i));
        if (data.has_treatment()) out << "," << data.w(i);
        out << "\n";
    }
}

}  // namespace grove
