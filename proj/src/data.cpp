#include "pamimpute/data.hpp"

#include "pamimpute/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string_view>

namespace pamimpute {

namespace {

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string_view unquote(std::string_view s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

bool parse_double(std::string_view s, double& out) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

DataMatrix::DataMatrix(Matrix values, Mask mask, std::vector<std::string> column_names)
    : values_(std::move(values)), mask_(std::move(mask)), names_(std::move(column_names)) {
    if (values_.rows() != mask_.rows() || values_.cols() != mask_.cols())
        throw ShapeError("values and mask have different dimensions");
    if (values_.rows() < 1 || values_.cols() < 1)
        throw ShapeError("data matrix must have at least one row and one column");
    if (!names_.empty() && static_cast<Index>(names_.size()) != values_.cols())
        throw ShapeError("column name count does not match column count");
    for (Index j = 0; j < values_.cols(); ++j) {
        for (Index i = 0; i < values_.rows(); ++i) {
            if (!mask_(i, j)) {
                values_(i, j) = kMissing;
            } else if (!std::isfinite(values_(i, j))) {
                throw ParseError("non-finite observed value at row " + std::to_string(i + 1) +
                                 ", column " + std::to_string(j + 1));
            }
        }
    }
}

DataMatrix DataMatrix::complete(Matrix values, std::vector<std::string> column_names) {
    Mask mask = Mask::Constant(values.rows(), values.cols(), true);
    return DataMatrix(std::move(values), std::move(mask), std::move(column_names));
}

Index DataMatrix::missing_count() const { return mask_.size() - mask_.count(); }

Matrix DataMatrix::zero_filled() const { return mask_.select(values_, 0.0); }

DataMatrix DataMatrix::with_imputations(const Matrix& fill) const {
    if (fill.rows() != rows() || fill.cols() != cols())
        throw DimensionError("imputation matrix has wrong dimensions");
    Matrix out = mask_.select(values_, fill);
    return DataMatrix::complete(std::move(out), names_);
}

DataMatrix parse_csv(std::istream& in, const CsvOptions& opts) {
    std::vector<std::string> names;
    std::vector<std::vector<double>> rows;
    std::vector<std::vector<bool>> observed;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    bool header_pending = opts.header;

    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv = trim(line);
        if (sv.empty()) continue;
        auto cells = split_commas(sv);
        if (header_pending) {
            header_pending = false;
            for (auto c : cells) names.emplace_back(unquote(c));
            width = cells.size();
            continue;
        }
        if (width == 0) width = cells.size();
        if (cells.size() != width) {
            throw ShapeError("line " + std::to_string(line_no) + " has " +
                             std::to_string(cells.size()) + " fields, expected " +
                             std::to_string(width));
        }
        std::vector<double> vals(width);
        std::vector<bool> obs(width);
        for (std::size_t j = 0; j < width; ++j) {
            auto cell = unquote(cells[j]);
            if (cell == opts.na_token || (opts.empty_is_missing && cell.empty())) {
                vals[j] = kMissing;
                obs[j] = false;
            } else if (parse_double(cell, vals[j])) {
                obs[j] = true;
            } else {
                throw ParseError("line " + std::to_string(line_no) + ", column " +
                                 std::to_string(j + 1) + ": cannot parse '" + std::string(cell) +
                                 "'");
            }
        }
        rows.push_back(std::move(vals));
        observed.push_back(std::move(obs));
    }
    if (rows.empty()) throw ShapeError("no data rows");

    const auto n = static_cast<Index>(rows.size());
    const auto p = static_cast<Index>(width);
    Matrix values(n, p);
    Mask mask(n, p);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < p; ++j) {
            values(i, j) = rows[i][j];
            mask(i, j) = observed[i][j];
        }
    }
    return DataMatrix(std::move(values), std::move(mask), std::move(names));
}

DataMatrix load_csv(const std::filesystem::path& path, const CsvOptions& opts) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path.string());
    return parse_csv(in, opts);
}

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 10);
    if (ec != std::errc()) return "nan";
    std::string s(buf, ptr);
    if (s == "-0") s = "0";
    return s;
}

namespace {

void write_header(std::ostream& out, const std::vector<std::string>& names) {
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (j) out << ',';
        out << names[j];
    }
    out << '\n';
}

}  // namespace

void write_csv(std::ostream& out, const DataMatrix& m, const std::string& na_token) {
    if (!m.column_names().empty()) write_header(out, m.column_names());
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << (m.observed(i, j) ? format_number(m(i, j)) : na_token);
        }
        out << '\n';
    }
}

void write_matrix_csv(std::ostream& out, const Matrix& m, const std::vector<std::string>& names) {
    if (!names.empty()) write_header(out, names);
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << format_number(m(i, j));
        }
        out << '\n';
    }
}

void write_mask_csv(std::ostream& out, const Mask& mask) {
    for (Index i = 0; i < mask.rows(); ++i) {
        for (Index j = 0; j < mask.cols(); ++j) {
            if (j) out << ',';
            out << (mask(i, j) ? '1' : '0');
        }
        out << '\n';
    }
}

std::pair<DataMatrix, ColumnStats> standardize(const DataMatrix& m, bool scale) {
    const Index n = m.rows();
    const Index p = m.cols();
    ColumnStats stats{Vector::Zero(p), Vector::Ones(p)};
    Matrix out = m.values();

    for (Index j = 0; j < p; ++j) {
        double sum = 0.0;
        Index count = 0;
        for (Index i = 0; i < n; ++i) {
            if (m.observed(i, j)) {
                sum += m(i, j);
                ++count;
            }
        }
        const Index needed = scale ? 2 : 1;
        if (count < needed) {
            throw DegenerateColumnError(
                j, "column " + std::to_string(j + 1) + " has " + std::to_string(count) +
                       " observed entries; at least " + std::to_string(needed) + " required");
        }
        const double mean = sum / static_cast<double>(count);
        double sd = 1.0;
        if (scale) {
            double ss = 0.0;
            for (Index i = 0; i < n; ++i) {
                if (m.observed(i, j)) ss += (m(i, j) - mean) * (m(i, j) - mean);
            }
            sd = std::sqrt(ss / static_cast<double>(count));
            if (!(sd > 0.0)) {
                throw DegenerateColumnError(
                    j, "column " + std::to_string(j + 1) + " has zero spread over observed entries");
            }
        }
        stats.means(j) = mean;
        stats.sds(j) = sd;
        out.col(j) = (out.col(j).array() - mean) / sd;
    }
    return {DataMatrix(std::move(out), m.mask(), m.column_names()), std::move(stats)};
}

DataMatrix destandardize(const DataMatrix& m, const ColumnStats& stats) {
    if (stats.means.size() != m.cols() || stats.sds.size() != m.cols())
        throw DimensionError("column stats have " + std::to_string(stats.means.size()) +
                             " entries, matrix has " + std::to_string(m.cols()) + " columns");
    Matrix out = m.values();
    for (Index j = 0; j < m.cols(); ++j)
        out.col(j) = out.col(j).array() * stats.sds(j) + stats.means(j);
    return DataMatrix(std::move(out), m.mask(), m.column_names());
}

Matrix apply_standardization(const Matrix& x, const ColumnStats& stats) {
    if (stats.means.size() != x.cols())
        throw DimensionError("column stats do not match matrix width");
    Matrix out = x;
    for (Index j = 0; j < x.cols(); ++j)
        out.col(j) = (out.col(j).array() - stats.means(j)) / stats.sds(j);
    return out;
}

PatternSet build_patterns(const DataMatrix& m) {
    const Index n = m.rows();
    const Index p = m.cols();
    const Mask& mask = m.mask();

    for (Index j = 0; j < p; ++j) {
        if (!mask.col(j).any())
            throw PatternError("column " + std::to_string(j + 1) + " is entirely missing");
    }

    PatternSet ps;
    ps.n = n;
    ps.p = p;
    std::map<std::vector<bool>, std::size_t> index_of;

    for (Index i = 0; i < n; ++i) {
        std::vector<bool> key(static_cast<std::size_t>(p));
        Index n_obs = 0;
        for (Index j = 0; j < p; ++j) {
            key[j] = mask(i, j);
            n_obs += mask(i, j) ? 1 : 0;
        }
        if (n_obs == 0) throw PatternError("row " + std::to_string(i + 1) + " is entirely missing");
        if (n_obs == p) {
            ps.complete_rows.push_back(i);
            continue;
        }
        auto [it, inserted] = index_of.try_emplace(std::move(key), ps.patterns.size());
        if (inserted) {
            Pattern pat;
            for (Index j = 0; j < p; ++j) (mask(i, j) ? pat.observed : pat.missing).push_back(j);
            ps.patterns.push_back(std::move(pat));
        }
        ps.patterns[it->second].rows.push_back(i);
    }
    return ps;
}

}  // namespace pamimpute
