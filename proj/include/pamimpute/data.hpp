#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace pamimpute {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// Observedness mask, true = observed.
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using IndexList = std::vector<Index>;

/// n x p numeric matrix with an observedness mask.
///
/// Missing cells hold NaN. Algorithms never read them; they go through
/// `mask` instead.
class DataMatrix {
public:
    DataMatrix(Matrix values, Mask mask, std::vector<std::string> column_names = {});

    /// Fully observed matrix.
    static DataMatrix complete(Matrix values, std::vector<std::string> column_names = {});

    Index rows() const noexcept { return values_.rows(); }
    Index cols() const noexcept { return values_.cols(); }

    const Matrix& values() const noexcept { return values_; }
    const Mask& mask() const noexcept { return mask_; }
    const std::vector<std::string>& column_names() const noexcept { return names_; }

    bool observed(Index i, Index j) const { return mask_(i, j); }
    double operator()(Index i, Index j) const { return values_(i, j); }

    Index missing_count() const;
    bool fully_observed() const { return missing_count() == 0; }

    /// Copy of the values with missing cells replaced by zero.
    Matrix zero_filled() const;

    /// Same shape, mask all-true, missing cells taken from `fill`.
    DataMatrix with_imputations(const Matrix& fill) const;

private:
    Matrix values_;
    Mask mask_;
    std::vector<std::string> names_;
};

struct ColumnStats {
    Vector means;
    Vector sds;
};

struct CsvOptions {
    std::string na_token = "NA";
    bool header = false;
    bool empty_is_missing = false;
};

DataMatrix parse_csv(std::istream& in, const CsvOptions& opts = {});
DataMatrix load_csv(const std::filesystem::path& path, const CsvOptions& opts = {});

/// Numbers with 10 significant digits, locale independent.
std::string format_number(double v);

void write_csv(std::ostream& out, const DataMatrix& m, const std::string& na_token = "NA");
void write_matrix_csv(std::ostream& out, const Matrix& m,
                      const std::vector<std::string>& column_names = {});
void write_mask_csv(std::ostream& out, const Mask& mask);

/// Centers (and, when `scale`, scales) each column over its observed entries.
/// Population variance convention: a column observed at (1, 3) maps to (-1, 1).
std::pair<DataMatrix, ColumnStats> standardize(const DataMatrix& m, bool scale = true);

DataMatrix destandardize(const DataMatrix& m, const ColumnStats& stats);

/// Applies an existing transform to a full matrix (e.g. a truth matrix).
Matrix apply_standardization(const Matrix& x, const ColumnStats& stats);

/// One missingness pattern. All index sets are sorted, 0-based.
struct Pattern {
    IndexList observed;
    IndexList missing;
    IndexList rows;
};

struct PatternSet {
    std::vector<Pattern> patterns;
    IndexList complete_rows;
    Index n = 0;
    Index p = 0;

    std::size_t size() const noexcept { return patterns.size(); }
    bool empty() const noexcept { return patterns.empty(); }
    const Pattern& operator[](std::size_t k) const { return patterns[k]; }
};

/// Groups rows by missingness mask; patterns appear in first-row order.
PatternSet build_patterns(const DataMatrix& m);

}  // namespace pamimpute
