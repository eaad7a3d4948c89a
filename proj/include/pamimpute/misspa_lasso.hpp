#pragma once

#include "pamimpute/data.hpp"
#include "pamimpute/misspa.hpp"

#include <Eigen/SparseCore>

#include <iosfwd>
#include <optional>
#include <vector>

namespace pamimpute {

/// |m| x |o| coefficient block; column c refers to `pattern.observed[c]`.
using SparseBlock = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Per-pattern sparse regression coefficients.
struct SparseCoeffs {
    std::vector<SparseBlock> blocks;
    int cycle = 0;

    static SparseCoeffs zeros(const PatternSet& ps);
    Index nnz() const;
};

struct LassoOptions {
    double lambda = 0.0;
    int max_cycles = 500;
    double rel_tol = 1e-5;
    int grid_size = 30;
    /// Smallest grid value as a fraction of lambda_max.
    double grid_ratio = 1e-3;

    void validate(bool path_mode = false) const;
};

/// State carried between lambda values on a warm-started path.
struct LassoState {
    SparseCoeffs coeffs;
    Matrix t;
};

struct LassoResult {
    DataMatrix imputed;
    Matrix t_hat;
    SparseCoeffs coeffs;
    std::vector<TraceRecord> trace;
    bool converged = false;
    int cycles_used = 0;
    double lambda = 0.0;

    LassoState state() const { return {coeffs, t_hat}; }
};

double soft_threshold(double z, double lambda);

/// -T_{j,o} beta + beta^T T_{o,o} beta / 2 + lambda ||beta||_1 for missing
/// variable `j` (a global column index) of pattern `pat`.
double penalized_objective(const Matrix& t, const Pattern& pat, Index j, const Vector& beta,
                           double lambda);

/// One coordinate-descent pass over every (missing, observed) pair of the
/// pattern, observed variables in ascending order.
SparseBlock coord_sweep(const Matrix& t, const Pattern& pat, const SparseBlock& coeffs,
                        double lambda);

/// Residual covariance of the sparse regression, divided by n and clamped PSD.
Matrix residual_cov(const Matrix& t, const Pattern& pat, const SparseBlock& coef, Index n);

/// Imputations X_o B^T for the rows of `pat`.
Matrix impute_pattern(const DataMatrix& m, const Pattern& pat, const SparseBlock& coef);

/// Decay factor 1 - |I_k| / n.
double decay_factor(const Pattern& pat, Index n);

/// Recomputes the pattern's expected cross products and folds them in with
/// exponential decay: t <- gamma t + T^k. Per-pattern parts are not kept.
void decayed_e_step(Matrix& t, const Pattern& pat, const SparseBlock& coef,
                    const Matrix& resid_cov, const DataMatrix& m);

/// Zero-imputed cross products X0^T X0.
Matrix init_lasso_stat(const DataMatrix& m);

/// Smallest lambda for which all-zero coefficients stay fixed for a whole run
/// started from `t_init`.
double lambda_max(const DataMatrix& m, const PatternSet& ps, const Matrix& t_init,
                  int max_cycles = 10000);

/// Log-spaced descending grid from `lmax` to `lmax * ratio`.
std::vector<double> lambda_grid(double lmax, int size, double ratio);

LassoResult run_misspalasso(const DataMatrix& m, const LassoOptions& opts,
                            const std::optional<LassoState>& warm = std::nullopt);

struct PathPoint {
    LassoResult result;
    std::optional<double> nrmse;
    double seconds = 0.0;
};

struct PathResult {
    std::vector<double> lambdas;
    std::vector<PathPoint> points;
    std::optional<std::size_t> best;  ///< index of minimal NRMSE when a truth was given
    int total_cycles() const;
};

/// Runs the lambda grid from lambda_max downward. When `warm_start` each run
/// starts from the previous solution's coefficients and statistic.
PathResult run_lambda_path(const DataMatrix& m, const LassoOptions& opts,
                           const std::optional<Matrix>& truth = std::nullopt,
                           bool warm_start = true);

void write_path_csv(std::ostream& out, const PathResult& path);

}  // namespace pamimpute
