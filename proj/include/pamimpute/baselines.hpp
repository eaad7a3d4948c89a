#pragma once

#include "pamimpute/data.hpp"

#include <optional>
#include <vector>

namespace pamimpute {

/// Which entities act as neighbors. `rows` compares samples; `columns`
/// compares variables (genes in a samples x genes matrix), which is the
/// classic microarray KNNimpute setting.
enum class KnnAxis { rows, columns };

struct KnnOptions {
    int k_neighbors = 10;
    KnnAxis neighbors = KnnAxis::rows;
};

struct KnnResult {
    DataMatrix imputed;
    /// Cells filled with the column mean because no neighbor was eligible.
    Index fallback_count = 0;
};

/// Weighted K-nearest-neighbor imputation.
///
/// Distances are Euclidean over mutually observed coordinates, scaled by
/// sqrt(length / overlap). Weights are 1 / (distance + 1e-9).
KnnResult knn_impute(const DataMatrix& m, const KnnOptions& opts);

/// Same neighbor ranking evaluated for several K at once.
std::vector<KnnResult> knn_impute_grid(const DataMatrix& m, const std::vector<int>& ks,
                                       KnnAxis axis);

struct SoftImputeOptions {
    double lambda = 0.0;
    int max_iters = 500;
    double rel_tol = 1e-5;
    std::optional<Index> max_rank;
};

struct SoftImputeResult {
    DataMatrix imputed;
    Matrix z;
    Vector singular_values;
    int iterations = 0;
    bool converged = false;
    /// Objective value after every iteration.
    std::vector<double> objective;
};

/// Iterative soft-thresholded SVD for nuclear-norm regularized completion.
/// `warm_z` seeds the iterate (defaults to zero).
SoftImputeResult soft_impute(const DataMatrix& m, const SoftImputeOptions& opts,
                             const Matrix* warm_z = nullptr);

/// 0.5 * sum over observed cells (z - x)^2 + lambda * ||z||_*
double soft_impute_objective(const DataMatrix& m, const Matrix& z, double lambda);

/// Largest singular value of the zero-filled matrix.
double top_singular_value(const DataMatrix& m);

}  // namespace pamimpute
