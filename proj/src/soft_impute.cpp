#include "pamimpute/baselines.hpp"

#include "pamimpute/error.hpp"
#include "pamimpute/misspa.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace pamimpute {

double soft_impute_objective(const DataMatrix& m, const Matrix& z, double lambda) {
    const double fit = 0.5 * m.mask().select(z - m.zero_filled(), 0.0).squaredNorm();
    Eigen::BDCSVD<Matrix> svd(z);
    return fit + lambda * svd.singularValues().sum();
}

double top_singular_value(const DataMatrix& m) {
    Eigen::BDCSVD<Matrix> svd(m.zero_filled());
    return svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
}

SoftImputeResult soft_impute(const DataMatrix& m, const SoftImputeOptions& opts,
                             const Matrix* warm_z) {
    if (!(opts.lambda >= 0.0)) throw SpecError("lambda must be non-negative");
    if (opts.max_iters < 1) throw SpecError("max_iters must be at least 1");
    if (opts.max_rank && *opts.max_rank < 0) throw SpecError("max_rank must be non-negative");

    const Matrix x = m.zero_filled();
    Matrix z = warm_z ? *warm_z : Matrix::Zero(m.rows(), m.cols());
    if (z.rows() != m.rows() || z.cols() != m.cols()) throw DimensionError("warm start has wrong shape");

    SoftImputeResult result{m, {}, {}, 0, false, {}};
    Vector shrunk;
    for (int it = 1; it <= opts.max_iters; ++it) {
        const Matrix y = m.mask().select(x, z);
        Eigen::BDCSVD<Matrix> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
        if (svd.info() != Eigen::Success || !svd.singularValues().allFinite())
            throw DomainError("SVD failed in soft_impute");

        shrunk = (svd.singularValues().array() - opts.lambda).cwiseMax(0.0).matrix();
        if (opts.max_rank && *opts.max_rank < shrunk.size())
            shrunk.tail(shrunk.size() - *opts.max_rank).setZero();
        Index rank = 0;
        while (rank < shrunk.size() && shrunk(rank) > 0.0) ++rank;

        Matrix next = svd.matrixU().leftCols(rank) * shrunk.head(rank).asDiagonal() *
                      svd.matrixV().leftCols(rank).transpose();
        const double rel = relative_change(next, z);
        z = std::move(next);
        result.iterations = it;
        result.objective.push_back(0.5 * m.mask().select(z - x, 0.0).squaredNorm() +
                                   opts.lambda * shrunk.sum());
        if (rel <= opts.rel_tol) {
            result.converged = true;
            break;
        }
    }

    result.singular_values = shrunk;
    result.imputed = m.with_imputations(z);
    result.z = std::move(z);
    return result;
}

}  // namespace pamimpute
