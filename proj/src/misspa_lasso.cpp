#include "pamimpute/misspa_lasso.hpp"

#include "pamimpute/error.hpp"
#include "pamimpute/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>

namespace pamimpute {

namespace {

Matrix completed(const DataMatrix& m, const Matrix& fill) { return m.mask().select(m.values(), fill); }

SparseBlock empty_block(const Pattern& pat) {
    return SparseBlock(static_cast<Index>(pat.missing.size()),
                       static_cast<Index>(pat.observed.size()));
}

void check_block(const SparseBlock& b, const Pattern& pat) {
    if (b.rows() != static_cast<Index>(pat.missing.size()) ||
        b.cols() != static_cast<Index>(pat.observed.size()))
        throw DimensionError("coefficient block does not match the pattern");
}

}  // namespace

SparseCoeffs SparseCoeffs::zeros(const PatternSet& ps) {
    SparseCoeffs c;
    c.blocks.reserve(ps.size());
    for (const auto& pat : ps.patterns) c.blocks.push_back(empty_block(pat));
    return c;
}

Index SparseCoeffs::nnz() const {
    Index total = 0;
    for (const auto& b : blocks) total += b.nonZeros();
    return total;
}

void LassoOptions::validate(bool path_mode) const {
    if (!(lambda >= 0.0)) throw SpecError("lambda must be non-negative");
    if (!(rel_tol > 0.0)) throw SpecError("rel_tol must be positive");
    if (max_cycles < 1) throw SpecError("max_cycles must be at least 1");
    if (path_mode && grid_size < 2) throw SpecError("grid_size must be at least 2");
    if (path_mode && !(grid_ratio > 0.0 && grid_ratio < 1.0))
        throw SpecError("grid_ratio must lie in (0, 1)");
}

double soft_threshold(double z, double lambda) {
    if (z > lambda) return z - lambda;
    if (z < -lambda) return z + lambda;
    return 0.0;
}

double penalized_objective(const Matrix& t, const Pattern& pat, Index j, const Vector& beta,
                           double lambda) {
    if (beta.size() != static_cast<Index>(pat.observed.size()))
        throw DimensionError("beta length does not match the observed set");
    const Vector t_jo = t(j, pat.observed).transpose();
    const Matrix t_oo = t(pat.observed, pat.observed);
    return -t_jo.dot(beta) + 0.5 * beta.dot(t_oo * beta) + lambda * beta.lpNorm<1>();
}

SparseBlock coord_sweep(const Matrix& t, const Pattern& pat, const SparseBlock& coeffs,
                        double lambda) {
    check_block(coeffs, pat);
    const auto& obs = pat.observed;
    const auto no = static_cast<Index>(obs.size());

    Vector diag(no);
    for (Index c = 0; c < no; ++c) {
        diag(c) = t(obs[c], obs[c]);
        if (!(diag(c) > 0.0)) {
            throw DegenerateColumnError(obs[c], "column " + std::to_string(obs[c] + 1) +
                                                    " has a non-positive diagonal in the "
                                                    "sufficient statistic");
        }
    }

    std::vector<Eigen::Triplet<double>> nz;
    Vector beta(no);
    Vector grad(no);  // T_{o,o} beta, kept current as coordinates move
    for (Index r = 0; r < coeffs.rows(); ++r) {
        const Index j = pat.missing[r];
        beta.setZero();
        grad.setZero();
        for (SparseBlock::InnerIterator it(coeffs, r); it; ++it) {
            beta(it.col()) = it.value();
            grad.noalias() += it.value() * t.col(obs[it.col()])(obs);
        }
        for (Index c = 0; c < no; ++c) {
            const Index l = obs[c];
            const double s = grad(c) - t(j, l);
            const double next = soft_threshold(diag(c) * beta(c) - s, lambda) / diag(c);
            const double delta = next - beta(c);
            if (delta != 0.0) {
                beta(c) = next;
                grad.noalias() += delta * t.col(l)(obs);
            }
        }
        for (Index c = 0; c < no; ++c) {
            if (beta(c) != 0.0) nz.emplace_back(r, c, beta(c));
        }
    }
    SparseBlock out = empty_block(pat);
    out.setFromTriplets(nz.begin(), nz.end());
    return out;
}

Matrix residual_cov(const Matrix& t, const Pattern& pat, const SparseBlock& coef, Index n) {
    check_block(coef, pat);
    const auto nm = static_cast<Index>(pat.missing.size());
    // w = T_{., o} B^T, one column per missing variable
    Matrix w = Matrix::Zero(t.rows(), nm);
    for (Index r = 0; r < nm; ++r) {
        for (SparseBlock::InnerIterator it(coef, r); it; ++it)
            w.col(r).noalias() += it.value() * t.col(pat.observed[it.col()]);
    }
    const Matrix w_m = w(pat.missing, Eigen::all);
    const Matrix w_o = w(pat.observed, Eigen::all);
    Matrix c = t(pat.missing, pat.missing) - w_m - w_m.transpose();
    c.noalias() += coef * w_o;
    c /= static_cast<double>(n);
    clamp_psd(c);
    return c;
}

Matrix impute_pattern(const DataMatrix& m, const Pattern& pat, const SparseBlock& coef) {
    const Matrix x_o = m.values()(pat.rows, pat.observed);
    return x_o * coef.transpose();
}

double decay_factor(const Pattern& pat, Index n) {
    return 1.0 - static_cast<double>(pat.rows.size()) / static_cast<double>(n);
}

void decayed_e_step(Matrix& t, const Pattern& pat, const SparseBlock& coef,
                    const Matrix& resid_cov, const DataMatrix& m) {
    check_block(coef, pat);
    if (t.rows() != m.cols() || t.cols() != m.cols())
        throw DimensionError("statistic does not match the data width");
    const double gamma = decay_factor(pat, m.rows());
    Matrix fresh = expected_pattern_stat(m, pat, impute_pattern(m, pat, coef), resid_cov);
    t *= gamma;
    t += fresh;
}

Matrix init_lasso_stat(const DataMatrix& m) {
    const Matrix x0 = m.zero_filled();
    Matrix t = Matrix::Zero(m.cols(), m.cols());
    t.selfadjointView<Eigen::Lower>().rankUpdate(x0.transpose());
    return t.selfadjointView<Eigen::Lower>();
}

double lambda_max(const DataMatrix& m, const PatternSet& ps, const Matrix& t_init,
                  int max_cycles) {
    Matrix t = t_init;
    double lmax = 0.0;
    const auto zero = SparseCoeffs::zeros(ps);
    for (int cycle = 0; cycle < max_cycles; ++cycle) {
        const Matrix start = t;
        for (std::size_t k = 0; k < ps.size(); ++k) {
            const Pattern& pat = ps[k];
            lmax = std::max(lmax, t(pat.missing, pat.observed).cwiseAbs().maxCoeff());
            const Matrix c = residual_cov(t, pat, zero.blocks[k], m.rows());
            decayed_e_step(t, pat, zero.blocks[k], c, m);
        }
        if (relative_change(t, start) <= 1e-26) break;
    }
    // the trajectory approaches its limit from either side
    return lmax * (1.0 + 1e-9);
}

std::vector<double> lambda_grid(double lmax, int size, double ratio) {
    std::vector<double> grid(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i)
        grid[i] = lmax * std::pow(ratio, static_cast<double>(i) / static_cast<double>(size - 1));
    return grid;
}

LassoResult run_misspalasso(const DataMatrix& m, const LassoOptions& opts,
                            const std::optional<LassoState>& warm) {
    opts.validate();
    const PatternSet ps = build_patterns(m);
    const auto nan = std::numeric_limits<double>::quiet_NaN();

    if (ps.empty()) {
        return LassoResult{m, init_lasso_stat(m), SparseCoeffs::zeros(ps), {}, true, 0, opts.lambda};
    }

    SparseCoeffs coeffs = warm ? warm->coeffs : SparseCoeffs::zeros(ps);
    Matrix t = warm ? warm->t : init_lasso_stat(m);
    if (coeffs.blocks.size() != ps.size()) throw DimensionError("warm start has wrong pattern count");
    for (std::size_t k = 0; k < ps.size(); ++k) check_block(coeffs.blocks[k], ps[k]);
    if (t.rows() != m.cols() || t.cols() != m.cols())
        throw DimensionError("warm-start statistic has wrong dimensions");

    Matrix fill = Matrix::Zero(m.rows(), m.cols());
    for (std::size_t k = 0; k < ps.size(); ++k)
        fill(ps[k].rows, ps[k].missing) = impute_pattern(m, ps[k], coeffs.blocks[k]);
    Matrix x_prev = completed(m, fill);

    LassoResult result{m, {}, {}, {}, false, 0, opts.lambda};
    const int first_cycle = coeffs.cycle;
    for (int cycle = 1; cycle <= opts.max_cycles; ++cycle) {
        for (std::size_t k = 0; k < ps.size(); ++k) {
            const Pattern& pat = ps[k];
            SparseBlock block;
            try {
                block = coord_sweep(t, pat, coeffs.blocks[k], opts.lambda);
            } catch (const DegenerateColumnError& e) {
                throw DegenerateColumnError(e.column, "pattern " + std::to_string(k + 1) +
                                                          ", cycle " + std::to_string(cycle) +
                                                          ": " + e.what());
            }
            const Matrix c = residual_cov(t, pat, block, m.rows());
            decayed_e_step(t, pat, block, c, m);
            fill(pat.rows, pat.missing) = impute_pattern(m, pat, block);
            coeffs.blocks[k] = std::move(block);
        }
        coeffs.cycle = first_cycle + cycle;

        Matrix x_next = completed(m, fill);
        TraceRecord rec{cycle, nan, relative_change(x_next, x_prev)};
        x_prev = std::move(x_next);
        result.trace.push_back(rec);
        result.cycles_used = cycle;
        if (rec.rel_change <= opts.rel_tol) {
            result.converged = true;
            break;
        }
    }

    result.imputed = m.with_imputations(fill);
    result.t_hat = std::move(t);
    result.coeffs = std::move(coeffs);
    return result;
}

int PathResult::total_cycles() const {
    int total = 0;
    for (const auto& p : points) total += p.result.cycles_used;
    return total;
}

PathResult run_lambda_path(const DataMatrix& m, const LassoOptions& opts,
                           const std::optional<Matrix>& truth, bool warm_start) {
    opts.validate(true);
    const PatternSet ps = build_patterns(m);
    const Matrix t0 = init_lasso_stat(m);

    PathResult path;
    path.lambdas = lambda_grid(lambda_max(m, ps, t0), opts.grid_size, opts.grid_ratio);
    Mask deleted = !m.mask();

    std::optional<LassoState> warm;
    for (double lambda : path.lambdas) {
        LassoOptions o = opts;
        o.lambda = lambda;
        const auto start = std::chrono::steady_clock::now();
        LassoResult res = run_misspalasso(m, o, warm_start ? warm : std::nullopt);
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

        PathPoint point{std::move(res), std::nullopt, elapsed.count()};
        if (truth) point.nrmse = nrmse(*truth, point.result.imputed.values(), deleted);
        if (warm_start) warm = point.result.state();
        path.points.push_back(std::move(point));
    }

    if (truth) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < path.points.size(); ++i) {
            if (*path.points[i].nrmse < *path.points[best].nrmse) best = i;
        }
        path.best = best;
    }
    return path;
}

void write_path_csv(std::ostream& out, const PathResult& path) {
    out << "lambda,cycles,nnz_coefficients,nrmse,seconds\n";
    for (std::size_t i = 0; i < path.points.size(); ++i) {
        const auto& pt = path.points[i];
        out << format_number(path.lambdas[i]) << ',' << pt.result.cycles_used << ','
            << pt.result.coeffs.nnz() << ',' << (pt.nrmse ? format_number(*pt.nrmse) : "NA") << ','
            << format_number(pt.seconds) << '\n';
    }
}

}  // namespace pamimpute
