#include "pamimpute/mvn.hpp"

#include "pamimpute/error.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace pamimpute {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Eigen::LLT<Matrix> factor_pd(const Matrix& a, const char* what) {
    Eigen::LLT<Matrix> llt(a);
    if (llt.info() != Eigen::Success) throw DomainError(std::string(what) + " is not positive definite");
    return llt;
}

double log_det_from(const Eigen::LLT<Matrix>& llt) {
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

/// Sum over the given rows of log N(x_{i, vars}; 0, cov).
double marginal_loglik(const Matrix& cov, const DataMatrix& m, const IndexList& rows,
                       const IndexList& vars) {
    auto llt = factor_pd(cov, "covariance sub-block");
    const double logdet = log_det_from(llt);
    const auto d = static_cast<double>(vars.size());
    Matrix x = m.values()(rows, vars).transpose();  // d x |rows|
    llt.matrixL().solveInPlace(x);
    const double quad = x.squaredNorm();
    const auto count = static_cast<double>(rows.size());
    return -0.5 * (count * (d * kLog2Pi + logdet) + quad);
}

IndexList iota(Index p) {
    IndexList all(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) all[j] = j;
    return all;
}

}  // namespace

Matrix gather(const Matrix& a, const IndexList& r, const IndexList& c) { return a(r, c); }

void clamp_psd(Matrix& a, double floor) {
    a = 0.5 * (a + a.transpose()).eval();
    if (a.size() == 0) return;
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    if (es.info() != Eigen::Success) throw DomainError("eigendecomposition failed");
    if (es.eigenvalues().minCoeff() >= floor) return;
    Vector ev = es.eigenvalues().cwiseMax(floor);
    a = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    a = 0.5 * (a + a.transpose()).eval();
}

double log_det_pd(const Matrix& a) { return log_det_from(factor_pd(a, "matrix")); }

PatternRegression sigma_to_regression(const Covariance& sigma, const Pattern& pat) {
    const Matrix s_oo = sigma(pat.observed, pat.observed);
    const Matrix s_om = sigma(pat.observed, pat.missing);
    const Matrix s_mm = sigma(pat.missing, pat.missing);

    Eigen::LLT<Matrix> llt(s_oo);
    const double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
    if (!(rcond > kMinRcond)) {
        std::ostringstream msg;
        msg << "observed covariance block is ill-conditioned (rcond estimate " << rcond << ")";
        throw ConditioningError(rcond, msg.str());
    }
    PatternRegression reg;
    reg.coef = llt.solve(s_om).transpose();
    reg.resid_cov = s_mm - reg.coef * s_om;
    reg.resid_cov = 0.5 * (reg.resid_cov + reg.resid_cov.transpose()).eval();
    return reg;
}

Covariance regression_to_sigma(const Matrix& sigma_o, const PatternRegression& reg,
                               const Pattern& pat) {
    const auto no = static_cast<Index>(pat.observed.size());
    const auto nm = static_cast<Index>(pat.missing.size());
    if (sigma_o.rows() != no || sigma_o.cols() != no || reg.coef.rows() != nm ||
        reg.coef.cols() != no || reg.resid_cov.rows() != nm || reg.resid_cov.cols() != nm) {
        throw DimensionError("regression parameters do not match the pattern");
    }
    const Index p = no + nm;
    Covariance sigma(p, p);
    const Matrix s_mo = reg.coef * sigma_o;
    Matrix s_mm = reg.resid_cov + s_mo * reg.coef.transpose();
    s_mm = 0.5 * (s_mm + s_mm.transpose()).eval();
    sigma(pat.observed, pat.observed) = sigma_o;
    sigma(pat.missing, pat.observed) = s_mo;
    sigma(pat.observed, pat.missing) = s_mo.transpose();
    sigma(pat.missing, pat.missing) = s_mm;
    return sigma;
}

double observed_loglik(const Covariance& sigma, const DataMatrix& m, const PatternSet& ps) {
    double total = 0.0;
    if (!ps.complete_rows.empty())
        total += marginal_loglik(sigma, m, ps.complete_rows, iota(m.cols()));
    for (const auto& pat : ps.patterns)
        total += marginal_loglik(sigma(pat.observed, pat.observed), m, pat.rows, pat.observed);
    return total;
}

double kl_pattern(const PatternRegression& latent, const Covariance& sigma, const Pattern& pat,
                  const DataMatrix& m) {
    PatternRegression model;
    try {
        model = sigma_to_regression(sigma, pat);
    } catch (const ConditioningError& e) {
        throw DomainError(std::string("conditional law undefined: ") + e.what());
    }
    const auto d = static_cast<double>(pat.missing.size());
    auto llt_model = factor_pd(model.resid_cov, "conditional covariance");
    auto llt_latent = factor_pd(latent.resid_cov, "latent conditional covariance");

    // tr(C^{-1} C~) = || L^{-1} L~ ||_F^2
    Matrix lt = llt_latent.matrixL();
    llt_model.matrixL().solveInPlace(lt);
    const double trace_term = lt.squaredNorm();
    const double per_row =
        trace_term - d + log_det_from(llt_model) - log_det_from(llt_latent);

    Matrix delta = (latent.coef - model.coef) * m.values()(pat.rows, pat.observed).transpose();
    llt_model.matrixL().solveInPlace(delta);
    const double mean_term = delta.squaredNorm();

    return 0.5 * (static_cast<double>(pat.rows.size()) * per_row + mean_term);
}

double kl_pattern(const Covariance& sigma_tilde, const Covariance& sigma, const Pattern& pat,
                  const DataMatrix& m) {
    PatternRegression latent;
    try {
        latent = sigma_to_regression(sigma_tilde, pat);
    } catch (const ConditioningError& e) {
        throw DomainError(std::string("latent conditional law undefined: ") + e.what());
    }
    return kl_pattern(latent, sigma, pat, m);
}

double free_energy(std::size_t k, const Covariance& sigma_k,
                   std::span<const PatternRegression> latents, const DataMatrix& m,
                   const PatternSet& ps) {
    if (latents.size() != ps.size()) throw DimensionError("one latent law per pattern required");
    double value = observed_loglik(sigma_k, m, ps);
    for (std::size_t l = 0; l < ps.size(); ++l) {
        if (l == k) continue;
        value -= kl_pattern(latents[l], sigma_k, ps[l], m);
    }
    return value;
}

double free_energy(std::size_t k, const Covariance& sigma_k, std::span<const Covariance> latents,
                   const DataMatrix& m, const PatternSet& ps) {
    if (latents.size() != ps.size()) throw DimensionError("one latent law per pattern required");
    std::vector<PatternRegression> regs(ps.size());
    for (std::size_t l = 0; l < ps.size(); ++l) {
        if (l == k) continue;
        regs[l] = sigma_to_regression(latents[l], ps[l]);
    }
    return free_energy(k, sigma_k, std::span<const PatternRegression>(regs), m, ps);
}

}  // namespace pamimpute
