#pragma once

#include "pamimpute/data.hpp"

#include <span>

namespace pamimpute {

/// p x p symmetric positive semidefinite matrix.
using Covariance = Matrix;

/// Reciprocal condition number below which a block counts as singular.
inline constexpr double kMinRcond = 1e-12;

/// Regression of a pattern's missing variables on its observed ones.
///
/// `coef` is |m| x |o|; row r belongs to variable `pattern.missing[r]`.
/// `resid_cov` is the |m| x |m| conditional covariance.
struct PatternRegression {
    Matrix coef;
    Matrix resid_cov;
};

/// Gathers rows `r` and columns `c` of `a`.
Matrix gather(const Matrix& a, const IndexList& r, const IndexList& c);

/// Symmetrizes in place and lifts eigenvalues below `floor` to `floor`.
void clamp_psd(Matrix& a, double floor = 1e-10);

/// Log-determinant from a Cholesky factorization; throws DomainError when
/// `a` is not positive definite.
double log_det_pd(const Matrix& a);

PatternRegression sigma_to_regression(const Covariance& sigma, const Pattern& pat);

/// Inverse transform: assemble the full covariance from the observed block
/// and the regression parameters.
Covariance regression_to_sigma(const Matrix& sigma_o, const PatternRegression& reg,
                               const Pattern& pat);

/// Gaussian log-likelihood of the observed entries under N(0, sigma),
/// with all normalizing constants.
double observed_loglik(const Covariance& sigma, const DataMatrix& m, const PatternSet& ps);

/// Summed KL divergence, over the rows of `pat`, from the latent conditional
/// law `latent` to the conditional law implied by `sigma`.
double kl_pattern(const PatternRegression& latent, const Covariance& sigma, const Pattern& pat,
                  const DataMatrix& m);

/// Same, with the latent law given as a full covariance.
double kl_pattern(const Covariance& sigma_tilde, const Covariance& sigma, const Pattern& pat,
                  const DataMatrix& m);

/// Pattern-dependent free energy: loglik(sigma_k) minus the KL divergences
/// of every other pattern's latent law. `latents` has one entry per pattern;
/// entry `k` is ignored.
double free_energy(std::size_t k, const Covariance& sigma_k,
                   std::span<const PatternRegression> latents, const DataMatrix& m,
                   const PatternSet& ps);

double free_energy(std::size_t k, const Covariance& sigma_k, std::span<const Covariance> latents,
                   const DataMatrix& m, const PatternSet& ps);

}  // namespace pamimpute
