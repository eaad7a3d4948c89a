#pragma once

#include "pamimpute/data.hpp"
#include "pamimpute/mvn.hpp"

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace pamimpute {

/// Working sufficient statistics: the p x p cross-product matrix of the
/// (partially expected) completed data, split by pattern.
///
/// Invariant while no decay is applied:
///   t_total == t_complete + sum_k t_pattern[k]
struct SuffStatState {
    Matrix t_total;
    std::vector<Matrix> t_pattern;
    Matrix t_complete;
    Index n = 0;

    /// Statistic of every row outside pattern k (complete rows included).
    Matrix without(std::size_t k) const { return t_total - t_pattern[k]; }
};

enum class MStepVariant {
    m_step,   ///< regress on the statistic of rows outside the pattern
    m_step2,  ///< regress on the full statistic (incremental EM)
};

struct MStepEvent;

struct MisspaOptions {
    MStepVariant variant = MStepVariant::m_step;
    int max_cycles = 500;
    double rel_tol = 1e-5;
    /// Evaluate the observed log-likelihood after every cycle. Costs one
    /// covariance recovery per cycle.
    bool trace_loglik = false;
    /// Called after every M-step and every partial E-step (MissPA only).
    std::function<void(const MStepEvent&)> observer;

    void validate() const;
};

struct TraceRecord {
    int cycle = 0;
    double loglik = 0.0;  ///< NaN when not traced
    double rel_change = 0.0;
};

struct RunResult {
    DataMatrix imputed;
    Covariance sigma_hat;
    Matrix t_hat;
    std::vector<TraceRecord> trace;
    bool converged = false;
    int cycles_used = 0;
    std::vector<std::string> warnings;
};

struct MStepEvent {
    enum class Phase { after_m_step, after_e_step };
    Phase phase;
    int cycle;
    std::size_t pattern;
    const SuffStatState& state;
    const PatternSet& patterns;
    /// Latent conditional law per pattern as used by the statistics. Before a
    /// pattern's first E-step its entry is the zero-imputation law (zero
    /// coefficients and zero covariance).
    std::span<const PatternRegression> latents;
    /// Regression just produced by the M-step for `pattern`.
    const PatternRegression& regression;
};

/// Zero-imputed cross products.
SuffStatState init_suffstats(const DataMatrix& m, const PatternSet& ps);

/// Regression parameters for pattern k. Throws ConditioningError when the
/// observed block of the statistic is singular.
PatternRegression m_step(const SuffStatState& state, const PatternSet& ps, std::size_t k,
                         MStepVariant variant);

/// Conditional-mean imputations X_o B^T for the rows of `pat`.
Matrix impute_pattern(const DataMatrix& m, const Pattern& pat, const Matrix& coef);

/// Expected cross products of pattern rows given completed missing values
/// `x_mis` (|rows| x |m|) and residual covariance.
Matrix expected_pattern_stat(const DataMatrix& m, const Pattern& pat, const Matrix& x_mis,
                             const Matrix& resid_cov);

/// Replaces t_pattern[k] with its conditional expectation and refreshes t_total.
void partial_e_step(SuffStatState& state, const PatternSet& ps, std::size_t k,
                    const PatternRegression& reg, const DataMatrix& m);

/// Full covariance from the statistic and the regression of pattern `pat`.
Covariance recover_sigma(const SuffStatState& state, const PatternRegression& reg,
                         const Pattern& pat);

RunResult run_misspa(const DataMatrix& m, const MisspaOptions& opts = {});

/// Classical EM: full E-step over all patterns from the current covariance,
/// then covariance = statistic / n.
RunResult run_standard_em(const DataMatrix& m, const MisspaOptions& opts = {});

/// Relative change ||a - b||^2 / ||a||^2 (0 when both vanish).
double relative_change(const Matrix& next, const Matrix& prev);

void write_trace_tsv(std::ostream& out, const std::vector<TraceRecord>& trace);

}  // namespace pamimpute
