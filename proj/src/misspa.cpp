#include "pamimpute/misspa.hpp"

#include "pamimpute/error.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

namespace pamimpute {

namespace {

Matrix cross_product(const Matrix& x) {
    Matrix t = Matrix::Zero(x.cols(), x.cols());
    t.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
    return t.selfadjointView<Eigen::Lower>();
}

std::string pattern_context(std::size_t k, int cycle) {
    return "pattern " + std::to_string(k + 1) + ", cycle " + std::to_string(cycle) + ": ";
}

PatternRegression zero_latent(const Pattern& pat) {
    const auto no = static_cast<Index>(pat.observed.size());
    const auto nm = static_cast<Index>(pat.missing.size());
    return {Matrix::Zero(nm, no), Matrix::Zero(nm, nm)};
}

Matrix completed(const DataMatrix& m, const Matrix& fill) { return m.mask().select(m.values(), fill); }

}  // namespace

void MisspaOptions::validate() const {
    if (!(rel_tol > 0.0)) throw SpecError("rel_tol must be positive");
    if (max_cycles < 1) throw SpecError("max_cycles must be at least 1");
}

double relative_change(const Matrix& next, const Matrix& prev) {
    const double num = (next - prev).squaredNorm();
    const double den = next.squaredNorm();
    if (num == 0.0) return 0.0;
    if (den == 0.0) return std::numeric_limits<double>::infinity();
    return num / den;
}

SuffStatState init_suffstats(const DataMatrix& m, const PatternSet& ps) {
    const Matrix x0 = m.zero_filled();
    const Index p = m.cols();
    SuffStatState state;
    state.n = m.rows();
    state.t_complete = ps.complete_rows.empty()
                           ? Matrix::Zero(p, p)
                           : cross_product(x0(ps.complete_rows, Eigen::all));
    state.t_total = state.t_complete;
    state.t_pattern.reserve(ps.size());
    for (const auto& pat : ps.patterns) {
        state.t_pattern.push_back(cross_product(x0(pat.rows, Eigen::all)));
        state.t_total += state.t_pattern.back();
    }
    return state;
}

PatternRegression m_step(const SuffStatState& state, const PatternSet& ps, std::size_t k,
                         MStepVariant variant) {
    const Pattern& pat = ps[k];
    const bool exclude_own = variant == MStepVariant::m_step;
    const Index divisor = exclude_own ? state.n - static_cast<Index>(pat.rows.size()) : state.n;
    if (divisor <= 0)
        throw ConditioningError(0.0, "no rows outside the pattern to regress on; use MissPALasso");

    const Matrix t = exclude_own ? state.without(k) : state.t_total;
    const Matrix t_oo = t(pat.observed, pat.observed);
    const Matrix t_om = t(pat.observed, pat.missing);

    Eigen::LLT<Matrix> llt(t_oo);
    const double rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
    if (!(rcond > kMinRcond)) {
        std::ostringstream msg;
        msg << "observed block of the sufficient statistic is singular (rcond estimate " << rcond
            << "); the unpenalized regression is not identifiable, use MissPALasso";
        throw ConditioningError(rcond, msg.str());
    }

    PatternRegression reg;
    reg.coef = llt.solve(t_om).transpose();
    reg.resid_cov = (t(pat.missing, pat.missing) - reg.coef * t_om) / static_cast<double>(divisor);
    clamp_psd(reg.resid_cov);
    return reg;
}

Matrix impute_pattern(const DataMatrix& m, const Pattern& pat, const Matrix& coef) {
    return m.values()(pat.rows, pat.observed) * coef.transpose();
}

Matrix expected_pattern_stat(const DataMatrix& m, const Pattern& pat, const Matrix& x_mis,
                             const Matrix& resid_cov) {
    Matrix rows = m.values()(pat.rows, Eigen::all);
    rows(Eigen::all, pat.missing) = x_mis;
    Matrix t = cross_product(rows);
    t(pat.missing, pat.missing) += static_cast<double>(pat.rows.size()) * resid_cov;
    return t;
}

void partial_e_step(SuffStatState& state, const PatternSet& ps, std::size_t k,
                    const PatternRegression& reg, const DataMatrix& m) {
    const Pattern& pat = ps[k];
    if (reg.coef.rows() != static_cast<Index>(pat.missing.size()) ||
        reg.coef.cols() != static_cast<Index>(pat.observed.size()) ||
        reg.resid_cov.rows() != static_cast<Index>(pat.missing.size())) {
        throw DimensionError("regression does not match pattern " + std::to_string(k + 1));
    }
    Matrix fresh = expected_pattern_stat(m, pat, impute_pattern(m, pat, reg.coef), reg.resid_cov);
    state.t_total += fresh - state.t_pattern[k];
    state.t_total = 0.5 * (state.t_total + state.t_total.transpose()).eval();
    state.t_pattern[k] = std::move(fresh);
}

Covariance recover_sigma(const SuffStatState& state, const PatternRegression& reg,
                         const Pattern& pat) {
    const Matrix sigma_o =
        state.t_total(pat.observed, pat.observed) / static_cast<double>(state.n);
    return regression_to_sigma(sigma_o, reg, pat);
}

RunResult run_misspa(const DataMatrix& m, const MisspaOptions& opts) {
    opts.validate();
    const PatternSet ps = build_patterns(m);
    SuffStatState state = init_suffstats(m, ps);
    const auto n = static_cast<double>(m.rows());

    if (ps.empty()) {
        return RunResult{m, state.t_total / n, state.t_total, {}, true, 0, {}};
    }

    RunResult result{m, {}, {}, {}, false, 0, {}};
    if (opts.variant == MStepVariant::m_step) {
        for (std::size_t k = 0; k < ps.size(); ++k) {
            const auto outside = m.rows() - static_cast<Index>(ps[k].rows.size());
            if (outside <= static_cast<Index>(ps[k].observed.size())) {
                result.warnings.push_back("pattern " + std::to_string(k + 1) + ": only " +
                                          std::to_string(outside) + " rows outside the pattern for " +
                                          std::to_string(ps[k].observed.size()) +
                                          " observed variables");
            }
        }
    }

    std::vector<PatternRegression> latents;
    latents.reserve(ps.size());
    for (const auto& pat : ps.patterns) latents.push_back(zero_latent(pat));

    Matrix fill = Matrix::Zero(m.rows(), m.cols());
    Matrix x_prev = completed(m, fill);
    double prev_loglik = std::numeric_limits<double>::quiet_NaN();
    const auto nan = std::numeric_limits<double>::quiet_NaN();
    // With one pattern the M-step only sees complete rows, so one cycle is exact.
    const bool single_pass = ps.size() == 1 && opts.variant == MStepVariant::m_step;

    for (int cycle = 1; cycle <= opts.max_cycles; ++cycle) {
        for (std::size_t k = 0; k < ps.size(); ++k) {
            PatternRegression reg;
            try {
                reg = m_step(state, ps, k, opts.variant);
            } catch (const ConditioningError& e) {
                throw ConditioningError(e.rcond, pattern_context(k, cycle) + e.what());
            }
            if (opts.observer) {
                opts.observer({MStepEvent::Phase::after_m_step, cycle, k, state, ps, latents, reg});
            }
            partial_e_step(state, ps, k, reg, m);
            fill(ps[k].rows, ps[k].missing) = impute_pattern(m, ps[k], reg.coef);
            latents[k] = std::move(reg);
            if (opts.observer) {
                opts.observer(
                    {MStepEvent::Phase::after_e_step, cycle, k, state, ps, latents, latents[k]});
            }
        }

        Matrix x_next = completed(m, fill);
        TraceRecord rec{cycle, nan, relative_change(x_next, x_prev)};
        x_prev = std::move(x_next);
        result.cycles_used = cycle;

        bool stop = rec.rel_change <= opts.rel_tol || single_pass;
        if (opts.trace_loglik) {
            rec.loglik = observed_loglik(recover_sigma(state, latents.back(), ps.patterns.back()), m, ps);
            if (cycle > 1 && std::abs(rec.loglik - prev_loglik) < 1e-8) stop = true;
            prev_loglik = rec.loglik;
        }
        result.trace.push_back(rec);
        if (stop) {
            result.converged = true;
            break;
        }
    }

    result.sigma_hat = recover_sigma(state, latents.back(), ps.patterns.back());
    result.t_hat = state.t_total;
    result.imputed = m.with_imputations(fill);
    return result;
}

RunResult run_standard_em(const DataMatrix& m, const MisspaOptions& opts) {
    opts.validate();
    const PatternSet ps = build_patterns(m);
    const SuffStatState init = init_suffstats(m, ps);
    const auto n = static_cast<double>(m.rows());

    if (ps.empty()) {
        return RunResult{m, init.t_total / n, init.t_total, {}, true, 0, {}};
    }

    RunResult result{m, {}, {}, {}, false, 0, {}};
    Covariance sigma = init.t_total / n;
    Matrix t = init.t_total;
    Matrix fill = Matrix::Zero(m.rows(), m.cols());
    Matrix x_prev = completed(m, fill);
    const auto nan = std::numeric_limits<double>::quiet_NaN();
    double prev_loglik = nan;

    for (int iter = 1; iter <= opts.max_cycles; ++iter) {
        t = init.t_complete;
        for (std::size_t k = 0; k < ps.size(); ++k) {
            PatternRegression reg;
            try {
                reg = sigma_to_regression(sigma, ps[k]);
            } catch (const ConditioningError& e) {
                throw ConditioningError(e.rcond, pattern_context(k, iter) + e.what());
            }
            clamp_psd(reg.resid_cov);
            Matrix x_mis = impute_pattern(m, ps[k], reg.coef);
            t += expected_pattern_stat(m, ps[k], x_mis, reg.resid_cov);
            fill(ps[k].rows, ps[k].missing) = x_mis;
        }
        sigma = 0.5 * (t + t.transpose()) / n;

        Matrix x_next = completed(m, fill);
        TraceRecord rec{iter, nan, relative_change(x_next, x_prev)};
        x_prev = std::move(x_next);
        result.cycles_used = iter;

        bool stop = rec.rel_change <= opts.rel_tol;
        if (opts.trace_loglik) {
            rec.loglik = observed_loglik(sigma, m, ps);
            if (iter > 1 && std::abs(rec.loglik - prev_loglik) < 1e-8) stop = true;
            prev_loglik = rec.loglik;
        }
        result.trace.push_back(rec);
        if (stop) {
            result.converged = true;
            break;
        }
    }

    result.sigma_hat = sigma;
    result.t_hat = t;
    result.imputed = m.with_imputations(fill);
    return result;
}

void write_trace_tsv(std::ostream& out, const std::vector<TraceRecord>& trace) {
    out << "cycle\tloglik\trel_change\n";
    for (const auto& r : trace) {
        out << r.cycle << '\t' << (std::isnan(r.loglik) ? "NA" : format_number(r.loglik)) << '\t'
            << format_number(r.rel_change) << '\n';
    }
}

}  // namespace pamimpute
