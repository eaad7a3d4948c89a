#include "doctest.h"

#include "support/checks.hpp"
#include "support/oracles.hpp"

#include "pamimpute/error.hpp"
#include "pamimpute/misspa.hpp"

#include <random>
#include <sstream>

using namespace pamimpute;

namespace {

/// n rows, the last `incomplete` of which miss columns `mis`.
DataMatrix monotone(std::mt19937_64& rng, Index p, Index n, Index incomplete, const IndexList& mis) {
    const Matrix x = oracle::sample_rows(oracle::random_spd(p, rng), n, rng);
    Mask mask = Mask::Constant(n, p, true);
    for (Index i = n - incomplete; i < n; ++i)
        for (Index j : mis) mask(i, j) = false;
    return DataMatrix(x, mask);
}

}  // namespace

TEST_CASE("fully observed input needs no cycles") {
    std::mt19937_64 rng(1);
    const Matrix x = oracle::sample_rows(Matrix::Identity(3, 3), 10, rng);
    const auto m = DataMatrix::complete(x);
    for (auto run : {run_misspa, run_standard_em}) {
        const auto r = run(m, {});
        CHECK(r.cycles_used == 0);
        CHECK(r.trace.empty());
        CHECK(r.converged);
        CHECK(r.imputed.values() == x);
        CHECK((r.t_hat - x.transpose() * x).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((r.sigma_hat - x.transpose() * x / 10.0).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("single pattern matches the closed-form estimator in one cycle") {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 20; ++rep) {
        const Index p = 3 + rep % 4;
        IndexList mis{p - 1};
        if (rep % 2) mis.insert(mis.begin(), 0);
        const auto m = monotone(rng, p, 30, 12, mis);
        const auto ps = build_patterns(m);
        REQUIRE(ps.size() == 1);

        const auto r = run_misspa(m);
        CHECK(r.cycles_used == 1);
        CHECK(r.converged);
        const auto fit = oracle::monotone_mle(m, ps[0].observed, ps[0].missing, ps.complete_rows,
                                              ps[0].rows);
        CHECK((r.sigma_hat - fit.sigma).cwiseAbs().maxCoeff() <= 1e-8);
        const Matrix imputed = r.imputed.values()(ps[0].rows, ps[0].missing);
        CHECK((imputed - fit.imputations).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("observed entries are never modified and the trace is consistent") {
    std::mt19937_64 rng(3);
    for (int rep = 0; rep < 10; ++rep) {
        const auto m = checks::small_instance(rng, 6, 30);
        for (auto variant : {MStepVariant::m_step, MStepVariant::m_step2}) {
            MisspaOptions opts;
            opts.variant = variant;
            const auto r = run_misspa(m, opts);
            CHECK(static_cast<int>(r.trace.size()) == r.cycles_used);
            for (Index i = 0; i < m.rows(); ++i)
                for (Index j = 0; j < m.cols(); ++j)
                    if (m.observed(i, j)) CHECK(r.imputed(i, j) == m(i, j));
            CHECK(r.imputed.fully_observed());
            CHECK((r.sigma_hat - r.sigma_hat.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
        }
    }
}

TEST_CASE("sufficient statistic bookkeeping") {
    std::mt19937_64 rng(4);
    const auto m = checks::small_instance(rng, 6, 30);
    double worst = 0.0;
    MisspaOptions opts;
    opts.observer = [&](const MStepEvent& ev) {
        Matrix sum = ev.state.t_complete;
        for (const auto& t : ev.state.t_pattern) sum += t;
        worst = std::max(worst, (sum - ev.state.t_total).cwiseAbs().maxCoeff());
        worst = std::max(worst, (ev.state.t_total - ev.state.t_total.transpose()).cwiseAbs().maxCoeff());
    };
    run_misspa(m, opts);
    CHECK(worst <= 1e-9);
}

TEST_CASE("free energy chain is non-decreasing") {
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 15; ++rep) {
        const auto m = checks::small_instance(rng, 8, 40);
        MisspaOptions opts;
        opts.max_cycles = 30;
        opts.rel_tol = 1e-14;
        const auto chain = checks::free_energy_chain(m, opts);
        CHECK(chain.points > 2);
        CHECK(chain.worst_step >= -1e-8);
        CHECK(chain.worst_mismatch <= 1e-8);
    }
}

TEST_CASE("converged estimate is a stationary point of the likelihood") {
    std::mt19937_64 rng(6);
    for (int rep = 0; rep < 6; ++rep) {
        const auto m = checks::small_instance(rng, 5, 30);
        CHECK(checks::stationarity_gap(m, MStepVariant::m_step) < 1e-3);
        CHECK(checks::stationarity_gap(m, MStepVariant::m_step2) < 1e-3);
    }
}

TEST_CASE("m_step2 fixed point is an EM fixed point") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 5; ++rep) {
        const auto m = checks::small_instance(rng, 5, 30);
        const auto ps = build_patterns(m);
        MisspaOptions opts;
        opts.variant = MStepVariant::m_step2;
        opts.rel_tol = 1e-20;
        opts.max_cycles = 5000;
        const auto r = run_misspa(m, opts);

        // one classical EM step from the MissPA estimate
        SuffStatState state = init_suffstats(m, ps);
        for (std::size_t k = 0; k < ps.size(); ++k) {
            auto reg = sigma_to_regression(r.sigma_hat, ps[k]);
            clamp_psd(reg.resid_cov);
            partial_e_step(state, ps, k, reg, m);
        }
        const Matrix next = state.t_total / static_cast<double>(m.rows());
        CHECK(std::abs(observed_loglik(next, m, ps) - observed_loglik(r.sigma_hat, m, ps)) < 1e-6);
    }
}

TEST_CASE("standard EM ascends and agrees with MissPA at convergence") {
    std::mt19937_64 rng(8);
    for (int rep = 0; rep < 8; ++rep) {
        const auto m = checks::small_instance(rng, 6, 40);
        MisspaOptions opts;
        opts.rel_tol = 1e-14;
        opts.max_cycles = 3000;
        opts.trace_loglik = true;
        const auto em = run_standard_em(m, opts);
        for (std::size_t i = 1; i < em.trace.size(); ++i)
            CHECK(em.trace[i].loglik - em.trace[i - 1].loglik >= -1e-8);
        const auto pa = run_misspa(m, opts);
        CHECK(std::abs(pa.trace.back().loglik - em.trace.back().loglik) < 1e-4);
    }
}

TEST_CASE("singular regression block raises a conditioning error naming the pattern") {
    // two duplicate columns observed in every row, third column missing in most rows
    Matrix x(6, 3);
    x << 1, 1, 0.3, 2, 2, 0.1, 3, 3, 0.2, 4, 4, 0.5, 5, 5, 0.7, 6, 6, 0.9;
    Mask mask = Mask::Constant(6, 3, true);
    for (Index i = 2; i < 6; ++i) mask(i, 2) = false;
    try {
        run_misspa(DataMatrix(x, mask));
        FAIL("expected a conditioning error");
    } catch (const ConditioningError& e) {
        CHECK(std::string(e.what()).find("pattern 1") != std::string::npos);
    }
}

TEST_CASE("options are validated") {
    MisspaOptions o;
    o.max_cycles = 0;
    CHECK_THROWS_AS(o.validate(), SpecError);
    o.max_cycles = 10;
    o.rel_tol = -1.0;
    CHECK_THROWS_AS(o.validate(), SpecError);
}

TEST_CASE("relative_change edge cases") {
    const Matrix z = Matrix::Zero(2, 2);
    const Matrix one = Matrix::Ones(2, 2);
    CHECK(relative_change(z, z) == 0.0);
    CHECK(relative_change(one, one) == 0.0);
    CHECK(relative_change(2.0 * one, one) == doctest::Approx(0.25));
    CHECK(std::isinf(relative_change(z, one)));
}

TEST_CASE("trace TSV layout") {
    std::ostringstream out;
    write_trace_tsv(out, {{1, -3.5, 0.25}, {2, std::nan(""), 0.0}});
    CHECK(out.str() == "cycle\tloglik\trel_change\n1\t-3.5\t0.25\n2\tNA\t0\n");
}
