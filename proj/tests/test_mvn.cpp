#include "doctest.h"

#include "support/oracles.hpp"

#include "pamimpute/error.hpp"
#include "pamimpute/mvn.hpp"

#include <random>

using namespace pamimpute;

namespace {

Pattern make_pattern(IndexList obs, IndexList mis, IndexList rows = {}) {
    return Pattern{std::move(obs), std::move(mis), std::move(rows)};
}

}  // namespace

TEST_CASE("sigma_to_regression hand example") {
    Matrix s(2, 2);
    s << 1.0, 0.9, 0.9, 1.0;
    const auto reg = sigma_to_regression(s, make_pattern({0}, {1}));
    CHECK(reg.coef(0, 0) == doctest::Approx(0.9).epsilon(1e-14));
    CHECK(reg.resid_cov(0, 0) == doctest::Approx(0.19).epsilon(1e-14));

    const Matrix back = regression_to_sigma(s.topLeftCorner(1, 1), reg, make_pattern({0}, {1}));
    CHECK((back - s).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("independence gives zero coefficients") {
    const Matrix s = Matrix::Identity(4, 4);
    const auto pat = make_pattern({0, 2}, {1, 3});
    const auto reg = sigma_to_regression(s, pat);
    CHECK(reg.coef.cwiseAbs().maxCoeff() == 0.0);
    CHECK(reg.resid_cov.isIdentity());
    CHECK(regression_to_sigma(Matrix::Identity(2, 2), reg, pat).isIdentity());
}

TEST_CASE("singular observed block raises a conditioning error") {
    Matrix s(3, 3);
    s << 1, 1, 0.5, 1, 1, 0.5, 0.5, 0.5, 1;  // columns 0 and 1 duplicate
    try {
        sigma_to_regression(s, make_pattern({0, 1}, {2}));
        FAIL("expected a conditioning error");
    } catch (const ConditioningError& e) {
        CHECK(e.rcond < kMinRcond);
        CHECK(e.kind() == ErrorKind::numeric);
    }
}

TEST_CASE("regression_to_sigma checks dimensions") {
    PatternRegression reg{Matrix::Zero(1, 2), Matrix::Identity(1, 1)};
    CHECK_THROWS_AS(regression_to_sigma(Matrix::Identity(1, 1), reg, make_pattern({0, 1}, {2})),
                    DimensionError);
}

TEST_CASE("parametrization round trip on random covariances") {
    std::mt19937_64 rng(1);
    std::bernoulli_distribution coin(0.5);
    double worst = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
        const Index p = 2 + rep % 7;
        const Matrix s = oracle::random_spd(p, rng);
        Pattern pat;
        for (Index j = 0; j < p; ++j) (coin(rng) ? pat.observed : pat.missing).push_back(j);
        if (pat.observed.empty()) std::swap(pat.observed, pat.missing);
        if (pat.missing.empty()) {
            pat.missing.push_back(pat.observed.back());
            pat.observed.pop_back();
        }
        const auto reg = sigma_to_regression(s, pat);
        const Matrix back = regression_to_sigma(s(pat.observed, pat.observed), reg, pat);
        worst = std::max(worst, (back - s).cwiseAbs().maxCoeff());
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("clamp_psd lifts negative eigenvalues and symmetrizes") {
    Matrix a(2, 2);
    a << 1.0, 2.0, 2.0 + 1e-12, 1.0;  // eigenvalues 3 and -1
    clamp_psd(a);
    CHECK(a == a.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    CHECK(es.eigenvalues().minCoeff() >= 1e-10 - 1e-14);
    CHECK(es.eigenvalues().maxCoeff() == doctest::Approx(3.0));
    CHECK_THROWS_AS(log_det_pd(-Matrix::Identity(2, 2)), DomainError);
}

TEST_CASE("observed_loglik of a standard normal at zero") {
    const DataMatrix m = DataMatrix::complete(Matrix::Zero(1, 1));
    const double v = observed_loglik(Matrix::Identity(1, 1), m, build_patterns(m));
    CHECK(v == doctest::Approx(-0.9189385332046727).epsilon(1e-14));
}

TEST_CASE("observed_loglik matches the per-row brute force") {
    std::mt19937_64 rng(2);
    for (int rep = 0; rep < 30; ++rep) {
        const Index p = 3 + rep % 4;
        const auto m = oracle::random_instance(rng, p, 5 + rep, 1 + rep % 3, 2);
        const auto ps = build_patterns(m);
        const Matrix s = oracle::random_spd(p, rng);
        CHECK(observed_loglik(s, m, ps) ==
              doctest::Approx(oracle::brute_loglik(s, m)).epsilon(1e-11));
    }
    // fully observed: the complete-data likelihood
    const Matrix x = oracle::sample_rows(Matrix::Identity(3, 3), 5, rng);
    const auto full = DataMatrix::complete(x);
    const Matrix s = oracle::random_spd(3, rng);
    CHECK(observed_loglik(s, full, build_patterns(full)) ==
          doctest::Approx(oracle::brute_loglik(s, full)).epsilon(1e-12));
}

TEST_CASE("observed_loglik is invariant under row permutation") {
    std::mt19937_64 rng(3);
    const auto m = oracle::random_instance(rng, 5, 20, 3, 4);
    const Matrix s = oracle::random_spd(5, rng);
    Matrix x = m.values();
    Mask mask = m.mask();
    x.row(0).swap(x.row(19));
    mask.row(0).swap(mask.row(19));
    x.row(3).swap(x.row(11));
    mask.row(3).swap(mask.row(11));
    const DataMatrix shuffled(x, mask);
    CHECK(observed_loglik(s, shuffled, build_patterns(shuffled)) ==
          doctest::Approx(observed_loglik(s, m, build_patterns(m))).epsilon(1e-12));
}

TEST_CASE("observed_loglik rejects non-PD covariances") {
    const auto m = DataMatrix::complete(Matrix::Ones(2, 2));
    Matrix s(2, 2);
    s << 1, 2, 2, 1;
    CHECK_THROWS_AS(observed_loglik(s, m, build_patterns(m)), DomainError);
}

TEST_CASE("KL divergence: zero for identical laws, non-negative otherwise") {
    std::mt19937_64 rng(4);
    for (int rep = 0; rep < 100; ++rep) {
        const Index p = 3 + rep % 5;
        const auto m = oracle::random_instance(rng, p, 12, 2, 2);
        const auto ps = build_patterns(m);
        const Matrix a = oracle::random_spd(p, rng);
        const Matrix b = oracle::random_spd(p, rng);
        for (const auto& pat : ps.patterns) {
            CHECK(std::abs(kl_pattern(a, a, pat, m)) <= 1e-10);
            CHECK(kl_pattern(a, b, pat, m) >= -1e-12);
        }
    }
}

TEST_CASE("KL divergence agrees with a Monte-Carlo estimate") {
    std::mt19937_64 rng(5);
    const auto m = oracle::random_instance(rng, 4, 6, 1, 2);
    const auto ps = build_patterns(m);
    const Matrix a = oracle::random_spd(4, rng);
    const Matrix b = oracle::random_spd(4, rng);
    const auto& pat = ps[0];
    const auto latent = sigma_to_regression(a, pat);
    const double exact = kl_pattern(latent, b, pat, m);
    const auto [mc, se] = oracle::mc_kl(latent, b, pat, m, 20000, rng);
    CHECK(std::abs(exact - mc) <= 3.0 * se);
}

TEST_CASE("free energy with all-equal laws is the log-likelihood") {
    std::mt19937_64 rng(6);
    const auto m = oracle::random_instance(rng, 5, 20, 3, 3);
    const auto ps = build_patterns(m);
    const Matrix s = oracle::random_spd(5, rng);
    std::vector<Covariance> same(ps.size(), s);
    const double ll = observed_loglik(s, m, ps);
    for (std::size_t k = 0; k < ps.size(); ++k)
        CHECK(free_energy(k, s, std::span<const Covariance>(same), m, ps) ==
              doctest::Approx(ll).epsilon(1e-12));
}

TEST_CASE("free energy: KL form equals the direct definition and lower-bounds the likelihood") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 40; ++rep) {
        const Index p = 3 + rep % 5;
        const auto m = oracle::random_instance(rng, p, 15, 2 + rep % 3, 2);
        const auto ps = build_patterns(m);
        std::vector<PatternRegression> latents;
        for (const auto& pat : ps.patterns)
            latents.push_back(sigma_to_regression(oracle::random_spd(p, rng), pat));
        const Matrix s = oracle::random_spd(p, rng);
        for (std::size_t k = 0; k < ps.size(); ++k) {
            const double f = free_energy(k, s, std::span<const PatternRegression>(latents), m, ps);
            const double direct = oracle::direct_free_energy(k, s, latents, m, ps);
            CHECK(std::abs(f - direct) <= 1e-8);
            CHECK(f <= observed_loglik(s, m, ps) + 1e-10);
        }
    }
}
