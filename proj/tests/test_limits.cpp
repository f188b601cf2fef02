#include "support/fixtures.hpp"

#include <Eigen/Eigenvalues>

using namespace qexodus;
using namespace fixtures;

namespace {

// Stationary law of a stochastic matrix on `support` by a direct linear solve.
Vector stationary_solve(const Matrix& q, const StateSet& support) {
    const auto idx = support.members();
    const auto n = static_cast<Eigen::Index>(idx.size());
    Matrix a(n + 1, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            a(j, i) = q(static_cast<Eigen::Index>(idx[i]), static_cast<Eigen::Index>(idx[j])) - (i == j ? 1.0 : 0.0);
    a.row(n).setOnes();
    Vector b = Vector::Zero(n + 1);
    b[n] = 1.0;
    const Vector sol = a.colPivHouseholderQr().solve(b);
    Vector out = Vector::Zero(q.rows());
    for (Eigen::Index i = 0; i < n; ++i) out[static_cast<Eigen::Index>(idx[i])] = sol[i];
    return out;
}

double linf(const Vector& a, const Vector& b) { return (a - b).cwiseAbs().maxCoeff(); }

KilledChain periodic_example() {
    auto chain = absorbed({"p", "q", "r", "∂"}, {{0.2, 0.3, 0.4, 0.1},
                                                 {0.3, 0.3, 0.3, 0.1},
                                                 {0.5, 0.2, 0.2, 0.1},
                                                 {0, 0, 0, 1}});
    return KilledChain(std::move(chain), BoundarySchedule::periodic({StateSet::of(4, {1, 3}), StateSet::of(4, {3})}));
}

}  // namespace

TEST_CASE("qsd_fixed on CHAIN-A") {
    const auto triple = qsd_fixed(chain_a_kernel(), StateSet::of(3, {2}));
    CHECK(triple.rho == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(triple.lambda == doctest::Approx(-std::log(0.8)).epsilon(1e-14));
    CHECK(triple.lambda == doctest::Approx(0.22314).epsilon(1e-5));
    CHECK(triple.alpha[0] == doctest::Approx(4.0 / 7.0).epsilon(1e-13));
    CHECK(triple.alpha[1] == doctest::Approx(3.0 / 7.0).epsilon(1e-13));
    CHECK(triple.eta[0] == 1.0);
    CHECK(triple.eta[1] == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(triple.left_residual <= 1e-12);
    CHECK(triple.right_residual <= 1e-12);
}

TEST_CASE("qsd_fixed with one survivor") {
    const auto chain = absorbed({"x", "∂"}, {{0.35, 0.65}, {0, 1}});
    const auto triple = qsd_fixed(chain, StateSet::of(2, {1}));
    CHECK(triple.rho == doctest::Approx(0.35));
    CHECK(triple.alpha[0] == 1.0);
    CHECK(triple.eta[0] == 1.0);
}

TEST_CASE("qsd_fixed agrees with an eigen-decomposition") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto c = random_chain(derive_seed(51, seed), ScheduleKind::Constant);
        const auto& a = c.schedule().absorbing(0);
        const auto triple = qsd_fixed(c.chain(), a);
        CHECK(triple.left_residual <= 1e-12);
        CHECK(triple.right_residual <= 1e-12);
        const auto idx = a.complement().members();
        Matrix r(static_cast<Eigen::Index>(idx.size()), static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < idx.size(); ++j)
                r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = c.chain().kernel(idx[i], idx[j]);
        Eigen::EigenSolver<Matrix> es(r);
        double top = 0.0;
        for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) top = std::max(top, es.eigenvalues()[i].real());
        CHECK(triple.rho == doctest::Approx(top).epsilon(1e-12));
    }
}

TEST_CASE("invariant measure of the CHAIN-A Q-kernel") {
    Matrix q(3, 3);
    q << 0.625, 0.375, 0, 0.5, 0.5, 0, 0, 0, 1;
    const Vector beta = invariant_measure(q, StateSet::of(3, {0, 1}));
    CHECK(beta[0] == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
    CHECK(beta[1] == doctest::Approx(3.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("quasi-limiting on CHAIN-A and on converging schedules") {
    const auto c = chain_a();
    const auto report = quasi_limiting(c, Measure::dirac(3, 0), 80, 1e-9);
    CHECK(report.converged);
    CHECK(report.value[0] == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
    CHECK(report.diagnostics.size() == 81);
    CHECK(report.diagnostics.back().second <= 1e-9);
    CHECK_FALSE(report.independence_gap.has_value());

    const auto conv = converging_three();
    const auto r2 = quasi_limiting(conv, Measure::dirac(4, 0), 200, 1e-9);
    const auto want = qsd_fixed(conv.chain(), StateSet::of(4, {3})).alpha;
    CHECK(linf(r2.value.weights, want.weights) == 0.0);
    CHECK(r2.converged);
    REQUIRE(r2.independence_gap.has_value());
    CHECK(*r2.independence_gap <= 2e-9);

    CHECK_THROWS_AS(quasi_limiting(periodic_example(), Measure::dirac(4, 0), 10, 1e-6), Error);
}

TEST_CASE("quasi-limiting when the schedule already equals its limit") {
    auto chain = converging_three().chain();
    KilledChain c(chain, BoundarySchedule::converging({}, StateSet::of(4, {3})));
    const auto report = quasi_limiting(c, Measure::dirac(4, 1), 10, 1e-3);
    CHECK(report.value.weights == qsd_fixed(chain, StateSet::of(4, {3})).alpha.weights);
}

TEST_CASE("quasi-ergodic averages") {
    const auto c = chain_a();
    const Measure mu{Vector{{0.25, 0.75, 0.0}}, true};
    CHECK(quasi_ergodic(c, mu, 0).weights == mu.weights);

    // n = 1 by path enumeration.
    const auto brute = oracle::enumerate(grid(c), alive(c), row(mu.weights), 0, 1);
    Vector want = Vector::Zero(3);
    for (int k = 0; k <= 1; ++k) {
        const auto m = oracle::normalize(brute.bridge[static_cast<std::size_t>(k)]);
        for (int i = 0; i < 3; ++i) want[i] += m[static_cast<std::size_t>(i)] / 2.0;
    }
    CHECK(linf(quasi_ergodic(c, mu, 1).weights, want) <= 1e-14);

    const auto far = quasi_ergodic(c, Measure::dirac(3, 0), 4000);
    CHECK(far[0] == doctest::Approx(4.0 / 7.0).epsilon(1e-3));
}

TEST_CASE("skeleton chains") {
    const auto c = chain_a();
    const auto sk = skeleton(c);
    CHECK(sk.period == 1);
    CHECK(sk.kernel == c.step_matrix(0));

    auto chain = chain_a_kernel();
    KilledChain doubled(chain, BoundarySchedule::periodic({StateSet::of(3, {2}), StateSet::of(3, {2})}));
    const auto sk2 = skeleton(doubled);
    CHECK(sk2.period == 2);
    CHECK(linf(sk2.kernel.reshaped(), (c.step_matrix(0) * c.step_matrix(0)).reshaped()) == 0.0);

    const auto per = periodic_example();
    const auto skp = skeleton(per);
    const auto g = grid(per);
    const auto live = alive(per);
    for (auto x : skp.survivors.members()) {
        for (auto y : skp.survivors.members()) {
            const auto brute = oracle::enumerate(g, live, x, 0, 2);
            CHECK(std::abs(skp.kernel(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) - brute.law[y]) <= 1e-15);
        }
        for (Time n = 0; n <= 30; ++n) {
            const double a = per.survival(x, 0, 2 * n);
            const double b = skp.survival(x, n);
            CHECK(std::abs(a - b) <= 1e-13 * a);
        }
    }
    CHECK_THROWS_AS(skeleton(converging_three()), Error);
}

TEST_CASE("beta_gamma and qed limits") {
    const auto c = chain_a();
    const auto cert = certify(c, 3, 200);
    const auto qp = build_qprocess(c, cert, 80);
    CHECK(linf(beta_infinity(c).weights, Vector{{4.0 / 7.0, 3.0 / 7.0, 0.0}}) <= 1e-12);
    CHECK(linf(qed_limit(c, cert, qp).weights, Vector{{4.0 / 7.0, 3.0 / 7.0, 0.0}}) <= 1e-12);

    // Degenerate constant schedule through both branches.
    KilledChain as_periodic(c.chain(), BoundarySchedule::periodic({StateSet::of(3, {2})}));
    const auto cert_p = certify(as_periodic, 3, 200);
    const auto beta = beta_gamma(as_periodic, cert_p);
    CHECK(linf(beta.weights, beta_infinity(c).weights) <= 1e-12);
    CHECK(qed_limit(as_periodic, cert_p, build_qprocess(as_periodic, cert_p, 80)).weights == beta.weights);

    const auto per = periodic_example();
    const auto cert2 = certify(per, 4, 300);
    REQUIRE(cert2.valid);
    const auto b2 = beta_gamma(per, cert2);
    const auto sk = skeleton(per);
    const auto pair = perron_pair(sk.kernel, sk.survivors);
    Matrix q = Matrix::Zero(4, 4);
    for (auto x : sk.survivors.members())
        for (auto y : sk.survivors.members()) {
            const auto i = static_cast<Eigen::Index>(x);
            const auto j = static_cast<Eigen::Index>(y);
            q(i, j) = sk.kernel(i, j) * pair.right[j] / (pair.rho * pair.right[i]);
        }
    CHECK(linf(b2.weights, stationary_solve(q, sk.survivors)) <= 1e-10);
    CHECK(linf((b2.weights.transpose() * q).transpose(), b2.weights) <= 1e-10);

    CVCertificate odd = cert2;
    odd.t0 = 3;
    try {
        beta_gamma(per, odd);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::AssumptionViolation);
    }
}

TEST_CASE("converging QED equals the Doob-transformed invariant law") {
    const auto conv = converging_three();
    const auto triple = qsd_fixed(conv.chain(), StateSet::of(4, {3}));
    Vector oracle_beta = triple.alpha.weights.cwiseProduct(triple.eta);
    oracle_beta /= oracle_beta.sum();
    CHECK(linf(beta_infinity(conv).weights, oracle_beta) <= 1e-12);

    const auto cert = certify(conv, 3, 300);
    REQUIRE(cert.valid);
    const auto qp = build_qprocess(conv, cert, 200);
    const auto report = quasi_ergodic_report(conv, cert, qp, Measure::dirac(4, 0), {200, 500, 1000, 2000}, 0.01);
    CHECK(report.converged);
    for (std::size_t i = 1; i < report.diagnostics.size(); ++i)
        CHECK(report.diagnostics[i].second <= report.diagnostics[i - 1].second);
    CHECK(report.rate_constant.has_value());
}
