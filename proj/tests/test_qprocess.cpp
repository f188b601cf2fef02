#include "support/fixtures.hpp"

using namespace qexodus;
using namespace fixtures;

namespace {

QProcess chain_a_q(Time t_eta = 60) {
    const auto c = chain_a();
    return build_qprocess(c, certify(c, 3, 200), t_eta);
}

}  // namespace

TEST_CASE("eta is flat on CHAIN-A") {
    const auto c = chain_a();
    const auto cert = certify(c, 3, 200);
    const auto eta = compute_eta(c, cert, 40);
    CHECK(eta.reference_state == std::optional<std::size_t>(0));
    CHECK(eta.last_time() == 39);
    for (Time s = 0; s <= eta.last_time(); ++s) {
        CHECK(eta.at(s)[0] == 1.0);
        CHECK(eta.at(s)[1] == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(eta.at(s)[2] == 0.0);
    }
    CHECK(eta.error_bound(0) == doctest::Approx(std::pow(0.125, 40) / 0.875));
    CHECK_THROWS_AS(eta.at(40), Error);
}

TEST_CASE("eta needs a valid certificate") {
    const auto c = chain_a();
    CVCertificate bogus;
    try {
        compute_eta(c, bogus, 10);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::CertificateRequired);
    }
}

TEST_CASE("single surviving state") {
    auto chain = absorbed({"only", "∂"}, {{0.7, 0.3}, {0, 1}});
    KilledChain c(std::move(chain), BoundarySchedule::constant(StateSet::of(2, {1})));
    const auto qp = build_qprocess(c, certify(c, 2, 50), 20);
    CHECK(qp.eta().at(3)[0] == 1.0);
    CHECK(qp.kernel(0)(0, 0) == 1.0);
}

TEST_CASE("Q-kernel on CHAIN-A") {
    const auto qp = chain_a_q();
    const auto& q = q_kernel(qp, 0);
    CHECK(q(0, 0) == doctest::Approx(0.625));
    CHECK(q(0, 1) == doctest::Approx(0.375));
    CHECK(q(1, 0) == doctest::Approx(0.5));
    CHECK(q(1, 1) == doctest::Approx(0.5));
    CHECK_THROWS_AS(q_kernel(qp, qp.last_kernel_time() + 1), Error);
    const auto m1 = q_marginal(qp, 0, 0, 1);
    CHECK(m1[0] == doctest::Approx(0.625));
    CHECK(q_marginal(qp, 0, 1, 0).weights == Measure::dirac(3, 1).weights);
    const auto far = q_marginal(qp, 0, 0, 50);
    CHECK(far[0] == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
    CHECK(far[1] == doctest::Approx(3.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("deterministic surviving cycle") {
    auto chain = absorbed({"c0", "c1", "c2", "∂"}, {{0, 1, 0, 0}, {0, 0, 1, 0}, {1, 0, 0, 0}, {0, 0, 0, 1}});
    KilledChain c(std::move(chain), BoundarySchedule::constant(StateSet::of(4, {3})));
    // No Doeblin minorization exists here; the kernel construction does not
    // read the certificate constants, so a hand-made one is enough.
    CHECK_FALSE(certify(c, 3, 60).valid);
    CVCertificate cert;
    cert.t0 = 3;
    cert.c1 = 0.5;
    cert.c2 = 1.0;
    cert.valid = true;
    const auto qp = build_qprocess(c, cert, 30);
    const Matrix& q = qp.kernel(0);
    CHECK(q.topLeftCorner(3, 3) == c.chain().kernel.matrix().topLeftCorner(3, 3));
}

TEST_CASE("eta matches the Perron vector on constant boundaries") {
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
        const auto c = random_chain(derive_seed(31, seed), ScheduleKind::Constant);
        const auto cert = certify(c, 3, 300);
        if (!cert.valid) continue;
        const auto eta = compute_eta(c, cert, eta_horizon_for(cert, 5, 1e-13));
        const auto triple = qsd_fixed(c.chain(), c.schedule().absorbing(0));
        for (Time s = 0; s <= 5; ++s)
            CHECK((eta.at(s) - triple.eta).cwiseAbs().maxCoeff() <= 10.0 * eta.error_bound(s) + 1e-12);
    }
}

TEST_CASE("Q-process invariants on random chains") {
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto c = random_chain(derive_seed(41, seed), static_cast<ScheduleKind>(seed % 3));
        const auto cert = certify(c, 3, 300);
        if (!cert.valid) continue;
        ++checked;
        const Time t_eta = eta_horizon_for(cert, 10, 1e-13);
        const auto qp = build_qprocess(c, cert, t_eta);
        const auto& eta = qp.eta();
        for (Time s = 0; s < 10; ++s) {
            const Matrix& q = qp.kernel(s);
            for (auto x : c.schedule().survival(s).members()) {
                CHECK(std::abs(q.row(static_cast<Eigen::Index>(x)).sum() - 1.0) <= 1e-10);
                CHECK(eta.at(s)[static_cast<Eigen::Index>(x)] > 0.0);
            }
            // Harmonic up to the slice factor.
            const Vector pushed = c.step_matrix(s) * eta.at(s + 1);
            const double rate = eta.slice_rates[static_cast<std::size_t>(s)];
            CHECK((pushed - rate * eta.at(s)).cwiseAbs().maxCoeff() <= eta.error_bound(s) + 1e-12);
            // Absolutely continuous w.r.t. the killed kernel.
            for (Eigen::Index i = 0; i < q.rows(); ++i)
                for (Eigen::Index j = 0; j < q.cols(); ++j)
                    if (c.step_matrix(s)(i, j) == 0.0) CHECK(q(i, j) == 0.0);
        }
        const auto dc = d_table(c, cert.t0, 300);
        for (Time s = 0; s < 3; ++s) {
            const auto alive = c.schedule().survival(s).members();
            for (Time t = s; t <= s + 7; ++t) {
                const double bound = mixing_bound(dc, cert, s, t);
                CHECK(bound <= 2.0 * std::pow(1.0 - cert.c1c2(), static_cast<double>((t - s) / cert.t0)) + 1e-12);
                for (auto x : alive)
                    for (auto y : alive)
                        CHECK(tv(q_marginal(qp, s, x, t - s), q_marginal(qp, s, y, t - s)) <=
                              bound + 2.0 * eta.error_bound(s) + 1e-12);
            }
        }
    }
    CHECK(checked >= 10);
}

TEST_CASE("mixing bound arithmetic") {
    const auto c = chain_a();
    const auto cert = certify(c, 3, 200);
    const auto dc = d_table(c, 1, 200);
    CHECK(mixing_bound(dc, cert, 0, 0) == 2.0);
    CHECK(mixing_bound(dc, cert, 0, 3) == doctest::Approx(0.00390625).epsilon(1e-12));
    double prev = 3.0;
    for (Time t = 0; t < 10; ++t) {
        CHECK(mixing_bound(dc, cert, 0, t) <= prev);
        prev = mixing_bound(dc, cert, 0, t);
    }
    CHECK_THROWS_AS(mixing_bound(dc, cert, 4, 2), Error);
}
