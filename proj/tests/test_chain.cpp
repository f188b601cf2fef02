#include "support/fixtures.hpp"

using namespace qexodus;
using namespace fixtures;

TEST_CASE("restricted step on CHAIN-A") {
    const auto c = chain_a();
    const auto step = c.restricted_step(0, 0);
    CHECK(step.values.rows() == 2);
    CHECK(step.values(0, 0) == 0.5);
    CHECK(step.values(0, 1) == 0.3);
    CHECK(step.values(1, 0) == 0.4);
    CHECK(step.values(1, 1) == 0.4);
    CHECK(step.row_sums()[0] == doctest::Approx(0.8));
    CHECK(step.row_sums()[1] == doctest::Approx(0.8));
}

TEST_CASE("never-reached boundary leaves rows stochastic") {
    auto chain = absorbed({"x", "y", "z"}, {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    KilledChain c(std::move(chain), BoundarySchedule::constant(StateSet::of(3, {2})));
    const auto step = c.restricted_step(0, 0);
    CHECK(step.row_sums()[0] == 1.0);
    CHECK(step.row_sums()[1] == 1.0);
}

TEST_CASE("periodic restricted steps repeat") {
    auto chain = absorbed({"p", "q", "r", "∂"}, {{0.2, 0.3, 0.4, 0.1},
                                                 {0.3, 0.3, 0.3, 0.1},
                                                 {0.5, 0.2, 0.2, 0.1},
                                                 {0, 0, 0, 1}});
    KilledChain c(std::move(chain),
                  BoundarySchedule::periodic({StateSet::of(4, {1, 3}), StateSet::of(4, {3})}));
    const auto s0 = c.restricted_step(0, 0);
    const auto s2 = c.restricted_step(2, 0);
    CHECK(s0.values == s2.values);
    CHECK(s0.rows == s2.rows);
    for (Time s = 0; s < 4; ++s)
        for (Time t = 0; t < 6; ++t)
            for (auto x : c.schedule().survival(s).members()) CHECK(c.survival(x, s, t) == c.survival(x, s + 2, t));
}

TEST_CASE("survival on CHAIN-A") {
    const auto c = chain_a();
    CHECK(c.survival(0, 0, 0) == 1.0);
    CHECK(c.survival(0, 0, 1) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(c.survival(0, 0, 2) == doctest::Approx(0.64).epsilon(1e-15));
    CHECK(c.survival(0, 0, 2, NumericsOptions{true}) == doctest::Approx(0.64).epsilon(1e-14));
    CHECK_THROWS_AS(c.survival(2, 0, 1), Error);
    try {
        c.survival(2, 0, 1);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::StartingInBoundary);
    }
}

TEST_CASE("deep horizons underflow loudly") {
    const auto c = chain_a();
    // 0.8^4000 is far below 1e-300.
    try {
        c.survival(0, 0, 4000);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::HorizonTooDeep);
    }
    CHECK(c.log_survival(0, 0, 4000) == doctest::Approx(4000 * std::log(0.8)).epsilon(1e-12));
    try {
        c.conditioned_law(Measure::dirac(3, 0), 0, 4000);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ConditioningOnNull);
    }
    const auto law = c.conditioned_law(Measure::dirac(3, 0), 0, 4000, NumericsOptions{true});
    CHECK(law[0] == doctest::Approx(4.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("conditioned laws on CHAIN-A") {
    const auto c = chain_a();
    const auto a = c.conditioned_law(Measure::dirac(3, 0), 0, 1);
    CHECK(a[0] == doctest::Approx(0.625));
    CHECK(a[1] == doctest::Approx(0.375));
    const auto b = c.conditioned_law(Measure::dirac(3, 1), 0, 1);
    CHECK(b[0] == doctest::Approx(0.5));
    CHECK(b[1] == doctest::Approx(0.5));
    const Measure mu{Vector{{0.3, 0.7, 0.0}}, true};
    CHECK(c.conditioned_law(mu, 5, 0).weights == mu.weights);
}

TEST_CASE("bridge marginals") {
    const auto c = chain_a();
    const auto m = c.bridge_marginal(Measure::dirac(3, 0), 0, 1, 2);
    CHECK(m[0] == doctest::Approx(0.625));
    CHECK(m[1] == doctest::Approx(0.375));
    const auto k0 = c.bridge_marginal(Measure::dirac(3, 1), 0, 0, 5);
    CHECK(k0.weights == Measure::dirac(3, 1).weights);

    const auto conv = converging_three();
    const Measure mu{Vector{{0.2, 0.0, 0.8, 0.0}}, true};
    for (Time t = 0; t < 6; ++t)
        CHECK(conv.bridge_marginal(mu, 1, t, t).weights == conv.conditioned_law(mu, 1, t).weights);
}

TEST_CASE("semigroup property on random chains") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto c = random_chain(derive_seed(7, seed), static_cast<ScheduleKind>(seed % 3));
        const auto x = c.schedule().survival(0).members().front();
        const auto mu = Measure::dirac(c.size(), x);
        for (Time t = 0; t <= 4; ++t)
            for (Time u = 0; t + u <= 8; ++u) {
                const auto two = c.conditioned_law(c.conditioned_law(mu, 0, t), t, u);
                const auto one = c.conditioned_law(mu, 0, t + u);
                CHECK((two.weights - one.weights).cwiseAbs().maxCoeff() <= 1e-10);
            }
    }
}

TEST_CASE("survival is monotone and products contract") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto c = random_chain(derive_seed(11, seed), static_cast<ScheduleKind>(seed % 3));
        for (Time s = 0; s < 4; ++s) {
            Matrix prod = Matrix::Identity(static_cast<Eigen::Index>(c.size()), static_cast<Eigen::Index>(c.size()));
            for (Time k = 0; k < 8; ++k) {
                prod = prod * c.step_matrix(s + k);
                CHECK(prod.rowwise().sum().maxCoeff() <= 1.0 + 1e-12);
                CHECK(prod.minCoeff() >= 0.0);
            }
            for (auto x : c.schedule().survival(s).members())
                for (Time t = 0; t < 10; ++t) CHECK(c.survival(x, s, t + 1) <= c.survival(x, s, t));
        }
    }
}

TEST_CASE("oracle agreement on small chains") {
    RandomChainOptions small;
    small.max_states = 4;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        const auto c = random_chain(derive_seed(3, seed), static_cast<ScheduleKind>(seed % 3), small);
        const auto g = grid(c);
        const auto live = alive(c);
        for (Time s = 0; s < 3; ++s)
            for (auto x : c.schedule().survival(s).members())
                for (Time t = 0; t <= 6; ++t) {
                    const auto brute = oracle::enumerate(g, live, x, s, t);
                    CHECK(std::abs(c.survival(x, s, t) - brute.survival) <= 1e-12);
                    if (brute.survival == 0.0) continue;
                    const auto mu = Measure::dirac(c.size(), x);
                    CHECK(max_diff(c.conditioned_law(mu, s, t).weights, oracle::normalize(brute.law)) <= 1e-12);
                    for (Time k = 0; k <= t; ++k)
                        CHECK(max_diff(c.bridge_marginal(mu, s, k, t).weights,
                                       oracle::normalize(brute.bridge[static_cast<std::size_t>(k)])) <= 1e-12);
                }
    }
}

TEST_CASE("schedule validation and canonical times") {
    CHECK_THROWS_AS(BoundarySchedule::constant(StateSet::of(2, {})), Error);
    CHECK_THROWS_AS(BoundarySchedule::constant(StateSet::of(2, {0, 1})), Error);
    // A_1 must be contained in A_0.
    CHECK_THROWS_AS(BoundarySchedule::converging({StateSet::of(3, {2})}, StateSet::of(3, {1, 2})), Error);
    const auto conv = converging_three().schedule();
    CHECK(conv.stabilization_time() == 3);
    CHECK(conv.absorbing(2) == StateSet::of(4, {1, 3}));
    CHECK(conv.absorbing(3) == StateSet::of(4, {3}));
    CHECK(conv.absorbing(1000) == conv.limit());
    CHECK(conv.shift(2).absorbing(0) == conv.absorbing(2));
    CHECK(conv.shift(2).absorbing(1) == conv.limit());
    const auto per = BoundarySchedule::periodic({StateSet::of(3, {2}), StateSet::of(3, {0, 2})});
    CHECK(per.period() == 2);
    CHECK(per.absorbing(5) == StateSet::of(3, {0, 2}));
    CHECK(per.shift(1).absorbing(0) == per.absorbing(1));
}

TEST_CASE("kernel validation") {
    CHECK_THROWS_AS(absorbed({"x", "y"}, {{0.5, 0.4}, {0, 1}}), Error);
    CHECK_THROWS_AS(absorbed({"x", "y"}, {{1.1, -0.1}, {0, 1}}), Error);
    CHECK_THROWS_AS(absorbed({"x", "x"}, {{1, 0}, {0, 1}}), Error);
    const auto c = chain_a();
    CHECK_THROWS_AS(c.conditioned_law(Measure{Vector{{0.5, 0.4, 0.0}}, true}, 0, 1), Error);
    CHECK_THROWS_AS(c.conditioned_law(Measure{Vector{{0.5, 0.0, 0.5}}, true}, 0, 1), Error);
}
