#pragma once

// Exact checks of the quantitative convergence bounds on finite chains.
//
// Bound checks compare time-t marginals, which lower-bound the trajectory
// total variation the bounds control, so a correct bound never fails here.

#include "qexodus/limits.hpp"
#include "qexodus/seeding.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>

namespace qexodus {

inline constexpr double kMarginTolerance = 1e-10;

// sup_B |mu1(B) - mu2(B)| = half the l1 distance.
double tv(const Measure& mu1, const Measure& mu2);

struct BoundCheckRecord {
    std::uint64_t seed = 0;
    Time s = 0;
    Time t = 0;
    Time T = 0;
    std::string x;
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;
    double constant_used = 0.0;
    bool pass = true;
};

BoundCheckRecord make_record(std::uint64_t seed, Time s, Time t, Time T, std::string x, double lhs, double rhs,
                             double constant_used);

// Prefactor 1 / ((c1c2)^3 P_x(tau > t0)) * P_x(tau > t) / sup_y P_y(tau_{theta_{s+t0}} > t),
// times (1 - c1c2)^floor(T / t0).
double theorem1_bound(const CVCertificate& cert, const KilledChain& chain, std::size_t x, Time s, Time t, Time T);

std::vector<BoundCheckRecord> check_qprocess_convergence(const CVCertificate& cert, const KilledChain& chain,
                                                         const QProcess& qp, std::size_t x, Time s, Time t,
                                                         const std::vector<Time>& T_grid, std::uint64_t seed = 0);

// TV(phi_{s,t}(mu1), phi_{s,t}(mu2)) against 2 prod (1 - d_{t-k}); t is the absolute end time.
std::vector<BoundCheckRecord> merging_check(const KilledChain& chain, const DCoefficients& dc, Time s, Time t,
                                            const std::vector<std::pair<Measure, Measure>>& pairs,
                                            std::uint64_t seed = 0);

// sup_{t <= horizon} P_x(tau_A > t) / sup_{y in E_t0} P_y(tau_{A o theta_t0} > t).
double cs_ratio(const KilledChain& chain, const CVCertificate& cert, std::size_t x, Time horizon);

// For each s: sup_{t,T <= window} TV(P_x(X_t | tau_{A o theta_s} > t+T), P_x(X_t | tau_{A_inf} > t+T)).
std::map<Time, double> uniform_gap(const KilledChain& chain, std::size_t x, const std::vector<Time>& s_grid, Time window);

// C_{s,pi} built from d'_{s+t0}; exposed for inspection only.
double continuity_constant(const CVCertificate& cert, const DCoefficients& dc, const KilledChain& chain, Time s,
                           const Measure& pi);

// ----------------------------------------------------------- random suites

struct RandomChainOptions {
    std::size_t min_states = 3;  // including the cemetery
    std::size_t max_states = 6;
    double max_kill = 0.3;
    double sparsity = 0.0;  // probability that an off-diagonal live entry is zeroed
    Time max_period = 3;
    Time max_stabilization = 4;
};

KilledChain random_chain(std::uint64_t seed, ScheduleKind kind, const RandomChainOptions& opts = {});

struct BoundSuiteOptions {
    std::uint64_t seed = 1;
    std::size_t chains = 200;
    Time s_max = 4;
    Time t_max = 6;
    Time T_max = 12;
    Time t0_max = 3;
    Time horizon = 400;
    bool theorem_bound = true;
    bool merging = true;
    unsigned threads = 1;
    RandomChainOptions chain_options{};
};

struct BoundSuiteResult {
    std::vector<BoundCheckRecord> records;          // Q-process bound, one per (s, x, t, T)
    std::vector<BoundCheckRecord> merging_records;  // merging bound; t is absolute, T unused
    std::size_t candidates = 0;
    std::size_t certified = 0;
    std::size_t theorem_failures = 0;
    std::size_t merging_failures = 0;
    std::size_t noise = 0;  // margins in [-1e-10, 0)
};

// Q-process bound records for one certified chain.
std::vector<BoundCheckRecord> bound_records(const KilledChain& chain, const CVCertificate& cert, std::uint64_t seed,
                                            const BoundSuiteOptions& opts);

// Merging records for one certified chain: every pair of dirac starts in E_s
// plus (uniform on E_s, first survivor), for t in [s, s + t_max].
std::vector<BoundCheckRecord> merging_records(const KilledChain& chain, const CVCertificate& cert, std::uint64_t seed,
                                              const BoundSuiteOptions& opts);

BoundSuiteResult run_bound_suite(const BoundSuiteOptions& opts);

}  // namespace qexodus
