#pragma once

#include "qexodus/qprocess.hpp"

#include <string>
#include <utility>

namespace qexodus {

struct PowerIterationOptions {
    std::int64_t max_iterations = 1'000'000;
    double tv_tolerance = 1e-14;
};

struct PerronPair {
    Vector left;   // normalized to mass 1
    Vector right;  // right eigenvector, normalized by the caller's convention
    double rho = 0.0;
    double left_residual = 0.0;   // |alpha K - rho alpha|_1
    double right_residual = 0.0;  // |K eta - rho eta|_inf
    std::int64_t iterations = 0;
};

// Perron pair of a non-negative matrix restricted to `support`, by power
// iteration on (I + K) / 2 from the uniform vector.  The lazy matrix has the
// same eigenvectors and no periodic oscillation.  The right vector has
// maximum 1.
PerronPair perron_pair(const Matrix& k, const StateSet& support, PowerIterationOptions opts = {});

// Invariant law of a stochastic matrix restricted to `support`, by power
// iteration on the lazy chain (I + Q) / 2, which has the same fixed points.
Vector invariant_measure(const Matrix& q, const StateSet& support, PowerIterationOptions opts = {});

struct QSDTriple {
    Measure alpha;
    double rho = 0.0;     // per-step survival under alpha
    double lambda = 0.0;  // -ln rho
    Vector eta;           // eta(reference) = 1
    std::size_t reference = 0;
    double left_residual = 0.0;
    double right_residual = 0.0;
};

QSDTriple qsd_fixed(const AbsorbedChain& chain, const StateSet& absorbing, PowerIterationOptions opts = {});

enum class LimitKind { QuasiLimiting, QuasiErgodic };

std::string_view to_string(LimitKind kind);

struct LimitReport {
    LimitKind kind = LimitKind::QuasiLimiting;
    Measure value;
    std::vector<std::pair<Time, double>> diagnostics;  // (time, TV to value)
    bool converged = false;
    std::optional<double> independence_gap;
    // Quasi-ergodic reports: max over the grid of n * TV(n).
    std::optional<double> rate_constant;
};

// Tracks P_mu(X_t in . | tau_A > t) for t <= t_max against alpha_inf.
LimitReport quasi_limiting(const KilledChain& chain, const Measure& mu, Time t_max, double tol);

// (1 / (n+1)) sum_{k=0}^{n} P_mu(X_k in . | tau_A > n).
Measure quasi_ergodic(const KilledChain& chain, const Measure& mu, Time n);

struct SkeletonChain {
    Matrix kernel;  // gamma-step killed transitions on E_0
    Time period = 1;
    StateSet survivors;

    // P_x(tau_partial > n) for the skeleton.
    double survival(std::size_t x, Time n) const;
};

// Periodic schedules (constant ones count as gamma = 1).
SkeletonChain skeleton(const KilledChain& chain);

Measure beta_gamma(const KilledChain& chain, const CVCertificate& cert);

// Invariant law of the Doob transform of the A_inf-killed chain.
Measure beta_infinity(const KilledChain& chain);

Measure qed_limit(const KilledChain& chain, const CVCertificate& cert, const QProcess& qp);

// Quasi-ergodic report over a grid of n against qed_limit.
LimitReport quasi_ergodic_report(const KilledChain& chain, const CVCertificate& cert, const QProcess& qp,
                                 const Measure& mu, const std::vector<Time>& n_grid, double tol);

}  // namespace qexodus
