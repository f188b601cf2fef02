#pragma once

// Doeblin-after-conditioning certificates for chains with a moving boundary.
//
// A certificate (t0, c1, c2, nu) asserts that for every s and x in E_s
//   P_x(X_{t0} in . | tau_{A o theta_s} > t0) >= c1 nu_{s+t0}
// and for every s, t and x in E_s
//   P_{nu_s}(tau_{A o theta_s} > t) >= c2 P_x(tau_{A o theta_s} > t).
// Infima over t are truncated at a finite horizon; the certificate records the
// horizon and a stabilization diagnostic for the truncated ratio.

#include "qexodus/chain.hpp"

#include <map>

namespace qexodus {

inline constexpr double kStabilizationThreshold = 1e-6;
inline constexpr double kMinimumC2 = 1e-12;

struct Minorization {
    double c1 = 0.0;
    Measure nu;  // normalized entrywise minimum; all-zero when c1 == 0
};

struct HarnackEstimate {
    double c2 = 1.0;
    // (max - min) / min of the survival ratio over the last ceil(horizon/4) times.
    double stabilization = 0.0;
};

struct CVCertificate {
    Time t0 = 1;
    double c1 = 0.0;
    double c2 = 0.0;
    // Keyed by s in [0, schedule window): the measure nu_{s+t0}.
    std::map<Time, Measure> nu;
    Time horizon_used = 0;
    double stabilization = 0.0;
    bool valid = false;

    double c1c2() const { return c1 * c2; }
    // nu_u for u >= t0, resolved through the schedule's canonical times.
    const Measure& nu_at(const BoundarySchedule& schedule, Time u) const;
};

struct DCoefficient {
    double d = 0.0;
    double d_prime = 0.0;
};

// d_s and d'_s for s >= t0.  Both depend on s only through canonical(s - t0),
// so the table holds one entry per canonical time and lookups resolve any s.
class DCoefficients {
  public:
    DCoefficients() = default;
    DCoefficients(BoundarySchedule schedule, Time t0, Time horizon, std::vector<DCoefficient> table);

    Time t0() const noexcept { return t0_; }
    Time horizon_used() const noexcept { return horizon_; }
    const std::vector<DCoefficient>& table() const noexcept { return table_; }

    // Throws Window for s < t0.
    const DCoefficient& at(Time s) const;
    double d(Time s) const { return at(s).d; }
    double d_prime(Time s) const { return at(s).d_prime; }

  private:
    std::optional<BoundarySchedule> schedule_;
    Time t0_ = 0;
    Time horizon_ = 0;
    std::vector<DCoefficient> table_;
};

Minorization minorize(const KilledChain& chain, Time s, Time t0);

HarnackEstimate harnack_constant(const KilledChain& chain, const Measure& nu, Time s, Time horizon);

// v_{s+t0,x1,x2}: entrywise min of the two conditioned laws started at time s.
Measure pair_minimum_measure(const KilledChain& chain, Time s, Time t0, std::size_t x1, std::size_t x2);
// v_{s+t0}: entrywise min over every x in E_s.
Measure all_minimum_measure(const KilledChain& chain, Time s, Time t0);

// Pass s >= t0; the minimum measures are taken from time s - t0.
DCoefficient d_coefficients(const KilledChain& chain, Time s, Time t0, Time horizon);
DCoefficients d_table(const KilledChain& chain, Time t0, Time horizon);

// Evaluates Assumption-type constants for one fixed t0 over every canonical s.
CVCertificate certificate_for(const KilledChain& chain, Time t0, Time horizon);

// Searches t0 in [1, t0_max] (multiples of the period for periodic schedules).
// Candidates are ranked by -log(1 - c1c2) / t0, the rate per unit time, with
// the smallest t0 kept on ties (relative 1e-9).
CVCertificate certify(const KilledChain& chain, Time t0_max, Time horizon);

}  // namespace qexodus
