#pragma once

// The Q-process: the chain conditioned never to hit the moving boundary.
//
// eta_s(x) is the ratio limit of P_x(tau_{A o theta_s} > T - s) against a
// reference state, estimated at a finite horizon T_eta.  Each time slice is
// normalized separately (eta_s(y*) = 1), so eta is space-time harmonic up to
// a per-slice factor: (K_s eta_{s+1})(x) = rate_s * eta_s(x).  The Doob
// transform divides by exactly that factor, which is what the Q-process law
// depends on.

#include "qexodus/cv_certify.hpp"

namespace qexodus {

enum class EtaNormalization { ReferenceState, NuMass };

struct EtaTable {
    // values[s] for s = 0..last_time(): full-length vector, zero off E_s.
    std::vector<Vector> values;
    // (K_s eta_{s+1})(x) / eta_s(x); defined for s < last_time().
    std::vector<double> slice_rates;
    // (1 / c1c2) (1 - c1c2)^floor((T_eta - s) / t0), per s.
    std::vector<double> error_bounds;
    EtaNormalization normalization = EtaNormalization::ReferenceState;
    std::optional<std::size_t> reference_state;
    Time truncation_horizon = 0;

    Time last_time() const noexcept { return static_cast<Time>(values.size()) - 1; }
    const Vector& at(Time s) const;
    double error_bound(Time s) const;
};

class QProcess {
  public:
    QProcess(EtaTable eta, std::vector<Matrix> kernels, CVCertificate certificate);

    const EtaTable& eta() const noexcept { return eta_; }
    const CVCertificate& certificate() const noexcept { return cert_; }
    // Kernels exist for s in [0, last_kernel_time()].
    Time last_kernel_time() const noexcept { return static_cast<Time>(kernels_.size()) - 1; }
    const std::vector<Matrix>& kernels() const noexcept { return kernels_; }

    const Matrix& kernel(Time s) const;

  private:
    EtaTable eta_;
    std::vector<Matrix> kernels_;
    CVCertificate cert_;
};

// Reference state: lexicographically smallest label surviving at every time,
// or nullopt when no such state exists.
std::optional<std::size_t> default_reference_state(const KilledChain& chain);

// Tabulates eta_s for s = 0..T_eta - t0.
EtaTable compute_eta(const KilledChain& chain, const CVCertificate& cert, Time t_eta,
                     std::optional<std::size_t> reference = std::nullopt);

QProcess build_qprocess(const KilledChain& chain, const CVCertificate& cert, Time t_eta,
                        std::optional<std::size_t> reference = std::nullopt);

const Matrix& q_kernel(const QProcess& qp, Time s);

// Q_{s,x}(X_{s+t} in .).
Measure q_marginal(const QProcess& qp, Time s, std::size_t x, Time t);
Measure q_marginal(const QProcess& qp, Time s, const Measure& mu, Time t);

// 2 * prod_{k=0}^{floor((t-s)/t0)-1} (1 - d_{t-k}).
double mixing_bound(const DCoefficients& dc, Time s, Time t);
double mixing_bound(const DCoefficients& dc, const CVCertificate& cert, Time s, Time t);

// Smallest horizon whose eta error bound at time `s_max` is below `target`,
// capped at `cap`.
Time eta_horizon_for(const CVCertificate& cert, Time s_max, double target, Time cap = 200000);

}  // namespace qexodus
