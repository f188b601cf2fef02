#include "qexodus/qprocess.hpp"

#include <algorithm>
#include <cmath>

namespace qexodus {

const Vector& EtaTable::at(Time s) const {
    if (s < 0 || s > last_time())
        fail(ErrorKind::Window, "eta is tabulated for s in [0, " + std::to_string(last_time()) + "], got " + std::to_string(s));
    return values[static_cast<std::size_t>(s)];
}

double EtaTable::error_bound(Time s) const {
    at(s);
    return error_bounds[static_cast<std::size_t>(s)];
}

QProcess::QProcess(EtaTable eta, std::vector<Matrix> kernels, CVCertificate certificate)
    : eta_(std::move(eta)), kernels_(std::move(kernels)), cert_(std::move(certificate)) {}

const Matrix& QProcess::kernel(Time s) const {
    if (s < 0 || s > last_kernel_time())
        fail(ErrorKind::Window,
             "Q-kernels are tabulated for s in [0, " + std::to_string(last_kernel_time()) + "], got " + std::to_string(s));
    return kernels_[static_cast<std::size_t>(s)];
}

std::optional<std::size_t> default_reference_state(const KilledChain& chain) {
    const auto& schedule = chain.schedule();
    std::optional<std::size_t> best;
    for (std::size_t x = 0; x < chain.size(); ++x) {
        bool always = true;
        for (Time u = 0; u < schedule.window() && always; ++u) always = schedule.survival(u).contains(x);
        if (!always) continue;
        if (!best || chain.states().label(x) < chain.states().label(*best)) best = x;
    }
    return best;
}

EtaTable compute_eta(const KilledChain& chain, const CVCertificate& cert, Time t_eta,
                     std::optional<std::size_t> reference) {
    if (!cert.valid) fail(ErrorKind::CertificateRequired, "eta needs a valid certificate");
    if (t_eta < cert.t0) fail(ErrorKind::InvalidArgument, "T_eta must be at least t0");
    const auto& schedule = chain.schedule();
    if (!reference) reference = default_reference_state(chain);
    if (reference) {
        for (Time u = 0; u < schedule.window(); ++u)
            if (!schedule.survival(u).contains(*reference))
                fail(ErrorKind::InvalidArgument,
                     "reference state '" + chain.states().label(*reference) + "' is not in every survival set");
    }

    EtaTable table;
    table.truncation_horizon = t_eta;
    table.reference_state = reference;
    table.normalization = reference ? EtaNormalization::ReferenceState : EtaNormalization::NuMass;

    const auto profiles = chain.backward_profiles(0, t_eta);
    const Time last = t_eta - cert.t0;
    const double c = cert.c1c2();
    table.values.reserve(static_cast<std::size_t>(last + 1));
    for (Time s = 0; s <= last; ++s) {
        const Vector& b = profiles[static_cast<std::size_t>(s)];
        double norm = 0.0;
        if (reference) {
            norm = b[static_cast<Eigen::Index>(*reference)];
        } else {
            const Measure nu = s >= cert.t0 ? cert.nu_at(schedule, s) : Measure::uniform(schedule.survival(s));
            norm = nu.weights.dot(b);
        }
        if (!(norm > 0.0)) fail(ErrorKind::HorizonTooDeep, "eta normalization vanished at s=" + std::to_string(s));
        Vector eta = b / norm;
        for (auto x : schedule.survival(s).members())
            if (!(eta[static_cast<Eigen::Index>(x)] > 0.0))
                fail(ErrorKind::HorizonTooDeep, "eta_" + std::to_string(s) + " underflows at state '" +
                                                    chain.states().label(x) + "'");
        table.values.push_back(std::move(eta));
        table.error_bounds.push_back(std::pow(1.0 - c, static_cast<double>((t_eta - s) / cert.t0)) / c);
    }
    for (Time s = 0; s < last; ++s) {
        const Vector pushed = chain.step_matrix(s) * table.values[static_cast<std::size_t>(s + 1)];
        table.slice_rates.push_back(pushed.sum() / table.values[static_cast<std::size_t>(s)].sum());
    }
    return table;
}

QProcess build_qprocess(const KilledChain& chain, const CVCertificate& cert, Time t_eta,
                        std::optional<std::size_t> reference) {
    auto eta = compute_eta(chain, cert, t_eta, reference);
    std::vector<Matrix> kernels;
    for (Time s = 0; s < eta.last_time(); ++s) {
        const Matrix& k = chain.step_matrix(s);
        const Vector& next = eta.values[static_cast<std::size_t>(s + 1)];
        Matrix q = k * next.asDiagonal();
        for (auto x : chain.schedule().survival(s).members()) {
            const auto row = static_cast<Eigen::Index>(x);
            const double z = q.row(row).sum();
            if (!(z > 0.0)) fail(ErrorKind::HorizonTooDeep, "Doob transform row vanishes at s=" + std::to_string(s));
            q.row(row) /= z;
        }
        kernels.push_back(std::move(q));
    }
    return QProcess(std::move(eta), std::move(kernels), cert);
}

const Matrix& q_kernel(const QProcess& qp, Time s) { return qp.kernel(s); }

Measure q_marginal(const QProcess& qp, Time s, const Measure& mu, Time t) {
    if (t < 0) fail(ErrorKind::InvalidArgument, "negative time");
    const Vector& eta = qp.eta().at(s);
    if (mu.size() != static_cast<std::size_t>(eta.size())) fail(ErrorKind::Shape, "measure dimension mismatch");
    for (std::size_t x = 0; x < mu.size(); ++x)
        if (mu[x] > 0.0 && !(eta[static_cast<Eigen::Index>(x)] > 0.0))
            fail(ErrorKind::StartingInBoundary, "initial measure charges a state outside E_" + std::to_string(s));
    if (t > 0) qp.kernel(s + t - 1);
    Eigen::RowVectorXd v = mu.weights.transpose();
    for (Time k = 0; k < t; ++k) v = v * qp.kernel(s + k);
    return Measure{v.transpose(), true};
}

Measure q_marginal(const QProcess& qp, Time s, std::size_t x, Time t) {
    return q_marginal(qp, s, Measure::dirac(static_cast<std::size_t>(qp.eta().at(s).size()), x), t);
}

double mixing_bound(const DCoefficients& dc, Time s, Time t) {
    if (t < s) fail(ErrorKind::InvalidArgument, "mixing bound needs t >= s");
    const Time blocks = (t - s) / dc.t0();
    double product = 1.0;
    for (Time k = 0; k < blocks; ++k) product *= 1.0 - dc.d(t - k);
    return 2.0 * product;
}

double mixing_bound(const DCoefficients& dc, const CVCertificate& cert, Time s, Time t) {
    if (dc.t0() != cert.t0) fail(ErrorKind::InvalidArgument, "d-table and certificate use different t0");
    return mixing_bound(dc, s, t);
}

Time eta_horizon_for(const CVCertificate& cert, Time s_max, double target, Time cap) {
    const double c = cert.c1c2();
    Time blocks = 1;
    if (c < 1.0) {
        const double needed = std::log(target * c) / std::log(1.0 - c);
        blocks = std::max<Time>(1, static_cast<Time>(std::ceil(needed)));
    }
    const double horizon = static_cast<double>(s_max) + static_cast<double>(blocks + 1) * static_cast<double>(cert.t0);
    return std::min<Time>(cap, static_cast<Time>(horizon));
}

}  // namespace qexodus
