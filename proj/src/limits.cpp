#include "qexodus/limits.hpp"

#include "qexodus/convergence_lab.hpp"

#include <algorithm>
#include <cmath>

namespace qexodus {

namespace {

using Index = Eigen::Index;

Matrix restrict_to(const Matrix& k, const std::vector<std::size_t>& idx) {
    const auto n = static_cast<Index>(idx.size());
    Matrix out(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) out(i, j) = k(static_cast<Index>(idx[i]), static_cast<Index>(idx[j]));
    return out;
}

Vector embed(const Vector& v, const std::vector<std::size_t>& idx, Index universe) {
    Vector out = Vector::Zero(universe);
    for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Index>(idx[i])] = v[static_cast<Index>(i)];
    return out;
}

void require_square(const Matrix& k, const StateSet& support) {
    if (k.rows() != k.cols() || static_cast<std::size_t>(k.rows()) != support.universe())
        fail(ErrorKind::Shape, "matrix and support have different dimensions");
    if (support.empty()) fail(ErrorKind::InvalidArgument, "empty support");
}

[[noreturn]] void not_converged(const char* what, std::int64_t cap, double residual) {
    fail(ErrorKind::PowerIteration, std::string(what) + " did not converge after " + std::to_string(cap) +
                                        " iterations (last change " + std::to_string(residual) + ")");
}

// Left fixed point of the lazy version of `k`, renormalized to mass 1 each step.
std::pair<Eigen::RowVectorXd, std::int64_t> left_iterate(const Matrix& k, const PowerIterationOptions& opts) {
    const Index n = k.rows();
    Eigen::RowVectorXd v = Eigen::RowVectorXd::Constant(n, 1.0 / static_cast<double>(n));
    double change = 1.0;
    for (std::int64_t i = 1; i <= opts.max_iterations; ++i) {
        Eigen::RowVectorXd w = 0.5 * (v + v * k);
        const double m = w.sum();
        if (!(m > 0.0)) fail(ErrorKind::ConditioningOnNull, "power iteration lost all mass");
        w /= m;
        change = 0.5 * (w - v).cwiseAbs().sum();
        v = std::move(w);
        if (change < opts.tv_tolerance) return {v, i};
    }
    not_converged("left power iteration", opts.max_iterations, change);
}

std::pair<Vector, std::int64_t> right_iterate(const Matrix& k, const PowerIterationOptions& opts) {
    const Index n = k.rows();
    Vector u = Vector::Ones(n);
    double change = 1.0;
    for (std::int64_t i = 1; i <= opts.max_iterations; ++i) {
        Vector w = 0.5 * (u + k * u);
        const double m = w.maxCoeff();
        if (!(m > 0.0)) fail(ErrorKind::ConditioningOnNull, "power iteration lost all mass");
        w /= m;
        change = (w - u).cwiseAbs().maxCoeff();
        u = std::move(w);
        if (change < opts.tv_tolerance) return {u, i};
    }
    not_converged("right power iteration", opts.max_iterations, change);
}

StateSet limit_set(const BoundarySchedule& schedule) {
    if (schedule.kind() == ScheduleKind::Periodic && !schedule.is_effectively_constant())
        fail(ErrorKind::Kind, "periodic schedules have no limiting boundary");
    return schedule.is_effectively_constant() ? schedule.table().front() : schedule.limit();
}

bool periodic_like(const BoundarySchedule& schedule) {
    return schedule.kind() != ScheduleKind::Converging || schedule.is_effectively_constant();
}

// Doob transform of k by the positive right vector h with eigenvalue rho, on {h > 0}.
Matrix doob_transform(const Matrix& k, const Vector& h, double rho) {
    Matrix q = Matrix::Zero(k.rows(), k.cols());
    for (Index x = 0; x < k.rows(); ++x) {
        if (!(h[x] > 0.0)) continue;
        for (Index y = 0; y < k.cols(); ++y) q(x, y) = k(x, y) * h[y] / (rho * h[x]);
        q.row(x) /= q.row(x).sum();
    }
    return q;
}

StateSet positive_part(const Vector& h) {
    StateSet out(static_cast<std::size_t>(h.size()));
    for (Index i = 0; i < h.size(); ++i)
        if (h[i] > 0.0) out.insert(static_cast<std::size_t>(i));
    return out;
}

}  // namespace

std::string_view to_string(LimitKind kind) {
    return kind == LimitKind::QuasiLimiting ? "quasi_limiting" : "quasi_ergodic";
}

PerronPair perron_pair(const Matrix& k, const StateSet& support, PowerIterationOptions opts) {
    require_square(k, support);
    const auto idx = support.members();
    const Matrix r = restrict_to(k, idx);
    auto [left, left_iters] = left_iterate(r, opts);
    auto [right, right_iters] = right_iterate(r, opts);

    PerronPair out;
    out.rho = (left * r).sum();
    out.left = embed(left.transpose(), idx, k.rows());
    out.right = embed(right, idx, k.rows());
    out.left_residual = (left * r - out.rho * left).cwiseAbs().sum();
    out.right_residual = (r * right - out.rho * right).cwiseAbs().maxCoeff();
    out.iterations = std::max(left_iters, right_iters);
    return out;
}

Vector invariant_measure(const Matrix& q, const StateSet& support, PowerIterationOptions opts) {
    require_square(q, support);
    const auto idx = support.members();
    auto [left, iters] = left_iterate(restrict_to(q, idx), opts);
    (void)iters;
    return embed(left.transpose(), idx, q.rows());
}

QSDTriple qsd_fixed(const AbsorbedChain& chain, const StateSet& absorbing, PowerIterationOptions opts) {
    if (absorbing.universe() != chain.size()) fail(ErrorKind::Shape, "absorbing set has the wrong universe");
    const StateSet alive = absorbing.complement();
    if (alive.empty()) fail(ErrorKind::ScheduleDegenerate, "every state is absorbing");
    const auto pair = perron_pair(chain.kernel.matrix(), alive, opts);
    if (!(pair.rho > 0.0)) fail(ErrorKind::ConditioningOnNull, "restricted kernel is nilpotent");
    if (!(pair.rho < 1.0)) fail(ErrorKind::AssumptionViolation, "absorption is never reached (rho = 1)");

    QSDTriple out;
    std::optional<std::size_t> ref;
    for (auto x : alive.members())
        if (pair.right[static_cast<Index>(x)] > 0.0 && (!ref || chain.states.label(x) < chain.states.label(*ref)))
            ref = x;
    out.reference = *ref;
    const double scale = pair.right[static_cast<Index>(*ref)];
    out.eta = pair.right / scale;
    out.alpha = Measure{pair.left, true};
    out.rho = pair.rho;
    out.lambda = -std::log(pair.rho);
    out.left_residual = pair.left_residual;
    out.right_residual = pair.right_residual / scale;
    return out;
}

LimitReport quasi_limiting(const KilledChain& chain, const Measure& mu, Time t_max, double tol) {
    if (t_max < 0) fail(ErrorKind::InvalidArgument, "t_max must be non-negative");
    const auto& schedule = chain.schedule();
    const auto alpha = qsd_fixed(chain.chain(), limit_set(schedule)).alpha;

    LimitReport out;
    out.kind = LimitKind::QuasiLimiting;
    out.value = alpha;
    const auto laws = chain.forward_laws(mu, 0, t_max, NumericsOptions{true});
    for (Time t = 0; t <= t_max; ++t)
        out.diagnostics.emplace_back(t, tv(Measure{laws[static_cast<std::size_t>(t)], true}, alpha));

    const Time tail = (t_max + 7) / 8;
    out.converged = true;
    for (Time t = t_max - tail + 1; t <= t_max; ++t)
        out.converged = out.converged && out.diagnostics[static_cast<std::size_t>(std::max<Time>(t, 0))].second <= tol;

    if (schedule.kind() == ScheduleKind::Converging) {
        const Time s2 = 2;
        const auto other = chain.conditioned_law(Measure::uniform(schedule.survival(s2)), s2, t_max, NumericsOptions{true});
        out.independence_gap = tv(other, Measure{laws.back(), true});
        out.converged = out.converged && *out.independence_gap <= 2.0 * tol;
    }
    return out;
}

Measure quasi_ergodic(const KilledChain& chain, const Measure& mu, Time n) {
    if (n < 0) fail(ErrorKind::InvalidArgument, "n must be non-negative");
    if (n == 0) {
        chain.require_supported(mu, 0);
        return mu;
    }
    const auto forward = chain.forward_laws(mu, 0, n, NumericsOptions{true});
    const auto backward = chain.backward_profiles(0, n);
    Vector sum = Vector::Zero(static_cast<Index>(chain.size()));
    for (Time k = 0; k <= n; ++k) {
        const auto i = static_cast<std::size_t>(k);
        sum += renormalized(forward[i].cwiseProduct(backward[i])).weights;
    }
    return Measure{sum / static_cast<double>(n + 1), true};
}

double SkeletonChain::survival(std::size_t x, Time n) const {
    if (n < 0) fail(ErrorKind::InvalidArgument, "negative skeleton time");
    if (!survivors.contains(x)) fail(ErrorKind::StartingInBoundary, "skeleton start outside E_0");
    Vector b = survivors.indicator();
    for (Time k = 0; k < n; ++k) b = kernel * b;
    return b[static_cast<Index>(x)];
}

SkeletonChain skeleton(const KilledChain& chain) {
    const auto& schedule = chain.schedule();
    if (!periodic_like(schedule)) fail(ErrorKind::Kind, "skeleton needs a periodic schedule");
    SkeletonChain out;
    out.period = schedule.period();
    out.survivors = schedule.survival(0);
    out.kernel = chain.step_matrix(0);
    for (Time u = 1; u < out.period; ++u) out.kernel = (out.kernel * chain.step_matrix(u)).eval();
    return out;
}

Measure beta_gamma(const KilledChain& chain, const CVCertificate& cert) {
    const auto sk = skeleton(chain);
    if (!cert.valid) fail(ErrorKind::CertificateRequired, "beta_gamma needs a valid certificate");
    if (cert.t0 % sk.period != 0)
        fail(ErrorKind::AssumptionViolation,
             "certificate t0=" + std::to_string(cert.t0) + " is not a multiple of the period " + std::to_string(sk.period));
    const auto pair = perron_pair(sk.kernel, sk.survivors);
    const Matrix q = doob_transform(sk.kernel, pair.right, pair.rho);
    return Measure{invariant_measure(q, positive_part(pair.right)), true};
}

Measure beta_infinity(const KilledChain& chain) {
    const auto triple = qsd_fixed(chain.chain(), limit_set(chain.schedule()));
    const Matrix q = doob_transform(chain.chain().kernel.matrix(), triple.eta, triple.rho);
    return Measure{invariant_measure(q, positive_part(triple.eta)), true};
}

Measure qed_limit(const KilledChain& chain, const CVCertificate& cert, const QProcess& qp) {
    const auto& schedule = chain.schedule();
    if (schedule.kind() != ScheduleKind::Periodic) return beta_infinity(chain);
    const Time gamma = schedule.period();
    const auto beta = beta_gamma(chain, cert);
    Eigen::RowVectorXd v = beta.weights.transpose();
    Vector sum = Vector::Zero(v.size());
    for (Time u = 0; u < gamma; ++u) {
        sum += v.transpose();
        if (u + 1 < gamma) v = v * qp.kernel(u);
    }
    return Measure{sum / static_cast<double>(gamma), true};
}

LimitReport quasi_ergodic_report(const KilledChain& chain, const CVCertificate& cert, const QProcess& qp,
                                 const Measure& mu, const std::vector<Time>& n_grid, double tol) {
    LimitReport out;
    out.kind = LimitKind::QuasiErgodic;
    out.value = qed_limit(chain, cert, qp);
    double rate = 0.0;
    for (Time n : n_grid) {
        const double d = tv(quasi_ergodic(chain, mu, n), out.value);
        out.diagnostics.emplace_back(n, d);
        rate = std::max(rate, static_cast<double>(n) * d);
    }
    out.rate_constant = rate;
    out.converged = !out.diagnostics.empty() && out.diagnostics.back().second <= tol;
    return out;
}

}  // namespace qexodus
