#include "qexodus/cv_certify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qexodus {

namespace {

// Survival profiles S_t(y) = P_y(tau_{A o theta_s} > t), t = 0..horizon, each
// rescaled by its maximum.  Ratios against max_y S_t(y) are scale free.
std::vector<Vector> normalized_survival_profiles(const KilledChain& chain, Time s, Time horizon) {
    std::vector<Vector> out;
    out.reserve(static_cast<std::size_t>(horizon + 1));
    Time t = 0;
    for (auto& sv : chain.survival_sweep(s, horizon)) {
        const double top = sv.direction.maxCoeff();
        if (!(top > 0.0)) fail(ErrorKind::ConditioningOnNull, "no state survives to t=" + std::to_string(t));
        out.push_back(sv.direction / top);
        ++t;
    }
    return out;
}

struct RatioSummary {
    double infimum = std::numeric_limits<double>::infinity();
    double stabilization = 0.0;
};

// min over t of mu(S_t) / max S_t, with the tail-window diagnostic.
RatioSummary survival_ratio(const std::vector<Vector>& profiles, const Vector& mu) {
    RatioSummary out;
    const auto horizon = static_cast<Time>(profiles.size()) - 1;
    const Time window = (horizon + 3) / 4;
    double tail_min = std::numeric_limits<double>::infinity();
    double tail_max = -std::numeric_limits<double>::infinity();
    for (Time t = 0; t <= horizon; ++t) {
        const double r = mu.dot(profiles[static_cast<std::size_t>(t)]);
        out.infimum = std::min(out.infimum, r);
        if (t >= horizon - window) {
            tail_min = std::min(tail_min, r);
            tail_max = std::max(tail_max, r);
        }
    }
    if (horizon > 0) {
        out.stabilization = tail_min > 0.0 ? (tail_max - tail_min) / tail_min : std::numeric_limits<double>::infinity();
    }
    return out;
}

std::vector<Vector> conditioned_rows(const KilledChain& chain, Time s, Time t0, const std::vector<std::size_t>& from) {
    std::vector<Vector> rows;
    rows.reserve(from.size());
    for (auto x : from)
        rows.push_back(chain.conditioned_law(Measure::dirac(chain.size(), x), s, t0, NumericsOptions{true}).weights);
    return rows;
}

Vector entrywise_min(const std::vector<Vector>& rows) {
    Vector m = rows.front();
    for (std::size_t i = 1; i < rows.size(); ++i) m = m.cwiseMin(rows[i]);
    return m;
}

void require_in(const KilledChain& chain, std::size_t x, Time s) {
    if (x >= chain.size()) fail(ErrorKind::InvalidArgument, "state index out of range");
    if (!chain.schedule().survival(s).contains(x))
        fail(ErrorKind::StartingInBoundary, "state '" + chain.states().label(x) + "' lies in A_" + std::to_string(s));
}

// -log(1 - c1c2) / t0: the contraction rate per unit time.  Comparing raw c1c2
// would always favour the largest t0.
double per_step_rate(const CVCertificate& cert) {
    const double c = cert.c1c2();
    if (!(c > 0.0)) return 0.0;
    if (c >= 1.0) return std::numeric_limits<double>::infinity();
    return -std::log1p(-c) / static_cast<double>(cert.t0);
}

}  // namespace

const Measure& CVCertificate::nu_at(const BoundarySchedule& schedule, Time u) const {
    if (u < t0) fail(ErrorKind::Window, "nu_u is only certified for u >= t0");
    auto it = nu.find(schedule.canonical(u - t0));
    if (it == nu.end()) fail(ErrorKind::Window, "certificate holds no nu for time " + std::to_string(u));
    return it->second;
}

DCoefficients::DCoefficients(BoundarySchedule schedule, Time t0, Time horizon, std::vector<DCoefficient> table)
    : schedule_(std::move(schedule)), t0_(t0), horizon_(horizon), table_(std::move(table)) {
    if (static_cast<Time>(table_.size()) != schedule_->window())
        fail(ErrorKind::Shape, "d-table size does not match the schedule window");
}

const DCoefficient& DCoefficients::at(Time s) const {
    if (!schedule_ || s < t0_) fail(ErrorKind::Window, "d_s is only defined for s >= t0 (s=" + std::to_string(s) + ")");
    return table_[static_cast<std::size_t>(schedule_->canonical(s - t0_))];
}

Minorization minorize(const KilledChain& chain, Time s, Time t0) {
    if (t0 < 1) fail(ErrorKind::InvalidArgument, "minorize needs t0 >= 1");
    const auto from = chain.schedule().survival(s).members();
    const Vector low = entrywise_min(conditioned_rows(chain, s, t0, from));
    const double c1 = low.sum();
    if (!(c1 > 0.0)) return Minorization{0.0, Measure{Vector::Zero(low.size()), false}};
    return Minorization{c1, Measure{low / c1, true}};
}

HarnackEstimate harnack_constant(const KilledChain& chain, const Measure& nu, Time s, Time horizon) {
    if (horizon < 0) fail(ErrorKind::InvalidArgument, "negative horizon");
    chain.require_supported(nu, s);
    const auto summary = survival_ratio(normalized_survival_profiles(chain, s, horizon), nu.weights);
    return HarnackEstimate{summary.infimum, summary.stabilization};
}

Measure pair_minimum_measure(const KilledChain& chain, Time s, Time t0, std::size_t x1, std::size_t x2) {
    require_in(chain, x1, s);
    require_in(chain, x2, s);
    const auto rows = conditioned_rows(chain, s, t0, {x1, x2});
    return Measure{rows[0].cwiseMin(rows[1]), false};
}

Measure all_minimum_measure(const KilledChain& chain, Time s, Time t0) {
    const auto from = chain.schedule().survival(s).members();
    return Measure{entrywise_min(conditioned_rows(chain, s, t0, from)), false};
}

DCoefficient d_coefficients(const KilledChain& chain, Time s, Time t0, Time horizon) {
    if (t0 < 1) fail(ErrorKind::InvalidArgument, "d-coefficients need t0 >= 1");
    if (s < t0) fail(ErrorKind::Window, "d_s is only defined for s >= t0");
    const Time start = s - t0;
    const auto from = chain.schedule().survival(start).members();
    const auto rows = conditioned_rows(chain, start, t0, from);
    const auto profiles = normalized_survival_profiles(chain, s, horizon);

    DCoefficient out{std::numeric_limits<double>::infinity(), 0.0};
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = i; j < rows.size(); ++j)
            out.d = std::min(out.d, survival_ratio(profiles, rows[i].cwiseMin(rows[j])).infimum);
    out.d_prime = survival_ratio(profiles, entrywise_min(rows)).infimum;
    return out;
}

DCoefficients d_table(const KilledChain& chain, Time t0, Time horizon) {
    std::vector<DCoefficient> table;
    for (Time j = 0; j < chain.schedule().window(); ++j) table.push_back(d_coefficients(chain, t0 + j, t0, horizon));
    return DCoefficients(chain.schedule(), t0, horizon, std::move(table));
}

CVCertificate certificate_for(const KilledChain& chain, Time t0, Time horizon) {
    if (t0 < 1) fail(ErrorKind::InvalidArgument, "t0 must be at least 1");
    CVCertificate cert;
    cert.t0 = t0;
    cert.horizon_used = horizon;
    cert.c1 = std::numeric_limits<double>::infinity();
    const Time window = chain.schedule().window();
    for (Time j = 0; j < window; ++j) {
        auto m = minorize(chain, j, t0);
        cert.c1 = std::min(cert.c1, m.c1);
        cert.nu.emplace(j, std::move(m.nu));
    }
    if (!(cert.c1 > 0.0)) {
        cert.c1 = 0.0;
        cert.c2 = 0.0;
        cert.stabilization = std::numeric_limits<double>::infinity();
        return cert;
    }
    cert.c2 = std::numeric_limits<double>::infinity();
    for (Time j = 0; j < window; ++j) {
        const auto h = harnack_constant(chain, cert.nu.at(j), j + t0, horizon);
        cert.c2 = std::min(cert.c2, h.c2);
        cert.stabilization = std::max(cert.stabilization, h.stabilization);
    }
    cert.valid = cert.c2 >= kMinimumC2 && cert.stabilization < kStabilizationThreshold;
    return cert;
}

CVCertificate certify(const KilledChain& chain, Time t0_max, Time horizon) {
    if (t0_max < 1) fail(ErrorKind::InvalidArgument, "t0_max must be at least 1");
    const auto& schedule = chain.schedule();
    const Time step = schedule.kind() == ScheduleKind::Periodic ? schedule.period() : 1;
    const Time last = std::max(t0_max, step);

    std::optional<CVCertificate> best;
    for (Time t0 = step; t0 <= last; t0 += step) {
        CVCertificate cert;
        try {
            cert = certificate_for(chain, t0, horizon);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::ConditioningOnNull) throw;
            cert.t0 = t0;
            cert.horizon_used = horizon;
        }
        if (!best) {
            best = std::move(cert);
            continue;
        }
        const bool better_validity = cert.valid && !best->valid;
        const bool better_score = cert.valid == best->valid && per_step_rate(cert) > per_step_rate(*best) * (1.0 + 1e-9);
        if (better_validity || better_score) best = std::move(cert);
    }
    return *best;
}

}  // namespace qexodus
