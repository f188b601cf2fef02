#include "qexodus/chain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace qexodus {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid-argument";
        case ErrorKind::ScheduleDegenerate: return "schedule-degenerate";
        case ErrorKind::StartingInBoundary: return "starting-in-boundary";
        case ErrorKind::HorizonTooDeep: return "horizon-too-deep";
        case ErrorKind::ConditioningOnNull: return "conditioning-on-null";
        case ErrorKind::CertificateRequired: return "certificate-required";
        case ErrorKind::Window: return "window";
        case ErrorKind::PowerIteration: return "power-iteration";
        case ErrorKind::Kind: return "kind";
        case ErrorKind::AssumptionViolation: return "assumption-violation";
        case ErrorKind::Shape: return "shape";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::DriftTooStrong: return "drift-too-strong";
        case ErrorKind::Model: return "model";
        case ErrorKind::TooFewSurvivors: return "too-few-survivors";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Schema: return "schema";
        case ErrorKind::UnknownSeries: return "unknown-series";
    }
    return "unknown";
}

std::string_view to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::Constant: return "constant";
        case ScheduleKind::Periodic: return "periodic";
        case ScheduleKind::Converging: return "converging";
    }
    return "unknown";
}

// ---------------------------------------------------------------- StateSpace

StateSpace::StateSpace(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.empty()) fail(ErrorKind::InvalidArgument, "state space must contain at least one state");
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (!index_.emplace(labels_[i], i).second)
            fail(ErrorKind::InvalidArgument, "duplicate state label '" + labels_[i] + "'");
    }
}

std::optional<std::size_t> StateSpace::find(std::string_view label) const {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t StateSpace::index(std::string_view label) const {
    if (auto i = find(label)) return *i;
    fail(ErrorKind::InvalidArgument, "unknown state label '" + std::string(label) + "'");
}

// ------------------------------------------------------------------ StateSet

StateSet StateSet::of(std::size_t universe, const std::vector<std::size_t>& members) {
    StateSet s(universe);
    for (auto i : members) {
        if (i >= universe) fail(ErrorKind::InvalidArgument, "state index out of range");
        s.insert(i);
    }
    return s;
}

StateSet StateSet::full(std::size_t universe) {
    StateSet s(universe);
    std::fill(s.member_.begin(), s.member_.end(), std::uint8_t{1});
    return s;
}

std::size_t StateSet::count() const noexcept {
    return static_cast<std::size_t>(std::count(member_.begin(), member_.end(), std::uint8_t{1}));
}

std::vector<std::size_t> StateSet::members() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < member_.size(); ++i)
        if (member_[i]) out.push_back(i);
    return out;
}

StateSet StateSet::complement() const {
    StateSet c(universe());
    for (std::size_t i = 0; i < member_.size(); ++i) c.member_[i] = member_[i] ? 0 : 1;
    return c;
}

bool StateSet::subset_of(const StateSet& other) const {
    if (other.universe() != universe()) return false;
    for (std::size_t i = 0; i < member_.size(); ++i)
        if (member_[i] && !other.member_[i]) return false;
    return true;
}

Vector StateSet::indicator() const {
    Vector v(static_cast<Eigen::Index>(member_.size()));
    for (std::size_t i = 0; i < member_.size(); ++i) v[static_cast<Eigen::Index>(i)] = member_[i] ? 1.0 : 0.0;
    return v;
}

// ---------------------------------------------------------- BoundarySchedule

BoundarySchedule::BoundarySchedule(ScheduleKind kind, std::vector<StateSet> table)
    : kind_(kind), table_(std::move(table)) {
    if (table_.empty()) fail(ErrorKind::InvalidArgument, "boundary schedule needs at least one set");
    const auto n = table_.front().universe();
    if (n == 0) fail(ErrorKind::InvalidArgument, "boundary schedule over an empty state space");
    survival_.reserve(table_.size());
    for (std::size_t i = 0; i < table_.size(); ++i) {
        const auto& a = table_[i];
        if (a.universe() != n) fail(ErrorKind::InvalidArgument, "absorbing sets over different state spaces");
        if (a.empty()) fail(ErrorKind::ScheduleDegenerate, "absorbing set A_" + std::to_string(i) + " is empty");
        survival_.push_back(a.complement());
        if (survival_.back().empty())
            fail(ErrorKind::ScheduleDegenerate, "survival set E_" + std::to_string(i) + " is empty");
    }
}

BoundarySchedule BoundarySchedule::constant(StateSet absorbing) {
    return BoundarySchedule(ScheduleKind::Constant, {std::move(absorbing)});
}

BoundarySchedule BoundarySchedule::periodic(std::vector<StateSet> one_period) {
    if (one_period.empty()) fail(ErrorKind::InvalidArgument, "periodic schedule needs a positive period");
    return BoundarySchedule(ScheduleKind::Periodic, std::move(one_period));
}

BoundarySchedule BoundarySchedule::converging(std::vector<StateSet> before, StateSet limit) {
    before.push_back(std::move(limit));
    for (std::size_t i = 1; i < before.size(); ++i) {
        if (!before[i].subset_of(before[i - 1]))
            fail(ErrorKind::InvalidArgument,
                 "converging schedule must be non-increasing: A_" + std::to_string(i) + " is not contained in A_" +
                     std::to_string(i - 1));
    }
    return BoundarySchedule(ScheduleKind::Converging, std::move(before));
}

Time BoundarySchedule::period() const {
    switch (kind_) {
        case ScheduleKind::Constant: return 1;
        case ScheduleKind::Periodic: return window();
        case ScheduleKind::Converging: break;
    }
    fail(ErrorKind::Kind, "converging schedules have no period");
}

Time BoundarySchedule::stabilization_time() const {
    switch (kind_) {
        case ScheduleKind::Constant: return 0;
        case ScheduleKind::Converging: return window() - 1;
        case ScheduleKind::Periodic: break;
    }
    fail(ErrorKind::Kind, "periodic schedules do not stabilize");
}

const StateSet& BoundarySchedule::limit() const {
    if (kind_ == ScheduleKind::Periodic && !is_effectively_constant())
        fail(ErrorKind::Kind, "periodic schedules have no limit set");
    return table_.back();
}

Time BoundarySchedule::canonical(Time t) const {
    if (t < 0) fail(ErrorKind::InvalidArgument, "negative time index");
    switch (kind_) {
        case ScheduleKind::Constant: return 0;
        case ScheduleKind::Periodic: return t % window();
        case ScheduleKind::Converging: return std::min(t, window() - 1);
    }
    return 0;
}

BoundarySchedule BoundarySchedule::shift(Time s) const {
    if (s < 0) fail(ErrorKind::InvalidArgument, "negative shift");
    switch (kind_) {
        case ScheduleKind::Constant: return *this;
        case ScheduleKind::Periodic: {
            std::vector<StateSet> rotated;
            for (Time i = 0; i < window(); ++i) rotated.push_back(absorbing(s + i));
            return BoundarySchedule(kind_, std::move(rotated));
        }
        case ScheduleKind::Converging: {
            const auto drop = static_cast<std::size_t>(canonical(s));
            return BoundarySchedule(kind_, std::vector<StateSet>(table_.begin() + static_cast<std::ptrdiff_t>(drop), table_.end()));
        }
    }
    return *this;
}

// -------------------------------------------------------------------- Kernel

Kernel::Kernel(Matrix transitions) : p_(std::move(transitions)) {
    if (p_.rows() == 0 || p_.rows() != p_.cols()) fail(ErrorKind::Shape, "kernel must be a non-empty square matrix");
    for (Eigen::Index i = 0; i < p_.rows(); ++i) {
        for (Eigen::Index j = 0; j < p_.cols(); ++j) {
            if (!(p_(i, j) >= 0.0) || !std::isfinite(p_(i, j)))
                fail(ErrorKind::InvalidArgument, "kernel entries must be finite and non-negative");
        }
        const double sum = p_.row(i).sum();
        if (std::abs(sum - 1.0) > kRowSumTolerance)
            fail(ErrorKind::InvalidArgument, "kernel row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
}

// ------------------------------------------------------------------- Measure

Measure Measure::dirac(std::size_t universe, std::size_t at) {
    if (at >= universe) fail(ErrorKind::InvalidArgument, "dirac mass outside the state space");
    Measure m{Vector::Zero(static_cast<Eigen::Index>(universe)), true};
    m.weights[static_cast<Eigen::Index>(at)] = 1.0;
    return m;
}

Measure Measure::uniform(const StateSet& support) {
    const auto k = support.count();
    if (k == 0) fail(ErrorKind::InvalidArgument, "uniform measure on an empty set");
    return Measure{support.indicator() / static_cast<double>(k), true};
}

Measure renormalized(const Vector& w) {
    const double m = w.sum();
    if (!(m > 0.0)) fail(ErrorKind::ConditioningOnNull, "cannot renormalize a null measure");
    return Measure{w / m, true};
}

AbsorbedChain::AbsorbedChain(StateSpace s, Kernel k) : states(std::move(s)), kernel(std::move(k)) {
    if (states.size() != kernel.size())
        fail(ErrorKind::Shape, "kernel dimension " + std::to_string(kernel.size()) + " does not match " +
                                   std::to_string(states.size()) + " states");
}

// --------------------------------------------------------------- KilledChain

KilledChain::KilledChain(AbsorbedChain chain, BoundarySchedule schedule)
    : chain_(std::move(chain)), schedule_(std::move(schedule)) {
    if (schedule_.universe() != chain_.size())
        fail(ErrorKind::Shape, "schedule and chain have different state counts");
    const auto& p = chain_.kernel.matrix();
    steps_.reserve(static_cast<std::size_t>(schedule_.window()));
    for (Time u = 0; u < schedule_.window(); ++u) {
        const auto& from = schedule_.survival(u);
        const auto& to = schedule_.survival(u + 1);
        Matrix k = Matrix::Zero(p.rows(), p.cols());
        for (auto x : from.members())
            for (auto y : to.members())
                k(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)) =
                    p(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
        steps_.push_back(std::move(k));
    }
}

RestrictedStep KilledChain::restricted_step(Time s, Time k) const {
    if (s < 0 || k < 0) fail(ErrorKind::InvalidArgument, "restricted_step needs s, k >= 0");
    const Time u = s + k;
    RestrictedStep out;
    out.rows = schedule_.survival(u).members();
    out.cols = schedule_.survival(u + 1).members();
    if (out.rows.empty() || out.cols.empty()) fail(ErrorKind::ScheduleDegenerate, "empty survival set");
    const auto& full = step_matrix(u);
    out.values.resize(static_cast<Eigen::Index>(out.rows.size()), static_cast<Eigen::Index>(out.cols.size()));
    for (std::size_t i = 0; i < out.rows.size(); ++i)
        for (std::size_t j = 0; j < out.cols.size(); ++j)
            out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                full(static_cast<Eigen::Index>(out.rows[i]), static_cast<Eigen::Index>(out.cols[j]));
    return out;
}

Vector KilledChain::survival_vector(Time s, Time t) const {
    if (s < 0 || t < 0) fail(ErrorKind::InvalidArgument, "survival needs s, t >= 0");
    Vector b = schedule_.survival(s + t).indicator();
    for (Time j = t - 1; j >= 0; --j) b = step_matrix(s + j) * b;
    return b;
}

ScaledVector KilledChain::scaled_survival(Time s, Time t) const {
    if (s < 0 || t < 0) fail(ErrorKind::InvalidArgument, "survival needs s, t >= 0");
    ScaledVector out{schedule_.survival(s + t).indicator(), 0.0};
    for (Time j = t - 1; j >= 0; --j) {
        out.direction = step_matrix(s + j) * out.direction;
        const double m = out.direction.maxCoeff();
        if (!(m > 0.0)) {
            out.log_scale = -std::numeric_limits<double>::infinity();
            out.direction.setZero();
            return out;
        }
        out.direction /= m;
        out.log_scale += std::log(m);
    }
    return out;
}

std::vector<ScaledVector> KilledChain::survival_sweep(Time s, Time horizon) const {
    if (s < 0 || horizon < 0) fail(ErrorKind::InvalidArgument, "survival sweep needs s, horizon >= 0");
    std::vector<ScaledVector> out;
    out.reserve(static_cast<std::size_t>(horizon + 1));
    Matrix m = schedule_.survival(s).indicator().asDiagonal();
    double log_scale = 0.0;
    for (Time t = 0;; ++t) {
        out.push_back(ScaledVector{m.rowwise().sum(), log_scale});
        if (t == horizon) break;
        m = (m * step_matrix(s + t)).eval();
        const double top = m.maxCoeff();
        if (!(top > 0.0)) {
            for (Time r = t + 1; r <= horizon; ++r)
                out.push_back(ScaledVector{Vector::Zero(m.rows()), -std::numeric_limits<double>::infinity()});
            break;
        }
        m /= top;
        log_scale += std::log(top);
    }
    return out;
}

double KilledChain::log_survival(std::size_t x, Time s, Time t) const {
    if (x >= size()) fail(ErrorKind::InvalidArgument, "state index out of range");
    if (!schedule_.survival(s).contains(x))
        fail(ErrorKind::StartingInBoundary, "state '" + states().label(x) + "' lies in A_" + std::to_string(s));
    const auto sv = scaled_survival(s, t);
    const double d = sv.direction[static_cast<Eigen::Index>(x)];
    if (!(d > 0.0)) return -std::numeric_limits<double>::infinity();
    return std::log(d) + sv.log_scale;
}

double KilledChain::survival(std::size_t x, Time s, Time t, NumericsOptions opts) const {
    if (x >= size()) fail(ErrorKind::InvalidArgument, "state index out of range");
    if (s < 0 || t < 0) fail(ErrorKind::InvalidArgument, "survival needs s, t >= 0");
    if (!schedule_.survival(s).contains(x))
        fail(ErrorKind::StartingInBoundary, "state '" + states().label(x) + "' lies in A_" + std::to_string(s));
    const double p = opts.log_space ? std::exp(log_survival(x, s, t))
                                    : survival_vector(s, t)[static_cast<Eigen::Index>(x)];
    if (p < kSurvivalFloor)
        fail(ErrorKind::HorizonTooDeep, "survival probability below 1e-300 at t=" + std::to_string(t) +
                                            " (use log_survival for deep horizons)");
    return p;
}

void KilledChain::require_supported(const Measure& mu, Time s) const {
    if (mu.size() != size()) fail(ErrorKind::Shape, "measure dimension does not match the state space");
    const auto& e = schedule_.survival(s);
    double sum = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
        const double w = mu[i];
        if (!(w >= 0.0)) fail(ErrorKind::InvalidArgument, "measure has negative or NaN weight");
        if (w > 0.0 && !e.contains(i))
            fail(ErrorKind::InvalidArgument,
                 "measure charges state '" + states().label(i) + "' outside E_" + std::to_string(s));
        sum += w;
    }
    if (std::abs(sum - 1.0) > kNormalizationTolerance)
        fail(ErrorKind::InvalidArgument, "measure is not normalized (mass " + std::to_string(sum) + ")");
}

namespace {

void check_total_mass(double log_mass, NumericsOptions opts) {
    if (!opts.log_space && log_mass < std::log(kConditioningFloor))
        fail(ErrorKind::ConditioningOnNull,
             "surviving mass below 1e-250 (log mass " + std::to_string(log_mass) + "); enable log_space");
}

}  // namespace

double KilledChain::propagate(const Measure& mu, Time s, Time t, std::vector<Vector>* keep, Vector& last) const {
    if (s < 0 || t < 0) fail(ErrorKind::InvalidArgument, "conditioned law needs s, t >= 0");
    require_supported(mu, s);
    if (keep) {
        keep->reserve(static_cast<std::size_t>(t + 1));
        keep->push_back(mu.weights);
    }
    Eigen::RowVectorXd v = mu.weights.transpose();
    double log_mass = 0.0;
    for (Time k = 0; k < t; ++k) {
        v = v * step_matrix(s + k);
        const double m = v.sum();
        if (!(m > 0.0)) fail(ErrorKind::ConditioningOnNull, "no surviving mass at step " + std::to_string(k + 1));
        v /= m;
        log_mass += std::log(m);
        if (keep) keep->push_back(v.transpose());
    }
    last = v.transpose();
    return log_mass;
}

std::vector<Vector> KilledChain::forward_laws(const Measure& mu, Time s, Time t, NumericsOptions opts) const {
    std::vector<Vector> out;
    Vector last;
    check_total_mass(propagate(mu, s, t, &out, last), opts);
    return out;
}

std::vector<Vector> KilledChain::backward_profiles(Time s, Time t) const {
    if (s < 0 || t < 0) fail(ErrorKind::InvalidArgument, "backward profiles need s, t >= 0");
    std::vector<Vector> out(static_cast<std::size_t>(t + 1));
    Vector b = schedule_.survival(s + t).indicator();
    out[static_cast<std::size_t>(t)] = b;
    for (Time k = t - 1; k >= 0; --k) {
        b = step_matrix(s + k) * b;
        const double m = b.maxCoeff();
        if (!(m > 0.0)) fail(ErrorKind::ConditioningOnNull, "no state survives to the horizon");
        b /= m;
        out[static_cast<std::size_t>(k)] = b;
    }
    return out;
}

Measure KilledChain::conditioned_law(const Measure& mu, Time s, Time t, NumericsOptions opts) const {
    if (t == 0) {
        require_supported(mu, s);
        return mu;
    }
    Vector last;
    check_total_mass(propagate(mu, s, t, nullptr, last), opts);
    return Measure{std::move(last), true};
}

Measure KilledChain::bridge_marginal(const Measure& mu, Time s, Time k, Time t, NumericsOptions opts) const {
    if (k < 0 || k > t) fail(ErrorKind::InvalidArgument, "bridge marginal needs 0 <= k <= t");
    if (k == t) return conditioned_law(mu, s, t, opts);
    Vector f;
    const double log_forward = propagate(mu, s, k, nullptr, f);
    const auto back = scaled_survival(s + k, t - k);
    Vector w = f.cwiseProduct(back.direction);
    const double m = w.sum();
    if (!(m > 0.0)) fail(ErrorKind::ConditioningOnNull, "no path survives to time " + std::to_string(t));
    check_total_mass(log_forward + back.log_scale + std::log(m), opts);
    return Measure{w / m, true};
}

}  // namespace qexodus
