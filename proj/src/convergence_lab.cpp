#include "qexodus/convergence_lab.hpp"

#include "qexodus/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qexodus {

namespace {

using Index = Eigen::Index;

void require_valid(const CVCertificate& cert) {
    if (!cert.valid) fail(ErrorKind::CertificateRequired, "bound evaluation needs a valid certificate");
}

// log max_y P_y(tau_{A o theta_s} > t).
double log_max_survival(const KilledChain& chain, Time s, Time t) {
    const auto sv = chain.scaled_survival(s, t);
    const double top = sv.direction.maxCoeff();
    if (!(top > 0.0)) return -std::numeric_limits<double>::infinity();
    return std::log(top) + sv.log_scale;
}

}  // namespace

double tv(const Measure& mu1, const Measure& mu2) {
    if (mu1.size() != mu2.size())
        fail(ErrorKind::Shape, "tv of measures on " + std::to_string(mu1.size()) + " and " +
                                   std::to_string(mu2.size()) + " states");
    return 0.5 * (mu1.weights - mu2.weights).cwiseAbs().sum();
}

BoundCheckRecord make_record(std::uint64_t seed, Time s, Time t, Time T, std::string x, double lhs, double rhs,
                             double constant_used) {
    BoundCheckRecord r;
    r.seed = seed;
    r.s = s;
    r.t = t;
    r.T = T;
    r.x = std::move(x);
    r.lhs = lhs;
    r.rhs = rhs;
    r.margin = rhs - lhs;
    r.constant_used = constant_used;
    r.pass = r.margin >= -kMarginTolerance;
    return r;
}

namespace {

double theorem1_prefactor(const CVCertificate& cert, const KilledChain& chain, std::size_t x, Time s, Time t) {
    require_valid(cert);
    if (s < 0 || t < 0) fail(ErrorKind::InvalidArgument, "theorem bound needs s, t >= 0");
    const double c = cert.c1c2();
    const double log_start = chain.log_survival(x, s, cert.t0);
    const double log_ratio = chain.log_survival(x, s, t) - log_max_survival(chain, s + cert.t0, t);
    return std::exp(log_ratio - log_start) / (c * c * c);
}

}  // namespace

double theorem1_bound(const CVCertificate& cert, const KilledChain& chain, std::size_t x, Time s, Time t, Time T) {
    if (T < 0) fail(ErrorKind::InvalidArgument, "T must be non-negative");
    return theorem1_prefactor(cert, chain, x, s, t) * std::pow(1.0 - cert.c1c2(), static_cast<double>(T / cert.t0));
}

std::vector<BoundCheckRecord> check_qprocess_convergence(const CVCertificate& cert, const KilledChain& chain,
                                                         const QProcess& qp, std::size_t x, Time s, Time t,
                                                         const std::vector<Time>& T_grid, std::uint64_t seed) {
    const double constant = theorem1_prefactor(cert, chain, x, s, t);
    const auto q = q_marginal(qp, s, x, t);
    const auto start = Measure::dirac(chain.size(), x);
    std::vector<BoundCheckRecord> out;
    out.reserve(T_grid.size());
    for (Time T : T_grid) {
        if (T < 0) fail(ErrorKind::InvalidArgument, "T must be non-negative");
        const double lhs = tv(chain.bridge_marginal(start, s, t, t + T, NumericsOptions{true}), q);
        const double rhs = constant * std::pow(1.0 - cert.c1c2(), static_cast<double>(T / cert.t0));
        out.push_back(make_record(seed, s, t, T, chain.states().label(x), lhs, rhs, constant));
    }
    return out;
}

std::vector<BoundCheckRecord> merging_check(const KilledChain& chain, const DCoefficients& dc, Time s, Time t,
                                            const std::vector<std::pair<Measure, Measure>>& pairs,
                                            std::uint64_t seed) {
    if (t < s) fail(ErrorKind::InvalidArgument, "merging check needs t >= s");
    const double rhs = mixing_bound(dc, s, t);
    std::vector<BoundCheckRecord> out;
    out.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& [mu1, mu2] = pairs[i];
        const double lhs = tv(chain.conditioned_law(mu1, s, t - s, NumericsOptions{true}),
                              chain.conditioned_law(mu2, s, t - s, NumericsOptions{true}));
        out.push_back(make_record(seed, s, t, 0, "pair" + std::to_string(i), lhs, rhs, rhs / 2.0));
    }
    return out;
}

double cs_ratio(const KilledChain& chain, const CVCertificate& cert, std::size_t x, Time horizon) {
    require_valid(cert);
    if (x >= chain.size() || !chain.schedule().survival(0).contains(x))
        fail(ErrorKind::StartingInBoundary, "cs ratio needs x in E_0");
    const auto num = chain.survival_sweep(0, horizon);
    const auto den = chain.survival_sweep(cert.t0, horizon);
    double best = 0.0;
    for (std::size_t t = 0; t < num.size(); ++t) {
        const double a = num[t].direction[static_cast<Index>(x)];
        if (!(a > 0.0)) continue;
        const double b = den[t].direction.maxCoeff();
        best = std::max(best, std::exp(std::log(a) + num[t].log_scale - std::log(b) - den[t].log_scale));
    }
    return best;
}

std::map<Time, double> uniform_gap(const KilledChain& chain, std::size_t x, const std::vector<Time>& s_grid,
                                   Time window) {
    const auto& schedule = chain.schedule();
    if (schedule.kind() == ScheduleKind::Periodic && !schedule.is_effectively_constant())
        fail(ErrorKind::Kind, "uniform gap needs a converging schedule");
    if (window < 0) fail(ErrorKind::InvalidArgument, "negative window");
    const StateSet a_inf = schedule.is_effectively_constant() ? schedule.table().front() : schedule.limit();
    const KilledChain limit(chain.chain(), BoundarySchedule::constant(a_inf));
    const auto start = Measure::dirac(chain.size(), x);
    const NumericsOptions log{true};

    // Bridge marginals for horizon N = t + T, from the forward and backward passes.
    auto marginals = [&](const KilledChain& c, Time s, Time n) {
        const auto f = c.forward_laws(start, s, n, log);
        const auto b = c.backward_profiles(s, n);
        std::vector<Measure> out;
        for (Time t = 0; t <= n; ++t) {
            const auto i = static_cast<std::size_t>(t);
            out.push_back(renormalized(f[i].cwiseProduct(b[i])));
        }
        return out;
    };

    std::map<Time, double> out;
    for (Time s : s_grid) {
        if (s < 0) fail(ErrorKind::InvalidArgument, "negative s");
        double gap = 0.0;
        for (Time n = 0; n <= 2 * window; ++n) {
            const auto lhs = marginals(chain, s, n);
            const auto rhs = marginals(limit, 0, n);
            for (Time t = std::max<Time>(0, n - window); t <= std::min(n, window); ++t)
                gap = std::max(gap, tv(lhs[static_cast<std::size_t>(t)], rhs[static_cast<std::size_t>(t)]));
        }
        out[s] = gap;
    }
    return out;
}

double continuity_constant(const CVCertificate& cert, const DCoefficients& dc, const KilledChain& chain, Time s,
                           const Measure& pi) {
    require_valid(cert);
    chain.require_supported(pi, s);
    const Vector survive = chain.survival_vector(s, cert.t0);
    const double d_prime = dc.d_prime(s + cert.t0);
    if (!(d_prime > 0.0)) fail(ErrorKind::AssumptionViolation, "d' vanishes at s + t0");
    return survive.maxCoeff() / (cert.c1c2() * d_prime * pi.weights.dot(survive));
}

// ----------------------------------------------------------- random suites

KilledChain random_chain(std::uint64_t seed, ScheduleKind kind, const RandomChainOptions& opts) {
    if (opts.min_states < 2 || opts.max_states < opts.min_states)
        fail(ErrorKind::InvalidArgument, "random chain needs 2 <= min_states <= max_states");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto n = std::uniform_int_distribution<std::size_t>(opts.min_states, opts.max_states)(rng);
    const std::size_t live = n - 1;
    const std::size_t cemetery = live;

    std::vector<std::string> labels;
    for (std::size_t i = 0; i < live; ++i) labels.push_back("s" + std::to_string(i));
    labels.push_back("∂");

    Matrix p = Matrix::Zero(static_cast<Index>(n), static_cast<Index>(n));
    for (std::size_t x = 0; x < live; ++x) {
        const double kill = opts.max_kill * unit(rng);
        Vector w(static_cast<Index>(live));
        for (std::size_t y = 0; y < live; ++y) {
            const double u = unit(rng);
            w[static_cast<Index>(y)] = (y != x && unit(rng) < opts.sparsity) ? 0.0 : u;
        }
        if (!(w.sum() > 0.0)) w[static_cast<Index>(x)] = 1.0;
        w *= (1.0 - kill) / w.sum();
        double row = 0.0;
        for (std::size_t y = 0; y < live; ++y) {
            p(static_cast<Index>(x), static_cast<Index>(y)) = w[static_cast<Index>(y)];
            row += w[static_cast<Index>(y)];
        }
        p(static_cast<Index>(x), static_cast<Index>(cemetery)) = std::max(0.0, 1.0 - row);
    }
    p(static_cast<Index>(cemetery), static_cast<Index>(cemetery)) = 1.0;

    // {∂} plus each live state with probability `q`, never absorbing everything.
    auto random_set = [&](double q, const StateSet& base) {
        StateSet a = base;
        for (std::size_t x = 0; x < live; ++x)
            if (unit(rng) < q) a.insert(x);
        if (a.count() == n) {
            StateSet keep = base;
            a = keep;
        }
        return a;
    };
    const StateSet dead = StateSet::of(n, {cemetery});

    AbsorbedChain chain(StateSpace(std::move(labels)), Kernel(std::move(p)));
    switch (kind) {
        case ScheduleKind::Constant:
            return KilledChain(std::move(chain), BoundarySchedule::constant(live > 1 ? random_set(0.15, dead) : dead));
        case ScheduleKind::Periodic: {
            const auto gamma = std::uniform_int_distribution<Time>(1, std::max<Time>(1, opts.max_period))(rng);
            std::vector<StateSet> sets;
            for (Time u = 0; u < gamma; ++u) sets.push_back(random_set(0.25, dead));
            return KilledChain(std::move(chain), BoundarySchedule::periodic(std::move(sets)));
        }
        case ScheduleKind::Converging: {
            const auto t_star = std::uniform_int_distribution<Time>(1, std::max<Time>(1, opts.max_stabilization))(rng);
            const StateSet limit = random_set(0.1, dead);
            std::vector<StateSet> before(static_cast<std::size_t>(t_star));
            StateSet current = limit;
            for (Time u = t_star - 1; u >= 0; --u) {
                current = random_set(0.2, current);
                before[static_cast<std::size_t>(u)] = current;
            }
            return KilledChain(std::move(chain), BoundarySchedule::converging(std::move(before), limit));
        }
    }
    fail(ErrorKind::InvalidArgument, "unknown schedule kind");
}

std::vector<BoundCheckRecord> bound_records(const KilledChain& chain, const CVCertificate& cert, std::uint64_t seed,
                                            const BoundSuiteOptions& opts) {
    require_valid(cert);
    std::vector<BoundCheckRecord> out;
    const auto& schedule = chain.schedule();
    if (opts.theorem_bound) {
        const Time t_eta = eta_horizon_for(cert, opts.s_max + opts.t_max, 1e-13);
        const auto qp = build_qprocess(chain, cert, t_eta);
        std::vector<Time> T_grid;
        for (Time T = 0; T <= opts.T_max; ++T) T_grid.push_back(T);
        for (Time s = 0; s <= opts.s_max; ++s)
            for (auto x : schedule.survival(s).members())
                for (Time t = 0; t <= opts.t_max; ++t) {
                    auto recs = check_qprocess_convergence(cert, chain, qp, x, s, t, T_grid, seed);
                    out.insert(out.end(), recs.begin(), recs.end());
                }
    }
    return out;
}

std::vector<BoundCheckRecord> merging_records(const KilledChain& chain, const CVCertificate& cert, std::uint64_t seed,
                                              const BoundSuiteOptions& opts) {
    std::vector<BoundCheckRecord> out;
    const auto dc = d_table(chain, cert.t0, opts.horizon);
    const auto& states = chain.states();
    for (Time s = 0; s <= opts.s_max; ++s) {
        const auto alive = chain.schedule().survival(s).members();
        std::vector<std::pair<Measure, Measure>> pairs;
        std::vector<std::string> names;
        for (std::size_t i = 0; i < alive.size(); ++i)
            for (std::size_t j = i + 1; j < alive.size(); ++j) {
                pairs.emplace_back(Measure::dirac(chain.size(), alive[i]), Measure::dirac(chain.size(), alive[j]));
                names.push_back(states.label(alive[i]) + "|" + states.label(alive[j]));
            }
        pairs.emplace_back(Measure::uniform(chain.schedule().survival(s)), Measure::dirac(chain.size(), alive.front()));
        names.push_back("uniform|" + states.label(alive.front()));
        for (Time t = s; t <= s + opts.t_max; ++t) {
            auto recs = merging_check(chain, dc, s, t, pairs, seed);
            for (std::size_t k = 0; k < recs.size(); ++k) recs[k].x = names[k];
            out.insert(out.end(), recs.begin(), recs.end());
        }
    }
    return out;
}

BoundSuiteResult run_bound_suite(const BoundSuiteOptions& opts) {
    struct Slot {
        bool certified = false;
        std::vector<BoundCheckRecord> theorem;
        std::vector<BoundCheckRecord> merging;
    };
    static constexpr ScheduleKind kinds[] = {ScheduleKind::Constant, ScheduleKind::Periodic, ScheduleKind::Converging};

    BoundSuiteResult result;
    std::size_t next = 0;
    while (result.certified < opts.chains) {
        const std::size_t batch = std::max<std::size_t>(opts.chains - result.certified, 16);
        if (next > 50 * opts.chains + 1000)
            fail(ErrorKind::AssumptionViolation, "too few random chains admit a certificate");
        std::vector<Slot> slots(batch);
        parallel_for(batch, opts.threads, [&](std::size_t i) {
            const std::uint64_t seed = derive_seed(opts.seed, next + i);
            const auto chain = random_chain(seed, kinds[(next + i) % 3], opts.chain_options);
            const auto cert = certify(chain, opts.t0_max, opts.horizon);
            if (!cert.valid) return;
            slots[i].certified = true;
            slots[i].theorem = bound_records(chain, cert, seed, opts);
            if (opts.merging) slots[i].merging = merging_records(chain, cert, seed, opts);
        });
        for (auto& slot : slots) {
            ++result.candidates;
            if (!slot.certified) continue;
            ++result.certified;
            result.records.insert(result.records.end(), slot.theorem.begin(), slot.theorem.end());
            result.merging_records.insert(result.merging_records.end(), slot.merging.begin(), slot.merging.end());
            if (result.certified == opts.chains) break;
        }
        next += batch;
    }
    auto tally = [&](const std::vector<BoundCheckRecord>& records, std::size_t& failures) {
        for (const auto& r : records) {
            if (!r.pass) ++failures;
            else if (r.margin < 0.0) ++result.noise;
        }
    };
    tally(result.records, result.theorem_failures);
    tally(result.merging_records, result.merging_failures);
    return result;
}

}  // namespace qexodus
