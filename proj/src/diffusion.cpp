#include "qexodus/diffusion.hpp"

#include "qexodus/parallel.hpp"
#include "qexodus/seeding.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace qexodus {

namespace {

constexpr double kExpLimit = 700.0;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) fail(ErrorKind::InvalidArgument, std::string(what) + " must be finite");
}

// Pairwise sum, fixed tree for a given length.
double pairwise_sum(const double* v, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

double checked_exp(double exponent, double where) {
    if (exponent > kExpLimit)
        fail(ErrorKind::DriftTooStrong, "exp(2 int_0^y V) overflows at y=" + std::to_string(where));
    return std::exp(exponent);
}

}  // namespace

// -------------------------------------------------------------------- drift

Drift Drift::zero() { return Drift(Form::Zero, "zero", {}); }

Drift Drift::linear(double k) {
    require_finite(k, "linear drift slope");
    return Drift(Form::Linear, "linear", {k});
}

Drift Drift::cubic_shifted(double c) {
    require_finite(c, "cubic shift");
    return Drift(Form::Cubic, "cubic_shifted", {c});
}

Drift Drift::power(double alpha, double c) {
    require_finite(c, "power shift");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) fail(ErrorKind::InvalidArgument, "power exponent must be positive");
    return Drift(Form::Power, "power", {alpha, c});
}

Drift Drift::table(std::vector<double> xs, std::vector<double> vs) {
    if (xs.size() != vs.size() || xs.size() < 2)
        fail(ErrorKind::InvalidArgument, "drift table needs at least two (x, V) pairs of equal length");
    for (std::size_t i = 0; i < xs.size(); ++i) {
        require_finite(xs[i], "drift table abscissa");
        require_finite(vs[i], "drift table value");
        if (i > 0 && !(xs[i] > xs[i - 1])) fail(ErrorKind::InvalidArgument, "drift table abscissae must increase");
    }
    Drift d(Form::Table, "table", {});
    d.xs_ = std::move(xs);
    d.vs_ = std::move(vs);
    // cumulative_[i] = int_{xs_0}^{xs_i} V, exact for the piecewise-linear interpolant.
    d.cumulative_.assign(d.xs_.size(), 0.0);
    for (std::size_t i = 1; i < d.xs_.size(); ++i)
        d.cumulative_[i] = d.cumulative_[i - 1] + 0.5 * (d.vs_[i] + d.vs_[i - 1]) * (d.xs_[i] - d.xs_[i - 1]);
    return d;
}

double Drift::operator()(double x) const {
    switch (form_) {
        case Form::Zero: return 0.0;
        case Form::Linear: return params_[0] * x;
        case Form::Cubic: {
            const double u = x - params_[0];
            return u * u * u;
        }
        case Form::Power: {
            const double u = x - params_[1];
            return std::copysign(std::pow(std::abs(u), params_[0]), u);
        }
        case Form::Table: {
            if (x <= xs_.front()) return vs_.front();
            if (x >= xs_.back()) return vs_.back();
            const auto i = static_cast<std::size_t>(std::upper_bound(xs_.begin(), xs_.end(), x) - xs_.begin());
            const double w = (x - xs_[i - 1]) / (xs_[i] - xs_[i - 1]);
            return vs_[i - 1] + w * (vs_[i] - vs_[i - 1]);
        }
    }
    return 0.0;
}

double Drift::derivative(double x) const {
    switch (form_) {
        case Form::Zero: return 0.0;
        case Form::Linear: return params_[0];
        case Form::Cubic: {
            const double u = x - params_[0];
            return 3.0 * u * u;
        }
        case Form::Power: {
            const double u = std::abs(x - params_[1]);
            return params_[0] * std::pow(u, params_[0] - 1.0);
        }
        case Form::Table: {
            constexpr double h = 1e-5;
            return ((*this)(x + h) - (*this)(x - h)) / (2.0 * h);
        }
    }
    return 0.0;
}

double Drift::potential(double x) const {
    switch (form_) {
        case Form::Zero: return 0.0;
        case Form::Linear: return 0.5 * params_[0] * x * x;
        case Form::Cubic: {
            const double c = params_[0];
            return (std::pow(x - c, 4) - std::pow(c, 4)) / 4.0;
        }
        case Form::Power: {
            const double a = params_[0];
            const double c = params_[1];
            return (std::pow(std::abs(x - c), a + 1.0) - std::pow(std::abs(c), a + 1.0)) / (a + 1.0);
        }
        case Form::Table: {
            // int_{x0}^{x} V - int_{x0}^{0} V.
            auto from_start = [&](double u) {
                if (u <= xs_.front()) return vs_.front() * (u - xs_.front());
                if (u >= xs_.back()) return cumulative_.back() + vs_.back() * (u - xs_.back());
                const auto i = static_cast<std::size_t>(std::upper_bound(xs_.begin(), xs_.end(), u) - xs_.begin());
                const double vu = (*this)(u);
                return cumulative_[i - 1] + 0.5 * (vs_[i - 1] + vu) * (u - xs_[i - 1]);
            };
            return from_start(x) - from_start(0.0);
        }
    }
    return 0.0;
}

// ----------------------------------------------------------------- boundary

Boundary::Boundary(Form form, std::string name, std::vector<double> params)
    : form_(form), name_(std::move(name)), params_(std::move(params)) {
    for (double p : params_) require_finite(p, "boundary parameter");
}

Boundary Boundary::constant(double level) {
    if (level < 0.0) fail(ErrorKind::InvalidArgument, "boundary must be non-negative");
    return Boundary(Form::Constant, "constant", {level});
}

Boundary Boundary::sine(double mean, double amplitude, double period) {
    if (!(period > 0.0)) fail(ErrorKind::InvalidArgument, "sine boundary needs a positive period");
    if (mean - std::abs(amplitude) < 0.0) fail(ErrorKind::InvalidArgument, "sine boundary must stay non-negative");
    return Boundary(Form::Sine, "sine", {mean, amplitude, period});
}

Boundary Boundary::exp_decay(double h0, double rate) {
    if (h0 < 0.0 || rate < 0.0) fail(ErrorKind::InvalidArgument, "exp_decay needs h0 >= 0 and rate >= 0");
    return Boundary(Form::ExpDecay, "exp_decay", {h0, rate});
}

double Boundary::operator()(double t) const {
    switch (form_) {
        case Form::Constant: return params_[0];
        case Form::Sine: return params_[0] + params_[1] * std::sin(2.0 * std::numbers::pi * t / params_[2]);
        case Form::ExpDecay: return params_[0] * std::exp(-params_[1] * t);
    }
    return 0.0;
}

double Boundary::sup() const {
    switch (form_) {
        case Form::Constant: return params_[0];
        case Form::Sine: return params_[0] + std::abs(params_[1]);
        case Form::ExpDecay: return params_[0];
    }
    return 0.0;
}

// -------------------------------------------------------------------- model

double DiffusionModel::cap() const { return x_cap ? *x_cap : 50.0 * (boundary.sup() + 1.0); }

std::int64_t DiffusionModel::steps() const { return static_cast<std::int64_t>(std::llround(horizon / dt)); }

void DiffusionModel::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) fail(ErrorKind::InvalidArgument, "dt must be positive");
    if (!(horizon >= 0.0) || !std::isfinite(horizon)) fail(ErrorKind::InvalidArgument, "horizon must be non-negative");
    if (!(cap() > boundary.sup())) fail(ErrorKind::InvalidArgument, "x_cap must exceed sup h");
}

double lipschitz_on_grid(const DiffusionModel& model) {
    model.validate();
    double best = 0.0;
    double prev = model.boundary(0.0);
    for (std::int64_t k = 1; k <= model.steps(); ++k) {
        const double h = model.boundary(static_cast<double>(k) * model.dt);
        best = std::max(best, std::abs(h - prev) / model.dt);
        prev = h;
    }
    return best;
}

double drift_hypothesis_sup(const Drift& drift, double lo, double hi, int points) {
    if (!(hi > lo) || points < 2) fail(ErrorKind::InvalidArgument, "need lo < hi and at least two points");
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < points; ++i) {
        const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
        const double v = drift(x);
        best = std::max(best, drift.derivative(x) - v * v);
    }
    return best;
}

// ------------------------------------------------------- scale and speed

double scale_function(const Drift& drift, double z, double x) {
    if (x < z) fail(ErrorKind::InvalidArgument, "scale function needs x >= z");
    if (x == z) return 0.0;
    auto integrand = [&](double y) { return checked_exp(2.0 * drift.potential(y), y); };
    // Check the endpoints first so overflow is reported with its location.
    integrand(z);
    integrand(x);
    double error = 0.0;
    const double value =
        boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, z, x, 15, 1e-12, &error);
    if (error > 1e-8 * std::abs(value))
        fail(ErrorKind::DriftTooStrong, "scale-function quadrature did not reach 1e-8 relative accuracy");
    return value;
}

double speed_measure_density(const Drift& drift, double xi) {
    const double e = -2.0 * drift.potential(xi);
    if (e > kExpLimit) fail(ErrorKind::DriftTooStrong, "speed density overflows at xi=" + std::to_string(xi));
    return 2.0 * std::exp(e);
}

// ------------------------------------------------------ Brownian passage

double brownian_passage_density(PassageKind kind, double x, double t, double level, double slope) {
    if (!(x > level)) fail(ErrorKind::Domain, "passage density needs x > level");
    if (!(t > 0.0)) fail(ErrorKind::Domain, "passage density needs t > 0");
    const double a = x - level;
    const double shifted = kind == PassageKind::LinearBoundary ? a + slope * t : a;
    return a / std::sqrt(2.0 * std::numbers::pi * t * t * t) * std::exp(-shifted * shifted / (2.0 * t));
}

double brownian_survival(PassageKind kind, double x, double t, double level, double slope) {
    if (!(x > level)) fail(ErrorKind::Domain, "survival needs x > level");
    if (t < 0.0) fail(ErrorKind::Domain, "survival needs t >= 0");
    if (t == 0.0) return 1.0;
    const double a = x - level;
    const double rt = std::sqrt(t);
    if (kind == PassageKind::ConstantLevel || slope == 0.0) return 2.0 * normal_cdf(a / rt) - 1.0;
    return normal_cdf((a + slope * t) / rt) - std::exp(-2.0 * a * slope) * normal_cdf((-a + slope * t) / rt);
}

double passage_normalization(PassageKind kind, double x, double level, double slope, double t_max) {
    auto f = [&](double t) { return t <= 0.0 ? 0.0 : brownian_passage_density(kind, x, t, level, slope); };
    const double mass = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, t_max, 20, 1e-14);
    return mass + brownian_survival(kind, x, t_max, level, slope);
}

double conditioned_brownian_density(double x, double t, double level, double y) {
    if (!(x > level) || !(t > 0.0)) fail(ErrorKind::Domain, "needs x > level and t > 0");
    if (y <= level) return 0.0;
    const double rt = std::sqrt(t);
    const double sub = (normal_pdf((y - x) / rt) - normal_pdf((y + x - 2.0 * level) / rt)) / rt;
    return sub / brownian_survival(PassageKind::ConstantLevel, x, t, level);
}

// -------------------------------------------------------------- simulation

std::size_t PathBatch::survivors() const {
    return static_cast<std::size_t>(std::count_if(paths.begin(), paths.end(), [](const auto& p) { return !p.absorbed; }));
}

double PathBatch::survival_fraction() const {
    return paths.empty() ? 0.0 : static_cast<double>(survivors()) / static_cast<double>(paths.size());
}

namespace {

std::size_t bin_of(const std::vector<double>& edges, double x) {
    if (x < edges.front() || x > edges.back()) return edges.size();
    if (x == edges.back()) return edges.size() - 2;
    return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), x) - edges.begin()) - 1;
}

void check_edges(const std::vector<double>& edges) {
    if (edges.size() < 2) fail(ErrorKind::InvalidArgument, "histogram needs at least two edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1])) fail(ErrorKind::InvalidArgument, "histogram edges must increase");
}

struct PathOutcome {
    PathRecord record;
    std::int64_t clamped = 0;
};

// One Euler-Maruyama path.  `steps` overrides the model horizon.
PathOutcome run_path(const DiffusionModel& model, double x0, std::uint64_t path, std::int64_t steps, std::int64_t thin,
                     const std::vector<double>* edges) {
    std::mt19937_64 rng(derive_seed(model.seed, model.stream, path));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double dt = model.dt;
    const double sdt = std::sqrt(dt);
    const double cap = model.cap();

    PathOutcome out;
    auto& rec = out.record;
    if (edges) rec.occupation.assign(edges->size() - 1, 0);
    if (thin > 0) rec.trajectory.push_back(x0);
    double x = x0;
    double h_prev = model.boundary(0.0);
    for (std::int64_t k = 0; k < steps; ++k) {
        const double v = model.drift(x);
        if (!std::isfinite(v)) fail(ErrorKind::Model, "drift is not finite at x=" + std::to_string(x));
        double next = x + sdt * gauss(rng) - v * dt;
        if (!std::isfinite(next)) fail(ErrorKind::Model, "path left the reals at step " + std::to_string(k));
        const double t_next = static_cast<double>(k + 1) * dt;
        const double h_next = model.boundary(t_next);
        bool killed = next <= h_next;
        if (!killed && model.bridge) {
            const double p = std::exp(-2.0 * (x - h_prev) * (next - h_next) / dt);
            killed = unit(rng) < p;
        }
        if (killed) {
            rec.absorbed = true;
            rec.absorption_time = t_next;
            rec.terminal = x;
            return out;
        }
        if (next > cap) {
            next = cap;
            ++out.clamped;
        }
        x = next;
        h_prev = h_next;
        if (edges) {
            const auto b = bin_of(*edges, x);
            if (b < rec.occupation.size()) ++rec.occupation[b];
        }
        if (thin > 0 && (k + 1) % thin == 0) rec.trajectory.push_back(x);
    }
    rec.terminal = x;
    return out;
}

PathBatch simulate(const DiffusionModel& model, double x0, std::size_t n, std::int64_t steps,
                   const SimulationOptions& opts) {
    model.validate();
    require_finite(x0, "x0");
    if (!(x0 > model.boundary(0.0))) fail(ErrorKind::Domain, "x0 must lie strictly above h(0)");
    if (!(x0 < model.cap())) fail(ErrorKind::Domain, "x0 must lie below x_cap");
    if (n == 0) fail(ErrorKind::InvalidArgument, "need at least one path");
    if (opts.occupation_edges) check_edges(*opts.occupation_edges);

    std::vector<PathOutcome> outcomes(n);
    parallel_for(n, opts.threads, [&](std::size_t i) {
        outcomes[i] = run_path(model, x0, i, steps, opts.thin, opts.occupation_edges);
    });
    PathBatch batch;
    batch.dt = model.dt;
    batch.thin = opts.thin;
    batch.paths.reserve(n);
    for (auto& o : outcomes) {
        batch.clamped += o.clamped;
        batch.paths.push_back(std::move(o.record));
    }
    return batch;
}

std::int64_t steps_for(const DiffusionModel& model, double t) {
    if (!(t >= 0.0) || !std::isfinite(t)) fail(ErrorKind::InvalidArgument, "time must be non-negative");
    return static_cast<std::int64_t>(std::llround(t / model.dt));
}

void require_survivors(std::size_t survivors, std::size_t total) {
    if (survivors < kMinimumSurvivors)
        fail(ErrorKind::TooFewSurvivors, std::to_string(survivors) + " of " + std::to_string(total) +
                                             " paths survived (fraction " +
                                             std::to_string(static_cast<double>(survivors) / static_cast<double>(total)) +
                                             "); need at least 100");
}

}  // namespace

PathBatch simulate_paths(const DiffusionModel& model, double x0, std::size_t n, const SimulationOptions& opts) {
    model.validate();
    return simulate(model, x0, n, model.steps(), opts);
}

std::pair<double, double> wilson_interval(std::size_t hits, std::size_t n, double z) {
    if (n == 0) fail(ErrorKind::InvalidArgument, "Wilson interval needs n > 0");
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(hits) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (p + z2 / (2.0 * nn)) / denom;
    const double half = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
    return {center, half};
}

ProbeResult comes_down_probe(const DiffusionModel& model, double y, double t, const std::vector<double>& xs,
                             std::size_t n, unsigned threads) {
    if (!(y > model.boundary.sup())) fail(ErrorKind::Domain, "probe level y must exceed sup h");
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (!(xs[i] > y)) fail(ErrorKind::Domain, "probe starts must lie above y");
        if (i > 0 && !(xs[i] > xs[i - 1])) fail(ErrorKind::InvalidArgument, "probe starts must be ascending");
    }
    // Hitting y is absorption at the constant level y.
    DiffusionModel probe = model;
    probe.boundary = Boundary::constant(y);
    probe.x_cap = model.cap();

    ProbeResult out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        probe.stream = derive_seed(model.stream, 0x70726f6265ULL + i);
        const auto batch = simulate(probe, xs[i], n, steps_for(probe, t), SimulationOptions{0, threads, nullptr});
        ProbePoint pt;
        pt.x = xs[i];
        pt.n = n;
        pt.hits = n - batch.survivors();
        pt.estimate = static_cast<double>(pt.hits) / static_cast<double>(n);
        pt.half_width = wilson_interval(pt.hits, n).second;
        out.points.push_back(pt);
    }
    if (out.points.size() >= 3) {
        const auto last = out.points.end() - 3;
        bool flat = true;
        double low = 1.0;
        double sum = 0.0;
        for (auto a = last; a != out.points.end(); ++a) {
            const auto [center, half] = wilson_interval(a->hits, a->n);
            low = std::min(low, a->hits > 0 ? center - half : 0.0);
            sum += a->estimate;
            for (auto b = a + 1; b != out.points.end(); ++b)
                flat = flat && std::abs(a->estimate - b->estimate) < a->half_width + b->half_width;
        }
        out.plateau = flat;
        out.positive_plateau = flat && low > 0.0;
        out.plateau_value = sum / 3.0;
    }
    return out;
}

Histogram mc_conditioned_law(const DiffusionModel& model, double x0, double t, std::size_t n,
                             const std::vector<double>& edges, unsigned threads) {
    check_edges(edges);
    const auto batch = simulate(model, x0, n, steps_for(model, t), SimulationOptions{0, threads, nullptr});
    Histogram h;
    h.edges = edges;
    h.total = n;
    h.clamped = batch.clamped;
    h.survivors = batch.survivors();
    require_survivors(h.survivors, n);
    std::vector<std::size_t> counts(edges.size() - 1, 0);
    for (const auto& p : batch.paths) {
        if (p.absorbed) continue;
        const auto b = bin_of(edges, p.terminal);
        if (b >= counts.size())
            fail(ErrorKind::Domain, "survivor at x=" + std::to_string(p.terminal) + " falls outside the histogram");
        ++counts[b];
    }
    const double m = static_cast<double>(h.survivors);
    for (auto c : counts) {
        const double p = static_cast<double>(c) / m;
        h.mass.push_back(p);
        h.standard_error.push_back(std::sqrt(p * (1.0 - p) / m));
    }
    return h;
}

Histogram mc_quasi_ergodic(const DiffusionModel& model, double x0, double horizon, std::size_t n,
                           const std::vector<double>& edges, unsigned threads) {
    check_edges(edges);
    const auto steps = steps_for(model, horizon);
    if (steps < 1) fail(ErrorKind::InvalidArgument, "quasi-ergodic average needs at least one step");
    const auto batch = simulate(model, x0, n, steps, SimulationOptions{0, threads, &edges});
    Histogram h;
    h.edges = edges;
    h.total = n;
    h.clamped = batch.clamped;
    h.survivors = batch.survivors();
    require_survivors(h.survivors, n);

    const std::size_t bins = edges.size() - 1;
    const double k = static_cast<double>(steps);
    std::vector<double> fractions;
    fractions.reserve(h.survivors);
    for (std::size_t b = 0; b < bins; ++b) {
        fractions.clear();
        for (const auto& p : batch.paths)
            if (!p.absorbed) fractions.push_back(static_cast<double>(p.occupation[b]) / k);
        const double m = static_cast<double>(fractions.size());
        const double mean = pairwise_sum(fractions.data(), fractions.size()) / m;
        for (double& f : fractions) f = (f - mean) * (f - mean);
        const double var = fractions.size() > 1 ? pairwise_sum(fractions.data(), fractions.size()) / (m - 1.0) : 0.0;
        h.mass.push_back(mean);
        h.standard_error.push_back(std::sqrt(var / m));
    }
    double covered = 0.0;
    for (double v : h.mass) covered += v;
    if (covered < 1.0 - 1e-9) fail(ErrorKind::Domain, "survivor occupation falls outside the histogram");
    return h;
}

}  // namespace qexodus
