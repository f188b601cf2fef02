#pragma once

// Monte Carlo for dX = dW - V(X) dt killed at a moving boundary h(t), plus the
// closed-form Brownian baselines used to check it.

#include "qexodus/error.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace qexodus {

class Drift {
  public:
    static Drift zero();
    // V(x) = k x.
    static Drift linear(double k = 1.0);
    // V(x) = (x - c)^3.
    static Drift cubic_shifted(double c);
    // V(x) = sign(x - c) |x - c|^alpha.
    static Drift power(double alpha, double c);
    // Piecewise-linear through (x_i, V_i), constant beyond the ends.
    static Drift table(std::vector<double> xs, std::vector<double> vs);

    const std::string& name() const noexcept { return name_; }
    const std::vector<double>& params() const noexcept { return params_; }

    double operator()(double x) const;
    // Analytic where available, central differences (step 1e-5) for tables.
    double derivative(double x) const;
    // int_0^x V.
    double potential(double x) const;

  private:
    enum class Form { Zero, Linear, Cubic, Power, Table };
    Drift(Form form, std::string name, std::vector<double> params) : form_(form), name_(std::move(name)), params_(std::move(params)) {}

    Form form_ = Form::Zero;
    std::string name_;
    std::vector<double> params_;
    std::vector<double> xs_, vs_, cumulative_;
};

class Boundary {
  public:
    static Boundary constant(double level);
    // mean + amplitude sin(2 pi t / period).
    static Boundary sine(double mean, double amplitude, double period);
    // h0 exp(-rate t).
    static Boundary exp_decay(double h0, double rate);

    const std::string& name() const noexcept { return name_; }
    const std::vector<double>& params() const noexcept { return params_; }

    double operator()(double t) const;
    double sup() const;

  private:
    enum class Form { Constant, Sine, ExpDecay };
    Boundary(Form form, std::string name, std::vector<double> params);

    Form form_ = Form::Constant;
    std::string name_;
    std::vector<double> params_;
};

struct DiffusionModel {
    Drift drift = Drift::zero();
    Boundary boundary = Boundary::constant(0.0);
    double dt = 1e-3;
    double horizon = 1.0;
    std::optional<double> x_cap;  // default 50 (h_max + 1)
    bool bridge = true;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;

    double cap() const;
    std::int64_t steps() const;  // round(horizon / dt)
    void validate() const;
};

// max |h(t_{k+1}) - h(t_k)| / dt over the model's time grid.
double lipschitz_on_grid(const DiffusionModel& model);

// sup of V' - V^2 over a uniform grid on [lo, hi]; advisory only.
double drift_hypothesis_sup(const Drift& drift, double lo, double hi, int points = 2001);

// Lambda_z(x) = int_z^x exp(2 int_0^y V) dy.
double scale_function(const Drift& drift, double z, double x);
// 2 exp(-2 int_0^xi V).
double speed_measure_density(const Drift& drift, double xi);

enum class PassageKind { ConstantLevel, LinearBoundary };

// Density of the first time Brownian motion from x reaches level - slope * t.
double brownian_passage_density(PassageKind kind, double x, double t, double level, double slope = 0.0);
double brownian_survival(PassageKind kind, double x, double t, double level, double slope = 0.0);
// int_0^t_max density + survival(t_max); should equal 1.
double passage_normalization(PassageKind kind, double x, double level, double slope, double t_max = 50.0);

struct PathRecord {
    bool absorbed = false;
    double absorption_time = 0.0;  // meaningful when absorbed
    double terminal = 0.0;         // last position before absorption, or X_T
    std::vector<double> trajectory;  // thinned positions, if requested
    std::vector<std::uint32_t> occupation;  // per-bin step counts, if requested
};

struct PathBatch {
    std::vector<PathRecord> paths;
    std::int64_t clamped = 0;
    double dt = 0.0;
    std::int64_t thin = 0;  // trajectory stride in steps; 0 = none kept

    std::size_t survivors() const;
    double survival_fraction() const;
};

struct SimulationOptions {
    std::int64_t thin = 0;
    unsigned threads = 1;
    // Occupation histograms accumulate X_1..X_K against these edges when set.
    const std::vector<double>* occupation_edges = nullptr;
};

PathBatch simulate_paths(const DiffusionModel& model, double x0, std::size_t n, const SimulationOptions& opts = {});

struct ProbePoint {
    double x = 0.0;
    double estimate = 0.0;
    double half_width = 0.0;  // Wilson, 95%
    std::size_t hits = 0;
    std::size_t n = 0;
};

struct ProbeResult {
    std::vector<ProbePoint> points;
    bool plateau = false;           // last three estimates pairwise within combined half-widths
    bool positive_plateau = false;  // plateau with every Wilson lower bound > 0
    double plateau_value = 0.0;
};

// Wilson score interval (center, half-width) at z = 1.96.
std::pair<double, double> wilson_interval(std::size_t hits, std::size_t n, double z = 1.96);

// Estimates P_x(tau_y < t) for each x.
ProbeResult comes_down_probe(const DiffusionModel& model, double y, double t, const std::vector<double>& xs,
                             std::size_t n, unsigned threads = 1);

struct Histogram {
    std::vector<double> edges;
    std::vector<double> mass;
    std::vector<double> standard_error;
    std::size_t survivors = 0;
    std::size_t total = 0;
    std::int64_t clamped = 0;
};

inline constexpr std::size_t kMinimumSurvivors = 100;

// Law of X_t among paths alive at t.
Histogram mc_conditioned_law(const DiffusionModel& model, double x0, double t, std::size_t n,
                             const std::vector<double>& edges, unsigned threads = 1);

// Time-averaged occupation of X_1..X_K, K = horizon / dt, over survivors to the horizon.
Histogram mc_quasi_ergodic(const DiffusionModel& model, double x0, double horizon, std::size_t n,
                           const std::vector<double>& edges, unsigned threads = 1);

// Conditioned Brownian density on (level, inf) at time t from x (reflection kernel).
double conditioned_brownian_density(double x, double t, double level, double y);

}  // namespace qexodus
