#pragma once

// Finite-state discrete-time Markov chains killed by a moving absorbing set.
//
// A chain lives on a labelled state space E with a row-stochastic kernel P.
// A BoundarySchedule assigns to every integer time t an absorbing set A_t;
// the survival set is E_t = E \ A_t.  Composing the two yields a KilledChain,
// which computes survival probabilities P_x(tau_{A o theta_s} > t),
// conditioned laws P_mu(X_t in . | tau > t) and conditioned intermediate
// marginals P_mu(X_k in . | tau > t), all exactly (up to floating point).

#include "qexodus/error.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace qexodus {

using Time = std::int64_t;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kRowSumTolerance = 1e-12;
inline constexpr double kNormalizationTolerance = 1e-12;
inline constexpr double kConditioningFloor = 1e-250;
inline constexpr double kSurvivalFloor = 1e-300;

class StateSpace {
  public:
    StateSpace() = default;
    explicit StateSpace(std::vector<std::string> labels);

    std::size_t size() const noexcept { return labels_.size(); }
    const std::string& label(std::size_t i) const { return labels_.at(i); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

    std::optional<std::size_t> find(std::string_view label) const;
    // Throws InvalidArgument for unknown labels.
    std::size_t index(std::string_view label) const;

    bool operator==(const StateSpace& other) const { return labels_ == other.labels_; }

  private:
    std::vector<std::string> labels_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Subset of {0, ..., universe-1}.
class StateSet {
  public:
    StateSet() = default;
    explicit StateSet(std::size_t universe) : member_(universe, 0) {}
    static StateSet of(std::size_t universe, const std::vector<std::size_t>& members);
    static StateSet full(std::size_t universe);

    std::size_t universe() const noexcept { return member_.size(); }
    bool contains(std::size_t i) const { return i < member_.size() && member_[i] != 0; }
    void insert(std::size_t i) { member_.at(i) = 1; }
    std::size_t count() const noexcept;
    bool empty() const noexcept { return count() == 0; }
    std::vector<std::size_t> members() const;
    StateSet complement() const;
    bool subset_of(const StateSet& other) const;
    // 0/1 indicator vector.
    Vector indicator() const;

    bool operator==(const StateSet& other) const { return member_ == other.member_; }

  private:
    std::vector<std::uint8_t> member_;
};

enum class ScheduleKind { Constant, Periodic, Converging };

std::string_view to_string(ScheduleKind kind);

// t -> A_t.  Internally every schedule is a finite table of absorbing sets
// indexed by canonical(t): the schedule seen from t onwards only depends on
// canonical(t).  Constant: one entry.  Periodic: gamma entries.  Converging:
// t* + 1 entries, the last one being A_inf.
class BoundarySchedule {
  public:
    static BoundarySchedule constant(StateSet absorbing);
    static BoundarySchedule periodic(std::vector<StateSet> one_period);
    static BoundarySchedule converging(std::vector<StateSet> before_stabilization, StateSet limit);

    ScheduleKind kind() const noexcept { return kind_; }
    std::size_t universe() const noexcept { return table_.front().universe(); }

    // Constant schedules report period 1.
    Time period() const;
    // Constant schedules report 0.
    Time stabilization_time() const;
    // A_inf; for periodic schedules this throws Kind.
    const StateSet& limit() const;

    const StateSet& absorbing(Time t) const { return table_[index_of(t)]; }
    const StateSet& survival(Time t) const { return survival_[index_of(t)]; }

    Time canonical(Time t) const;
    Time window() const noexcept { return static_cast<Time>(table_.size()); }

    // Schedule u -> A_{u+s}.
    BoundarySchedule shift(Time s) const;

    // Periodic schedules whose period is 1 and converging schedules with t* = 0
    // behave exactly like constant ones.
    bool is_effectively_constant() const noexcept { return table_.size() == 1; }

    const std::vector<StateSet>& table() const noexcept { return table_; }

    bool operator==(const BoundarySchedule& other) const {
        return kind_ == other.kind_ && table_ == other.table_;
    }

  private:
    BoundarySchedule(ScheduleKind kind, std::vector<StateSet> table);
    std::size_t index_of(Time t) const { return static_cast<std::size_t>(canonical(t)); }

    ScheduleKind kind_ = ScheduleKind::Constant;
    std::vector<StateSet> table_;
    std::vector<StateSet> survival_;
};

class Kernel {
  public:
    Kernel() = default;
    explicit Kernel(Matrix transitions);

    std::size_t size() const noexcept { return static_cast<std::size_t>(p_.rows()); }
    const Matrix& matrix() const noexcept { return p_; }
    double operator()(std::size_t x, std::size_t y) const { return p_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y)); }

  private:
    Matrix p_;
};

struct Measure {
    Vector weights;
    bool normalized = true;

    static Measure dirac(std::size_t universe, std::size_t at);
    static Measure uniform(const StateSet& support);

    std::size_t size() const noexcept { return static_cast<std::size_t>(weights.size()); }
    double mass() const { return weights.sum(); }
    double operator[](std::size_t i) const { return weights[static_cast<Eigen::Index>(i)]; }
};

struct AbsorbedChain {
    StateSpace states;
    Kernel kernel;

    AbsorbedChain() = default;
    AbsorbedChain(StateSpace s, Kernel k);
    std::size_t size() const noexcept { return states.size(); }
};

// Killed one-step transitions between consecutive survival sets.
struct RestrictedStep {
    std::vector<std::size_t> rows;  // E_{s+k}
    std::vector<std::size_t> cols;  // E_{s+k+1}
    Matrix values;

    Vector row_sums() const { return values.rowwise().sum(); }
};

struct NumericsOptions {
    bool log_space = false;
};

// A vector known only up to a positive factor: value = direction * exp(log_scale).
struct ScaledVector {
    Vector direction;
    double log_scale = 0.0;
};

class KilledChain {
  public:
    KilledChain(AbsorbedChain chain, BoundarySchedule schedule);

    const AbsorbedChain& chain() const noexcept { return chain_; }
    const BoundarySchedule& schedule() const noexcept { return schedule_; }
    const StateSpace& states() const noexcept { return chain_.states; }
    std::size_t size() const noexcept { return chain_.size(); }

    // Full n x n matrix K_u(x, y) = P(x, y) 1{x in E_u} 1{y in E_{u+1}} at absolute time u.
    const Matrix& step_matrix(Time u) const { return steps_[static_cast<std::size_t>(schedule_.canonical(u))]; }

    RestrictedStep restricted_step(Time s, Time k) const;

    double survival(std::size_t x, Time s, Time t, NumericsOptions opts = {}) const;
    double log_survival(std::size_t x, Time s, Time t) const;
    // P_y(tau_{A o theta_s} > t) for every y, by direct products (no floor checks).
    Vector survival_vector(Time s, Time t) const;
    // Same, renormalized at every step; immune to underflow.
    ScaledVector scaled_survival(Time s, Time t) const;
    // Entry t (t = 0..horizon) holds y -> P_y(tau_{A o theta_s} > t) in scaled form.
    std::vector<ScaledVector> survival_sweep(Time s, Time horizon) const;

    Measure conditioned_law(const Measure& mu, Time s, Time t, NumericsOptions opts = {}) const;
    Measure bridge_marginal(const Measure& mu, Time s, Time k, Time t, NumericsOptions opts = {}) const;

    // Normalized conditioned laws at k = 0..t, i.e. entry k is conditioned_law(mu, s, k).
    std::vector<Vector> forward_laws(const Measure& mu, Time s, Time t, NumericsOptions opts = {}) const;
    // Entry k is proportional to y -> P_y(tau_{A o theta_{s+k}} > t - k), k = 0..t.
    std::vector<Vector> backward_profiles(Time s, Time t) const;

    void require_supported(const Measure& mu, Time s) const;

  private:
    // Per-step renormalized forward propagation; returns log P_mu(tau > t).
    double propagate(const Measure& mu, Time s, Time t, std::vector<Vector>* keep, Vector& last) const;

    AbsorbedChain chain_;
    BoundarySchedule schedule_;
    std::vector<Matrix> steps_;
};

Measure renormalized(const Vector& w);

}  // namespace qexodus
