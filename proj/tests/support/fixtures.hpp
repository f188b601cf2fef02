#pragma once

#include "qexodus/convergence_lab.hpp"
#include "support/path_oracle.hpp"

#include <doctest.h>

namespace fixtures {

using namespace qexodus;

inline AbsorbedChain absorbed(std::vector<std::string> labels, const std::vector<std::vector<double>>& rows) {
    Matrix p(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows.size(); ++j) p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return AbsorbedChain(StateSpace(std::move(labels)), Kernel(std::move(p)));
}

inline AbsorbedChain chain_a_kernel() {
    return absorbed({"a", "b", "∂"}, {{0.5, 0.3, 0.2}, {0.4, 0.4, 0.2}, {0.0, 0.0, 1.0}});
}

inline KilledChain chain_a() {
    return KilledChain(chain_a_kernel(), BoundarySchedule::constant(StateSet::of(3, {2})));
}

// States {0, 1, 2, ∂}; the boundary swallows state 1 until t = 3.
inline KilledChain converging_three() {
    auto chain = absorbed({"0", "1", "2", "∂"}, {{0.4, 0.3, 0.2, 0.1},
                                                 {0.3, 0.3, 0.3, 0.1},
                                                 {0.2, 0.3, 0.3, 0.2},
                                                 {0.0, 0.0, 0.0, 1.0}});
    const StateSet wide = StateSet::of(4, {1, 3});
    return KilledChain(std::move(chain), BoundarySchedule::converging({wide, wide, wide}, StateSet::of(4, {3})));
}

inline oracle::Grid grid(const KilledChain& c) {
    const auto& p = c.chain().kernel.matrix();
    oracle::Grid g(c.size(), oracle::Row(c.size()));
    for (std::size_t i = 0; i < c.size(); ++i)
        for (std::size_t j = 0; j < c.size(); ++j) g[i][j] = p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return g;
}

// Membership from the raw table with its own time folding.
inline oracle::Alive alive(const KilledChain& c) {
    const auto table = c.schedule().table();
    const auto kind = c.schedule().kind();
    return [table, kind](long u, std::size_t y) {
        const long w = static_cast<long>(table.size());
        long idx = 0;
        if (kind == ScheduleKind::Periodic) idx = u % w;
        if (kind == ScheduleKind::Converging) idx = u < w - 1 ? u : w - 1;
        return !table[static_cast<std::size_t>(idx)].contains(y);
    };
}

inline oracle::Row row(const Vector& v) { return oracle::Row(v.data(), v.data() + v.size()); }

inline double max_diff(const Vector& got, const oracle::Row& want) {
    double d = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) d = std::max(d, std::abs(got[static_cast<Eigen::Index>(i)] - want[i]));
    return d;
}

}  // namespace fixtures
