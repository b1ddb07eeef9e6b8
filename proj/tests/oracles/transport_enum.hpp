#ifndef MFS_TESTS_TRANSPORT_ENUM_HPP
#define MFS_TESTS_TRANSPORT_ENUM_HPP

// Brute-force optimal transport for tiny measures whose weights are
// multiples of 1/denominator: both sides split into equal-weight chunks and
// the cost is minimized over all chunk assignments. Independent of the
// library solver.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "mfs/measure.hpp"

namespace mfs_tests {

inline double transport_enum(const mfs::DiscreteLawS& a, const mfs::DiscreteLawS& b,
                             int order, double kappa, int denom) {
    std::vector<int> ca, cb;     // chunk -> atom index
    for (std::size_t k = 0; k < a.atoms.size(); ++k) {
        const int n = static_cast<int>(std::llround(a.atoms[k].weight * denom));
        for (int c = 0; c < n; ++c) ca.push_back(static_cast<int>(k));
    }
    for (std::size_t k = 0; k < b.atoms.size(); ++k) {
        const int n = static_cast<int>(std::llround(b.atoms[k].weight * denom));
        for (int c = 0; c < n; ++c) cb.push_back(static_cast<int>(k));
    }
    if (ca.size() != cb.size()) throw std::runtime_error("weights not commensurable");

    auto ground = [&](int i, int j) {
        double d = (a.atoms[ca[i]].x - b.atoms[cb[j]].x).norm();
        if (a.atoms[ca[i]].mode != b.atoms[cb[j]].mode) d += kappa;
        return order == 1 ? d : d * d;
    };

    std::vector<int> perm(cb.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (std::size_t i = 0; i < perm.size(); ++i) cost += ground(static_cast<int>(i), perm[i]);
        best = std::min(best, cost);
    } while (std::next_permutation(perm.begin(), perm.end()));
    best /= denom;
    return order == 1 ? best : std::sqrt(best);
}

} // namespace mfs_tests

#endif
