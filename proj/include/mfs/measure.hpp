#ifndef MFS_MEASURE_HPP
#define MFS_MEASURE_HPP

#include <optional>
#include <vector>

#include "mfs/common.hpp"
#include "mfs/scalar_fn.hpp"

namespace mfs {

/// Point of the hybrid space: spatial coordinate plus a mode label.
struct ModePoint {
    Vec x;
    int mode = 0;
};

/// Finitely supported probability measure on R^d x {0..n_modes-1}.
struct DiscreteLawS {
    struct Atom {
        Vec x;
        int mode = 0;
        double weight = 0.0;
    };

    std::vector<Atom> atoms;
    int n_modes = 0;

    static DiscreteLawS point(Vec x, int mode, int n_modes);

    int dim() const { return atoms.empty() ? 0 : static_cast<int>(atoms.front().x.size()); }
    double mode_mass(int i) const;
    /// Merges atoms with identical (x, mode) and drops zero weights.
    DiscreteLawS compacted(double x_tol = 1e-12) const;
};

/// Per-atom stochastic relabeling of modes: rows[k] is the distribution of
/// the target mode for atom k of the measure it is applied to.
struct InterventionKernel {
    std::vector<Vec> rows;

    static InterventionKernel identity(const DiscreteLawS& m);
    int size() const { return static_cast<int>(rows.size()); }
};

struct DominanceResult {
    bool dominated = false;
    std::optional<InterventionKernel> witness;
    std::string reason;
};

ValidationReport validate_law(const DiscreteLawS& m, double tol = 1e-12);
ValidationReport validate_kernel(const InterventionKernel& k, const DiscreteLawS& m,
                                 double tol = 1e-12);

/// m'(dx, j) = sum_i p_ij(x) m(dx, i): spatial coordinates kept, mode mass
/// redistributed row by row. Output is compacted.
DiscreteLawS apply_kernel(const DiscreteLawS& m, const InterventionKernel& k);

/// Total mass whose mode label actually changes under k.
double relabeled_mass(const DiscreteLawS& m, const InterventionKernel& k);

/// sum over atoms of mode i of weight * psi(x).
double mode_moment(const DiscreteLawS& m, int mode, const ScalarFn& psi);

/// Exact optimal-transport distance on finite supports with ground metric
/// |x - x'| + kappa * 1_{mode mismatch}. order must be 1 or 2; for order 2
/// the ground metric is squared inside the plan and the root applied after.
double wasserstein(const DiscreteLawS& m1, const DiscreteLawS& m2, int order = 2,
                   double kappa = 1.0);

/// Decides the relabeling partial order for measures sharing spatial atoms.
/// Throws InvalidArgument when the spatial supports differ, since the order
/// is only defined along shared x-atoms.
DominanceResult is_dominated(const DiscreteLawS& m_prime, const DiscreteLawS& m,
                             double x_tol = 1e-12, double mass_tol = 1e-9);

} // namespace mfs

#endif
