#ifndef MFS_TRADING_HPP
#define MFS_TRADING_HPP

#include <string>
#include <vector>

#include "mfs/chain.hpp"
#include "mfs/common.hpp"
#include "mfs/functional.hpp"
#include "mfs/measure.hpp"
#include "mfs/model.hpp"

namespace mfs {

/// Closed-form long/short switching example. Modes are {0 = short, 1 = long};
/// the chain orders market states by threshold level. The candidate value is
///   u(t, m; l) = (T - t) sum_q l(q) ( [v1(m) ∧ a1(q)] + [v0(m) ∧ a0(q)] )
/// with v_i(m) = <psi, m(., i)>, switch costs (T - t) psi(x) both ways, and
/// the running reward of the family that makes u satisfy the obstacle system.
///
/// Two chain layouts are supported: a plain two-state chain with rates
/// (mu1, mu2), and the four-state two-time-scale layout whose fast part flips
/// the secondary indicator within each primary block at rates (lam1, lam2)
/// scaled by 1/epsilon, and whose slow part moves between blocks at
/// (mu1, mu2). Four-state indexing: q = 2*(primary-1) + (secondary-1).
struct TradingExampleSpec {
    double horizon = 1.0;
    ScalarFn psi = ScalarFn::coordinate();

    std::vector<double> a1;     // long thresholds per chain state
    std::vector<double> a0;     // short thresholds per chain state

    int states = 2;             // 2 or 4
    double mu1 = 1.0, mu2 = 1.0;
    double lam1 = 1.0, lam2 = 1.0;
    double epsilon = 1.0;       // only meaningful for the four-state layout
    double sigma = 0.0;         // diffusion used when the premise allows it

    int primary_of(int q) const { return states == 4 ? q / 2 : q; }

    GeneratorMatrix generator() const;
    TwoScaleSpec two_scale() const;     // four-state layout only

    ValidationReport validate() const;
};

enum class ModeAction { Keep, SwitchOut };

struct ActionReport {
    int chain_state = 0;
    double weight = 1.0;                  // l(q) when classified under a law
    ModeAction long_action = ModeAction::Keep;
    ModeAction short_action = ModeAction::Keep;
    // Target moments after intervening: v_i(m') = a_i(q) when switching out.
    double long_target = 0.0;
    double short_target = 0.0;
};

struct StrategyCell {
    double v1 = 0.0, v0 = 0.0;
    int chain_state = 0;
    ModeAction long_action = ModeAction::Keep;
    ModeAction short_action = ModeAction::Keep;
};

struct StrategyTable {
    std::vector<StrategyCell> cells;
    std::vector<double> long_boundaries;    // the a1 thresholds
    std::vector<double> short_boundaries;   // the a0 thresholds
};

double example_value(const TradingExampleSpec& spec, double t, const DiscreteLawS& m,
                     const ChainLaw& l);

/// Closed-form residual: diffusion part from the piecewise formula,
/// obstacle gap by exact one-dimensional optimization over the transported
/// psi-mass with cost (T - t) per unit moved.
ViResidual example_residual(const TradingExampleSpec& spec, double t,
                            const DiscreteLawS& m, const ChainLaw& l);

ActionReport classify_action(const TradingExampleSpec& spec, const DiscreteLawS& m, int q);
std::vector<ActionReport> classify_action(const TradingExampleSpec& spec,
                                          const DiscreteLawS& m, const ChainLaw& l);

StrategyTable strategy_table(const TradingExampleSpec& spec,
                             const std::vector<double>& v1_grid,
                             const std::vector<double>& v0_grid);

/// Collapses a four-state spec with block-constant thresholds to the
/// two-state limit spec driven by the aggregated generator.
TradingExampleSpec limit_reduction(const TradingExampleSpec& four_state);

/// The candidate as a cylindrical functional (moment basis: psi on mode 1,
/// psi on mode 0).
CylindricalFunctional trading_functional(const TradingExampleSpec& spec);

/// Model data of the family: drift mu_{primary(q)} (so L^{i,q} psi = mu),
/// diagonal diffusion spec.sigma, the family running reward, h = 0.
CoefficientSet trading_coefficients(const TradingExampleSpec& spec);
CostMatrix trading_costs(const TradingExampleSpec& spec);
RateFunction trading_rates(const TradingExampleSpec& spec);

/// Family running reward
///   f(t, q, m) = a1(q) + a0(q) - |v1 - a1(q)| - |v0 - a0(q)| - corr_q(t, m)
/// where corr_q cancels the drift and slow-jump generator terms of the
/// candidate. The fast-jump terms of the four-state layout are left in
/// place; they vanish exactly for block-constant thresholds.
double trading_running_reward(const TradingExampleSpec& spec, double t, int q,
                              const DiscreteLawS& m);

/// Checks L^{i,q} psi == mu_{primary(q)} on sampled points of [lo, hi]^d.
ValidationReport check_drift_premise(const TradingExampleSpec& spec,
                                     const CoefficientSet& coeffs, double lo, double hi,
                                     double tol = 1e-9);

std::string to_string(ModeAction a);

} // namespace mfs

#endif
