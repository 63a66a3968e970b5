#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "ridehail/model.hpp"
#include "ridehail/parallel.hpp"
#include "ridehail/timing.hpp"

namespace ridehail {

// Dispatch-radius policy used when evaluating sojourn times as functions of
// the supply rate.
struct RadiiPolicy {
    enum class Kind { fixed, dynamic_optimal };
    Kind kind = Kind::dynamic_optimal;
    FormulaMode mode = FormulaMode::approx;  // formula family for fixed radii
    std::vector<MatchingRadii> radii;        // per region (size 1 broadcasts)

    static RadiiPolicy dynamic() { return RadiiPolicy{}; }
    static RadiiPolicy fixed(MatchingRadii r, FormulaMode mode) {
        return RadiiPolicy{Kind::fixed, mode, {r}};
    }
    const MatchingRadii& radii_for(std::size_t region) const {
        return radii.size() == 1 ? radii.front() : radii.at(region);
    }
};

enum class RegimeTag { oversupply, undersupply, interior };

struct EquilibriumResult {
    Matrix x;                                // N x N mass rates
    Matrix mu;                               // N x N mass densities (Little's law)
    double lambda = 0.0;                     // recovered conservation multiplier
    std::vector<double> nu;                  // balance multipliers, nu[0] = 0 gauge
    std::vector<SojournBreakdown> sojourn;   // per region, at x_ii
    double kkt_residual = std::numeric_limits<double>::infinity();
    double balance_residual_inf = std::numeric_limits<double>::infinity();
    double conservation_residual = std::numeric_limits<double>::infinity();  // relative
    RegimeTag classification = RegimeTag::interior;
    bool verified = false;
    double average_reward = 0.0;
    // Single-region diagnostics: supply gap s = -log(1 - x/b) when the root
    // was located in gap space (0 = not applicable, inf = mass pooled at the
    // demand-supply boundary).
    double tail_gap = 0.0;
    int iterations = 0;
    double fw_gap = std::numeric_limits<double>::infinity();
    std::vector<double> ascent_steps;        // per-accepted-step objective gain estimates
};

struct RegimeEquilibrium {
    double supply_rate = 0.0;
    double mu_d = 0.0;
    // Leftover of the oversupply mass equation at this point; nonzero marks
    // the tangency point reported when the equation has no exact root.
    double mass_residual = 0.0;
};

struct RegimeReport {
    double m_threshold = 0.0;  // (1/3) (b^2/(16 v^2))^{1/3} + b t
    int case_id = 0;           // 1 | 2 | 3
    std::vector<RegimeEquilibrium> equilibria;  // oversupply entries first
    double poa_ratio = std::numeric_limits<double>::quiet_NaN();  // x^u / x^o
    bool degenerate_oversupply = false;
};

struct PoaPoint {
    double theta = 0.0;
    double x_under = 0.0;
    double x_over = 0.0;
    double ratio = 0.0;
};

struct BestResponseReport {
    bool pass = false;
    bool lp_feasible = false;
    double lp_value = 0.0;
    double phi = 0.0;
    double gap = 0.0;  // lp_value - phi
    double balance_residual = 0.0;
};

// x (w(x) + tau(x) + trip) as a function of the supply gap; the left-hand
// side of the single-region stationarity equation.
double mass_curve_at_gap(const RegionParams& region, const RadiiPolicy& policy, double trip_time,
                         double s);
double mass_curve(const RegionParams& region, const RadiiPolicy& policy, double trip_time,
                  double supply_rate);

// mu + b/(2 v sqrt(mu)) + b t: total mass absorbed by an oversupply state
// with pooled driver density mu (square-root-law pickup).
double oversupply_mass(const RegionParams& region, double mu_d, double trip_time);

// Full sojourn-time matrix at rates x: diagonal w+tau+t_i, off-diagonal the
// repositioning travel times.
Matrix sojourn_matrix(const NetworkModel& network, const Matrix& x, const RadiiPolicy& policy);

// All stationary points of the single-region mass equation. The scan runs in
// gap space so roots arbitrarily close to the demand-supply boundary are
// found; dynamic policies with more mass than the policy can absorb yield the
// pooled oversupply point.
std::vector<EquilibriumResult> single_region_equilibria(const RegionParams& region,
                                                        const RadiiPolicy& policy,
                                                        double trip_time, double total_mass);

// Square-root-law regime classification of the unrestricted-radius game.
RegimeReport sqrt_regime_classify(const RegionParams& region, double trip_time,
                                  double total_mass);

// Ratio x^u/x^o across an abandonment-rate sweep, mass pinned to the
// two-equilibria threshold.
std::vector<PoaPoint> poa_probe(const RegionParams& region_template, double trip_time,
                                const std::vector<double>& thetas);

struct SolveOptions {
    int max_iterations = 4000;
    double gap_tolerance = 1e-9;   // scaled by total mass
    bool polish = true;
    ExecMode exec = ExecMode::parallel;
};

// Potential maximization by conditional gradient over the balance polytope,
// with an active-set Newton polish. Returns the stationary point reached;
// `verified` reports whether all equilibrium residuals meet tolerance.
EquilibriumResult solve_mfg(const NetworkModel& network, const RadiiPolicy& policy,
                            const SolveOptions& options = {});

// Multi-start ascent from random feasible points; stationary points deduped
// at 1e-4 infinity-norm (higher objective kept). Deterministic given seed.
std::vector<EquilibriumResult> find_multiple_kkt(const NetworkModel& network,
                                                 const RadiiPolicy& policy, int n_starts,
                                                 std::uint64_t seed,
                                                 const SolveOptions& options = {});

// Freezes sojourn times at the candidate and checks that the representative
// driver's best-response LP cannot beat the population reward.
BestResponseReport verify_best_response(const NetworkModel& network,
                                        const EquilibriumResult& candidate);

// Rebuilds a full result (mass distribution, multipliers, residuals,
// classification, verified flag) from stored rates and sojourn components.
// Used to re-check serialized results.
EquilibriumResult assemble_result(const NetworkModel& network, const Matrix& x,
                                  std::vector<SojournBreakdown> sojourn, double tail_gap = 0.0);

}  // namespace ridehail
