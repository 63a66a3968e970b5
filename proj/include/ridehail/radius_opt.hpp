#pragma once

#include <functional>

#include "ridehail/timing.hpp"

namespace ridehail {

struct OptimalRadiusResult {
    double radius = 0.0;      // R*, shared by both matching radii (km)
    double beta_star = 0.0;   // sqrt(-log(1 - (x/b) e^{-mu_c pi R*^2}))
    double value = 0.0;       // minimized waiting + pickup (min)
    double residual = 0.0;    // optimality-equation residual at R*
};

// Radius minimizing waiting + pickup time (plane formulas) at the given
// supply rate. The optimality condition is solved in z = pi R^2 on an
// expanding bracket; the symmetric solution R_c = R_d = R* is the unique
// minimizer.
OptimalRadiusResult optimal_radius(const RegionParams& region, double supply_rate);

// Same, parametrized by the supply gap s = -log(1 - x/b) (tail-safe).
OptimalRadiusResult optimal_radius_at_gap(const RegionParams& region, double s);

// f(x) = waiting + pickup at the optimal radius.
double optimal_sojourn(const RegionParams& region, double supply_rate);
double optimal_sojourn_at_gap(const RegionParams& region, double s);

// Analytic df/dx (envelope form); strictly positive on (0, b).
double optimal_sojourn_derivative(const RegionParams& region, double supply_rate);

struct MonotonicityReport {
    double min_derivative = 0.0;        // over the grid (analytic path only)
    double min_forward_difference = 0.0;
    bool has_derivative = false;
    bool pass = false;
    double grid_lo = 0.0, grid_hi = 0.0;
    int grid_size = 0;
};

// Certifies that a sojourn curve is strictly increasing on a supply grid
// spanning [0.01 b, 0.99 b]. With `sojourn_fn` empty the optimal-radius
// curve is certified (analytic derivative included); otherwise the supplied
// curve is checked by forward differences only.
MonotonicityReport monotonicity_certificate(
    const RegionParams& region, int grid_size,
    const std::function<double(double)>& sojourn_fn = {});

}  // namespace ridehail
