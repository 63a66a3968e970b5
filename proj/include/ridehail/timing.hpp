#pragma once

#include "ridehail/model.hpp"

namespace ridehail {

// Which waiting/pickup-time formula family to use. `exact` treats the region
// as a bounded disk of area a; `approx` is the unbounded-plane (spatial
// Poisson) closed form; `sqrt_law` is the large-queue asymptotic.
enum class FormulaMode { exact, approx, sqrt_law };

struct QueueDensities {
    double customers = 0.0;  // pass/km^2
    double drivers = 0.0;    // veh/km^2
};

struct SojournBreakdown {
    double driver_wait = 0.0;  // min
    double pickup = 0.0;       // min
    double trip = 0.0;         // min
    double total = 0.0;
    bool clamped = false;      // supply rate was pulled inside (0, b) before evaluation
};

// Waiting-customer density from the abandonment balance: (b - x) / theta.
// Domain: 0 <= x <= b.
double mu_c(const RegionParams& region, double supply_rate);

// Waiting-driver density under the two-radius dispatch on the bounded
// region. Domain: 0 < x < b, radii in (0, sqrt(a/pi)).
double mu_d_exact(const RegionParams& region, double supply_rate, const MatchingRadii& radii);

// Driver mean waiting time, bounded-region form; equals mu_d_exact / x.
double waiting_time_exact(const RegionParams& region, double supply_rate,
                          const MatchingRadii& radii);

// Driver mean pickup time, bounded-region form (two quadratures, tol 1e-10).
double pickup_time_exact(const RegionParams& region, double supply_rate,
                         const MatchingRadii& radii);

// Unbounded-plane counterparts (radii only need to be positive).
double mu_d_approx(const RegionParams& region, double supply_rate, const MatchingRadii& radii);
double waiting_time_approx(const RegionParams& region, double supply_rate,
                           const MatchingRadii& radii);
double pickup_time_approx(const RegionParams& region, double supply_rate,
                          const MatchingRadii& radii);

// Pickup time with explicitly supplied queue densities (either formula
// family). Lets callers probe asymptotic regimes that the density formulas
// cannot reach.
double pickup_time_from_densities(const RegionParams& region, double supply_rate,
                                  const MatchingRadii& radii, const QueueDensities& dens,
                                  FormulaMode mode);

// Large-queue pickup asymptotic: 1 / (2 v sqrt(mu)). Domain: mu > 0.
double sqrt_law_pickup(const RegionParams& region, double mu);

// Bounded-region radius -> equivalent unbounded-plane radius:
// R~^2 = -(a/pi) log(1 - pi R^2 / a).
double radius_to_unbounded(const RegionParams& region, double radius);

// Assembles waiting + pickup + trip for the serve-local action. The supply
// rate is clamped into [b*margin, b*(1-margin)] first; `clamped` records
// whether that happened. In sqrt_law mode the undersupply form is used
// (no waiting drivers, pickup from the customer queue).
SojournBreakdown sojourn(const RegionParams& region, double supply_rate,
                         const MatchingRadii& radii, FormulaMode mode, double trip_time);

// ---------------------------------------------------------------------------
// Supply-gap parametrization
// ---------------------------------------------------------------------------
// Near the demand-supply limit the interesting structure lives at relative
// gaps 1 - x/b far below machine epsilon (the waiting time diverges only
// logarithmically). These entry points take s = -log(1 - x/b) directly and
// evaluate the same formulas without cancellation, valid for any s > 0.

struct GapEvaluation {
    double supply_rate = 0.0;  // b * (1 - e^{-s}), saturates at b in doubles
    double mu_c = 0.0;
    double mu_d = 0.0;
    double wait = 0.0;
    double pickup = 0.0;
};

double gap_from_supply(const RegionParams& region, double supply_rate);  // s
double supply_from_gap(const RegionParams& region, double s);

// mode must be exact or approx.
GapEvaluation evaluate_at_gap(const RegionParams& region, double s, const MatchingRadii& radii,
                              FormulaMode mode);

// Residual of the two-radius steady-state balance at the given densities
// (zero when the densities are mutually consistent).
double steady_state_residual(const RegionParams& region, double supply_rate,
                             const MatchingRadii& radii, const QueueDensities& dens,
                             FormulaMode mode);

}  // namespace ridehail
