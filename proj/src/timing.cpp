#include "ridehail/timing.hpp"

#include <cmath>
#include <stdexcept>

#include "ridehail/numerics.hpp"

namespace ridehail {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kQuadTol = 1e-10;

void check_radii(const RegionParams& r, const MatchingRadii& radii, FormulaMode mode) {
    if (!(radii.customer > 0) || !(radii.driver > 0))
        throw std::domain_error("matching radii must be positive");
    if (mode == FormulaMode::exact) {
        const double rmax = std::sqrt(r.area / kPi);
        if (!(radii.customer < rmax) || !(radii.driver < rmax))
            throw std::domain_error("matching radii must be below sqrt(area/pi)");
    }
}

void check_interior(const RegionParams& r, double x) {
    if (!(x > 0) || !(x < r.demand_rate))
        throw std::domain_error("supply rate must lie strictly inside (0, demand_rate)");
}

// "Disk coefficient" C such that the no-match probability within radius R is
// exp(-mu * C): C = -a log(1 - pi R^2/a) on the bounded region, pi R^2 on the
// plane.
double disk_coefficient(const RegionParams& r, double radius, FormulaMode mode) {
    if (mode == FormulaMode::exact) return -r.area * std::log1p(-kPi * radius * radius / r.area);
    return kPi * radius * radius;
}

// int_0^R exp(-mu*pi*r^2) dr - R exp(-mu*pi*R^2), the plane-form pickup
// integral. Series branch keeps the small-u cancellation out.
double plane_pickup_integral(double mu, double radius, double speed_unused = 0.0) {
    (void)speed_unused;
    const double u = mu * kPi * radius * radius;
    if (u < 1e-4) return radius * u * (2.0 / 3.0 - u * (2.0 / 5.0 - u / 7.0));
    const double sq = std::sqrt(mu);
    return num::erf(std::sqrt(kPi) * sq * radius) / (2.0 * sq) - radius * std::exp(-u);
}

// Bounded-region pickup integral at density mu:
// int_0^R (1 - pi r^2/a)^{mu a} dr - R (1 - pi R^2/a)^{mu a}.
double disk_pickup_integral(const RegionParams& reg, double mu, double radius) {
    const double exponent = mu * reg.area;
    const double endpoint = std::exp(exponent * std::log1p(-kPi * radius * radius / reg.area));
    const double integral = num::integrate(
        [&](double r) { return std::exp(exponent * std::log1p(-kPi * r * r / reg.area)); }, 0.0,
        radius, kQuadTol);
    return integral - radius * endpoint;
}

struct Core {
    double log_bracket;  // log(1 - (x/b) * P(no customer within R_c))
    double mu_c;
    double supply;       // b (1 - e^{-s})
};

// Everything downstream needs log(1 - (x/b) e^{-mu_c C_c}) evaluated without
// cancellation. With eps = e^{-s} = 1 - x/b the bracket is
// -expm1(-k eps) + eps e^{-k eps}, k = b C_c / theta, positive and exact for
// all gaps; for gaps below the subnormal range it degrades smoothly to
// log1p(k) - s.
Core core_at_gap(const RegionParams& r, double s, double radius_c, FormulaMode mode) {
    const double b = r.demand_rate;
    const double cc = disk_coefficient(r, radius_c, mode);
    const double k = b * cc / r.abandonment_rate;
    Core out;
    out.supply = b * -std::expm1(-s);
    out.mu_c = b * std::exp(-s) / r.abandonment_rate;
    if (s > 600.0) {
        out.log_bracket = std::log1p(k) - s;
    } else {
        const double eps = std::exp(-s);
        const double bracket = -std::expm1(-k * eps) + eps * std::exp(-k * eps);
        out.log_bracket = std::log(bracket);
    }
    return out;
}

}  // namespace

double mu_c(const RegionParams& region, double supply_rate) {
    if (!(supply_rate >= 0) || supply_rate > region.demand_rate)
        throw std::domain_error("supply rate must lie in [0, demand_rate]");
    return (region.demand_rate - supply_rate) / region.abandonment_rate;
}

double gap_from_supply(const RegionParams& region, double supply_rate) {
    check_interior(region, supply_rate);
    return -std::log1p(-supply_rate / region.demand_rate);
}

double supply_from_gap(const RegionParams& region, double s) {
    if (!(s > 0)) throw std::domain_error("supply gap must be positive");
    return region.demand_rate * -std::expm1(-s);
}

GapEvaluation evaluate_at_gap(const RegionParams& region, double s, const MatchingRadii& radii,
                              FormulaMode mode) {
    if (mode == FormulaMode::sqrt_law)
        throw std::domain_error("evaluate_at_gap: exact or approx mode required");
    if (!(s > 0)) throw std::domain_error("supply gap must be positive");
    check_radii(region, radii, mode);
    const Core core = core_at_gap(region, s, radii.customer, mode);
    const double dd = disk_coefficient(region, radii.driver, mode);

    GapEvaluation out;
    out.supply_rate = core.supply;
    out.mu_c = core.mu_c;
    out.mu_d = -core.log_bracket / dd;
    out.wait = out.mu_d / core.supply;

    const double b = region.demand_rate, v = region.speed;
    double i1, i2;
    if (mode == FormulaMode::exact) {
        i1 = disk_pickup_integral(region, out.mu_c, radii.customer);
        i2 = disk_pickup_integral(region, out.mu_d, radii.driver);
    } else {
        i1 = plane_pickup_integral(out.mu_c, radii.customer);
        i2 = plane_pickup_integral(out.mu_d, radii.driver);
    }
    out.pickup = i1 / v + b / (v * core.supply) * i2;
    return out;
}

double mu_d_exact(const RegionParams& region, double supply_rate, const MatchingRadii& radii) {
    check_interior(region, supply_rate);
    return evaluate_at_gap(region, gap_from_supply(region, supply_rate), radii,
                           FormulaMode::exact)
        .mu_d;
}

double waiting_time_exact(const RegionParams& region, double supply_rate,
                          const MatchingRadii& radii) {
    check_interior(region, supply_rate);
    return evaluate_at_gap(region, gap_from_supply(region, supply_rate), radii,
                           FormulaMode::exact)
        .wait;
}

double pickup_time_exact(const RegionParams& region, double supply_rate,
                         const MatchingRadii& radii) {
    check_interior(region, supply_rate);
    return evaluate_at_gap(region, gap_from_supply(region, supply_rate), radii,
                           FormulaMode::exact)
        .pickup;
}

double mu_d_approx(const RegionParams& region, double supply_rate, const MatchingRadii& radii) {
    check_interior(region, supply_rate);
    return evaluate_at_gap(region, gap_from_supply(region, supply_rate), radii,
                           FormulaMode::approx)
        .mu_d;
}

double waiting_time_approx(const RegionParams& region, double supply_rate,
                           const MatchingRadii& radii) {
    check_interior(region, supply_rate);
    return evaluate_at_gap(region, gap_from_supply(region, supply_rate), radii,
                           FormulaMode::approx)
        .wait;
}

double pickup_time_approx(const RegionParams& region, double supply_rate,
                          const MatchingRadii& radii) {
    check_interior(region, supply_rate);
    return evaluate_at_gap(region, gap_from_supply(region, supply_rate), radii,
                           FormulaMode::approx)
        .pickup;
}

double pickup_time_from_densities(const RegionParams& region, double supply_rate,
                                  const MatchingRadii& radii, const QueueDensities& dens,
                                  FormulaMode mode) {
    if (mode == FormulaMode::sqrt_law)
        throw std::domain_error("pickup_time_from_densities: exact or approx mode required");
    check_radii(region, radii, mode);
    if (!(supply_rate > 0)) throw std::domain_error("supply rate must be positive");
    const double b = region.demand_rate, v = region.speed;
    double i1, i2;
    if (mode == FormulaMode::exact) {
        i1 = disk_pickup_integral(region, dens.customers, radii.customer);
        i2 = disk_pickup_integral(region, dens.drivers, radii.driver);
    } else {
        i1 = plane_pickup_integral(dens.customers, radii.customer);
        i2 = plane_pickup_integral(dens.drivers, radii.driver);
    }
    return i1 / v + b / (v * supply_rate) * i2;
}

double sqrt_law_pickup(const RegionParams& region, double mu) {
    if (!(mu > 0)) throw std::domain_error("sqrt_law_pickup: density must be positive");
    return 1.0 / (2.0 * region.speed * std::sqrt(mu));
}

double radius_to_unbounded(const RegionParams& region, double radius) {
    const double rmax2 = region.area / kPi;
    if (!(radius > 0) || !(radius * radius < rmax2))
        throw std::domain_error("radius must lie in (0, sqrt(area/pi))");
    return std::sqrt(-rmax2 * std::log1p(-radius * radius / rmax2));
}

SojournBreakdown sojourn(const RegionParams& region, double supply_rate,
                         const MatchingRadii& radii, FormulaMode mode, double trip_time) {
    const double b = region.demand_rate;
    const double lo = b * kSupplyMargin, hi = b * (1.0 - kSupplyMargin);
    SojournBreakdown out;
    double x = supply_rate;
    if (x < lo) { x = lo; out.clamped = true; }
    if (x > hi) { x = hi; out.clamped = true; }

    if (mode == FormulaMode::sqrt_law) {
        out.driver_wait = 0.0;  // undersupply branch: no waiting drivers
        out.pickup = sqrt_law_pickup(region, mu_c(region, x));
    } else {
        const GapEvaluation eval =
            evaluate_at_gap(region, gap_from_supply(region, x), radii, mode);
        out.driver_wait = eval.wait;
        out.pickup = eval.pickup;
    }
    out.trip = trip_time;
    out.total = out.driver_wait + out.pickup + out.trip;
    return out;
}

double steady_state_residual(const RegionParams& region, double supply_rate,
                             const MatchingRadii& radii, const QueueDensities& dens,
                             FormulaMode mode) {
    const double b = region.demand_rate;
    const double cc = disk_coefficient(region, radii.customer, mode);
    const double dd = disk_coefficient(region, radii.driver, mode);
    const double enter = supply_rate * std::exp(-dens.customers * cc);
    const double leave = b * -std::expm1(-dens.drivers * dd);
    return enter - leave;
}

}  // namespace ridehail
