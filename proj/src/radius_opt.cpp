#include "ridehail/radius_opt.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ridehail/errors.hpp"
#include "ridehail/numerics.hpp"

namespace ridehail {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kSqrtPi = 1.7724538509055160273;

// E(y) = erf(y) - (2/sqrt(pi)) y e^{-y^2}; increasing, E(0)=0, E(inf)=1.
double erf_core(double y) {
    return num::erf(y) - (2.0 / kSqrtPi) * y * std::exp(-y * y);
}

struct Objective {
    const RegionParams& region;
    double s;  // supply gap

    // beta^2(z) = -log(1 - (x/b) e^{-mu_c z}) with z = pi R^2, computed
    // cancellation-free in the gap parametrization.
    double beta_sq(double z) const {
        const double k = region.demand_rate * z / region.abandonment_rate;
        if (s > 600.0) return s - std::log1p(k);
        const double eps = std::exp(-s);
        return -std::log(-std::expm1(-k * eps) + eps * std::exp(-k * eps));
    }

    // Optimality residual in z: (b/4v)^{2/3} E(beta)^{2/3} - beta^2 / z.
    double residual(double z) const {
        const double b2 = beta_sq(z);
        const double lhs = std::pow(region.demand_rate / (4.0 * region.speed), 2.0 / 3.0) *
                           std::pow(erf_core(std::sqrt(b2)), 2.0 / 3.0);
        return lhs - b2 / z;
    }
};

}  // namespace

OptimalRadiusResult optimal_radius_at_gap(const RegionParams& region, double s) {
    if (!(s > 0)) throw std::domain_error("supply gap must be positive");
    const Objective obj{region, s};

    // The residual is negative for z -> 0 and first turns positive at the
    // unique optimum; expand the bracket upward until the sign change.
    double z_lo = 1e-8;
    double f_lo = obj.residual(z_lo);
    while (f_lo > 0) {  // pathological only for extreme parameters
        z_lo *= 0.0625;
        if (z_lo < 1e-300) throw ConvergenceError("optimal_radius: bracket collapse");
        f_lo = obj.residual(z_lo);
    }
    double z_hi = z_lo * 4.0;
    double f_hi = obj.residual(z_hi);
    int guard = 0;
    while (f_hi < 0) {
        z_lo = z_hi;
        z_hi *= 4.0;
        f_hi = obj.residual(z_hi);
        if (++guard > 600) throw ConvergenceError("optimal_radius: bracket expansion failed");
    }

    num::RootBracket bracket{z_lo, z_hi, 1e-15, 0.0};
    const double z = num::find_root([&](double zz) { return obj.residual(zz); }, bracket);

    OptimalRadiusResult out;
    out.radius = std::sqrt(z / kPi);
    out.beta_star = std::sqrt(obj.beta_sq(z));
    out.residual = obj.residual(z);
    const MatchingRadii radii{out.radius, out.radius};
    const GapEvaluation eval = evaluate_at_gap(region, s, radii, FormulaMode::approx);
    out.value = eval.wait + eval.pickup;
    return out;
}

OptimalRadiusResult optimal_radius(const RegionParams& region, double supply_rate) {
    return optimal_radius_at_gap(region, gap_from_supply(region, supply_rate));
}

double optimal_sojourn(const RegionParams& region, double supply_rate) {
    return optimal_radius(region, supply_rate).value;
}

double optimal_sojourn_at_gap(const RegionParams& region, double s) {
    return optimal_radius_at_gap(region, s).value;
}

double optimal_sojourn_derivative(const RegionParams& region, double supply_rate) {
    const OptimalRadiusResult opt = optimal_radius(region, supply_rate);
    const double b = region.demand_rate, v = region.speed, th = region.abandonment_rate;
    const double x = supply_rate;
    const double alpha = std::sqrt(kPi * (b - x) / th) * opt.radius;
    const double beta = opt.beta_star;

    // Envelope form: the (b - x)-sensitivity of the customer-side pickup
    // term plus the supply-rate sensitivity of the driver-side terms.
    const double term1 =
        std::sqrt(th) / (4.0 * v * std::pow(b - x, 1.5)) * erf_core(alpha);
    const double numer = (2.0 / kSqrtPi) * beta * std::exp(-beta * beta) -
                         3.0 * num::erf(beta) + (4.0 / kSqrtPi) * beta;
    const double term2 = std::pow(b, 2.0 / 3.0) * numer /
                         (std::pow(4.0 * v, 2.0 / 3.0) * x * x *
                          std::cbrt(erf_core(beta)));
    return term1 + term2;
}

MonotonicityReport monotonicity_certificate(const RegionParams& region, int grid_size,
                                            const std::function<double(double)>& sojourn_fn) {
    if (grid_size < 2) throw std::invalid_argument("monotonicity_certificate: grid_size >= 2");
    const double b = region.demand_rate;
    MonotonicityReport rep;
    rep.grid_lo = 0.01 * b;
    rep.grid_hi = 0.99 * b;
    rep.grid_size = grid_size;
    rep.has_derivative = !sojourn_fn;

    const auto value = [&](double x) {
        return sojourn_fn ? sojourn_fn(x) : optimal_sojourn(region, x);
    };

    double prev = value(rep.grid_lo);
    double min_diff = std::numeric_limits<double>::infinity();
    double min_deriv = std::numeric_limits<double>::infinity();
    if (rep.has_derivative) min_deriv = optimal_sojourn_derivative(region, rep.grid_lo);
    for (int k = 1; k < grid_size; ++k) {
        const double x = rep.grid_lo + (rep.grid_hi - rep.grid_lo) * k / (grid_size - 1.0);
        const double cur = value(x);
        min_diff = std::min(min_diff, cur - prev);
        prev = cur;
        if (rep.has_derivative)
            min_deriv = std::min(min_deriv, optimal_sojourn_derivative(region, x));
    }
    rep.min_forward_difference = min_diff;
    rep.min_derivative = rep.has_derivative ? min_deriv : 0.0;
    rep.pass = min_diff > 0.0 && (!rep.has_derivative || min_deriv > 0.0);
    return rep;
}

}  // namespace ridehail
