#include "ridehail/equilibrium.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <stdexcept>

#include "ridehail/errors.hpp"
#include "ridehail/numerics.hpp"
#include "ridehail/radius_opt.hpp"

namespace ridehail {

namespace {

constexpr double kActiveTol = 1e-7;      // support threshold on rates
constexpr double kKktTol = 1e-6;
constexpr double kBalanceTol = 1e-9;
constexpr double kConservationTol = 1e-6;
constexpr double kOversupplyGap = 1e-9;  // relative gap below which a root is oversupply

struct WaitPickup {
    double wait = 0.0;
    double pickup = 0.0;
    double mu_d = 0.0;
    double supply = 0.0;
};

WaitPickup policy_eval_at_gap(const RegionParams& region, const RadiiPolicy& policy,
                              std::size_t region_index, double s) {
    WaitPickup out;
    if (policy.kind == RadiiPolicy::Kind::dynamic_optimal) {
        const OptimalRadiusResult opt = optimal_radius_at_gap(region, s);
        const MatchingRadii radii{opt.radius, opt.radius};
        const GapEvaluation eval = evaluate_at_gap(region, s, radii, FormulaMode::approx);
        out.wait = eval.wait;
        out.pickup = eval.pickup;
        out.mu_d = eval.mu_d;
        out.supply = eval.supply_rate;
    } else {
        const GapEvaluation eval =
            evaluate_at_gap(region, s, policy.radii_for(region_index), policy.mode);
        out.wait = eval.wait;
        out.pickup = eval.pickup;
        out.mu_d = eval.mu_d;
        out.supply = eval.supply_rate;
    }
    return out;
}

WaitPickup policy_eval(const RegionParams& region, const RadiiPolicy& policy,
                       std::size_t region_index, double x) {
    const double b = region.demand_rate;
    const double lo = b * kSupplyMargin, hi = b * (1.0 - kSupplyMargin);
    const double xc = std::min(std::max(x, lo), hi);
    return policy_eval_at_gap(region, policy, region_index, gap_from_supply(region, xc));
}

// d(w + tau)/dx under the policy; analytic for dynamic radii, central
// difference otherwise (only used away from the demand-supply boundary).
double policy_sojourn_slope(const RegionParams& region, const RadiiPolicy& policy,
                            std::size_t region_index, double x) {
    if (policy.kind == RadiiPolicy::Kind::dynamic_optimal)
        return optimal_sojourn_derivative(region, x);
    const double b = region.demand_rate;
    const double h = std::min({1e-7 * b, 0.45 * x, 0.45 * (b - x)});
    const auto f = [&](double xx) {
        const WaitPickup wp = policy_eval(region, policy, region_index, xx);
        return wp.wait + wp.pickup;
    };
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace

double mass_curve_at_gap(const RegionParams& region, const RadiiPolicy& policy, double trip_time,
                         double s) {
    const WaitPickup wp = policy_eval_at_gap(region, policy, 0, s);
    return wp.supply * (wp.wait + wp.pickup + trip_time);
}

double mass_curve(const RegionParams& region, const RadiiPolicy& policy, double trip_time,
                  double supply_rate) {
    return mass_curve_at_gap(region, policy, trip_time, gap_from_supply(region, supply_rate));
}

double oversupply_mass(const RegionParams& region, double mu_d, double trip_time) {
    const double b = region.demand_rate;
    return mu_d + b * sqrt_law_pickup(region, mu_d) + b * trip_time;
}

Matrix sojourn_matrix(const NetworkModel& network, const Matrix& x, const RadiiPolicy& policy) {
    const std::size_t n = network.size();
    Matrix t(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) {
                const WaitPickup wp = policy_eval(network.regions[i], policy, i, x(i, i));
                t(i, i) = wp.wait + wp.pickup + network.mean_trip_time(i);
            } else {
                t(i, j) = network.travel_time(i, j);
            }
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Result assembly
// ---------------------------------------------------------------------------

namespace {

// Least-squares recovery of nu (nu_0 = 0 gauge) from the equality rows, then
// the max violation of the first-order conditions at lambda = 1.
void recover_multipliers(const NetworkModel& net, EquilibriumResult& res) {
    const std::size_t n = net.size();
    const Matrix& x = res.x;
    double reward_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        reward_sum += x(i, i) * net.regions[i].reward_rate * net.mean_trip_time(i);

    std::vector<double> total_time(n);
    for (std::size_t i = 0; i < n; ++i)
        total_time[i] = res.sojourn[i].total;  // t_i + w_i + tau_i

    // rows: active diagonal and off-diagonal first-order equalities
    std::vector<std::array<int, 2>> diag_rows, off_rows;
    for (std::size_t i = 0; i < n; ++i) {
        if (x(i, i) > kActiveTol) diag_rows.push_back({static_cast<int>(i), -1});
        for (std::size_t j = 0; j < n; ++j)
            if (i != j && x(i, j) > kActiveTol)
                off_rows.push_back({static_cast<int>(i), static_cast<int>(j)});
    }

    const std::size_t rows = diag_rows.size() + off_rows.size();
    const auto nu_cols = n - 1;  // nu_0 fixed to zero

    // Pass 1: joint (lambda, nu) least squares to report lambda.
    {
        Matrix a(rows, nu_cols + 1);
        std::vector<double> rhs(rows, 0.0);
        std::size_t r = 0;
        for (const auto& row : diag_rows) {
            const std::size_t i = row[0];
            a(r, 0) = -total_time[i];
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double q = net.demand_matrix(i, j);
                if (i > 0) a(r, i) += q;       // nu_i coefficient
                if (j > 0) a(r, j) -= q;       // nu_j coefficient
            }
            rhs[r] = -net.regions[i].reward_rate * net.mean_trip_time(i) * net.total_mass /
                     reward_sum;
            ++r;
        }
        for (const auto& row : off_rows) {
            const std::size_t i = row[0], j = row[1];
            a(r, 0) = -net.travel_time(i, j);
            if (i > 0) a(r, i) += 1.0;
            if (j > 0) a(r, j) += -1.0;
            rhs[r] = 0.0;
            ++r;
        }
        const std::vector<double> z = num::least_squares(a, rhs, 1e-10);
        res.lambda = z[0];
    }

    // Pass 2: nu at lambda = 1 (these are the multipliers reported and used
    // for the residual).
    std::vector<double> nu(n, 0.0);
    if (nu_cols > 0 && rows > 0) {
        Matrix a(rows, nu_cols);
        std::vector<double> rhs(rows, 0.0);
        std::size_t r = 0;
        for (const auto& row : diag_rows) {
            const std::size_t i = row[0];
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double q = net.demand_matrix(i, j);
                if (i > 0) a(r, i - 1) += q;
                if (j > 0) a(r, j - 1) -= q;
            }
            rhs[r] = total_time[i] - net.regions[i].reward_rate * net.mean_trip_time(i) *
                                         net.total_mass / reward_sum;
            ++r;
        }
        for (const auto& row : off_rows) {
            const std::size_t i = row[0], j = row[1];
            if (i > 0) a(r, i - 1) += 1.0;
            if (j > 0) a(r, j - 1) += -1.0;
            rhs[r] = net.travel_time(i, j);
            ++r;
        }
        const std::vector<double> z = num::least_squares(a, rhs, 1e-10);
        for (std::size_t i = 1; i < n; ++i) nu[i] = z[i - 1];
    }
    res.nu = nu;

    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double e = net.regions[i].reward_rate * net.mean_trip_time(i) * net.total_mass /
                       reward_sum -
                   total_time[i];
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            e += (nu[i] - nu[j]) * net.demand_matrix(i, j);
        }
        worst = std::max(worst, x(i, i) > kActiveTol ? std::fabs(e) : std::max(e, 0.0));
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double eij = -net.travel_time(i, j) + nu[i] - nu[j];
            worst = std::max(worst, x(i, j) > kActiveTol ? std::fabs(eij) : std::max(eij, 0.0));
        }
    }
    res.kkt_residual = worst;
}

void finalize_result(const NetworkModel& net, const RadiiPolicy& policy, EquilibriumResult& res) {
    const std::size_t n = net.size();
    // Pre-filled sojourns (gap-space roots, pooled boundary states) are kept;
    // they carry more resolution than re-evaluating at the rounded rate.
    if (res.sojourn.size() != n) {
        res.sojourn.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const WaitPickup wp = policy_eval(net.regions[i], policy, i, res.x(i, i));
            res.sojourn[i].driver_wait = wp.wait;
            res.sojourn[i].pickup = wp.pickup;
            res.sojourn[i].trip = net.mean_trip_time(i);
            res.sojourn[i].total = wp.wait + wp.pickup + res.sojourn[i].trip;
        }
    }

    res.mu = Matrix(n, n);
    double mass = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double t = (i == j) ? res.sojourn[i].total : net.travel_time(i, j);
            res.mu(i, j) = res.x(i, j) * t;
            mass += res.mu(i, j);
        }
    }
    res.conservation_residual = std::fabs(mass - net.total_mass) / net.total_mass;

    const std::vector<double> bal = balance_residual(net, MassRateVector{res.x});
    double worst = 0.0;
    for (double v : bal) worst = std::max(worst, std::fabs(v));
    res.balance_residual_inf = worst;

    res.average_reward = average_reward(net, MassRateVector{res.x});
    recover_multipliers(net, res);

    bool over = true, under = true;
    for (std::size_t i = 0; i < n; ++i) {
        const double b = net.regions[i].demand_rate;
        if (res.x(i, i) < b * (1.0 - kOversupplyGap)) over = false;
        const double mud = res.x(i, i) * res.sojourn[i].driver_wait;
        if (mud > 1e-9) under = false;
    }
    res.classification = over ? RegimeTag::oversupply
                              : (under ? RegimeTag::undersupply : RegimeTag::interior);

    res.verified = res.kkt_residual <= kKktTol && res.balance_residual_inf <= kBalanceTol &&
                   res.conservation_residual <= kConservationTol &&
                   std::fabs(res.lambda - 1.0) <= 1e-6;
}

NetworkModel single_region_network(const RegionParams& region, double trip_time,
                                   double total_mass) {
    NetworkModel net;
    net.regions = {region};
    net.demand_matrix = Matrix(1, 1, 1.0);
    net.travel_time = Matrix(1, 1, trip_time);
    net.total_mass = total_mass;
    return net;
}

EquilibriumResult package_single_root(const NetworkModel& net, const RadiiPolicy& policy,
                                      double s) {
    const RegionParams& region = net.regions[0];
    const WaitPickup wp = policy_eval_at_gap(region, policy, 0, s);
    EquilibriumResult res;
    res.x = Matrix(1, 1);
    res.x(0, 0) = std::min(wp.supply, std::nextafter(region.demand_rate, 0.0));
    res.tail_gap = s;
    SojournBreakdown sb;
    sb.driver_wait = wp.wait;
    sb.pickup = wp.pickup;
    sb.trip = net.mean_trip_time(0);
    sb.total = sb.driver_wait + sb.pickup + sb.trip;
    res.sojourn = {sb};
    finalize_result(net, policy, res);
    return res;
}

}  // namespace

std::vector<EquilibriumResult> single_region_equilibria(const RegionParams& region,
                                                        const RadiiPolicy& policy,
                                                        double trip_time, double total_mass) {
    if (!(total_mass > 0)) throw std::domain_error("total mass must be positive");
    const NetworkModel net = single_region_network(region, trip_time, total_mass);
    const auto curve = [&](double s) {
        return mass_curve_at_gap(region, policy, trip_time, s) - total_mass;
    };

    // Scan grid: 2000 uniform supply-rate points, continued past the last one
    // in gap coordinates (uniform in s) so near-boundary roots are seen.
    constexpr int kScan = 2000;
    std::vector<double> grid;
    grid.reserve(kScan + 4200);
    for (int j = 1; j <= kScan; ++j)
        grid.push_back(-std::log1p(-static_cast<double>(j) / (kScan + 1)));

    const bool dynamic = policy.kind == RadiiPolicy::Kind::dynamic_optimal;
    {
        double s = grid.back();
        double prev = curve(s);
        const double step = 0.25;
        int stall = 0;
        for (int k = 0; k < 4000; ++k) {
            s += step * (1.0 + 0.01 * k);  // gently accelerating tail walk
            grid.push_back(s);
            const double cur = curve(s);
            // done once the curve is rising well above the probe mass
            if (cur > 1.0 + 0.1 * total_mass && cur >= prev) break;
            stall = (std::fabs(cur - prev) < 1e-13 * std::max(1.0, total_mass)) ? stall + 1 : 0;
            prev = cur;
            if (dynamic && stall > 8) break;  // saturated below the probe mass
        }
    }

    std::vector<double> roots_s;
    double prev_s = grid.front();
    double prev_g = curve(prev_s);
    for (std::size_t k = 1; k < grid.size(); ++k) {
        const double cur_s = grid[k];
        const double cur_g = curve(cur_s);
        if ((prev_g <= 0) != (cur_g <= 0)) {
            // refine the bracket tenfold, then solve
            double lo = prev_s, hi = cur_s, g_lo = prev_g;
            for (int sub = 1; sub <= 10; ++sub) {
                const double mid = prev_s + (cur_s - prev_s) * sub / 10.0;
                const double g_mid = curve(mid);
                if ((g_lo <= 0) != (g_mid <= 0)) { hi = mid; break; }
                lo = mid;
                g_lo = g_mid;
            }
            num::RootBracket bracket{lo, hi, 1e-13 * std::max(1.0, hi),
                                     1e-11 * std::max(1.0, total_mass)};
            roots_s.push_back(num::find_root(curve, bracket));
        }
        prev_s = cur_s;
        prev_g = cur_g;
    }

    std::vector<EquilibriumResult> out;
    for (double s : roots_s) out.push_back(package_single_root(net, policy, s));

    if (out.empty()) {
        if (!dynamic) throw ConvergenceError("single_region_equilibria: no stationary point found");
        // More mass than the dynamic policy can absorb at any interior supply
        // rate: the surplus pools as waiting drivers at the demand-supply
        // boundary. Continue along the ascending oversupply branch.
        const double b = region.demand_rate;
        const double mu_star = std::pow(b / (4.0 * region.speed), 2.0 / 3.0);
        double hi = mu_star * 2.0;
        while (oversupply_mass(region, hi, trip_time) < total_mass) hi *= 2.0;
        num::RootBracket bracket{mu_star, hi, 1e-14, 1e-12 * total_mass};
        const double mu_d = num::find_root(
            [&](double mu) { return oversupply_mass(region, mu, trip_time) - total_mass; },
            bracket);

        EquilibriumResult res;
        res.x = Matrix(1, 1);
        res.x(0, 0) = std::nextafter(b, 0.0);
        res.tail_gap = std::numeric_limits<double>::infinity();
        SojournBreakdown sb;
        sb.driver_wait = mu_d / b;
        sb.pickup = sqrt_law_pickup(region, mu_d);
        sb.trip = trip_time;
        sb.total = sb.driver_wait + sb.pickup + sb.trip;
        res.sojourn = {sb};
        finalize_result(net, policy, res);
        out.push_back(res);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Square-root-law regimes
// ---------------------------------------------------------------------------

namespace {

double undersupply_rate(const RegionParams& region, double trip_time, double total_mass) {
    const double b = region.demand_rate;
    const auto f = [&](double x) {
        return x / (2.0 * region.speed) *
                   std::sqrt(region.abandonment_rate / (b - x)) +
               x * trip_time - total_mass;
    };
    num::RootBracket bracket{b * 1e-14, b * (1.0 - 1e-14), 1e-15 * b, 1e-12 * total_mass};
    return num::find_root(f, bracket);
}

}  // namespace

RegimeReport sqrt_regime_classify(const RegionParams& region, double trip_time,
                                  double total_mass) {
    if (!(total_mass > 0)) throw std::domain_error("total mass must be positive");
    const double b = region.demand_rate, v = region.speed;
    RegimeReport rep;
    rep.m_threshold =
        std::cbrt(b * b / (16.0 * v * v)) / 3.0 + b * trip_time;

    const double mu_star = std::pow(b / (4.0 * v), 2.0 / 3.0);
    const double solvable_mass = oversupply_mass(region, mu_star, trip_time);
    const double xu = undersupply_rate(region, trip_time, total_mass);

    const double band = 1e-6;
    if (total_mass < rep.m_threshold - band) {
        rep.case_id = 1;
        rep.equilibria.push_back({xu, 0.0, 0.0});
        return rep;
    }

    const bool at_threshold = std::fabs(total_mass - rep.m_threshold) <= band;
    rep.case_id = at_threshold ? 2 : 3;

    if (total_mass >= solvable_mass) {
        const auto f = [&](double mu) {
            return oversupply_mass(region, mu, trip_time) - total_mass;
        };
        if (total_mass == solvable_mass) {
            rep.equilibria.push_back({b, mu_star, 0.0});
        } else {
            double lo = mu_star;
            while (f(lo) < 0 && lo > 1e-300) lo *= 0.25;
            num::RootBracket left{lo, mu_star, 1e-15, 1e-12 * total_mass};
            rep.equilibria.push_back({b, num::find_root(f, left), 0.0});
            double hi = mu_star * 2.0;
            while (f(hi) < 0) hi *= 2.0;
            num::RootBracket right{mu_star, hi, 1e-15, 1e-12 * total_mass};
            rep.equilibria.push_back({b, num::find_root(f, right), 0.0});
        }
        if (at_threshold && rep.equilibria.size() == 2) rep.equilibria.pop_back();
    } else {
        // The oversupply equation has no root at this mass; report the point
        // of closest approach (its minimizer) with the leftover mass.
        rep.degenerate_oversupply = true;
        rep.equilibria.push_back({b, mu_star, solvable_mass - total_mass});
        if (!at_threshold) rep.equilibria.push_back({b, mu_star, solvable_mass - total_mass});
    }
    rep.equilibria.push_back({xu, 0.0, 0.0});
    rep.poa_ratio = xu / b;
    return rep;
}

std::vector<PoaPoint> poa_probe(const RegionParams& region_template, double trip_time,
                                const std::vector<double>& thetas) {
    std::vector<PoaPoint> out;
    const double b = region_template.demand_rate, v = region_template.speed;
    const double pinned_mass = std::cbrt(b * b / (16.0 * v * v)) / 3.0 + b * trip_time;
    for (double theta : thetas) {
        RegionParams region = region_template;
        region.abandonment_rate = theta;
        PoaPoint p;
        p.theta = theta;
        p.x_over = b;
        p.x_under = undersupply_rate(region, trip_time, pinned_mass);
        p.ratio = p.x_under / p.x_over;
        out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Conditional gradient over the balance polytope
// ---------------------------------------------------------------------------

namespace {

struct Polytope {
    std::size_t n;                 // regions
    std::vector<double> upper;     // per flattened coordinate
    num::LinearProgram lp;         // balance rows + bound rows over [x, slack]
};

std::size_t flat(std::size_t i, std::size_t j, std::size_t n) { return i * n + j; }

Polytope build_polytope(const NetworkModel& net) {
    const std::size_t n = net.size();
    const std::size_t nn = n * n;
    Polytope p;
    p.n = n;
    p.upper.assign(nn, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            p.upper[flat(i, j, n)] = (i == j)
                                         ? net.regions[i].demand_rate * (1.0 - kSupplyMargin)
                                         : net.total_mass / net.travel_time(i, j);

    p.lp.constraints = Matrix(n + nn, 2 * nn);
    p.lp.rhs.assign(n + nn, 0.0);
    p.lp.objective.assign(2 * nn, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            p.lp.constraints(i, flat(i, j, n)) += 1.0;            // outflow
            if (j != i) p.lp.constraints(i, flat(j, i, n)) -= 1.0;  // repositioning inflow
            p.lp.constraints(i, flat(j, j, n)) -= net.demand_matrix(j, i);  // trip inflow
        }
    }
    for (std::size_t k = 0; k < nn; ++k) {
        p.lp.constraints(n + k, k) = 1.0;
        p.lp.constraints(n + k, nn + k) = 1.0;
        p.lp.rhs[n + k] = p.upper[k];
    }
    return p;
}

std::vector<double> polytope_vertex(const Polytope& p, const std::vector<double>& gradient) {
    num::LinearProgram lp = p.lp;
    std::copy(gradient.begin(), gradient.end(), lp.objective.begin());
    const num::LpSolution sol = num::solve_lp(lp);
    if (sol.status != num::LpStatus::optimal)
        throw ConvergenceError("conditional gradient subproblem not optimal");
    return {sol.x.begin(), sol.x.begin() + static_cast<long>(p.n * p.n)};
}

struct GradientContext {
    const NetworkModel& net;
    const RadiiPolicy& policy;

    double reward_sum(const std::vector<double>& x) const {
        const std::size_t n = net.size();
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            s += x[flat(i, i, n)] * net.regions[i].reward_rate * net.mean_trip_time(i);
        return s;
    }

    std::vector<double> gradient(const std::vector<double>& x) const {
        const std::size_t n = net.size();
        const double s = reward_sum(x);
        std::vector<double> g(n * n);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) {
                    const WaitPickup wp =
                        policy_eval(net.regions[i], policy, i, x[flat(i, i, n)]);
                    g[flat(i, i, n)] =
                        net.total_mass * net.regions[i].reward_rate * net.mean_trip_time(i) / s -
                        net.mean_trip_time(i) - wp.wait - wp.pickup;
                } else {
                    g[flat(i, j, n)] = -net.travel_time(i, j);
                }
            }
        }
        return g;
    }

    double directional(const std::vector<double>& x, const std::vector<double>& d,
                       double gamma) const {
        std::vector<double> p(x.size());
        for (std::size_t k = 0; k < x.size(); ++k) p[k] = x[k] + gamma * d[k];
        const std::vector<double> g = gradient(p);
        double dot = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) dot += g[k] * d[k];
        return dot;
    }
};

// First local maximum of the objective along [0, gamma_max]: the directional
// derivative starts nonnegative; take the first sign change on a coarse grid
// and bisect it.
double line_search(const GradientContext& ctx, const std::vector<double>& x,
                   const std::vector<double>& d, double gamma_max) {
    constexpr int kGrid = 24;
    double prev = 0.0;
    double prev_val = ctx.directional(x, d, 0.0);
    if (prev_val <= 0) return 0.0;
    for (int k = 1; k <= kGrid; ++k) {
        const double gamma = gamma_max * k / kGrid;
        const double val = ctx.directional(x, d, gamma);
        if (val <= 0) {
            double lo = prev, hi = gamma;
            for (int it = 0; it < 70; ++it) {
                const double mid = 0.5 * (lo + hi);
                (ctx.directional(x, d, mid) > 0 ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
        }
        prev = gamma;
        prev_val = val;
    }
    return gamma_max;
}

double segment_gain(const GradientContext& ctx, const std::vector<double>& x,
                    const std::vector<double>& d, double gamma_star) {
    // 8-interval composite Simpson of the directional derivative.
    constexpr int kIntervals = 8;
    const double h = gamma_star / kIntervals;
    double sum = ctx.directional(x, d, 0.0) + ctx.directional(x, d, gamma_star);
    for (int k = 1; k < kIntervals; ++k)
        sum += (k % 2 == 1 ? 4.0 : 2.0) * ctx.directional(x, d, k * h);
    return sum * h / 3.0;
}

// Active-set Gauss-Newton refinement of the first-order system. Returns true
// when it converged to a sharp stationary point.
bool polish_kkt(const NetworkModel& net, const RadiiPolicy& policy, const Polytope& poly,
                std::vector<double>& x_flat) {
    const std::size_t n = net.size();
    for (int repair = 0; repair < 5; ++repair) {
        std::vector<std::size_t> diag_support, off_support;
        for (std::size_t i = 0; i < n; ++i) {
            if (x_flat[flat(i, i, n)] > kActiveTol) diag_support.push_back(i);
            for (std::size_t j = 0; j < n; ++j)
                if (i != j && x_flat[flat(i, j, n)] > kActiveTol)
                    off_support.push_back(flat(i, j, n));
        }
        if (diag_support.empty()) return false;
        for (std::size_t i : diag_support) {
            const double hi = poly.upper[flat(i, i, n)];
            if (x_flat[flat(i, i, n)] > hi - 1e-6 * net.regions[i].demand_rate)
                return false;  // pinned at the supply cap; not an interior point
        }

        const std::size_t unknowns = diag_support.size() + off_support.size() + (n - 1);
        const std::size_t rows = diag_support.size() + off_support.size() + n;
        std::vector<double> nu(n, 0.0);

        const auto pack_residual = [&](const std::vector<double>& xf,
                                       const std::vector<double>& nuv) {
            std::vector<double> r;
            r.reserve(rows);
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                s += xf[flat(i, i, n)] * net.regions[i].reward_rate * net.mean_trip_time(i);
            for (std::size_t i : diag_support) {
                const WaitPickup wp = policy_eval(net.regions[i], policy, i, xf[flat(i, i, n)]);
                double e = net.total_mass * net.regions[i].reward_rate * net.mean_trip_time(i) /
                               s -
                           net.mean_trip_time(i) - wp.wait - wp.pickup;
                for (std::size_t j = 0; j < n; ++j)
                    if (j != i) e += (nuv[i] - nuv[j]) * net.demand_matrix(i, j);
                r.push_back(e);
            }
            for (std::size_t k : off_support) {
                const std::size_t i = k / n, j = k % n;
                r.push_back(-net.travel_time(i, j) + nuv[i] - nuv[j]);
            }
            MassRateVector mx{Matrix(n, n)};
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) mx.rates(i, j) = xf[flat(i, j, n)];
            for (double v : balance_residual(net, mx)) r.push_back(v);
            return r;
        };

        std::vector<double> r = pack_residual(x_flat, nu);
        double norm = 0.0;
        for (double v : r) norm += v * v;

        bool converged = false;
        for (int iter = 0; iter < 60; ++iter) {
            double worst = 0.0;
            for (double v : r) worst = std::max(worst, std::fabs(v));
            if (worst < 1e-12 * std::max(1.0, net.total_mass)) { converged = true; break; }

            const double s = [&] {
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    acc += x_flat[flat(i, i, n)] * net.regions[i].reward_rate *
                           net.mean_trip_time(i);
                return acc;
            }();

            Matrix jac(rows, unknowns, 0.0);
            std::size_t row = 0;
            for (std::size_t i : diag_support) {
                for (std::size_t c = 0; c < diag_support.size(); ++c) {
                    const std::size_t k = diag_support[c];
                    const double ck =
                        net.regions[k].reward_rate * net.mean_trip_time(k);
                    const double ci =
                        net.regions[i].reward_rate * net.mean_trip_time(i);
                    jac(row, c) = -net.total_mass * ci * ck / (s * s);
                    if (k == i)
                        jac(row, c) -=
                            policy_sojourn_slope(net.regions[i], policy, i, x_flat[flat(i, i, n)]);
                }
                for (std::size_t j = 0; j < n; ++j) {
                    if (j == i) continue;
                    const double q = net.demand_matrix(i, j);
                    if (i > 0) jac(row, diag_support.size() + off_support.size() + i - 1) += q;
                    if (j > 0) jac(row, diag_support.size() + off_support.size() + j - 1) -= q;
                }
                ++row;
            }
            for (std::size_t k : off_support) {
                const std::size_t i = k / n, j = k % n;
                if (i > 0) jac(row, diag_support.size() + off_support.size() + i - 1) += 1.0;
                if (j > 0) jac(row, diag_support.size() + off_support.size() + j - 1) -= 1.0;
                ++row;
            }
            for (std::size_t bi = 0; bi < n; ++bi) {
                for (std::size_t c = 0; c < diag_support.size(); ++c) {
                    const std::size_t k = diag_support[c];
                    double coeff = 0.0;
                    if (k == bi) coeff += 1.0;                       // outflow x_ii
                    coeff -= net.demand_matrix(k, bi);               // trip inflow
                    jac(row, c) = coeff;
                }
                for (std::size_t c = 0; c < off_support.size(); ++c) {
                    const std::size_t k = off_support[c];
                    const std::size_t i = k / n, j = k % n;
                    double coeff = 0.0;
                    if (i == bi) coeff += 1.0;
                    if (j == bi) coeff -= 1.0;
                    jac(row, diag_support.size() + c) = coeff;
                }
                ++row;
            }

            std::vector<double> neg_r(r.size());
            for (std::size_t k = 0; k < r.size(); ++k) neg_r[k] = -r[k];
            std::vector<double> step;
            try {
                step = num::least_squares(jac, neg_r, 1e-12);
            } catch (const ConvergenceError&) {
                return false;
            }

            double scale = 1.0;
            for (int bt = 0; bt < 40; ++bt) {
                std::vector<double> x_new = x_flat;
                std::vector<double> nu_new = nu;
                bool inside = true;
                for (std::size_t c = 0; c < diag_support.size(); ++c) {
                    const std::size_t i = diag_support[c];
                    double v = x_new[flat(i, i, n)] + scale * step[c];
                    if (v <= 0 || v >= poly.upper[flat(i, i, n)]) { inside = false; break; }
                    x_new[flat(i, i, n)] = v;
                }
                if (inside) {
                    for (std::size_t c = 0; c < off_support.size(); ++c) {
                        double v = x_new[off_support[c]] + scale * step[diag_support.size() + c];
                        if (v <= 0) { inside = false; break; }
                        x_new[off_support[c]] = v;
                    }
                }
                if (inside) {
                    for (std::size_t i = 1; i < n; ++i)
                        nu_new[i] =
                            nu[i] + scale * step[diag_support.size() + off_support.size() + i - 1];
                    const std::vector<double> r_new = pack_residual(x_new, nu_new);
                    double norm_new = 0.0;
                    for (double v : r_new) norm_new += v * v;
                    if (norm_new < norm * (1.0 - 1e-4 * scale) || norm_new < 1e-28) {
                        x_flat = x_new;
                        nu = nu_new;
                        r = r_new;
                        norm = norm_new;
                        break;
                    }
                }
                scale *= 0.5;
                if (bt == 39) return converged;
            }
        }
        if (!converged) return false;

        // Support repair: dropped coordinates must satisfy the inequality side.
        bool clean = true;
        const double s = [&] {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                acc += x_flat[flat(i, i, n)] * net.regions[i].reward_rate * net.mean_trip_time(i);
            return acc;
        }();
        std::vector<double> nu_now = nu;
        for (std::size_t i = 0; i < n && clean; ++i) {
            if (x_flat[flat(i, i, n)] > kActiveTol) continue;
            const WaitPickup wp = policy_eval(net.regions[i], policy, i, 0.0);
            double e = net.total_mass * net.regions[i].reward_rate * net.mean_trip_time(i) / s -
                       net.mean_trip_time(i) - wp.wait - wp.pickup;
            for (std::size_t j = 0; j < n; ++j)
                if (j != i) e += (nu_now[i] - nu_now[j]) * net.demand_matrix(i, j);
            if (e > kKktTol) {
                x_flat[flat(i, i, n)] = 2.0 * kActiveTol;  // promote and re-polish
                clean = false;
            }
        }
        if (clean) return true;
    }
    return false;
}

}  // namespace

EquilibriumResult solve_mfg(const NetworkModel& network, const RadiiPolicy& policy,
                            const SolveOptions& options) {
    const auto violations = validate(network);
    if (!violations.empty()) throw ValidationError("solve_mfg: " + violations.front());
    const std::size_t n = network.size();
    const std::size_t nn = n * n;
    const Polytope poly = build_polytope(network);
    const GradientContext ctx{network, policy};

    const MassRateVector seed = stationary_diagonal(network, 0.25);
    std::vector<double> x(nn, 0.0);
    for (std::size_t i = 0; i < n; ++i) x[flat(i, i, n)] = seed.rates(i, i);

    EquilibriumResult res;
    res.ascent_steps.reserve(64);
    const double gap_tol = options.gap_tolerance * std::max(1.0, network.total_mass);
    int iter = 0;
    double gap = std::numeric_limits<double>::infinity();
    for (; iter < options.max_iterations; ++iter) {
        const std::vector<double> g = ctx.gradient(x);
        const std::vector<double> vertex = polytope_vertex(poly, g);
        std::vector<double> d(nn);
        gap = 0.0;
        for (std::size_t k = 0; k < nn; ++k) {
            d[k] = vertex[k] - x[k];
            gap += g[k] * d[k];
        }
        if (gap <= gap_tol) break;

        // keep the reward sum (log argument) away from zero along the segment
        double s0 = ctx.reward_sum(x);
        double s1 = ctx.reward_sum(vertex);
        double gamma_max = 1.0;
        if (s1 < 0.05 * s0) gamma_max = std::min(1.0, 0.95 * s0 / (s0 - s1));

        const double gamma = line_search(ctx, x, d, gamma_max);
        if (gamma <= 0) break;
        if (res.ascent_steps.size() < 4096)
            res.ascent_steps.push_back(segment_gain(ctx, x, d, gamma));
        for (std::size_t k = 0; k < nn; ++k) x[k] = std::max(0.0, x[k] + gamma * d[k]);
    }

    if (options.polish) polish_kkt(network, policy, poly, x);

    res.x = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) res.x(i, j) = x[flat(i, j, n)];
    res.iterations = iter;
    res.fw_gap = gap;

    // Single-region boundary handoff: if the iterate is pinned at the supply
    // cap with the stationarity gradient still positive, the true point lies
    // in the gap-space tail (or pools at the boundary); re-solve there.
    if (n == 1) {
        const RegionParams& region = network.regions[0];
        const double cap = poly.upper[0];
        const double t0 = network.mean_trip_time(0);
        if (res.x(0, 0) > cap - 1e-6 * region.demand_rate) {
            const double m_here = mass_curve(region, policy, t0, res.x(0, 0));
            if (network.total_mass > m_here) {
                auto tail = single_region_equilibria(region, policy, t0, network.total_mass);
                // keep the ascent-consistent point: largest supply root
                EquilibriumResult& best = tail.back();
                best.iterations = iter;
                best.fw_gap = gap;
                best.ascent_steps = std::move(res.ascent_steps);
                return best;
            }
        }
    }

    finalize_result(network, policy, res);
    return res;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double objective_difference(const GradientContext& ctx, const std::vector<double>& a,
                            const std::vector<double>& b) {
    // F(a) - F(b) via the gradient line integral along the segment.
    std::vector<double> d(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) d[k] = a[k] - b[k];
    constexpr int kIntervals = 16;
    double sum = ctx.directional(b, d, 0.0) + ctx.directional(b, d, 1.0);
    for (int k = 1; k < kIntervals; ++k)
        sum += (k % 2 == 1 ? 4.0 : 2.0) * ctx.directional(b, d, static_cast<double>(k) / kIntervals);
    return sum / (3.0 * kIntervals);
}

}  // namespace

std::vector<EquilibriumResult> find_multiple_kkt(const NetworkModel& network,
                                                 const RadiiPolicy& policy, int n_starts,
                                                 std::uint64_t seed,
                                                 const SolveOptions& options) {
    if (n_starts < 1) throw std::invalid_argument("find_multiple_kkt: n_starts >= 1");
    const std::size_t n = network.size();
    const std::size_t nn = n * n;
    const Polytope poly = build_polytope(network);
    const GradientContext ctx{network, policy};
    const MassRateVector anchor = stationary_diagonal(network, 0.3);

    // Pre-draw per-start randomness serially so the result is independent of
    // the execution schedule.
    std::vector<std::vector<double>> starts(n_starts);
    std::uint64_t state = seed;
    for (int r = 0; r < n_starts; ++r) {
        std::mt19937_64 rng(splitmix64(state));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.05, 1.0);
        std::vector<double> x0(nn, 0.0);
        double wsum = 0.0;
        for (int v = 0; v < 3; ++v) {
            std::vector<double> g(nn);
            for (auto& gv : g) gv = normal(rng);
            const std::vector<double> vert = polytope_vertex(poly, g);
            const double w = unif(rng);
            wsum += w;
            for (std::size_t k = 0; k < nn; ++k) x0[k] += w * vert[k];
        }
        for (std::size_t k = 0; k < nn; ++k) x0[k] *= 0.9 / wsum;
        for (std::size_t i = 0; i < n; ++i) x0[flat(i, i, n)] += 0.1 * anchor.rates(i, i);
        starts[r] = std::move(x0);
    }

    std::vector<EquilibriumResult> results(n_starts);
    for_each_index(static_cast<std::size_t>(n_starts), options.exec, [&](std::size_t r) {
        NetworkModel net = network;  // cheap; keeps evaluation state thread-local
        SolveOptions opt = options;
        opt.exec = ExecMode::serial;
        GradientContext local{net, policy};
        std::vector<double> x = starts[r];
        const double gap_tol = opt.gap_tolerance * std::max(1.0, net.total_mass);
        int iter = 0;
        double gap = std::numeric_limits<double>::infinity();
        for (; iter < opt.max_iterations; ++iter) {
            const std::vector<double> g = local.gradient(x);
            const std::vector<double> vertex = polytope_vertex(poly, g);
            std::vector<double> d(nn);
            gap = 0.0;
            for (std::size_t k = 0; k < nn; ++k) {
                d[k] = vertex[k] - x[k];
                gap += g[k] * d[k];
            }
            if (gap <= gap_tol) break;
            double s0 = local.reward_sum(x), s1 = local.reward_sum(vertex);
            double gamma_max = 1.0;
            if (s1 < 0.05 * s0) gamma_max = std::min(1.0, 0.95 * s0 / (s0 - s1));
            const double gamma = line_search(local, x, d, gamma_max);
            if (gamma <= 0) break;
            for (std::size_t k = 0; k < nn; ++k) x[k] = std::max(0.0, x[k] + gamma * d[k]);
        }
        if (opt.polish) polish_kkt(net, policy, poly, x);

        EquilibriumResult res;
        res.x = Matrix(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) res.x(i, j) = x[flat(i, j, n)];
        res.iterations = iter;
        res.fw_gap = gap;
        if (n == 1) {
            const RegionParams& region = net.regions[0];
            const double cap = poly.upper[0];
            const double t0 = net.mean_trip_time(0);
            if (res.x(0, 0) > cap - 1e-6 * region.demand_rate &&
                net.total_mass > mass_curve(region, policy, t0, res.x(0, 0))) {
                auto tail = single_region_equilibria(region, policy, t0, net.total_mass);
                res = tail.back();
                res.iterations = iter;
            }
        }
        if (res.sojourn.empty()) finalize_result(net, policy, res);
        results[r] = std::move(res);
    });

    // Dedup at 1e-4 infinity-norm, keeping the higher-objective point.
    std::vector<EquilibriumResult> unique;
    for (auto& cand : results) {
        bool merged = false;
        for (auto& kept : unique) {
            double dist = 0.0;
            for (std::size_t k = 0; k < nn; ++k)
                dist = std::max(dist, std::fabs(cand.x.data()[k] - kept.x.data()[k]));
            if (dist <= 1e-4) {
                if (objective_difference(ctx, cand.x.data(), kept.x.data()) > 0) kept = cand;
                merged = true;
                break;
            }
        }
        if (!merged) unique.push_back(std::move(cand));
    }
    return unique;
}

EquilibriumResult assemble_result(const NetworkModel& network, const Matrix& x,
                                  std::vector<SojournBreakdown> sojourn, double tail_gap) {
    EquilibriumResult res;
    res.x = x;
    res.sojourn = std::move(sojourn);
    res.tail_gap = tail_gap;
    // The stored sojourn components are authoritative here; pass a fixed
    // policy placeholder (unused because sojourn is pre-filled).
    RadiiPolicy placeholder = RadiiPolicy::fixed({1.0, 1.0}, FormulaMode::approx);
    finalize_result(network, placeholder, res);
    return res;
}

BestResponseReport verify_best_response(const NetworkModel& network,
                                        const EquilibriumResult& candidate) {
    const std::size_t n = network.size();
    const std::size_t nn = n * n;
    BestResponseReport rep;

    const std::vector<double> bal = balance_residual(network, MassRateVector{candidate.x});
    for (double v : bal) rep.balance_residual = std::max(rep.balance_residual, std::fabs(v));

    num::LinearProgram lp;
    lp.constraints = Matrix(1 + n, nn);
    lp.rhs.assign(1 + n, 0.0);
    lp.objective.assign(nn, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        lp.objective[flat(i, i, n)] =
            network.regions[i].reward_rate * network.mean_trip_time(i);
        for (std::size_t j = 0; j < n; ++j) {
            lp.constraints(0, flat(i, j, n)) =
                (i == j) ? candidate.sojourn[i].total : network.travel_time(i, j);
            lp.constraints(1 + i, flat(i, j, n)) += 1.0;
            if (j != i) lp.constraints(1 + i, flat(j, i, n)) -= 1.0;
            lp.constraints(1 + i, flat(j, j, n)) -= network.demand_matrix(j, i);
        }
    }
    lp.rhs[0] = 1.0;

    const num::LpSolution sol = num::solve_lp(lp);
    rep.lp_feasible = sol.status == num::LpStatus::optimal;
    rep.phi = average_reward(network, MassRateVector{candidate.x});
    if (rep.lp_feasible) {
        rep.lp_value = sol.objective;
        rep.gap = rep.lp_value - rep.phi;
        rep.pass = rep.gap <= 1e-6;
    }
    return rep;
}

}  // namespace ridehail
