#pragma once

#include <string>
#include <vector>

#include "ridehail/matrix.hpp"

namespace ridehail {

// Per-region primitives. Units: area km^2, demand pass/(min km^2),
// abandonment 1/min, speed km/min, reward $/min.
struct RegionParams {
    double area = 0.0;
    double demand_rate = 0.0;
    double abandonment_rate = 0.0;
    double speed = 0.0;
    double reward_rate = 1.0;
};

// Fraction of demand kept as a safety margin below the demand rate: supply
// rates are capped at demand_rate * (1 - kSupplyMargin) because the driver
// waiting time diverges at the demand-supply limit.
inline constexpr double kSupplyMargin = 1e-9;

// The full game: regions, destination probabilities q (row-stochastic),
// travel times t (min, all positive), and total driver mass density m.
struct NetworkModel {
    std::vector<RegionParams> regions;
    Matrix demand_matrix;   // N x N
    Matrix travel_time;     // N x N
    double total_mass = 0.0;

    std::size_t size() const { return regions.size(); }

    // Mean in-region trip time: t_i = sum_j t[i][j] q[i][j].
    double mean_trip_time(std::size_t i) const;
};

// N x N nonnegative rate matrix; diagonal entries are the per-region driver
// supply rates and must stay strictly below the local demand rate.
struct MassRateVector {
    Matrix rates;
};

struct MassDistribution {
    Matrix mass;  // veh/km^2 per state-action pair
};

struct Strategy {
    Matrix probabilities;  // rows sum to 1 where the corresponding rate row is nonzero
};

struct MatchingRadii {
    double customer = 0.0;  // applied when a customer arrives (R_c, km)
    double driver = 0.0;    // applied when a driver becomes idle (R_d, km)
};

// Structural validation; returns one human-readable violation per broken
// invariant (empty means valid). Never throws.
std::vector<std::string> validate(const NetworkModel& network);

// Row-normalizes the rate matrix; all-zero rows stay all-zero.
Strategy strategy_from_rates(const MassRateVector& x);

// Phi(x) = (1/m) sum_i x_ii c_i t_i, the average reward per unit mass.
double average_reward(const NetworkModel& network, const MassRateVector& x);

// residual[i] = outflow(i) - inflow(i); all-zero iff the rates are stationary.
std::vector<double> balance_residual(const NetworkModel& network, const MassRateVector& x);

// A strictly positive diagonal rate vector satisfying the balance equations
// (the stationary distribution of the demand chain, scaled so that
// max_i x_ii / b_i = diag_fraction). Used to seed solvers.
MassRateVector stationary_diagonal(const NetworkModel& network, double diag_fraction);

}  // namespace ridehail
