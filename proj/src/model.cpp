#include "ridehail/model.hpp"

#include <cmath>
#include <string>

namespace ridehail {

namespace {
std::string idx(std::size_t i) { return std::to_string(i); }
}

double NetworkModel::mean_trip_time(std::size_t i) const {
    double t = 0.0;
    for (std::size_t j = 0; j < size(); ++j) t += travel_time(i, j) * demand_matrix(i, j);
    return t;
}

std::vector<std::string> validate(const NetworkModel& network) {
    std::vector<std::string> out;
    const std::size_t n = network.size();
    if (n == 0) {
        out.push_back("regions: at least one region required");
        return out;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = network.regions[i];
        if (!(r.area > 0)) out.push_back("regions." + idx(i) + ".area must be positive");
        if (!(r.demand_rate > 0))
            out.push_back("regions." + idx(i) + ".demand_rate must be positive");
        if (!(r.abandonment_rate > 0))
            out.push_back("regions." + idx(i) + ".abandonment_rate must be positive");
        if (!(r.speed > 0)) out.push_back("regions." + idx(i) + ".speed must be positive");
        if (!(r.reward_rate > 0))
            out.push_back("regions." + idx(i) + ".reward_rate must be positive");
    }
    if (network.demand_matrix.rows() != n || network.demand_matrix.cols() != n) {
        out.push_back("demand_matrix must be " + idx(n) + "x" + idx(n));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            bool nonneg = true;
            for (std::size_t j = 0; j < n; ++j) {
                if (network.demand_matrix(i, j) < 0) nonneg = false;
                row += network.demand_matrix(i, j);
            }
            if (!nonneg) out.push_back("demand_matrix row " + idx(i) + " has negative entries");
            if (std::fabs(row - 1.0) > 1e-12)
                out.push_back("demand_matrix row " + idx(i) + " not stochastic");
        }
    }
    if (network.travel_time.rows() != n || network.travel_time.cols() != n) {
        out.push_back("travel_time must be " + idx(n) + "x" + idx(n));
    } else {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (!(network.travel_time(i, j) > 0)) {
                    out.push_back("travel_time[" + idx(i) + "][" + idx(j) + "] must be positive");
                }
    }
    if (!(network.total_mass > 0)) out.push_back("total_mass must be positive");
    return out;
}

Strategy strategy_from_rates(const MassRateVector& x) {
    const std::size_t n = x.rates.rows();
    Strategy s{Matrix(n, x.rates.cols())};
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < x.rates.cols(); ++j) row += x.rates(i, j);
        if (row > 0.0) {
            for (std::size_t j = 0; j < x.rates.cols(); ++j)
                s.probabilities(i, j) = x.rates(i, j) / row;
        }
    }
    return s;
}

double average_reward(const NetworkModel& network, const MassRateVector& x) {
    double sum = 0.0;
    for (std::size_t i = 0; i < network.size(); ++i)
        sum += x.rates(i, i) * network.regions[i].reward_rate * network.mean_trip_time(i);
    return sum / network.total_mass;
}

std::vector<double> balance_residual(const NetworkModel& network, const MassRateVector& x) {
    const std::size_t n = network.size();
    std::vector<double> res(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double out_flow = 0.0, in_flow = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            out_flow += x.rates(i, k);
            if (k != i) in_flow += x.rates(k, i);
            in_flow += x.rates(k, k) * network.demand_matrix(k, i);
        }
        res[i] = out_flow - in_flow;
    }
    return res;
}

MassRateVector stationary_diagonal(const NetworkModel& network, double diag_fraction) {
    const std::size_t n = network.size();
    // Power iteration on q' gives a stationary row vector of the demand
    // chain; a diagonal-only rate vector proportional to it is balanced.
    std::vector<double> pi(n, 1.0 / static_cast<double>(n)), next(n, 0.0);
    for (int iter = 0; iter < 20000; ++iter) {
        double diff = 0.0, norm = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += pi[i] * network.demand_matrix(i, j);
            next[j] = s;
            norm += s;
        }
        for (std::size_t j = 0; j < n; ++j) {
            next[j] /= norm;
            diff = std::max(diff, std::fabs(next[j] - pi[j]));
        }
        pi.swap(next);
        if (diff < 1e-15) break;
    }
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (pi[i] <= 0) continue;
        scale = std::max(scale, pi[i] / network.regions[i].demand_rate);
    }
    MassRateVector x{Matrix(n, n)};
    if (scale > 0) {
        const double factor = diag_fraction / scale;
        for (std::size_t i = 0; i < n; ++i) x.rates(i, i) = pi[i] * factor;
    }
    return x;
}

}  // namespace ridehail
