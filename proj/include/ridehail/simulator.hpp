#pragma once

#include <cstdint>
#include <deque>
#include <unordered_map>
#include <vector>

#include "ridehail/model.hpp"
#include "ridehail/parallel.hpp"

namespace ridehail {

struct DispatchPolicy {
    enum class Kind { fixed, dynamic_optimal };
    Kind kind = Kind::fixed;
    double radius_customer = 1.0;   // R_c for fixed policies (km)
    double radius_driver = 1.0;     // R_d for fixed policies (km)
    double estimate_window = 60.0;  // trailing window for the supply estimate (min)

    static DispatchPolicy fixed(double r_c, double r_d) {
        return DispatchPolicy{Kind::fixed, r_c, r_d, 60.0};
    }
    static DispatchPolicy dynamic(double window = 60.0) {
        return DispatchPolicy{Kind::dynamic_optimal, 0.0, 0.0, window};
    }
};

struct SimConfig {
    double world_size = 10.0;      // square side L (km)
    double horizon = 1440.0;       // min
    double arrival_rate = 10.0;    // pass/min over the whole square
    double patience_mean = 10.0;   // min
    int driver_count = 200;
    double speed = 0.4;            // km/min
    double trip_time_mean = 20.0;  // min
    DispatchPolicy policy;
    std::uint64_t seed = 1;
    double warmup = 120.0;         // min excluded from metrics
    double bootstrap_radius = 1.6; // used before any match history exists (km)
    double estimate_step = 0.005;  // supply-estimate quantization (pass/(min km^2))
};

struct SimMetrics {
    long long arrivals = 0;        // customers arriving after warmup
    long long completed = 0;       // matched (committed) customers
    long long abandoned = 0;
    long long waiting_at_horizon = 0;
    double mean_customer_wait = 0.0;        // all post-warmup arrivals
    double mean_pickup_time = 0.0;          // matched customers
    double mean_driver_wait = 0.0;          // per match
    double mean_total_customer_wait = 0.0;  // wait + pickup (sum of the means)
    double mean_total_driver_wait = 0.0;
    double completion_rate = 1.0;
    double measured_supply_rate = 0.0;      // matches/(min km^2) after warmup
    // dynamic-policy diagnostics
    double radius_mean = 0.0;
    double radius_std = 0.0;
    double radius_quantization_step = 0.0;  // largest R* jump between adjacent estimate levels
    long long radius_violations = 0;        // matches beyond the active radius (must be 0)
    std::uint64_t trace_hash = 0;

    bool operator==(const SimMetrics&) const = default;
};

// Runs one simulation; deterministic given (config, seed).
SimMetrics run(const SimConfig& config);

// Supply-rate estimator + optimal-radius lookup used by the dynamic policy.
// Exposed so the estimation logic is testable without a full simulation.
class DynamicRadiusController {
public:
    DynamicRadiusController(const SimConfig& config);

    void record_match(double time);
    // (R_c, R_d) to apply at `time`; both radii coincide for this policy.
    double radius_at(double time);

    double last_estimate() const { return last_estimate_; }
    bool used_bootstrap() const { return used_bootstrap_; }
    double quantization_step_bound() const { return quant_bound_; }

private:
    double window_;
    double area_;
    double demand_density_;
    double bootstrap_;
    double step_;
    RegionParams region_;
    std::deque<double> matches_;
    std::unordered_map<long long, double> memo_;
    double last_estimate_ = 0.0;
    bool used_bootstrap_ = false;
    double quant_bound_ = 0.0;
};

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;
    double ci95_half = 0.0;
};

struct ReplicationAggregate {
    MetricSummary arrivals;
    MetricSummary customer_wait;
    MetricSummary pickup;
    MetricSummary driver_wait;
    MetricSummary total_customer_wait;
    MetricSummary total_driver_wait;
    MetricSummary completion;
};

struct ReplicationSet {
    std::vector<SimMetrics> runs;
    ReplicationAggregate aggregate;
};

// Independent replications with explicit seeds (warmup excluded per run).
ReplicationSet replicate(const SimConfig& config, const std::vector<std::uint64_t>& seeds,
                         ExecMode exec = ExecMode::parallel);

// Convenience: n seeds derived deterministically from config.seed.
ReplicationSet replicate(const SimConfig& config, int n, ExecMode exec = ExecMode::parallel);

}  // namespace ridehail
