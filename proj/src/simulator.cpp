#include "ridehail/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <queue>
#include <random>
#include <stdexcept>

#include "ridehail/radius_opt.hpp"

namespace ridehail {

namespace {

struct Vec2 {
    double x = 0.0, y = 0.0;
};

double dist(const Vec2& a, const Vec2& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

// 53-bit uniforms drawn straight off the engine so sampling is identical
// across standard libraries.
struct Rng {
    std::mt19937_64 eng;
    explicit Rng(std::uint64_t seed) : eng(seed) {}
    double uniform() { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }
    double uniform(double hi) { return uniform() * hi; }
    double exponential(double mean) { return -mean * std::log1p(-uniform()); }
};

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Uniform-cell spatial index over the square. Cell size tracks the active
// matching radius; rebucketing is cheap at these population sizes.
class UniformGrid {
public:
    void reset(double world, double cell) {
        world_ = world;
        cell_ = std::max(cell, 1e-6);
        dim_ = std::max<int>(1, static_cast<int>(std::floor(world_ / cell_)));
        cells_.assign(static_cast<std::size_t>(dim_) * dim_, {});
    }

    void insert(int id, const Vec2& p) { cells_[index(p)].push_back(id); }

    void erase(int id, const Vec2& p) {
        auto& cell = cells_[index(p)];
        for (std::size_t k = 0; k < cell.size(); ++k) {
            if (cell[k] == id) {
                cell[k] = cell.back();
                cell.pop_back();
                return;
            }
        }
    }

    // Nearest member within `radius` of p; ties broken by lowest id.
    template <class PosFn>
    int nearest(const Vec2& p, double radius, PosFn&& pos) const {
        const double r2 = radius * radius;
        int best = -1;
        double best_d2 = r2;
        const int lo_x = clamp_cell((p.x - radius) / cell_);
        const int hi_x = clamp_cell((p.x + radius) / cell_);
        const int lo_y = clamp_cell((p.y - radius) / cell_);
        const int hi_y = clamp_cell((p.y + radius) / cell_);
        for (int cy = lo_y; cy <= hi_y; ++cy) {
            for (int cx = lo_x; cx <= hi_x; ++cx) {
                for (int id : cells_[static_cast<std::size_t>(cy) * dim_ + cx]) {
                    const Vec2 q = pos(id);
                    const double dx = q.x - p.x, dy = q.y - p.y;
                    const double d2 = dx * dx + dy * dy;
                    if (d2 < best_d2 || (d2 == best_d2 && best != -1 && id < best)) {
                        if (d2 <= r2) {
                            best = id;
                            best_d2 = d2;
                        }
                    }
                }
            }
        }
        return best;
    }

private:
    int clamp_cell(double c) const {
        return std::min(dim_ - 1, std::max(0, static_cast<int>(std::floor(c))));
    }
    std::size_t index(const Vec2& p) const {
        return static_cast<std::size_t>(clamp_cell(p.y / cell_)) * dim_ + clamp_cell(p.x / cell_);
    }

    double world_ = 1.0, cell_ = 1.0;
    int dim_ = 1;
    std::vector<std::vector<int>> cells_;
};

enum class EventType : std::uint8_t { arrival = 1, abandon = 2, dropoff = 3 };

struct Event {
    double time;
    std::uint64_t seq;
    EventType type;
    int entity;
};

struct EventLater {
    bool operator()(const Event& a, const Event& b) const {
        if (a.time != b.time) return a.time > b.time;
        return a.seq > b.seq;
    }
};

enum class CustomerState : std::uint8_t { waiting, matched, abandoned };

struct Customer {
    Vec2 pos;
    double arrival = 0.0;
    CustomerState state = CustomerState::waiting;
};

struct Driver {
    Vec2 pos;
    double idle_since = 0.0;
    bool idle = false;
};

}  // namespace

DynamicRadiusController::DynamicRadiusController(const SimConfig& config) {
    window_ = config.policy.estimate_window;
    area_ = config.world_size * config.world_size;
    demand_density_ = config.arrival_rate / area_;
    bootstrap_ = config.bootstrap_radius;
    step_ = config.estimate_step;
    region_.area = area_;
    region_.demand_rate = demand_density_;
    region_.abandonment_rate = 1.0 / config.patience_mean;
    region_.speed = config.speed;
    region_.reward_rate = 1.0;
}

void DynamicRadiusController::record_match(double time) { matches_.push_back(time); }

double DynamicRadiusController::radius_at(double time) {
    while (!matches_.empty() && matches_.front() < time - window_) matches_.pop_front();
    if (matches_.empty()) {
        used_bootstrap_ = true;
        last_estimate_ = 0.0;
        return bootstrap_;
    }
    used_bootstrap_ = false;
    double estimate = static_cast<double>(matches_.size()) / (window_ * area_);
    estimate = std::min(std::max(estimate, 0.01 * demand_density_), 0.99 * demand_density_);
    double quantized = static_cast<double>(std::llround(estimate / step_)) * step_;
    quantized = std::min(std::max(quantized, 0.01 * demand_density_), 0.99 * demand_density_);
    last_estimate_ = quantized;

    const long long key = std::llround(quantized * 1e9);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    const double radius = optimal_radius(region_, quantized).radius;
    for (const auto& [other_key, other_radius] : memo_) {
        // local Lipschitz bound on the quantization effect: track R* jumps
        // between neighboring estimate levels
        if (std::fabs(static_cast<double>(other_key) * 1e-9 - quantized) <= step_ * 1.01)
            quant_bound_ = std::max(quant_bound_, std::fabs(other_radius - radius));
    }
    memo_.emplace(key, radius);
    return radius;
}

SimMetrics run(const SimConfig& config) {
    if (config.world_size <= 0 || config.horizon <= 0 || config.patience_mean <= 0 ||
        config.driver_count <= 0 || config.speed <= 0 || config.trip_time_mean <= 0 ||
        config.arrival_rate < 0 || config.warmup < 0 || config.warmup >= config.horizon)
        throw std::invalid_argument("simulator: invalid configuration");

    Rng rng(config.seed);
    const double world = config.world_size;
    const bool dynamic = config.policy.kind == DispatchPolicy::Kind::dynamic_optimal;
    DynamicRadiusController controller(config);

    std::vector<Customer> customers;
    customers.reserve(static_cast<std::size_t>(config.arrival_rate * config.horizon * 1.1) + 16);
    std::vector<Driver> drivers(static_cast<std::size_t>(config.driver_count));

    UniformGrid waiting_grid, idle_grid;
    double active_rc = dynamic ? config.bootstrap_radius : config.policy.radius_customer;
    double active_rd = dynamic ? config.bootstrap_radius : config.policy.radius_driver;
    const auto grid_cell = [&] { return std::max(active_rc, active_rd); };
    waiting_grid.reset(world, grid_cell());
    idle_grid.reset(world, grid_cell());

    std::vector<int> waiting_ids, idle_ids;
    const auto rebucket = [&] {
        waiting_grid.reset(world, grid_cell());
        for (int id : waiting_ids) waiting_grid.insert(id, customers[id].pos);
        idle_grid.reset(world, grid_cell());
        for (int id : idle_ids) idle_grid.insert(id, drivers[id].pos);
    };
    const auto drop_waiting = [&](int id) {
        waiting_grid.erase(id, customers[id].pos);
        waiting_ids.erase(std::find(waiting_ids.begin(), waiting_ids.end(), id));
    };
    const auto drop_idle = [&](int id) {
        idle_grid.erase(id, drivers[id].pos);
        idle_ids.erase(std::find(idle_ids.begin(), idle_ids.end(), id));
    };

    std::priority_queue<Event, std::vector<Event>, EventLater> events;
    std::uint64_t seq = 0;
    const auto push_event = [&](double time, EventType type, int entity) {
        events.push(Event{time, seq++, type, entity});
    };

    SimMetrics metrics;
    std::uint64_t hash = 1469598103934665603ULL;  // FNV-1a
    const auto hash_mix = [&](std::uint64_t v) {
        hash ^= v;
        hash *= 1099511628211ULL;
    };
    const auto hash_event = [&](EventType type, int entity, double time) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(time));
        std::memcpy(&bits, &time, sizeof(bits));
        hash_mix(static_cast<std::uint64_t>(type));
        hash_mix(static_cast<std::uint64_t>(entity));
        hash_mix(bits);
    };

    double customer_wait_sum = 0.0, pickup_sum = 0.0, driver_wait_sum = 0.0;
    double radius_sum = 0.0, radius_sq_sum = 0.0;
    long long radius_samples = 0;

    const auto refresh_radius = [&](double now) {
        if (!dynamic) return;
        const double r = controller.radius_at(now);
        if (now >= config.warmup) {
            radius_sum += r;
            radius_sq_sum += r * r;
            ++radius_samples;
        }
        if (r != active_rc) {
            active_rc = active_rd = r;
            rebucket();
        }
    };

    // Matches commit both sides: schedule the drop-off, collect metrics.
    const auto match = [&](int cust, int drv, double now, double radius) {
        const Customer& c = customers[cust];
        Driver& d = drivers[drv];
        const double pickup_dist = dist(c.pos, d.pos);
        if (pickup_dist > radius * (1.0 + 1e-12)) ++metrics.radius_violations;
        const double pickup_time = pickup_dist / config.speed;
        if (c.arrival >= config.warmup) {
            ++metrics.completed;
            customer_wait_sum += now - c.arrival;
            pickup_sum += pickup_time;
        }
        if (now >= config.warmup) driver_wait_sum += now - d.idle_since;
        d.idle = false;
        const double trip = rng.exponential(config.trip_time_mean);
        push_event(now + pickup_time + trip, EventType::dropoff, drv);
        controller.record_match(now);
    };

    // All drivers start idle at random locations.
    for (int id = 0; id < config.driver_count; ++id) {
        drivers[id].pos = Vec2{rng.uniform(world), rng.uniform(world)};
        drivers[id].idle = true;
        drivers[id].idle_since = 0.0;
        idle_ids.push_back(id);
        idle_grid.insert(id, drivers[id].pos);
    }
    if (config.arrival_rate > 0)
        push_event(rng.exponential(1.0 / config.arrival_rate), EventType::arrival, -1);

    while (!events.empty()) {
        const Event ev = events.top();
        if (ev.time > config.horizon) break;
        events.pop();
        hash_event(ev.type, ev.entity, ev.time);

        switch (ev.type) {
            case EventType::arrival: {
                const double dt = rng.exponential(1.0 / config.arrival_rate);
                const Vec2 pos{rng.uniform(world), rng.uniform(world)};
                const double patience = rng.exponential(config.patience_mean);
                push_event(ev.time + dt, EventType::arrival, -1);

                const int cust = static_cast<int>(customers.size());
                customers.push_back(Customer{pos, ev.time, CustomerState::waiting});
                if (ev.time >= config.warmup) ++metrics.arrivals;

                refresh_radius(ev.time);
                const int drv = idle_grid.nearest(pos, active_rc,
                                                  [&](int id) { return drivers[id].pos; });
                if (drv >= 0) {
                    customers[cust].state = CustomerState::matched;
                    drop_idle(drv);
                    match(cust, drv, ev.time, active_rc);
                } else {
                    waiting_ids.push_back(cust);
                    waiting_grid.insert(cust, pos);
                    push_event(ev.time + patience, EventType::abandon, cust);
                }
                break;
            }
            case EventType::abandon: {
                Customer& c = customers[ev.entity];
                if (c.state != CustomerState::waiting) break;
                c.state = CustomerState::abandoned;
                drop_waiting(ev.entity);
                if (c.arrival >= config.warmup) {
                    ++metrics.abandoned;
                    customer_wait_sum += ev.time - c.arrival;
                }
                break;
            }
            case EventType::dropoff: {
                Driver& d = drivers[ev.entity];
                d.pos = Vec2{rng.uniform(world), rng.uniform(world)};
                refresh_radius(ev.time);
                const int cust = waiting_grid.nearest(d.pos, active_rd,
                                                      [&](int id) { return customers[id].pos; });
                if (cust >= 0) {
                    customers[cust].state = CustomerState::matched;
                    drop_waiting(cust);
                    d.idle_since = ev.time;  // matched instantly: zero wait
                    match(cust, ev.entity, ev.time, active_rd);
                } else {
                    d.idle = true;
                    d.idle_since = ev.time;
                    idle_ids.push_back(ev.entity);
                    idle_grid.insert(ev.entity, d.pos);
                }
                break;
            }
        }
    }

    for (int id : waiting_ids) {
        const Customer& c = customers[id];
        if (c.arrival >= config.warmup) {
            ++metrics.waiting_at_horizon;
            customer_wait_sum += config.horizon - c.arrival;  // censored
        }
    }

    metrics.mean_customer_wait =
        metrics.arrivals > 0 ? customer_wait_sum / static_cast<double>(metrics.arrivals) : 0.0;
    metrics.mean_pickup_time =
        metrics.completed > 0 ? pickup_sum / static_cast<double>(metrics.completed) : 0.0;
    metrics.mean_driver_wait =
        metrics.completed > 0 ? driver_wait_sum / static_cast<double>(metrics.completed) : 0.0;
    metrics.mean_total_customer_wait = metrics.mean_customer_wait + metrics.mean_pickup_time;
    metrics.mean_total_driver_wait = metrics.mean_driver_wait + metrics.mean_pickup_time;
    metrics.completion_rate =
        metrics.arrivals > 0
            ? static_cast<double>(metrics.completed) / static_cast<double>(metrics.arrivals)
            : 1.0;
    metrics.measured_supply_rate =
        static_cast<double>(metrics.completed) /
        ((config.horizon - config.warmup) * config.world_size * config.world_size);
    if (radius_samples > 0) {
        metrics.radius_mean = radius_sum / static_cast<double>(radius_samples);
        const double var =
            radius_sq_sum / static_cast<double>(radius_samples) -
            metrics.radius_mean * metrics.radius_mean;
        metrics.radius_std = std::sqrt(std::max(0.0, var));
    }
    metrics.radius_quantization_step = controller.quantization_step_bound();
    metrics.trace_hash = hash;
    return metrics;
}

namespace {

MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary s;
    const double n = static_cast<double>(values.size());
    for (double v : values) s.mean += v;
    s.mean /= n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / (n - 1.0));
        s.ci95_half = 1.96 * s.stddev / std::sqrt(n);
    }
    return s;
}

}  // namespace

ReplicationSet replicate(const SimConfig& config, const std::vector<std::uint64_t>& seeds,
                         ExecMode exec) {
    if (seeds.empty()) throw std::invalid_argument("replicate: at least one seed required");
    ReplicationSet set;
    set.runs.resize(seeds.size());
    for_each_index(seeds.size(), exec, [&](std::size_t k) {
        SimConfig local = config;
        local.seed = seeds[k];
        set.runs[k] = run(local);
    });

    const auto collect = [&](auto&& get) {
        std::vector<double> v;
        v.reserve(set.runs.size());
        for (const auto& r : set.runs) v.push_back(get(r));
        return summarize(v);
    };
    set.aggregate.arrivals =
        collect([](const SimMetrics& r) { return static_cast<double>(r.arrivals); });
    set.aggregate.customer_wait = collect([](const SimMetrics& r) { return r.mean_customer_wait; });
    set.aggregate.pickup = collect([](const SimMetrics& r) { return r.mean_pickup_time; });
    set.aggregate.driver_wait = collect([](const SimMetrics& r) { return r.mean_driver_wait; });
    set.aggregate.total_customer_wait =
        collect([](const SimMetrics& r) { return r.mean_total_customer_wait; });
    set.aggregate.total_driver_wait =
        collect([](const SimMetrics& r) { return r.mean_total_driver_wait; });
    set.aggregate.completion = collect([](const SimMetrics& r) { return r.completion_rate; });
    return set;
}

ReplicationSet replicate(const SimConfig& config, int n, ExecMode exec) {
    if (n < 1) throw std::invalid_argument("replicate: n >= 1");
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k)
        seeds[static_cast<std::size_t>(k)] = splitmix64(config.seed + static_cast<std::uint64_t>(k));
    return replicate(config, seeds, exec);
}

}  // namespace ridehail
