#include "ridehail/scenario_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "ridehail/errors.hpp"

namespace ridehail::io {

using nlohmann::json;

namespace {

json parse(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ValidationError("malformed JSON document");
    return j;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Matrix matrix_from_json(const json& j, const char* name) {
    if (!j.is_array() || j.empty()) throw ValidationError(std::string(name) + " must be a matrix");
    const std::size_t rows = j.size();
    const std::size_t cols = j.front().size();
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols)
            throw ValidationError(std::string(name) + " rows have inconsistent lengths");
        for (std::size_t k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
    }
    return m;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

NetworkModel network_from_json(const std::string& text) {
    const json j = parse(text);
    NetworkModel net;
    try {
        for (const auto& r : j.at("regions")) {
            RegionParams p;
            p.area = r.at("area").get<double>();
            p.demand_rate = r.at("demand_rate").get<double>();
            p.abandonment_rate = r.at("abandonment_rate").get<double>();
            p.speed = r.at("speed").get<double>();
            p.reward_rate = r.value("reward_rate", 1.0);
            net.regions.push_back(p);
        }
        net.demand_matrix = matrix_from_json(j.at("demand_matrix"), "demand_matrix");
        net.travel_time = matrix_from_json(j.at("travel_time"), "travel_time");
        net.total_mass = j.at("total_mass").get<double>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("scenario: ") + e.what());
    }
    return net;
}

NetworkModel load_network(const std::filesystem::path& path) {
    return network_from_json(slurp(path));
}

std::string network_to_json(const NetworkModel& network) {
    json j;
    j["regions"] = json::array();
    for (const auto& r : network.regions) {
        j["regions"].push_back({{"area", r.area},
                                {"demand_rate", r.demand_rate},
                                {"abandonment_rate", r.abandonment_rate},
                                {"speed", r.speed},
                                {"reward_rate", r.reward_rate}});
    }
    j["demand_matrix"] = matrix_to_json(network.demand_matrix);
    j["travel_time"] = matrix_to_json(network.travel_time);
    j["total_mass"] = network.total_mass;
    return j.dump(2);
}

namespace {

DispatchPolicy policy_from_json(const json& j) {
    DispatchPolicy p;
    const std::string type = j.at("type").get<std::string>();
    if (type == "fixed") {
        p.kind = DispatchPolicy::Kind::fixed;
        if (j.contains("radius")) {
            p.radius_customer = p.radius_driver = j.at("radius").get<double>();
        } else {
            p.radius_customer = j.at("radius_customer").get<double>();
            p.radius_driver = j.at("radius_driver").get<double>();
        }
    } else if (type == "dynamic") {
        p.kind = DispatchPolicy::Kind::dynamic_optimal;
        p.estimate_window = j.value("window", 60.0);
    } else {
        throw ValidationError("policy.type must be \"fixed\" or \"dynamic\"");
    }
    return p;
}

}  // namespace

SimScenario sim_scenario_from_json(const std::string& text) {
    const json j = parse(text);
    SimScenario s;
    try {
        SimConfig& c = s.config;
        c.world_size = j.at("world_size").get<double>();
        c.horizon = j.at("horizon").get<double>();
        c.arrival_rate = j.at("arrival_rate").get<double>();
        c.patience_mean = j.at("patience_mean").get<double>();
        c.driver_count = j.at("driver_count").get<int>();
        c.speed = j.at("speed").get<double>();
        c.trip_time_mean = j.at("trip_time_mean").get<double>();
        c.seed = j.value<std::uint64_t>("seed", 1);
        c.warmup = j.value("warmup", 120.0);
        c.bootstrap_radius = j.value("bootstrap_radius", 1.6);
        c.estimate_step = j.value("estimate_step", 0.005);
        if (j.contains("policy")) c.policy = policy_from_json(j.at("policy"));
        if (j.contains("policy_sweep")) {
            for (const auto& entry : j.at("policy_sweep")) {
                if (entry.is_string() && entry.get<std::string>() == "dynamic") {
                    DispatchPolicy p = DispatchPolicy::dynamic();
                    p.estimate_window = c.policy.estimate_window;
                    s.sweep.push_back(p);
                } else if (entry.is_number()) {
                    const double r = entry.get<double>();
                    s.sweep.push_back(DispatchPolicy::fixed(r, r));
                } else {
                    throw ValidationError("policy_sweep entries must be radii or \"dynamic\"");
                }
            }
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("simulation scenario: ") + e.what());
    }
    return s;
}

SimScenario load_sim_scenario(const std::filesystem::path& path) {
    return sim_scenario_from_json(slurp(path));
}

std::string result_to_json(const EquilibriumResult& r) {
    json j;
    j["x"] = matrix_to_json(r.x);
    j["mass"] = matrix_to_json(r.mu);
    j["lambda"] = r.lambda;
    j["nu"] = r.nu;
    json sj = json::array();
    for (const auto& s : r.sojourn) {
        sj.push_back({{"driver_wait", s.driver_wait},
                      {"pickup", s.pickup},
                      {"trip", s.trip},
                      {"total", s.total}});
    }
    j["sojourn"] = std::move(sj);
    j["residuals"] = {{"kkt", r.kkt_residual},
                      {"balance", r.balance_residual_inf},
                      {"conservation", r.conservation_residual}};
    j["classification"] = r.classification == RegimeTag::oversupply    ? "oversupply"
                          : r.classification == RegimeTag::undersupply ? "undersupply"
                                                                       : "interior";
    j["verified"] = r.verified;
    j["average_reward"] = r.average_reward;
    if (std::isfinite(r.tail_gap))
        j["supply_gap"] = r.tail_gap;
    else
        j["supply_gap"] = nullptr;  // mass pooled at the demand-supply boundary
    return j.dump(2);
}

EquilibriumResult load_result(const std::filesystem::path& path, const NetworkModel& network) {
    const json j = parse(slurp(path));
    try {
        const Matrix x = matrix_from_json(j.at("x"), "x");
        std::vector<SojournBreakdown> sojourn;
        for (const auto& s : j.at("sojourn")) {
            SojournBreakdown sb;
            sb.driver_wait = s.at("driver_wait").get<double>();
            sb.pickup = s.at("pickup").get<double>();
            sb.trip = s.at("trip").get<double>();
            sb.total = s.at("total").get<double>();
            sojourn.push_back(sb);
        }
        double gap = 0.0;
        if (j.contains("supply_gap")) {
            gap = j.at("supply_gap").is_null() ? std::numeric_limits<double>::infinity()
                                               : j.at("supply_gap").get<double>();
        }
        return assemble_result(network, x, std::move(sojourn), gap);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("stored result: ") + e.what());
    }
}

std::string apply_overrides(const std::string& text, const std::vector<std::string>& overrides) {
    json j = parse(text);
    for (const std::string& item : overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos)
            throw ValidationError("override must look like path.to.key=value: " + item);
        const std::string path = item.substr(0, eq);
        const std::string value = item.substr(eq + 1);

        json* node = &j;
        std::size_t start = 0;
        while (start <= path.size()) {
            const auto dot = path.find('.', start);
            const std::string key =
                path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            const bool last = dot == std::string::npos;
            json* next = nullptr;
            if (node->is_array()) {
                std::size_t idx = 0;
                try {
                    idx = std::stoul(key);
                } catch (...) {
                    throw ValidationError("array index expected in override: " + item);
                }
                if (idx >= node->size()) throw ValidationError("override index out of range: " + item);
                next = &(*node)[idx];
            } else if (node->is_object()) {
                if (!node->contains(key)) throw ValidationError("unknown override key: " + item);
                next = &(*node)[key];
            } else {
                throw ValidationError("override path descends into a scalar: " + item);
            }
            if (last) {
                json parsed = json::parse(value, nullptr, false);
                *next = parsed.is_discarded() ? json(value) : parsed;
                break;
            }
            node = next;
            start = dot + 1;
        }
    }
    return j.dump();
}

std::string content_hash(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(std::filesystem::path path, std::string provenance, std::string header)
    : path_(std::move(path)) {
    buffer_ = "# " + provenance + "\n" + header + "\n";
}

void CsvWriter::add_row(const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) {
        if (k) buffer_ += ',';
        buffer_ += cells[k];
    }
    buffer_ += '\n';
}

void CsvWriter::commit() {
    if (committed_) return;
    const std::filesystem::path tmp = path_.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << buffer_;
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path_, ec);
    if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
    committed_ = true;
}

}  // namespace ridehail::io
