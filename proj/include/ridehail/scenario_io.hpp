#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ridehail/equilibrium.hpp"
#include "ridehail/model.hpp"
#include "ridehail/simulator.hpp"

namespace ridehail::io {

// Scenario document: regions, demand matrix, travel times, total mass.
// reward_rate defaults to 1 when omitted.
NetworkModel load_network(const std::filesystem::path& path);
NetworkModel network_from_json(const std::string& text);
std::string network_to_json(const NetworkModel& network);

// Simulation configuration document. `policy` is {"type":"fixed",...} or
// {"type":"dynamic",...}; an optional "policy_sweep" lists fixed radii and/or
// "dynamic" for campaign runs.
struct SimScenario {
    SimConfig config;
    std::vector<DispatchPolicy> sweep;  // empty -> just config.policy
};
SimScenario load_sim_scenario(const std::filesystem::path& path);
SimScenario sim_scenario_from_json(const std::string& text);

std::string result_to_json(const EquilibriumResult& result);
// Reads rates + sojourn components and re-derives everything else.
EquilibriumResult load_result(const std::filesystem::path& path, const NetworkModel& network);

// Applies dotted-path overrides ("regions.0.demand_rate=3") to a JSON text.
std::string apply_overrides(const std::string& text, const std::vector<std::string>& overrides);

// 64-bit FNV-1a of a byte string, printed as hex; used for provenance lines.
std::string content_hash(const std::string& bytes);

// Shortest round-trippable decimal form of a double.
std::string format_double(double v);

// CSV writer: buffers rows, then commits atomically (write temp + rename).
// Every file starts with a provenance comment line.
class CsvWriter {
public:
    CsvWriter(std::filesystem::path path, std::string provenance, std::string header);
    void add_row(const std::vector<std::string>& cells);
    void commit();  // throws IoError on failure

private:
    std::filesystem::path path_;
    std::string buffer_;
    bool committed_ = false;
};

}  // namespace ridehail::io
