#pragma once

#include <cstddef>
#include <functional>

namespace ridehail {

// Execution mode for the embarrassingly parallel campaign loops (sweeps,
// replications, multi-start solves, grid-search oracles). `serial` is the
// reference path; `parallel` uses OpenMP when compiled in. Results must be
// written by index so both modes produce bit-identical output.
enum class ExecMode { serial, parallel };

void for_each_index(std::size_t n, ExecMode mode, const std::function<void(std::size_t)>& body);

// Reads RIDEHAIL_SERIAL=1 from the environment; defaults to parallel.
ExecMode default_exec_mode();

}  // namespace ridehail
