#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "layoutflow/conditioning.hpp"
#include "layoutflow/layout.hpp"
#include "layoutflow/model.hpp"
#include "layoutflow/prior.hpp"

namespace layoutflow {

/// Batched network evaluation; implementations must be deterministic.
using FieldFn = std::function<std::vector<std::vector<double>>(std::span<const NetInput>)>;

/// Evaluates `net`, splitting large batches across `workers` threads.
FieldFn net_field(const VectorFieldNet& net, int workers = 1);

enum class Solver { Euler, Heun };

std::string to_string(Solver solver);
Solver parse_solver(std::string_view name);

struct SampleConfig {
    int steps = 100;
    Solver solver = Solver::Euler;
    bool record_trace = false;
    std::uint64_t seed = 0;
    /// Feed the network an unconditional mask and steer condition dims with
    /// inference_condition_update instead of pinning them.
    bool trajectory_conditioning = false;
};

struct TrajectoryTrace {
    std::vector<FlowVector> states;
    std::vector<double> times;
};

struct SampleResult {
    Layout layout;
    FlowVector final_state;
    std::optional<TrajectoryTrace> trace;
};

/// x + h * u on free dims; condition dims re-pinned, padded slots zeroed.
FlowVector euler_step(const FlowVector& x, std::span<const double> u, double h, const ConditionMask& mask);

/// Overwrites condition dims with their values and zeroes padding.
void pin_conditions(FlowVector& x, const ConditionMask& mask);

/// Mask for unconditional generation with N drawn from an element-count histogram.
ConditionMask sample_ungen_mask(std::span<const std::int64_t> histogram, int nmax, int bits, Rng& rng);

/// Per-sample prior seed for batch index `index`.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t index);

/// Integrates the flow from t = 0 to 1 for each mask. Sample i draws x0 from
/// `prior` with sample_seed(cfg.seed, i).
std::vector<SampleResult> sample_flow(const FieldFn& field, PriorKind prior, const CategorySet& categories,
                                      std::span<const ConditionMask> masks, const SampleConfig& cfg);

SampleResult sample_flow(const FieldFn& field, PriorKind prior, const CategorySet& categories,
                         const ConditionMask& mask, const SampleConfig& cfg);

struct TrajectoryStats {
    double path_length = 0.0;
    double straightness = 0.0;
};

/// Path length over free dims (real, not given by `mask` when provided) and
/// the ratio of endpoint displacement to path length.
TrajectoryStats trajectory_stats(const TrajectoryTrace& trace, const ConditionMask* mask = nullptr);

/// JSON list of {"t": ..., "data": [...]}.
std::string trace_to_json(const TrajectoryTrace& trace);
TrajectoryTrace trace_from_json(const std::string& text);

} // namespace layoutflow
