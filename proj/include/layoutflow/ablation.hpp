#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "layoutflow/trainer.hpp"

namespace layoutflow {

struct UnconditionalEval {
    MetricsReport report;
    double median_straightness = 0.0;
    std::vector<Layout> layouts;
};

/// Generates `count` Un-Gen layouts (element counts from the checkpoint
/// histogram) and scores them against `reference`.
UnconditionalEval evaluate_unconditional(const Checkpoint& ckpt, const Dataset& reference, std::size_t count,
                                         int steps, std::uint64_t seed,
                                         DiffusionSampler sampler = DiffusionSampler::Ddim, int workers = 1);

struct AblationSettings {
    Dataset train;
    Dataset heldout;
    ModelConfig model;
    TrainConfig base;
    std::size_t samples = 200;
    int sample_steps = 100;
    std::uint64_t seed = 0;
};

struct AblationRow {
    std::string label;
    MetricsReport report;
    double median_straightness = 0.0;
};

/// what: "trajectory" | "prior" | "lambda" | "head".
std::vector<AblationRow> run_ablation(std::string_view what, const AblationSettings& settings);

std::string format_ablation_table(std::string_view what, const std::vector<AblationRow>& rows);

} // namespace layoutflow
