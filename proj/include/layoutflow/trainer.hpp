#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <json.hpp>

#include "layoutflow/checkpoint.hpp"
#include "layoutflow/conditioning.hpp"
#include "layoutflow/diffusion.hpp"
#include "layoutflow/flow.hpp"
#include "layoutflow/layout.hpp"
#include "layoutflow/metrics.hpp"
#include "layoutflow/model.hpp"
#include "layoutflow/optim.hpp"
#include "layoutflow/sampler.hpp"

namespace layoutflow {

struct TrainConfig {
    double lr = 0.0005;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int batch_size = 64;
    std::int64_t steps = 2000;
    double lambda = kDefaultLambda;
    TrajectoryKind trajectory = TrajectoryKind::Linear;
    PriorKind prior = PriorKind::Gaussian;
    std::uint64_t seed = 0;
    std::int64_t eval_every = 0;       // 0 disables periodic metrics
    std::int64_t checkpoint_every = 0; // 0 saves only at the end
    HeadKind head = HeadKind::Flow;
    bool train_refinement = false;
    /// Tasks drawn per sample; empty means the uniform mask-training mix.
    std::vector<TaskSpec> tasks;
    int workers = 1;

    AdamWConfig optimizer() const { return {lr, weight_decay, beta1, beta2, eps}; }
    void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
/// Reads a flat JSON object; absent keys keep their defaults, unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct LogEntry {
    std::int64_t step = 0;
    double loss = 0.0;
    double mse = 0.0;
    double l1_geo = 0.0;
    double wall_ms = 0.0;
    std::optional<MetricsReport> metrics;

    std::string to_json() const;
};

/// One per-sample training draw (x1, x0, t, task).
struct BatchItem {
    std::size_t layout_index = 0;
    TaskKind task = TaskKind::UnGen;
    TrainingSample sample;
    double l1_scale = 1.0; // diffusion: sqrt(1 - abar) / sqrt(abar)
};

/// The training batch for `step`; depends only on (dataset, cfg.seed, step).
std::vector<BatchItem> draw_training_batch(const Dataset& data, const TrainConfig& cfg, const NoiseSchedule& schedule,
                                           std::int64_t step);

struct TrainOptions {
    std::ostream* log = nullptr;                      // JSON lines
    std::optional<std::filesystem::path> checkpoint;  // written at intervals and at the end
    const Checkpoint* resume = nullptr;
    std::function<void(const LogEntry&)> on_step;
};

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<LogEntry> log;
};

/// Runs AdamW on the flow (or diffusion) objective. A non-finite loss aborts
/// with NumericError; the last interval checkpoint on disk is left untouched.
TrainResult train(const Dataset& data, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const TrainOptions& options = {});

/// Condition masks for `count` samples. Un-Gen draws element counts from the
/// checkpoint histogram; other tasks cycle through `conditions`.
std::vector<ConditionMask> make_condition_masks(const Checkpoint& ckpt, const TaskSpec& task,
                                                std::span<const Layout> conditions, std::size_t count,
                                                std::uint64_t seed);

/// Samples from a checkpoint with its own head, prior and schedule.
std::vector<SampleResult> generate(const Checkpoint& ckpt, std::span<const ConditionMask> masks,
                                   const SampleConfig& cfg, DiffusionSampler sampler = DiffusionSampler::Ddim,
                                   int workers = 1);

} // namespace layoutflow
