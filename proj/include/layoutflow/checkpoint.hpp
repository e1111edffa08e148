#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "layoutflow/diffusion.hpp"
#include "layoutflow/flow.hpp"
#include "layoutflow/model.hpp"
#include "layoutflow/optim.hpp"
#include "layoutflow/prior.hpp"

namespace layoutflow {

enum class HeadKind { Flow, Diffusion };

std::string to_string(HeadKind head);
HeadKind parse_head_kind(std::string_view name);

struct DiffusionScheduleConfig {
    int steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    NoiseSchedule schedule() const { return NoiseSchedule::linear(steps, beta_start, beta_end); }
    friend bool operator==(const DiffusionScheduleConfig&, const DiffusionScheduleConfig&) = default;
};

/// Everything needed to sample from or resume training of a model.
struct Checkpoint {
    VectorFieldNet net;
    HeadKind head = HeadKind::Flow;
    PriorKind prior = PriorKind::Gaussian;
    TrajectoryKind trajectory = TrajectoryKind::Linear;
    DiffusionScheduleConfig diffusion;
    CategorySet categories;
    std::vector<std::int64_t> element_histogram;
    std::int64_t step = 0;
    nlohmann::json train_config = nlohmann::json::object();
    std::optional<AdamWState> optimizer;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container:
///   8 bytes   magic "LFLOWCKP"
///   u32       format version
///   u64       header length L
///   L bytes   UTF-8 JSON header (configs, kinds, categories, histogram,
///             step, parameter slot table, optimizer flag)
///   f64 x P   parameters, row-major per slot, in slot-table order
///   [u64 adam step, f64 x P first moments, f64 x P second moments]
/// All integers and floats little-endian.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

} // namespace layoutflow
