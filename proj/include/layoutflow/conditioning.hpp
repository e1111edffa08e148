#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "layoutflow/layout.hpp"
#include "layoutflow/prior.hpp"

namespace layoutflow {

enum class TaskKind { UnGen, GenType, GenTypeSize, Completion, Refinement };

/// Completion variants: up to 20% of elements missing, or up to 80% missing.
enum class CompletionMode { Missing20, Missing80 };

struct TaskSpec {
    TaskKind kind = TaskKind::UnGen;
    CompletionMode completion = CompletionMode::Missing20;
};

/// CLI names: un-gen, gen-type, gen-typesize, completion, completion80, refinement.
std::string to_string(const TaskSpec& task);
TaskSpec parse_task(std::string_view name);

/// Which dims of a flow state are conditions, and the values they carry.
///
/// `given` and `values` share the FlowVector layout (Nmax x (4+B), element-major).
/// For Refinement nothing is given; `values` holds the noisy layout that the
/// network receives as side information.
struct ConditionMask {
    TaskKind task = TaskKind::UnGen;
    std::vector<char> given;
    std::vector<double> values;
    std::vector<bool> pad_mask;
    int stride = 0;

    ConditionMask() = default;
    ConditionMask(int nmax, int bits);

    int nmax() const noexcept { return static_cast<int>(pad_mask.size()); }
    int bits() const noexcept { return stride - kGeometryDims; }
    bool is_given(int element, int dim) const noexcept
    {
        return given[static_cast<std::size_t>(element) * stride + dim] != 0;
    }
    /// Type condition state (m_type): all bit dims of the element are given.
    bool type_given(int element) const noexcept;
    /// Refinement routes `values` into the element embeddings.
    bool has_side_input() const noexcept { return task == TaskKind::Refinement; }
    std::size_t given_count() const noexcept;
};

/// A mask with nothing given, for the slots marked real in `pad_mask`.
ConditionMask unconditional_mask(const std::vector<bool>& pad_mask, int bits);

/// Builds the condition mask for `task` from a ground-truth state.
ConditionMask build_mask(const TaskSpec& task, const FlowVector& x1, Rng& rng, double refinement_sigma = 0.01);

/// Uniform over the four mask-trained tasks, or five when refinement is trained.
TaskKind sample_training_task(Rng& rng, bool train_refinement = false);

/// Adds N(0, sigma^2) noise to the geometry of every real element; bits are copied.
std::vector<double> perturb_for_refinement(const FlowVector& x1, double sigma, Rng& rng);

/// Inference-time trajectory conditioning: while step < 0.8 * total_steps the
/// direction on condition dims is replaced by the residual (x_c - x_k).
std::vector<double> inference_condition_update(std::span<const double> u, const FlowVector& x_k,
                                               const ConditionMask& mask, int step, int total_steps);

} // namespace layoutflow
