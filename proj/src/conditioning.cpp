#include "layoutflow/conditioning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "layoutflow/errors.hpp"

namespace layoutflow {

std::string to_string(const TaskSpec& task)
{
    switch (task.kind) {
    case TaskKind::UnGen: return "un-gen";
    case TaskKind::GenType: return "gen-type";
    case TaskKind::GenTypeSize: return "gen-typesize";
    case TaskKind::Completion:
        return task.completion == CompletionMode::Missing80 ? "completion80" : "completion";
    case TaskKind::Refinement: return "refinement";
    }
    return "un-gen";
}

TaskSpec parse_task(std::string_view name)
{
    if (name == "un-gen") return {TaskKind::UnGen};
    if (name == "gen-type") return {TaskKind::GenType};
    if (name == "gen-typesize") return {TaskKind::GenTypeSize};
    if (name == "completion") return {TaskKind::Completion, CompletionMode::Missing20};
    if (name == "completion80") return {TaskKind::Completion, CompletionMode::Missing80};
    if (name == "refinement") return {TaskKind::Refinement};
    throw FormatError("unknown task '" + std::string(name) + "'");
}

ConditionMask::ConditionMask(int nmax, int bits)
    : given(static_cast<std::size_t>(nmax) * (kGeometryDims + bits), 0),
      values(static_cast<std::size_t>(nmax) * (kGeometryDims + bits), 0.0),
      pad_mask(nmax, false),
      stride(kGeometryDims + bits)
{
}

bool ConditionMask::type_given(int element) const noexcept
{
    for (int d = kGeometryDims; d < stride; ++d) {
        if (!is_given(element, d)) {
            return false;
        }
    }
    return true;
}

std::size_t ConditionMask::given_count() const noexcept
{
    return static_cast<std::size_t>(std::count(given.begin(), given.end(), char{1}));
}

ConditionMask unconditional_mask(const std::vector<bool>& pad_mask, int bits)
{
    ConditionMask m(static_cast<int>(pad_mask.size()), bits);
    m.pad_mask = pad_mask;
    return m;
}

ConditionMask build_mask(const TaskSpec& task, const FlowVector& x1, Rng& rng, double refinement_sigma)
{
    const int nmax = x1.nmax();
    const int bits = x1.bits();
    ConditionMask m(nmax, bits);
    m.task = task.kind;
    m.pad_mask = x1.pad_mask;
    m.values = x1.data;
    const int stride = m.stride;

    auto give = [&](int k, int first, int last) {
        for (int d = first; d < last; ++d) {
            m.given[static_cast<std::size_t>(k) * stride + d] = 1;
        }
    };

    std::vector<int> real;
    for (int k = 0; k < nmax; ++k) {
        if (x1.pad_mask[k]) {
            real.push_back(k);
        }
    }

    switch (task.kind) {
    case TaskKind::UnGen:
        break;
    case TaskKind::GenType:
        for (int k : real) give(k, kGeometryDims, stride);
        break;
    case TaskKind::GenTypeSize:
        for (int k : real) {
            give(k, kGeometryDims, stride);
            give(k, 2, kGeometryDims);
        }
        break;
    case TaskKind::Completion: {
        const int n = static_cast<int>(real.size());
        const double missing_fraction = task.completion == CompletionMode::Missing80 ? 0.8 : 0.2;
        const int max_missing = static_cast<int>(std::floor(missing_fraction * n + 1e-9));
        std::uniform_int_distribution<int> missing_dist(0, max_missing);
        const int keep = n - missing_dist(rng);
        std::shuffle(real.begin(), real.end(), rng);
        for (int i = 0; i < keep; ++i) give(real[i], 0, stride);
        break;
    }
    case TaskKind::Refinement:
        m.values = perturb_for_refinement(x1, refinement_sigma, rng);
        break;
    }
    return m;
}

TaskKind sample_training_task(Rng& rng, bool train_refinement)
{
    std::uniform_int_distribution<int> dist(0, train_refinement ? 4 : 3);
    switch (dist(rng)) {
    case 0: return TaskKind::UnGen;
    case 1: return TaskKind::GenType;
    case 2: return TaskKind::GenTypeSize;
    case 3: return TaskKind::Completion;
    default: return TaskKind::Refinement;
    }
}

std::vector<double> perturb_for_refinement(const FlowVector& x1, double sigma, Rng& rng)
{
    if (!(sigma >= 0.0)) {
        throw DomainError("refinement sigma must be non-negative");
    }
    std::vector<double> values = x1.data;
    if (sigma == 0.0) {
        return values;
    }
    std::normal_distribution<double> noise(0.0, sigma);
    const int stride = x1.stride();
    for (int k = 0; k < x1.nmax(); ++k) {
        if (!x1.pad_mask[k]) {
            continue;
        }
        for (int d = 0; d < kGeometryDims; ++d) {
            values[static_cast<std::size_t>(k) * stride + d] += noise(rng);
        }
    }
    return values;
}

std::vector<double> inference_condition_update(std::span<const double> u, const FlowVector& x_k,
                                               const ConditionMask& mask, int step, int total_steps)
{
    if (step < 0 || step >= total_steps) {
        throw DomainError("step index outside [0, T)");
    }
    std::vector<double> out(u.begin(), u.end());
    if (static_cast<double>(step) >= 0.8 * total_steps) {
        return out;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (mask.given[i]) {
            out[i] = mask.values[i] - x_k.data[i];
        }
    }
    return out;
}

} // namespace layoutflow
