#pragma once

#include <span>
#include <vector>

#include "layoutflow/flow.hpp"
#include "layoutflow/sampler.hpp"

namespace layoutflow {

/// Discrete-time DDPM schedule; index t runs 1..steps, alpha_bar(0) = 1.
class NoiseSchedule {
public:
    NoiseSchedule() : NoiseSchedule(linear()) {}
    static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

    int steps() const noexcept { return static_cast<int>(m_betas.size()); }
    double beta(int t) const;
    double alpha_bar(int t) const;

private:
    struct Empty {};
    explicit NoiseSchedule(Empty) {}

    std::vector<double> m_betas;
    std::vector<double> m_alpha_bars; // index 0 holds 1.0
};

struct Diffused {
    FlowVector x_t;
    std::vector<double> noise;
};

/// x_t = sqrt(abar) x0 + sqrt(1 - abar) eps on free dims. Condition dims (when
/// `mask` is given) keep the clean value and carry zero noise; padding stays zero.
Diffused forward_diffuse(const FlowVector& x0, int t_index, const NoiseSchedule& schedule, Rng& rng,
                         const ConditionMask* mask = nullptr);

/// Epsilon-prediction training sample; `t` is t_index / T.
struct DiffusionSample {
    TrainingSample sample;
    int t_index = 1;
    double x0_scale = 0.0; // sqrt(1 - abar) / sqrt(abar)
};

DiffusionSample make_diffusion_sample(const FlowVector& x1, int t_index, ConditionMask mask,
                                      const NoiseSchedule& schedule, Rng& rng);

/// MSE on predicted noise plus lambda times the L1 error of the implied x0
/// estimate on geometry dims.
LossTerms diffusion_loss(std::span<const double> eps_pred, const DiffusionSample& sample, double lambda,
                         std::span<double> grad = {});

enum class DiffusionSampler { Ddpm, Ddim };

/// Reverse process over a uniformly strided sub-schedule of `cfg.steps` indices.
/// Condition dims are pinned after every update. Trace times run 0 -> 1 with progress.
std::vector<SampleResult> sample_diffusion(const FieldFn& eps_model, DiffusionSampler kind,
                                           const NoiseSchedule& schedule, const CategorySet& categories,
                                           std::span<const ConditionMask> masks, const SampleConfig& cfg,
                                           std::span<const FlowVector> initial = {});

std::vector<SampleResult> ddpm_sample(const FieldFn& eps_model, const NoiseSchedule& schedule,
                                      const CategorySet& categories, std::span<const ConditionMask> masks,
                                      const SampleConfig& cfg);
std::vector<SampleResult> ddim_sample(const FieldFn& eps_model, const NoiseSchedule& schedule,
                                      const CategorySet& categories, std::span<const ConditionMask> masks,
                                      const SampleConfig& cfg);

/// Strided sub-schedule t_1 < ... < t_S = T used by the samplers.
std::vector<int> strided_indices(int train_steps, int sample_steps);

} // namespace layoutflow
