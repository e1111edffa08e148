#include "layoutflow/diffusion.hpp"

#include <cmath>

#include "layoutflow/errors.hpp"

namespace layoutflow {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end)
{
    if (steps < 1 || !(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end) {
        throw DomainError("invalid noise schedule");
    }
    NoiseSchedule s{Empty{}};
    s.m_betas.resize(steps);
    s.m_alpha_bars.resize(static_cast<std::size_t>(steps) + 1);
    s.m_alpha_bars[0] = 1.0;
    for (int i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
        s.m_betas[i] = beta_start + frac * (beta_end - beta_start);
        s.m_alpha_bars[i + 1] = s.m_alpha_bars[i] * (1.0 - s.m_betas[i]);
    }
    return s;
}

double NoiseSchedule::beta(int t) const
{
    if (t < 1 || t > steps()) {
        throw DomainError("schedule index out of range");
    }
    return m_betas[t - 1];
}

double NoiseSchedule::alpha_bar(int t) const
{
    if (t < 0 || t > steps()) {
        throw DomainError("schedule index out of range");
    }
    return m_alpha_bars[t];
}

Diffused forward_diffuse(const FlowVector& x0, int t_index, const NoiseSchedule& schedule, Rng& rng,
                         const ConditionMask* mask)
{
    if (t_index < 1 || t_index > schedule.steps()) {
        throw DomainError("diffusion index must lie in [1, T]");
    }
    const double abar = schedule.alpha_bar(t_index);
    const double a = std::sqrt(abar);
    const double b = std::sqrt(1.0 - abar);
    std::normal_distribution<double> normal(0.0, 1.0);
    Diffused out{x0, std::vector<double>(x0.data.size(), 0.0)};
    const int stride = x0.stride();
    for (std::size_t i = 0; i < x0.data.size(); ++i) {
        const double eps = normal(rng);
        if (!x0.pad_mask[i / stride] || (mask && mask->given[i])) {
            continue;
        }
        out.noise[i] = eps;
        out.x_t.data[i] = a * x0.data[i] + b * eps;
    }
    out.x_t.apply_padding();
    return out;
}

DiffusionSample make_diffusion_sample(const FlowVector& x1, int t_index, ConditionMask mask,
                                      const NoiseSchedule& schedule, Rng& rng)
{
    DiffusionSample ds;
    ds.t_index = t_index;
    const double abar = schedule.alpha_bar(t_index);
    ds.x0_scale = std::sqrt(1.0 - abar) / std::sqrt(abar);
    auto diffused = forward_diffuse(x1, t_index, schedule, rng, &mask);
    TrainingSample& s = ds.sample;
    s.t = static_cast<double>(t_index) / schedule.steps();
    s.x_t = std::move(diffused.x_t);
    s.v_target = std::move(diffused.noise);
    s.loss_mask.assign(s.v_target.size(), 0);
    const int stride = x1.stride();
    for (std::size_t i = 0; i < s.loss_mask.size(); ++i) {
        s.loss_mask[i] = x1.pad_mask[i / stride] && !mask.given[i];
    }
    s.mask = std::move(mask);
    return ds;
}

LossTerms diffusion_loss(std::span<const double> eps_pred, const DiffusionSample& sample, double lambda,
                         std::span<double> grad)
{
    // x0_hat - x0 = -scale * (eps_hat - eps); the L1 magnitude is sign-agnostic.
    return regression_loss(eps_pred, sample.sample.v_target, sample.sample.loss_mask, sample.sample.x_t.stride(),
                           lambda, sample.x0_scale, grad);
}

std::vector<int> strided_indices(int train_steps, int sample_steps)
{
    if (sample_steps < 1 || sample_steps > train_steps) {
        throw DomainError("sample steps must lie in [1, T]");
    }
    std::vector<int> idx;
    idx.reserve(sample_steps);
    for (int i = 1; i <= sample_steps; ++i) {
        idx.push_back(static_cast<int>(std::llround(static_cast<double>(i) * train_steps / sample_steps)));
    }
    return idx;
}

std::vector<SampleResult> sample_diffusion(const FieldFn& eps_model, DiffusionSampler kind,
                                           const NoiseSchedule& schedule, const CategorySet& categories,
                                           std::span<const ConditionMask> masks, const SampleConfig& cfg,
                                           std::span<const FlowVector> initial)
{
    const auto idx = strided_indices(schedule.steps(), cfg.steps);
    const std::size_t n = masks.size();
    if (!initial.empty() && initial.size() != n) {
        throw ContractError("initial states do not match the mask batch");
    }
    std::vector<FlowVector> states(n);
    std::vector<Rng> noise_rngs;
    noise_rngs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(sample_seed(cfg.seed, i));
        if (initial.empty()) {
            states[i] = sample_prior(PriorKind::Gaussian, masks[i].nmax(), masks[i].bits(), rng);
        } else {
            states[i] = initial[i];
        }
        states[i].pad_mask = masks[i].pad_mask;
        pin_conditions(states[i], masks[i]);
        noise_rngs.emplace_back(sample_seed(cfg.seed ^ 0x9e3779b97f4a7c15ull, i));
    }
    std::vector<SampleResult> results(n);
    if (cfg.record_trace) {
        for (std::size_t i = 0; i < n; ++i) {
            results[i].trace.emplace();
            results[i].trace->states.push_back(states[i]);
            results[i].trace->times.push_back(0.0);
        }
    }

    std::vector<NetInput> inputs(n);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int total = static_cast<int>(idx.size());
    for (int step = total - 1; step >= 0; --step) {
        const int t = idx[step];
        const int t_prev = step == 0 ? 0 : idx[step - 1];
        const double abar = schedule.alpha_bar(t);
        const double abar_prev = schedule.alpha_bar(t_prev);
        const double time = static_cast<double>(t) / schedule.steps();
        for (std::size_t i = 0; i < n; ++i) {
            inputs[i] = NetInput{&states[i], time, &masks[i]};
        }
        const auto eps = eps_model(inputs);
        double sigma = 0.0;
        if (kind == DiffusionSampler::Ddpm && t_prev > 0) {
            sigma = std::sqrt((1.0 - abar_prev) / (1.0 - abar)) * std::sqrt(1.0 - abar / abar_prev);
        }
        const double dir = std::sqrt(std::max(0.0, 1.0 - abar_prev - sigma * sigma));
        for (std::size_t i = 0; i < n; ++i) {
            FlowVector& x = states[i];
            for (std::size_t j = 0; j < x.data.size(); ++j) {
                const double x0_hat = (x.data[j] - std::sqrt(1.0 - abar) * eps[i][j]) / std::sqrt(abar);
                double next = std::sqrt(abar_prev) * x0_hat + dir * eps[i][j];
                if (sigma > 0.0) {
                    next += sigma * normal(noise_rngs[i]);
                }
                x.data[j] = next;
            }
            pin_conditions(x, masks[i]);
            if (cfg.record_trace) {
                results[i].trace->states.push_back(x);
                results[i].trace->times.push_back(static_cast<double>(total - step) / total);
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        results[i].layout = vector_to_layout(states[i], categories);
        results[i].final_state = std::move(states[i]);
    }
    return results;
}

std::vector<SampleResult> ddpm_sample(const FieldFn& eps_model, const NoiseSchedule& schedule,
                                      const CategorySet& categories, std::span<const ConditionMask> masks,
                                      const SampleConfig& cfg)
{
    return sample_diffusion(eps_model, DiffusionSampler::Ddpm, schedule, categories, masks, cfg);
}

std::vector<SampleResult> ddim_sample(const FieldFn& eps_model, const NoiseSchedule& schedule,
                                      const CategorySet& categories, std::span<const ConditionMask> masks,
                                      const SampleConfig& cfg)
{
    return sample_diffusion(eps_model, DiffusionSampler::Ddim, schedule, categories, masks, cfg);
}

} // namespace layoutflow
