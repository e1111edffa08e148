#include "layoutflow/optim.hpp"

#include <cmath>
#include <string>

#include "layoutflow/errors.hpp"

namespace layoutflow {

void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                const AdamWConfig& cfg)
{
    if (params.size() != grads.size()) {
        throw ContractError("parameter and gradient sizes differ");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw NumericError("non-finite gradient at parameter index " + std::to_string(i) +
                               " (value " + std::to_string(grads[i]) + ")");
        }
    }
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.step = 0;
    }
    ++state.step;
    const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const double decay = 1.0 - cfg.lr * cfg.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double m_hat = state.m[i] / bias1;
        const double v_hat = state.v[i] / bias2;
        params[i] = params[i] * decay - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
}

} // namespace layoutflow
