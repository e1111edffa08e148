#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace layoutflow {

struct AdamWConfig {
    double lr = 0.0005;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t step = 0;

    friend bool operator==(const AdamWState&, const AdamWState&) = default;
};

/// One AdamW update with decoupled weight decay applied before the Adam step.
/// Throws NumericError (naming the first offending index) on non-finite gradients.
void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                const AdamWConfig& cfg);

} // namespace layoutflow
