#include "layoutflow/flow.hpp"

#include <cmath>
#include <numbers>

#include "layoutflow/errors.hpp"

namespace layoutflow {

std::string to_string(TrajectoryKind kind)
{
    switch (kind) {
    case TrajectoryKind::Linear: return "linear";
    case TrajectoryKind::SineCosine: return "sincos";
    case TrajectoryKind::Sine: return "sine";
    }
    return "linear";
}

TrajectoryKind parse_trajectory_kind(std::string_view name)
{
    if (name == "linear") return TrajectoryKind::Linear;
    if (name == "sincos") return TrajectoryKind::SineCosine;
    if (name == "sine") return TrajectoryKind::Sine;
    throw FormatError("unknown trajectory kind '" + std::string(name) + "'");
}

namespace {

void check_pair(const FlowVector& x0, const FlowVector& x1, double t)
{
    if (!(t >= 0.0 && t <= 1.0)) {
        throw DomainError("trajectory time must lie in [0, 1]");
    }
    if (x0.data.size() != x1.data.size()) {
        throw ContractError("trajectory endpoints have different shapes");
    }
}

// Coefficients (a, b) with phi_t = a x0 + b x1.
std::pair<double, double> path_coefficients(double t, TrajectoryKind kind)
{
    constexpr double half_pi = std::numbers::pi / 2.0;
    switch (kind) {
    case TrajectoryKind::Linear: return {1.0 - t, t};
    case TrajectoryKind::SineCosine: return {std::cos(half_pi * t), std::sin(half_pi * t)};
    case TrajectoryKind::Sine: {
        const double s = std::sin(half_pi * t);
        return {1.0 - s, s};
    }
    }
    return {1.0 - t, t};
}

std::pair<double, double> velocity_coefficients(double t, TrajectoryKind kind)
{
    constexpr double half_pi = std::numbers::pi / 2.0;
    switch (kind) {
    case TrajectoryKind::Linear: return {-1.0, 1.0};
    case TrajectoryKind::SineCosine:
        return {-half_pi * std::sin(half_pi * t), half_pi * std::cos(half_pi * t)};
    case TrajectoryKind::Sine: {
        const double c = half_pi * std::cos(half_pi * t);
        return {-c, c};
    }
    }
    return {-1.0, 1.0};
}

} // namespace

FlowVector interpolate(const FlowVector& x0, const FlowVector& x1, double t, TrajectoryKind kind)
{
    check_pair(x0, x1, t);
    // Exact endpoints regardless of floating-point coefficients.
    if (t == 0.0 || t == 1.0) {
        FlowVector out = t == 0.0 ? x0 : x1;
        out.pad_mask = x1.pad_mask;
        out.apply_padding();
        return out;
    }
    const auto [a, b] = path_coefficients(t, kind);
    FlowVector out = x1;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = a * x0.data[i] + b * x1.data[i];
    }
    out.apply_padding();
    return out;
}

std::vector<double> conditional_vector_field(const FlowVector& x0, const FlowVector& x1, double t,
                                             TrajectoryKind kind)
{
    check_pair(x0, x1, t);
    const auto [a, b] = velocity_coefficients(t, kind);
    std::vector<double> v(x1.data.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = a * x0.data[i] + b * x1.data[i];
    }
    const int stride = x1.stride();
    for (int k = 0; k < x1.nmax(); ++k) {
        if (!x1.pad_mask[k]) {
            std::fill_n(v.begin() + static_cast<std::ptrdiff_t>(k) * stride, stride, 0.0);
        }
    }
    return v;
}

TrainingSample make_training_sample(const FlowVector& x0, const FlowVector& x1, double t, ConditionMask mask,
                                    TrajectoryKind kind)
{
    TrainingSample s;
    s.t = t;
    s.x_t = interpolate(x0, x1, t, kind);
    s.v_target = conditional_vector_field(x0, x1, t, kind);
    const int stride = x1.stride();
    s.loss_mask.assign(s.v_target.size(), 0);
    for (int k = 0; k < x1.nmax(); ++k) {
        if (!x1.pad_mask[k]) {
            continue;
        }
        for (int d = 0; d < stride; ++d) {
            const std::size_t i = static_cast<std::size_t>(k) * stride + d;
            if (mask.given[i]) {
                s.x_t.data[i] = x1.data[i];
                s.v_target[i] = 0.0;
            } else {
                s.loss_mask[i] = 1;
            }
        }
    }
    s.mask = std::move(mask);
    return s;
}

LossTerms regression_loss(std::span<const double> prediction, std::span<const double> target,
                          std::span<const char> loss_mask, int stride, double lambda, double l1_scale,
                          std::span<double> grad)
{
    if (prediction.size() != target.size() || prediction.size() != loss_mask.size()) {
        throw ContractError("loss inputs have mismatched sizes");
    }
    std::size_t masked = 0;
    std::size_t masked_geometry = 0;
    for (std::size_t i = 0; i < loss_mask.size(); ++i) {
        if (loss_mask[i]) {
            ++masked;
            if (static_cast<int>(i % stride) < kGeometryDims) {
                ++masked_geometry;
            }
        }
    }
    if (masked == 0) {
        throw DomainError("loss mask selects no dimensions");
    }
    if (!grad.empty()) {
        if (grad.size() != prediction.size()) {
            throw ContractError("gradient buffer has wrong size");
        }
        std::fill(grad.begin(), grad.end(), 0.0);
    }
    double sq = 0.0;
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < prediction.size(); ++i) {
        if (!loss_mask[i]) {
            continue;
        }
        const double r = prediction[i] - target[i];
        sq += r * r;
        const bool geometry = static_cast<int>(i % stride) < kGeometryDims;
        if (geometry) {
            abs_sum += std::abs(l1_scale * r);
        }
        if (!grad.empty()) {
            double g = 2.0 * r / static_cast<double>(masked);
            if (geometry) {
                const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
                g += lambda * std::abs(l1_scale) * sign / static_cast<double>(masked_geometry);
            }
            grad[i] = g;
        }
    }
    LossTerms out;
    out.mse = sq / static_cast<double>(masked);
    out.l1_geo = masked_geometry == 0 ? 0.0 : abs_sum / static_cast<double>(masked_geometry);
    out.total = out.mse + lambda * out.l1_geo;
    return out;
}

LossTerms cfm_loss(std::span<const double> u_pred, const TrainingSample& sample, double lambda,
                   std::span<double> grad)
{
    return regression_loss(u_pred, sample.v_target, sample.loss_mask, sample.x_t.stride(), lambda, 1.0, grad);
}

} // namespace layoutflow
