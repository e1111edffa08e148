#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "layoutflow/conditioning.hpp"
#include "layoutflow/layout.hpp"

namespace layoutflow {

enum class TrajectoryKind { Linear, SineCosine, Sine };

std::string to_string(TrajectoryKind kind);
TrajectoryKind parse_trajectory_kind(std::string_view name);

/// phi_t(x0, x1). Padded slots of x1 stay zero.
FlowVector interpolate(const FlowVector& x0, const FlowVector& x1, double t, TrajectoryKind kind);

/// d/dt of interpolate, the regression target of the network.
std::vector<double> conditional_vector_field(const FlowVector& x0, const FlowVector& x1, double t,
                                             TrajectoryKind kind);

struct TrainingSample {
    FlowVector x_t;
    double t = 0.0;
    std::vector<double> v_target;
    std::vector<char> loss_mask;
    ConditionMask mask;
};

/// Interpolates, pins condition dims to their ground truth and masks them
/// (and padding) out of the loss.
TrainingSample make_training_sample(const FlowVector& x0, const FlowVector& x1, double t, ConditionMask mask,
                                    TrajectoryKind kind);

struct LossTerms {
    double total = 0.0;
    double mse = 0.0;
    double l1_geo = 0.0;
};

inline constexpr double kDefaultLambda = 0.2;

/// mse over loss-masked dims plus lambda times the L1 error on masked geometry
/// dims, both mean-reduced. The L1 residual is l1_scale * (prediction - target).
/// When `grad` is non-empty it receives dL/dprediction.
LossTerms regression_loss(std::span<const double> prediction, std::span<const double> target,
                          std::span<const char> loss_mask, int stride, double lambda, double l1_scale = 1.0,
                          std::span<double> grad = {});

LossTerms cfm_loss(std::span<const double> u_pred, const TrainingSample& sample, double lambda = kDefaultLambda,
                   std::span<double> grad = {});

} // namespace layoutflow
