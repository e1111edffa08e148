#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "layoutflow/errors.hpp"
#include "layoutflow/flow.hpp"
#include "oracles.hpp"

using namespace layoutflow;

namespace {

FlowVector scalar_vector(double v)
{
    // one real element; first dim carries v, all others zero
    FlowVector x(1, 1);
    x.pad_mask[0] = true;
    x.slot(0)[0] = v;
    return x;
}

const TrajectoryKind kAllKinds[] = {TrajectoryKind::Linear, TrajectoryKind::SineCosine, TrajectoryKind::Sine};

} // namespace

TEST_CASE("trajectory endpoints are exact")
{
    std::mt19937_64 rng(1);
    for (auto kind : kAllKinds) {
        for (int i = 0; i < 100; ++i) {
            const FlowVector x0 = oracle::random_flow_vector(rng, 4, 2, 3);
            const FlowVector x1 = oracle::random_flow_vector(rng, 4, 2, 3);
            CHECK(interpolate(x0, x1, 0.0, kind).data == x0.data);
            CHECK(interpolate(x0, x1, 1.0, kind).data == x1.data);
        }
    }
}

TEST_CASE("interpolation examples")
{
    CHECK(interpolate(scalar_vector(0.0), scalar_vector(1.0), 0.25, TrajectoryKind::Linear).data[0] ==
          doctest::Approx(0.25).epsilon(1e-15));
    CHECK(interpolate(scalar_vector(1.0), scalar_vector(0.0), 0.5, TrajectoryKind::SineCosine).data[0] ==
          doctest::Approx(std::cos(std::numbers::pi / 4)).epsilon(1e-15));
    CHECK_THROWS_AS(interpolate(scalar_vector(0.0), scalar_vector(1.0), 1.5, TrajectoryKind::Linear), DomainError);
    CHECK_THROWS_AS(interpolate(scalar_vector(0.0), scalar_vector(1.0), -0.1, TrajectoryKind::Sine), DomainError);
}

TEST_CASE("interpolation keeps padded slots at zero")
{
    std::mt19937_64 rng(2);
    const FlowVector x0 = oracle::random_flow_vector(rng, 5, 2, 2);
    const FlowVector x1 = oracle::random_flow_vector(rng, 5, 2, 2);
    for (auto kind : kAllKinds) {
        const FlowVector xt = interpolate(x0, x1, 0.4, kind);
        for (int k = 2; k < 5; ++k)
            for (int d = 0; d < xt.stride(); ++d) CHECK(xt.slot(k)[d] == 0.0);
    }
}

TEST_CASE("vector field examples")
{
    for (double t : {0.0, 0.3, 0.9, 1.0}) {
        CHECK(conditional_vector_field(scalar_vector(0.0), scalar_vector(1.0), t, TrajectoryKind::Linear)[0] == 1.0);
    }
    std::mt19937_64 rng(3);
    const FlowVector x0 = oracle::random_flow_vector(rng, 3, 2, 3);
    const FlowVector x1 = oracle::random_flow_vector(rng, 3, 2, 3);
    for (double v : conditional_vector_field(x0, x1, 1.0, TrajectoryKind::Sine)) CHECK(std::abs(v) < 1e-15);
}

TEST_CASE("vector field equals trajectory derivative")
{
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> ut(1e-3, 1.0 - 1e-3);
    const double h = 1e-4;
    for (auto kind : kAllKinds) {
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const FlowVector x0 = oracle::random_flow_vector(rng, 2, 2, 2);
            const FlowVector x1 = oracle::random_flow_vector(rng, 2, 2, 2);
            const double t = ut(rng);
            const auto v = conditional_vector_field(x0, x1, t, kind);
            const auto up = interpolate(x0, x1, std::min(1.0, t + h), kind);
            const auto down = interpolate(x0, x1, std::max(0.0, t - h), kind);
            const double span = std::min(1.0, t + h) - std::max(0.0, t - h);
            for (std::size_t d = 0; d < v.size(); ++d)
                worst = std::max(worst, std::abs(v[d] - (up.data[d] - down.data[d]) / span));
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("training sample with unconditional mask")
{
    std::mt19937_64 rng(5);
    const FlowVector x0 = oracle::random_flow_vector(rng, 4, 2, 4);
    const FlowVector x1 = oracle::random_flow_vector(rng, 4, 2, 3);
    const ConditionMask mask = unconditional_mask(x1.pad_mask, 2);
    const TrainingSample s = make_training_sample(x0, x1, 0.37, mask, TrajectoryKind::Linear);
    FlowVector expect = interpolate(x0, x1, 0.37, TrajectoryKind::Linear);
    expect.pad_mask = x1.pad_mask;
    expect.apply_padding();
    CHECK(s.x_t.data == expect.data);
    for (int k = 0; k < 4; ++k)
        for (int d = 0; d < 6; ++d) CHECK(static_cast<bool>(s.loss_mask[k * 6 + d]) == (k < 3));
}

TEST_CASE("training sample pins gen-type bits")
{
    std::mt19937_64 rng(6);
    const FlowVector x0 = oracle::random_flow_vector(rng, 4, 2, 4);
    const FlowVector x1 = oracle::random_flow_vector(rng, 4, 2, 3);
    Rng mrng(1);
    for (auto kind : {TaskKind::GenType, TaskKind::GenTypeSize, TaskKind::Completion, TaskKind::Refinement}) {
        const ConditionMask mask = build_mask(TaskSpec{kind}, x1, mrng);
        const TrainingSample s = make_training_sample(x0, x1, 0.37, mask, TrajectoryKind::SineCosine);
        for (int k = 0; k < 4; ++k) {
            for (int d = 0; d < 6; ++d) {
                const std::size_t i = static_cast<std::size_t>(k) * 6 + d;
                if (!x1.pad_mask[k]) {
                    CHECK(s.loss_mask[i] == 0);
                    CHECK(s.x_t.data[i] == 0.0);
                } else if (mask.is_given(k, d)) {
                    CHECK(s.x_t.data[i] == x1.data[i]);
                    CHECK(s.v_target[i] == 0.0);
                    CHECK(s.loss_mask[i] == 0);
                } else {
                    CHECK(s.loss_mask[i] == 1);
                }
            }
        }
        if (kind == TaskKind::GenType) {
            for (int k = 0; k < 3; ++k) {
                CHECK(s.x_t.slot(k)[4] == x1.slot(k)[4]);
                CHECK(s.x_t.slot(k)[5] == x1.slot(k)[5]);
            }
        }
    }
}

TEST_CASE("loss formula examples")
{
    // one element, B=1: only the first geometry dim is active
    const std::vector<double> target(5, 0.0);
    std::vector<double> pred(5, 0.0);
    std::vector<char> mask(5, 0);
    mask[0] = 1;
    CHECK(regression_loss(pred, target, mask, 5, 0.2).total == 0.0);
    pred[0] = 2.0;
    const LossTerms l = regression_loss(pred, target, mask, 5, 0.2);
    CHECK(l.mse == doctest::Approx(4.0));
    CHECK(l.l1_geo == doctest::Approx(2.0));
    CHECK(l.total == doctest::Approx(4.4));
    CHECK(regression_loss(pred, target, mask, 5, 0.0).total == l.mse);
    std::vector<char> empty(5, 0);
    CHECK_THROWS_AS(regression_loss(pred, target, empty, 5, 0.2), DomainError);
}

TEST_CASE("loss ignores padded and condition dims and is non-negative")
{
    std::mt19937_64 rng(7);
    const FlowVector x0 = oracle::random_flow_vector(rng, 4, 2, 4);
    const FlowVector x1 = oracle::random_flow_vector(rng, 4, 2, 3);
    Rng mrng(2);
    const ConditionMask mask = build_mask(TaskSpec{TaskKind::GenTypeSize}, x1, mrng);
    const TrainingSample s = make_training_sample(x0, x1, 0.6, mask, TrajectoryKind::Linear);
    std::vector<double> pred = s.v_target;
    CHECK(cfm_loss(pred, s).total == 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (!s.loss_mask[i]) pred[i] = 1e3;
    CHECK(cfm_loss(pred, s).total == 0.0);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        for (double& p : pred) p = n(rng);
        CHECK(cfm_loss(pred, s).total > 0.0);
    }
}

TEST_CASE("loss gradient matches finite differences")
{
    std::mt19937_64 rng(8);
    const FlowVector x0 = oracle::random_flow_vector(rng, 3, 2, 3);
    const FlowVector x1 = oracle::random_flow_vector(rng, 3, 2, 2);
    const TrainingSample s =
        make_training_sample(x0, x1, 0.5, unconditional_mask(x1.pad_mask, 2), TrajectoryKind::Linear);
    std::vector<double> pred(s.v_target.size());
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& p : pred) p = n(rng);
    std::vector<double> grad(pred.size(), 0.0);
    cfm_loss(pred, s, 0.3, grad);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        auto up = pred, down = pred;
        up[i] += 1e-6;
        down[i] -= 1e-6;
        const double numeric = (cfm_loss(up, s, 0.3).total - cfm_loss(down, s, 0.3).total) / 2e-6;
        CHECK(grad[i] == doctest::Approx(numeric).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("trajectory names")
{
    for (auto k : kAllKinds) CHECK(parse_trajectory_kind(to_string(k)) == k);
    CHECK(to_string(TrajectoryKind::SineCosine) == "sincos");
    CHECK_THROWS(parse_trajectory_kind("cubic"));
}
