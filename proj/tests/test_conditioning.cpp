#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "layoutflow/conditioning.hpp"
#include "layoutflow/errors.hpp"
#include "oracles.hpp"

using namespace layoutflow;

namespace {

FlowVector layout_vector(int n, int nmax, int bits, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    return oracle::random_flow_vector(rng, nmax, bits, n);
}

std::size_t given_elements(const ConditionMask& m)
{
    std::size_t n = 0;
    for (int k = 0; k < m.nmax(); ++k) {
        bool all = m.pad_mask[k];
        for (int d = 0; d < m.stride; ++d) all = all && m.is_given(k, d);
        n += all;
    }
    return n;
}

} // namespace

TEST_CASE("mask pattern per task")
{
    const int bits = 2;
    const FlowVector x1 = layout_vector(3, 5, bits, 1);
    Rng rng(1);
    SUBCASE("un-gen gives nothing")
    {
        const ConditionMask m = build_mask(TaskSpec{TaskKind::UnGen}, x1, rng);
        CHECK(m.given_count() == 0);
    }
    SUBCASE("gen-type gives the bit dims")
    {
        const ConditionMask m = build_mask(TaskSpec{TaskKind::GenType}, x1, rng);
        CHECK(m.given_count() == 6);
        for (int k = 0; k < 3; ++k) {
            CHECK(m.type_given(k));
            for (int d = 0; d < 4; ++d) CHECK_FALSE(m.is_given(k, d));
        }
    }
    SUBCASE("gen-typesize gives bits plus width and height")
    {
        const ConditionMask m = build_mask(TaskSpec{TaskKind::GenTypeSize}, x1, rng);
        CHECK(m.given_count() == 12);
        for (int k = 0; k < 3; ++k) {
            CHECK_FALSE(m.is_given(k, 0));
            CHECK_FALSE(m.is_given(k, 1));
            CHECK(m.is_given(k, 2));
            CHECK(m.is_given(k, 3));
        }
    }
    SUBCASE("refinement gives nothing but carries the noisy layout")
    {
        const ConditionMask m = build_mask(TaskSpec{TaskKind::Refinement}, x1, rng);
        CHECK(m.given_count() == 0);
        CHECK(m.has_side_input());
        CHECK(m.values != x1.data);
    }
    SUBCASE("padded slots are never given")
    {
        for (int t = 0; t < 5; ++t) {
            const ConditionMask m = build_mask(TaskSpec{static_cast<TaskKind>(t)}, x1, rng);
            for (int k = 3; k < 5; ++k)
                for (int d = 0; d < m.stride; ++d) CHECK_FALSE(m.is_given(k, d));
        }
    }
}

TEST_CASE("completion keeps at least 80 percent of elements")
{
    const FlowVector x1 = layout_vector(10, 12, 3, 2);
    Rng rng(2);
    std::map<std::size_t, int> seen;
    for (int i = 0; i < 2000; ++i) {
        const ConditionMask m = build_mask(TaskSpec{TaskKind::Completion}, x1, rng);
        const std::size_t kept = given_elements(m);
        CHECK(kept >= 8);
        CHECK(kept <= 10);
        CHECK(m.given_count() == kept * m.stride);
        ++seen[kept];
    }
    CHECK(seen.size() == 3);
}

TEST_CASE("completion80 keeps at least 20 percent of elements")
{
    const FlowVector x1 = layout_vector(10, 12, 3, 3);
    Rng rng(3);
    std::size_t lo = 100;
    for (int i = 0; i < 2000; ++i) {
        const std::size_t kept = given_elements(build_mask(TaskSpec{TaskKind::Completion, CompletionMode::Missing80}, x1, rng));
        CHECK(kept >= 2);
        lo = std::min(lo, kept);
    }
    CHECK(lo == 2);
}

TEST_CASE("training task frequencies")
{
    for (bool refinement : {false, true}) {
        Rng rng(4);
        std::map<TaskKind, int> counts;
        const int draws = 100000;
        for (int i = 0; i < draws; ++i) ++counts[sample_training_task(rng, refinement)];
        const double expect = refinement ? 0.2 : 0.25;
        CHECK(counts.size() == (refinement ? 5u : 4u));
        for (const auto& [kind, c] : counts) CHECK(std::abs(c / double(draws) - expect) < 0.01);
    }
    Rng a(5), b(5);
    for (int i = 0; i < 100; ++i) CHECK(sample_training_task(a) == sample_training_task(b));
}

TEST_CASE("refinement perturbation")
{
    const FlowVector x1 = layout_vector(4, 4, 2, 6);
    Rng rng(6);
    CHECK(perturb_for_refinement(x1, 0.0, rng) == x1.data);
    CHECK_THROWS_AS(perturb_for_refinement(x1, -0.1, rng), DomainError);
    double total = 0.0;
    int n = 0;
    const double sigma = 0.01;
    for (int i = 0; i < 2500; ++i) {
        const auto v = perturb_for_refinement(x1, sigma, rng);
        for (int k = 0; k < 4; ++k) {
            for (int d = 0; d < 4; ++d) {
                total += std::abs(v[k * 6 + d] - x1.slot(k)[d]);
                ++n;
            }
            CHECK(v[k * 6 + 4] == x1.slot(k)[4]);
            CHECK(v[k * 6 + 5] == x1.slot(k)[5]);
        }
    }
    const double expected = sigma * std::sqrt(2.0 / 3.141592653589793);
    CHECK(std::abs(total / n - expected) < 0.05 * expected);
}

TEST_CASE("inference-time condition update")
{
    const FlowVector x1 = layout_vector(2, 3, 2, 7);
    Rng rng(7);
    const std::vector<double> u(x1.data.size(), 0.5);
    FlowVector xk = layout_vector(2, 3, 2, 8);

    const ConditionMask free = unconditional_mask(x1.pad_mask, 2);
    CHECK(inference_condition_update(u, xk, free, 3, 10) == u);

    const ConditionMask m = build_mask(TaskSpec{TaskKind::GenType}, x1, rng);
    const auto steered = inference_condition_update(u, xk, m, 3, 10);
    for (int k = 0; k < 2; ++k) {
        for (int d = 0; d < 6; ++d) {
            const std::size_t i = static_cast<std::size_t>(k) * 6 + d;
            if (m.is_given(k, d))
                CHECK(steered[i] == m.values[i] - xk.data[i]);
            else
                CHECK(steered[i] == u[i]);
        }
    }
    xk.data = m.values;
    const auto zero = inference_condition_update(u, xk, m, 3, 10);
    for (int k = 0; k < 2; ++k) CHECK(zero[k * 6 + 4] == 0.0);

    CHECK(inference_condition_update(u, layout_vector(2, 3, 2, 8), m, 8, 10) == u);
    CHECK(inference_condition_update(u, layout_vector(2, 3, 2, 8), m, 7, 10) != u);
    CHECK_THROWS_AS(inference_condition_update(u, xk, m, 10, 10), DomainError);
}

TEST_CASE("task names")
{
    for (const char* name : {"un-gen", "gen-type", "gen-typesize", "completion", "completion80", "refinement"}) {
        CHECK(to_string(parse_task(name)) == name);
    }
    CHECK_THROWS(parse_task("inpaint"));
}
