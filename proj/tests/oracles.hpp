// Independent reference computations used by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "layoutflow/conditioning.hpp"
#include "layoutflow/layout.hpp"
#include "layoutflow/model.hpp"

namespace oracle {

using namespace layoutflow;

/// Minimum over all permutations; n is small.
inline double brute_force_assignment(const std::vector<std::vector<double>>& cost)
{
    const std::size_t n = cost.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += cost[i][perm[i]];
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

inline double area(const Element& e) { return e.w * e.h; }

inline double clipped_iou(const Element& a, const Element& b)
{
    auto lo = [](double c, double s) { return std::clamp(c - s / 2, 0.0, 1.0); };
    auto hi = [](double c, double s) { return std::clamp(c + s / 2, 0.0, 1.0); };
    const double ax0 = lo(a.cx, a.w), ax1 = hi(a.cx, a.w), ay0 = lo(a.cy, a.h), ay1 = hi(a.cy, a.h);
    const double bx0 = lo(b.cx, b.w), bx1 = hi(b.cx, b.w), by0 = lo(b.cy, b.h), by1 = hi(b.cy, b.h);
    const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
    const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
    const double inter = iw * ih;
    const double uni = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

/// Best same-category matching by enumerating injections; divides by the larger size.
inline double brute_force_layout_iou(const Layout& a, const Layout& b)
{
    const std::size_t na = a.size(), nb = b.size();
    const std::size_t denom = std::max(na, nb);
    if (denom == 0) return 0.0;
    // enumerate assignments of each element of a to an element of b or to nothing
    double best = 0.0;
    std::vector<int> pick(na, -1);
    std::vector<char> used(nb, 0);
    auto rec = [&](auto&& self, std::size_t i, double acc) -> void {
        if (i == na) {
            best = std::max(best, acc);
            return;
        }
        self(self, i + 1, acc);
        for (std::size_t j = 0; j < nb; ++j) {
            if (used[j] || a.elements[i].category != b.elements[j].category) continue;
            used[j] = 1;
            self(self, i + 1, acc + clipped_iou(a.elements[i], b.elements[j]));
            used[j] = 0;
        }
    };
    rec(rec, 0, 0.0);
    return best / static_cast<double>(denom);
}

/// Max over all pairings of the mean matched layout IoU; equal-size sets.
inline double brute_force_miou(const std::vector<Layout>& gen, const std::vector<Layout>& ref)
{
    const std::size_t n = gen.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 0.0;
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += brute_force_layout_iou(gen[i], ref[perm[i]]);
        best = std::max(best, total / static_cast<double>(n));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

inline Layout random_layout(std::mt19937_64& rng, int max_elements, int categories)
{
    std::uniform_int_distribution<int> count(1, max_elements);
    std::uniform_int_distribution<int> cat(0, categories - 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Layout l;
    const int n = count(rng);
    for (int k = 0; k < n; ++k) {
        l.elements.push_back({u(rng), u(rng), u(rng), u(rng), cat(rng)});
    }
    return l;
}

/// FlowVector with `real` unpadded slots holding N(0,1) values.
inline FlowVector random_flow_vector(std::mt19937_64& rng, int nmax, int bits, int real)
{
    FlowVector x(nmax, bits);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int k = 0; k < nmax; ++k) {
        x.pad_mask[k] = k < real;
        for (int d = 0; d < x.stride(); ++d) x.slot(k)[d] = k < real ? n(rng) : 0.0;
    }
    return x;
}

/// Directional projection loss L = sum_b <w_b, f(x_b)> evaluated in full.
inline double projected_output(const VectorFieldNet& net, std::span<const NetInput> batch,
                               const std::vector<std::vector<double>>& weights)
{
    const auto out = net.forward(batch);
    double total = 0.0;
    for (std::size_t b = 0; b < out.size(); ++b)
        for (std::size_t i = 0; i < out[b].size(); ++i) total += out[b][i] * weights[b][i];
    return total;
}

} // namespace oracle
