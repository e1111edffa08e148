#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "layoutflow/layout.hpp"
#include "layoutflow/model.hpp"

namespace layoutflow {

/// Mean over elements of -log(1 - a_i), scaled by 100, where a_i is the
/// smallest left/center/right or top/middle/bottom gap to any other element.
double alignment(const Layout& layout);

/// Summed pairwise intersection area over summed element area, boxes clamped
/// to the unit canvas.
double overlap(const Layout& layout);

double box_iou(const Element& a, const Element& b);

struct Assignment {
    std::vector<int> column_of_row;
    double cost = 0.0;
};

/// Minimum-cost perfect matching on a square matrix (O(n^3) potentials method).
Assignment hungarian(const Matrix& cost);

/// Category-wise optimal element matching; matched IoU sum / max(N_a, N_b).
double layout_iou(const Layout& a, const Layout& b);

inline constexpr std::size_t kMiouSetLimit = 500;

/// Mean layout_iou over an optimal one-to-one matching between the two sets.
/// Sets larger than `limit` are truncated to their first `limit` layouts.
double miou(std::span<const Layout> generated, std::span<const Layout> reference,
            std::size_t limit = kMiouSetLimit);

/// Squared Frechet distance between Gaussians fitted to two feature sets.
double frechet_distance(const std::vector<Vector>& features_a, const std::vector<Vector>& features_b);

/// "geo16" layout statistics: count/Nmax, mean and std of cx, cy, w, h, mean
/// pairwise IoU, alignment, overlap, normalized category histogram. Length 12 + C.
class FeatureMap {
public:
    FeatureMap(int nmax, int categories) : m_nmax(nmax), m_categories(categories) {}

    std::string name() const { return "geo16"; }
    int size() const noexcept { return 12 + m_categories; }
    Vector operator()(const Layout& layout) const;
    std::vector<Vector> operator()(std::span<const Layout> layouts) const;

private:
    int m_nmax;
    int m_categories;
};

struct MetricsReport {
    double alignment = 0.0;
    double overlap = 0.0;
    double miou = 0.0;
    double frechet = 0.0;
    std::int64_t n_generated = 0;
    std::int64_t n_reference = 0;

    std::string to_json() const;
};

double mean_alignment(std::span<const Layout> layouts);
double mean_overlap(std::span<const Layout> layouts);

MetricsReport evaluate(std::span<const Layout> generated, std::span<const Layout> reference,
                       const FeatureMap& features);

} // namespace layoutflow
