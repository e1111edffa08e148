#include "layoutflow/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "layoutflow/errors.hpp"

namespace layoutflow {

namespace {

struct Box {
    double left, top, right, bottom;
};

Box clamped_box(const Element& e)
{
    return {std::clamp(e.cx - 0.5 * e.w, 0.0, 1.0), std::clamp(e.cy - 0.5 * e.h, 0.0, 1.0),
            std::clamp(e.cx + 0.5 * e.w, 0.0, 1.0), std::clamp(e.cy + 0.5 * e.h, 0.0, 1.0)};
}

double area(const Box& b)
{
    return std::max(0.0, b.right - b.left) * std::max(0.0, b.bottom - b.top);
}

double intersection(const Box& a, const Box& b)
{
    const double w = std::min(a.right, b.right) - std::max(a.left, b.left);
    const double h = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
    return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

} // namespace

double alignment(const Layout& layout)
{
    const std::size_t n = layout.size();
    if (n < 2) {
        return 0.0;
    }
    struct Lines {
        double x[3];
        double y[3];
    };
    std::vector<Lines> lines(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Element& e = layout.elements[i];
        lines[i] = {{e.cx - 0.5 * e.w, e.cx, e.cx + 0.5 * e.w}, {e.cy - 0.5 * e.h, e.cy, e.cy + 0.5 * e.h}};
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) {
                continue;
            }
            for (int k = 0; k < 3; ++k) {
                best = std::min(best, std::abs(lines[i].x[k] - lines[j].x[k]));
                best = std::min(best, std::abs(lines[i].y[k] - lines[j].y[k]));
            }
        }
        total += -std::log(1.0 - std::min(best, 1.0 - 1e-9));
    }
    return 100.0 * total / static_cast<double>(n);
}

double overlap(const Layout& layout)
{
    std::vector<Box> boxes;
    boxes.reserve(layout.size());
    double area_sum = 0.0;
    for (const auto& e : layout.elements) {
        boxes.push_back(clamped_box(e));
        area_sum += area(boxes.back());
    }
    if (area_sum <= 0.0) {
        return 0.0;
    }
    double inter = 0.0;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        for (std::size_t j = i + 1; j < boxes.size(); ++j) {
            inter += intersection(boxes[i], boxes[j]);
        }
    }
    return inter / area_sum;
}

double box_iou(const Element& a, const Element& b)
{
    const Box ba = clamped_box(a);
    const Box bb = clamped_box(b);
    const double inter = intersection(ba, bb);
    const double uni = area(ba) + area(bb) - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

Assignment hungarian(const Matrix& cost)
{
    if (cost.rows() != cost.cols()) {
        throw ContractError("assignment cost matrix must be square");
    }
    const int n = static_cast<int>(cost.rows());
    if (!cost.allFinite()) {
        throw DomainError("assignment cost matrix has non-finite entries");
    }
    Assignment out;
    if (n == 0) {
        return out;
    }
    // Potentials formulation with 1-based rows/cols; column 0 is a sentinel.
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> match(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        match[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = match[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) {
                    continue;
                }
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    out.column_of_row.assign(n, -1);
    for (int j = 1; j <= n; ++j) {
        out.column_of_row[match[j] - 1] = j - 1;
    }
    for (int i = 0; i < n; ++i) {
        out.cost += cost(i, out.column_of_row[i]);
    }
    return out;
}

double layout_iou(const Layout& a, const Layout& b)
{
    const std::size_t denom = std::max(a.size(), b.size());
    if (denom == 0) {
        return 0.0;
    }
    int max_category = 0;
    for (const auto& e : a.elements) max_category = std::max(max_category, e.category);
    for (const auto& e : b.elements) max_category = std::max(max_category, e.category);
    double matched = 0.0;
    for (int c = 0; c <= max_category; ++c) {
        std::vector<const Element*> ea, eb;
        for (const auto& e : a.elements) {
            if (e.category == c) ea.push_back(&e);
        }
        for (const auto& e : b.elements) {
            if (e.category == c) eb.push_back(&e);
        }
        if (ea.empty() || eb.empty()) {
            continue;
        }
        const auto n = static_cast<Eigen::Index>(std::max(ea.size(), eb.size()));
        Matrix cost = Matrix::Zero(n, n); // dummies have zero IoU
        for (std::size_t i = 0; i < ea.size(); ++i) {
            for (std::size_t j = 0; j < eb.size(); ++j) {
                cost(i, j) = -box_iou(*ea[i], *eb[j]);
            }
        }
        matched += -hungarian(cost).cost;
    }
    return matched / static_cast<double>(denom);
}

double miou(std::span<const Layout> generated, std::span<const Layout> reference, std::size_t limit)
{
    if (generated.empty() || reference.empty()) {
        throw DomainError("mIoU needs non-empty layout sets");
    }
    const std::size_t ng = std::min(generated.size(), limit);
    const std::size_t nr = std::min(reference.size(), limit);
    const auto n = static_cast<Eigen::Index>(std::max(ng, nr));
    Matrix iou = Matrix::Zero(n, n);
    Matrix cost = Matrix::Constant(n, n, 1.0);
    for (std::size_t i = 0; i < ng; ++i) {
        for (std::size_t j = 0; j < nr; ++j) {
            iou(i, j) = layout_iou(generated[i], reference[j]);
            cost(i, j) = 1.0 - iou(i, j);
        }
    }
    const Assignment match = hungarian(cost);
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < ng; ++i) {
        const auto j = static_cast<std::size_t>(match.column_of_row[i]);
        if (j < nr) {
            total += iou(i, j);
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

namespace {

void moments(const std::vector<Vector>& feats, Vector& mean, Matrix& cov)
{
    const auto dim = feats.front().size();
    const auto n = static_cast<double>(feats.size());
    mean = Vector::Zero(dim);
    for (const auto& f : feats) mean += f;
    mean /= n;
    Eigen::MatrixXd centered(feats.size(), dim);
    for (std::size_t i = 0; i < feats.size(); ++i) {
        centered.row(i) = (feats[i] - mean).transpose();
    }
    cov = (centered.transpose() * centered) / (n - 1.0);
}

} // namespace

double frechet_distance(const std::vector<Vector>& features_a, const std::vector<Vector>& features_b)
{
    if (features_a.size() < 2 || features_b.size() < 2) {
        throw DomainError("Frechet distance needs at least two samples per set");
    }
    const auto dim = features_a.front().size();
    for (const auto* set : {&features_a, &features_b}) {
        for (const auto& f : *set) {
            if (f.size() != dim) {
                throw ContractError("feature vectors have mismatched dimensions");
            }
            if (!f.allFinite()) {
                throw NumericError("non-finite feature value");
            }
        }
    }
    Vector mu_a, mu_b;
    Matrix cov_a, cov_b;
    moments(features_a, mu_a, cov_a);
    moments(features_b, mu_b, cov_b);

    // tr((A B)^{1/2}) = tr((A^{1/2} B A^{1/2})^{1/2}); both factors are symmetric PSD.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_a(cov_a);
    const Vector root_vals = eig_a.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd sqrt_a = eig_a.eigenvectors() * root_vals.asDiagonal() * eig_a.eigenvectors().transpose();
    Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
    inner = 0.5 * (inner + inner.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_inner(inner, Eigen::EigenvaluesOnly);
    const Vector& lambdas = eig_inner.eigenvalues();
    const double scale = std::max(1.0, lambdas.cwiseAbs().maxCoeff());
    double trace_sqrt = 0.0;
    for (Eigen::Index i = 0; i < lambdas.size(); ++i) {
        if (lambdas[i] < -1e-8 * scale) {
            throw NumericError("covariance product has a significantly negative eigenvalue");
        }
        trace_sqrt += std::sqrt(std::max(0.0, lambdas[i]));
    }
    const double d2 = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt;
    return std::max(0.0, d2);
}

Vector FeatureMap::operator()(const Layout& layout) const
{
    Vector f = Vector::Zero(size());
    const auto n = static_cast<double>(layout.size());
    f[0] = n / m_nmax;
    if (layout.size() == 0) {
        return f;
    }
    for (int d = 0; d < 4; ++d) {
        double sum = 0.0, sq = 0.0;
        for (const auto& e : layout.elements) {
            const double v = d == 0 ? e.cx : d == 1 ? e.cy : d == 2 ? e.w : e.h;
            sum += v;
            sq += v * v;
        }
        const double mean = sum / n;
        f[1 + 2 * d] = mean;
        f[2 + 2 * d] = std::sqrt(std::max(0.0, sq / n - mean * mean));
    }
    double iou_sum = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < layout.size(); ++i) {
        for (std::size_t j = i + 1; j < layout.size(); ++j) {
            iou_sum += box_iou(layout.elements[i], layout.elements[j]);
            ++pairs;
        }
    }
    f[9] = pairs ? iou_sum / pairs : 0.0;
    f[10] = alignment(layout) / 100.0; // per-element misalignment, same scale as the other entries
    f[11] = overlap(layout);
    for (const auto& e : layout.elements) {
        if (e.category >= 0 && e.category < m_categories) {
            f[12 + e.category] += 1.0 / n;
        }
    }
    return f;
}

std::vector<Vector> FeatureMap::operator()(std::span<const Layout> layouts) const
{
    std::vector<Vector> out;
    out.reserve(layouts.size());
    for (const auto& l : layouts) out.push_back((*this)(l));
    return out;
}

std::string MetricsReport::to_json() const
{
    nlohmann::json j{{"alignment", alignment}, {"overlap", overlap},         {"miou", miou},
                     {"frechet", frechet},     {"n_generated", n_generated}, {"n_reference", n_reference}};
    return j.dump();
}

double mean_alignment(std::span<const Layout> layouts)
{
    double s = 0.0;
    for (const auto& l : layouts) s += alignment(l);
    return layouts.empty() ? 0.0 : s / static_cast<double>(layouts.size());
}

double mean_overlap(std::span<const Layout> layouts)
{
    double s = 0.0;
    for (const auto& l : layouts) s += overlap(l);
    return layouts.empty() ? 0.0 : s / static_cast<double>(layouts.size());
}

MetricsReport evaluate(std::span<const Layout> generated, std::span<const Layout> reference,
                       const FeatureMap& features)
{
    MetricsReport r;
    r.alignment = mean_alignment(generated);
    r.overlap = mean_overlap(generated);
    r.miou = miou(generated, reference);
    r.frechet = frechet_distance(features(generated), features(reference));
    r.n_generated = static_cast<std::int64_t>(generated.size());
    r.n_reference = static_cast<std::int64_t>(reference.size());
    return r;
}

} // namespace layoutflow
