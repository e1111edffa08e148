#pragma once

#include <string>
#include <vector>

#include "layoutflow/layout.hpp"
#include "layoutflow/sampler.hpp"

namespace layoutflow {

struct RenderStyle {
    int width = 360;
    int height = 640;
    double stroke_width = 1.5;
    double fill_opacity = 0.45;
    /// Category colors, cycled by category index.
    std::vector<std::string> palette{"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                                     "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};
    double marker_radius = 4.0;
};

/// SVG 1.1 document: one rect per element and, when `trace` is given, a
/// polyline of each element's center across the trace with a circle at the
/// start and a triangle at the end.
std::string render_svg(const Layout& layout, const RenderStyle& style = {}, const TrajectoryTrace* trace = nullptr);

} // namespace layoutflow
