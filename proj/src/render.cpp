#include "layoutflow/render.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "layoutflow/errors.hpp"

namespace layoutflow {

namespace {

std::string num(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

} // namespace

std::string render_svg(const Layout& layout, const RenderStyle& style, const TrajectoryTrace* trace)
{
    if (style.palette.empty()) {
        throw DomainError("render palette must not be empty");
    }
    const double W = style.width;
    const double H = style.height;
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << style.width << "\" height=\""
       << style.height << "\" viewBox=\"0 0 " << style.width << ' ' << style.height
       << "\" style=\"background-color:#ffffff\">\n";

    auto color = [&](int category) {
        const auto n = static_cast<int>(style.palette.size());
        return style.palette[static_cast<std::size_t>(((category % n) + n) % n)];
    };

    for (const auto& e : layout.elements) {
        const std::string c = color(e.category);
        os << "<rect class=\"element\" x=\"" << num((e.cx - 0.5 * e.w) * W) << "\" y=\""
           << num((e.cy - 0.5 * e.h) * H) << "\" width=\"" << num(e.w * W) << "\" height=\"" << num(e.h * H)
           << "\" fill=\"" << c << "\" fill-opacity=\"" << num(style.fill_opacity) << "\" stroke=\"" << c
           << "\" stroke-width=\"" << num(style.stroke_width) << "\"/>\n";
    }

    if (trace && !trace->states.empty()) {
        const FlowVector& first = trace->states.front();
        int element = 0;
        for (int k = 0; k < first.nmax(); ++k) {
            if (!first.pad_mask[k]) {
                continue;
            }
            const int category = element < static_cast<int>(layout.size()) ? layout.elements[element].category : 0;
            ++element;
            const std::string c = color(category);
            os << "<polyline class=\"trace\" fill=\"none\" stroke=\"" << c << "\" stroke-width=\""
               << num(style.stroke_width) << "\" points=\"";
            for (std::size_t i = 0; i < trace->states.size(); ++i) {
                const double* s = trace->states[i].slot(k);
                os << (i ? " " : "") << num(s[0] * W) << ',' << num(s[1] * H);
            }
            os << "\"/>\n";
            const double* s0 = first.slot(k);
            os << "<circle class=\"trace-start\" cx=\"" << num(s0[0] * W) << "\" cy=\"" << num(s0[1] * H)
               << "\" r=\"" << num(style.marker_radius) << "\" fill=\"" << c << "\"/>\n";
            // Triangle pointing along the last segment.
            const double* s1 = trace->states.back().slot(k);
            const double* sp = trace->states.size() > 1 ? trace->states[trace->states.size() - 2].slot(k) : s0;
            double dx = (s1[0] - sp[0]) * W;
            double dy = (s1[1] - sp[1]) * H;
            const double len = std::hypot(dx, dy);
            if (len > 1e-12) {
                dx /= len;
                dy /= len;
            } else {
                dx = 0.0;
                dy = -1.0;
            }
            const double r = style.marker_radius * 1.5;
            const double tx = s1[0] * W;
            const double ty = s1[1] * H;
            os << "<polygon class=\"trace-end\" points=\"" << num(tx + dx * r) << ',' << num(ty + dy * r) << ' '
               << num(tx - dx * r * 0.5 - dy * r * 0.8) << ',' << num(ty - dy * r * 0.5 + dx * r * 0.8) << ' '
               << num(tx - dx * r * 0.5 + dy * r * 0.8) << ',' << num(ty - dy * r * 0.5 - dx * r * 0.8)
               << "\" fill=\"" << c << "\"/>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace layoutflow
