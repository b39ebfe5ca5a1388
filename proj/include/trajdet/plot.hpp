#ifndef TRAJDET_PLOT_HPP
#define TRAJDET_PLOT_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <string>
#include <vector>

#include "trajdet/dataset.hpp"
#include "trajdet/errors.hpp"
#include "trajdet/model.hpp"
#include "trajdet/text_format.hpp"

namespace trajdet {

/// One point tracked through the net, tagged for plotting.
struct ScatterPoint {
    Point x;
    std::size_t label = 0;
    std::string kind;  // "clean" or "ood"
};

/// Header block,x0,..,x{d-1},label,kind followed by M+1 sections (block 0 is
/// the input), each listing every point in input order.
inline std::string scatter_csv(const ResidualNet& net, const std::vector<ScatterPoint>& pts) {
    const std::size_t d = net.dim();
    std::vector<Trajectory> trajs;
    trajs.reserve(pts.size());
    for (const auto& p : pts) trajs.push_back(forward(net, p.x));
    std::string s = "block";
    for (std::size_t j = 0; j < d; ++j) s += ",x" + std::to_string(j);
    s += ",label,kind\n";
    for (std::size_t m = 0; m <= net.num_blocks(); ++m) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            s += std::to_string(m);
            for (double v : trajs[i].embeddings[m]) s += "," + format_real(v);
            s += "," + std::to_string(pts[i].label) + "," + pts[i].kind + "\n";
        }
    }
    return s;
}

/// Rows series,value: every clean and adversarial cost, then the two
/// quantile lines.
inline std::string histogram_csv(const std::vector<double>& clean, const std::vector<double>& adversarial,
                                 double q_low_value, double q_high_value, double q_low = 0.02,
                                 double q_high = 0.98) {
    std::string s = "series,value\n";
    for (double v : clean) s += "clean," + format_real(v) + "\n";
    for (double v : adversarial) s += "adversarial," + format_real(v) + "\n";
    char name[64];
    std::snprintf(name, sizeof name, "quantile_%g", q_low);
    s += std::string(name) + "," + format_real(q_low_value) + "\n";
    std::snprintf(name, sizeof name, "quantile_%g", q_high);
    s += std::string(name) + "," + format_real(q_high_value) + "\n";
    return s;
}

namespace detail {

inline std::string svg_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

inline const char* class_color(std::size_t label, const std::string& kind) {
    if (kind == "ood") return "#2ca02c";
    static const char* palette[] = {"#1f77b4", "#d62728", "#9467bd", "#ff7f0e", "#8c564b"};
    return palette[label % 5];
}

}  // namespace detail

/// 2-D scatter of block `m` embeddings as a standalone SVG document.
inline std::string scatter_svg(const ResidualNet& net, const std::vector<ScatterPoint>& pts, std::size_t m) {
    if (net.dim() != 2) throw DimensionError("scatter plots need 2-D embeddings");
    if (m > net.num_blocks()) throw IndexError("block index beyond the net");
    std::vector<Point> xs;
    for (const auto& p : pts) xs.push_back(forward(net, p.x).embeddings[m]);
    const BoundingBox box = BoundingBox::around(xs);
    const double size = 400.0, pad = 20.0;
    auto sx = [&](double v) {
        const double span = box.hi[0] - box.lo[0];
        return pad + (span > 0 ? (v - box.lo[0]) / span : 0.5) * (size - 2 * pad);
    };
    auto sy = [&](double v) {
        const double span = box.hi[1] - box.lo[1];
        return size - pad - (span > 0 ? (v - box.lo[1]) / span : 0.5) * (size - 2 * pad);
    };
    std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"400\" height=\"420\" viewBox=\"0 0 400 420\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"400\" height=\"420\" fill=\"white\"/>\n";
    s += "<text x=\"10\" y=\"414\" font-size=\"12\">block " + std::to_string(m) + "</text>\n";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        s += "<circle cx=\"" + detail::svg_number(sx(xs[i][0])) + "\" cy=\"" + detail::svg_number(sy(xs[i][1])) +
             "\" r=\"2\" fill=\"" + detail::class_color(pts[i].label, pts[i].kind) + "\"/>\n";
    }
    s += "</svg>\n";
    return s;
}

/// Overlaid histograms of clean and adversarial costs with the quantile lines.
inline std::string histogram_svg(const std::vector<double>& clean, const std::vector<double>& adversarial,
                                 double q_low_value, double q_high_value, std::size_t bins = 40) {
    if (clean.empty() && adversarial.empty()) throw ContractError("histogram needs at least one value");
    double lo = std::min(q_low_value, q_high_value), hi = std::max(q_low_value, q_high_value);
    for (const auto* series : {&clean, &adversarial})
        for (double v : *series) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!(hi > lo)) hi = lo + 1.0;
    auto count = [&](const std::vector<double>& vs) {
        std::vector<std::size_t> c(bins, 0);
        for (double v : vs) {
            auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
            ++c[std::min(b, bins - 1)];
        }
        return c;
    };
    const auto cc = count(clean), ca = count(adversarial);
    std::size_t peak = 1;
    for (std::size_t b = 0; b < bins; ++b) peak = std::max({peak, cc[b], ca[b]});
    const double width = 600.0, height = 300.0, pad = 20.0;
    const double bw = (width - 2 * pad) / static_cast<double>(bins);
    auto x_of = [&](double v) { return pad + (v - lo) / (hi - lo) * (width - 2 * pad); };
    std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"300\" viewBox=\"0 0 600 300\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"600\" height=\"300\" fill=\"white\"/>\n";
    auto bars = [&](const std::vector<std::size_t>& c, const char* color) {
        for (std::size_t b = 0; b < bins; ++b) {
            if (c[b] == 0) continue;
            const double h = static_cast<double>(c[b]) / static_cast<double>(peak) * (height - 2 * pad);
            s += "<rect x=\"" + detail::svg_number(pad + static_cast<double>(b) * bw) + "\" y=\"" +
                 detail::svg_number(height - pad - h) + "\" width=\"" + detail::svg_number(bw) + "\" height=\"" +
                 detail::svg_number(h) + "\" fill=\"" + color + "\" fill-opacity=\"0.5\"/>\n";
        }
    };
    bars(cc, "#1f77b4");
    bars(ca, "#d62728");
    for (double q : {q_low_value, q_high_value}) {
        const std::string x = detail::svg_number(x_of(q));
        s += "<line x1=\"" + x + "\" y1=\"" + detail::svg_number(pad) + "\" x2=\"" + x + "\" y2=\"" +
             detail::svg_number(height - pad) + "\" stroke=\"black\" stroke-dasharray=\"4 2\"/>\n";
    }
    s += "</svg>\n";
    return s;
}

}  // namespace trajdet

#endif  // TRAJDET_PLOT_HPP
