#ifndef TRAJDET_DATASET_HPP
#define TRAJDET_DATASET_HPP

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "trajdet/errors.hpp"

namespace trajdet {

using Point = std::vector<double>;

/// Axis-aligned box that attacks clip their outputs into.
struct BoundingBox {
    std::vector<double> lo;
    std::vector<double> hi;

    bool empty() const noexcept { return lo.empty(); }

    /// Tight box around `points`, widened by `margin` on every side.
    static BoundingBox around(const std::vector<Point>& points, double margin = 0.0) {
        BoundingBox box;
        if (points.empty()) return box;
        const std::size_t d = points.front().size();
        box.lo.assign(d, std::numeric_limits<double>::infinity());
        box.hi.assign(d, -std::numeric_limits<double>::infinity());
        for (const Point& p : points) {
            for (std::size_t j = 0; j < d; ++j) {
                box.lo[j] = std::min(box.lo[j], p[j]);
                box.hi[j] = std::max(box.hi[j], p[j]);
            }
        }
        for (std::size_t j = 0; j < d; ++j) {
            box.lo[j] -= margin;
            box.hi[j] += margin;
        }
        return box;
    }

    void clip(Point& p) const {
        if (empty()) return;
        for (std::size_t j = 0; j < p.size(); ++j) p[j] = std::clamp(p[j], lo[j], hi[j]);
    }

    bool contains(const Point& p) const {
        if (empty()) return true;
        for (std::size_t j = 0; j < p.size(); ++j)
            if (p[j] < lo[j] || p[j] > hi[j]) return false;
        return true;
    }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// Where a row of a dataset came from.
enum class Origin { clean, adversarial, noisy };

inline const char* origin_name(Origin o) {
    switch (o) {
        case Origin::clean: return "clean";
        case Origin::adversarial: return "adversarial";
        case Origin::noisy: return "noisy";
    }
    return "clean";
}

inline Origin parse_origin(const std::string& s) {
    if (s == "clean") return Origin::clean;
    if (s == "adversarial") return Origin::adversarial;
    if (s == "noisy") return Origin::noisy;
    throw ContractError("unknown origin tag '" + s + "'");
}

/// Labeled points plus the box attacks are confined to.
struct LabeledData {
    std::vector<Point> points;
    std::vector<std::size_t> labels;
    std::vector<Origin> origins;
    BoundingBox box;

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }
    std::size_t dim() const { return points.empty() ? 0 : points.front().size(); }

    void push(Point p, std::size_t label, Origin origin = Origin::clean) {
        points.push_back(std::move(p));
        labels.push_back(label);
        origins.push_back(origin);
    }

    /// Rows at `indices`, in that order; the box is carried over.
    LabeledData subset(const std::vector<std::size_t>& indices) const {
        LabeledData out;
        out.box = box;
        for (std::size_t i : indices) out.push(points.at(i), labels.at(i), origins.at(i));
        return out;
    }

    void validate() const {
        if (labels.size() != points.size() || origins.size() != points.size()) {
            throw DimensionError("dataset columns have different lengths");
        }
        const std::size_t d = dim();
        for (const Point& p : points) {
            if (p.size() != d) throw DimensionError("dataset rows have different dimensions");
        }
        if (!box.empty() && (box.lo.size() != d || box.hi.size() != d)) {
            throw DimensionError("bounding box dimension does not match data");
        }
    }
};

}  // namespace trajdet

#endif  // TRAJDET_DATASET_HPP
