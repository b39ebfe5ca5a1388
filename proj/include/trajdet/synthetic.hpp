#ifndef TRAJDET_SYNTHETIC_HPP
#define TRAJDET_SYNTHETIC_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "trajdet/dataset.hpp"
#include "trajdet/errors.hpp"
#include "trajdet/rng.hpp"

namespace trajdet {

enum class SyntheticKind { circles, moons, blobs };

inline const char* synthetic_name(SyntheticKind k) {
    switch (k) {
        case SyntheticKind::circles: return "circles";
        case SyntheticKind::moons: return "moons";
        case SyntheticKind::blobs: return "blobs";
    }
    return "circles";
}

inline SyntheticKind parse_synthetic_kind(const std::string& s) {
    if (s == "circles") return SyntheticKind::circles;
    if (s == "moons") return SyntheticKind::moons;
    if (s == "blobs") return SyntheticKind::blobs;
    throw ContractError("unknown synthetic dataset kind '" + s + "'");
}

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::circles;
    std::size_t n = 1000;
    double noise = 0.08;
    std::uint64_t seed = 0;
    /// Padding added around the tight bounding box of the generated points.
    double margin = 0.0;
    /// Blobs only: distance between the two class centers, in units of `noise`.
    double blob_separation = 6.0;
    /// Translation applied to every point (used for shifted OOD blobs).
    double shift_x = 0.0;
    double shift_y = 0.0;

    void validate() const {
        if (n < 2) throw ContractError("synthetic datasets need n >= 2");
        if (!(noise >= 0.0) || !std::isfinite(noise)) throw ContractError("noise must be finite and non-negative");
        if (!(margin >= 0.0)) throw ContractError("margin must be non-negative");
        if (kind == SyntheticKind::blobs && !(noise > 0.0) && !(blob_separation > 0.0)) {
            throw ContractError("blobs need positive noise or separation");
        }
    }
};

/// Two-class 2-D data in the style of scikit-learn's generators.
///
/// circles: class 0 on the unit circle, class 1 on the radius-0.5 circle,
/// evenly spaced angles, then isotropic Gaussian noise of std `noise`.
/// moons: two interleaved half circles. blobs: Gaussians of std `noise`
/// centered at (-/+ blob_separation * noise / 2, 0). Rows are shuffled.
inline LabeledData gen_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const std::size_t n0 = spec.n / 2;
    const std::size_t n1 = spec.n - n0;
    LabeledData data;
    auto emit = [&](double x, double y, std::size_t label) {
        data.push({x + spec.shift_x, y + spec.shift_y}, label);
    };
    switch (spec.kind) {
        case SyntheticKind::circles:
            for (std::size_t i = 0; i < n0; ++i) {
                const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n0);
                emit(std::cos(t), std::sin(t), 0);
            }
            for (std::size_t i = 0; i < n1; ++i) {
                const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n1);
                emit(0.5 * std::cos(t), 0.5 * std::sin(t), 1);
            }
            break;
        case SyntheticKind::moons:
            for (std::size_t i = 0; i < n0; ++i) {
                const double t = n0 > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(n0 - 1) : 0.0;
                emit(std::cos(t), std::sin(t), 0);
            }
            for (std::size_t i = 0; i < n1; ++i) {
                const double t = n1 > 1 ? std::numbers::pi * static_cast<double>(i) / static_cast<double>(n1 - 1) : 0.0;
                emit(1.0 - std::cos(t), 0.5 - std::sin(t), 1);
            }
            break;
        case SyntheticKind::blobs: {
            const double half = spec.blob_separation * spec.noise / 2.0;
            for (std::size_t i = 0; i < n0; ++i) emit(-half, 0.0, 0);
            for (std::size_t i = 0; i < n1; ++i) emit(half, 0.0, 1);
            break;
        }
    }
    if (spec.noise > 0.0) {
        for (Point& p : data.points)
            for (double& v : p) v += spec.noise * rng.normal();
    }
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order.begin(), order.end());
    LabeledData shuffled = data.subset(order);
    shuffled.box = BoundingBox::around(shuffled.points, spec.margin);
    return shuffled;
}

}  // namespace trajdet

#endif  // TRAJDET_SYNTHETIC_HPP
