#ifndef TRAJDET_FEATURES_HPP
#define TRAJDET_FEATURES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "trajdet/model.hpp"

namespace trajdet {

/// Interleaved (norm_0, cos_0, norm_1, cos_1, ...), two entries per block.
using FeatureVector = std::vector<double>;

/// Per block m with residue r of size d: norm_m = |r|^2 / d and cos_m is the
/// cosine between r and the all-ones vector (0 when r is zero).
inline FeatureVector extract_features(const Trajectory& t) {
    FeatureVector f;
    f.reserve(2 * t.residues.size());
    for (const Point& r : t.residues) {
        const double d = static_cast<double>(r.size());
        double sq = 0.0, sum = 0.0;
        for (double v : r) {
            sq += v * v;
            sum += v;
        }
        f.push_back(sq / d);
        double cosine = 0.0;
        if (sq > 0.0) cosine = std::clamp(sum / (std::sqrt(sq) * std::sqrt(d)), -1.0, 1.0);
        f.push_back(cosine);
    }
    return f;
}

inline FeatureVector extract_features(const ResidualNet& net, const Point& x) {
    return extract_features(forward(net, x));
}

/// Header columns block_0_norm, block_0_cos, ... for M blocks.
inline std::vector<std::string> feature_names(std::size_t blocks) {
    std::vector<std::string> names;
    for (std::size_t m = 0; m < blocks; ++m) {
        names.push_back("block_" + std::to_string(m) + "_norm");
        names.push_back("block_" + std::to_string(m) + "_cos");
    }
    return names;
}

struct DetectionSample {
    FeatureVector features;
    int label = 0;  // 0 clean, 1 adversarial
    std::size_t predicted_class = 0;
};

}  // namespace trajdet

#endif  // TRAJDET_FEATURES_HPP
