#ifndef TRAJDET_IDX_HPP
#define TRAJDET_IDX_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "trajdet/dataset.hpp"
#include "trajdet/errors.hpp"
#include "trajdet/text_format.hpp"

namespace trajdet {

inline constexpr std::uint32_t idx_images_magic = 0x00000803;
inline constexpr std::uint32_t idx_labels_magic = 0x00000801;

namespace detail {

inline std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const std::string& what) {
    if (offset + 4 > bytes.size()) throw FormatError(what + ": truncated header", bytes.size());
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
    return v;
}

}  // namespace detail

/// Parses an IDX image/label pair held in memory. Pixels are scaled to [0, 1]
/// and the bounding box is set to the unit cube.
inline LabeledData parse_idx(const std::string& images, const std::string& labels) {
    if (images.empty()) throw FormatError("images file is empty", 0);
    if (labels.empty()) throw FormatError("labels file is empty", 0);
    const std::uint32_t img_magic = detail::read_be32(images, 0, "images");
    if (img_magic != idx_images_magic) throw FormatError("images file has bad magic number", 0);
    const std::uint32_t lbl_magic = detail::read_be32(labels, 0, "labels");
    if (lbl_magic != idx_labels_magic) throw FormatError("labels file has bad magic number", 0);

    const std::size_t count = detail::read_be32(images, 4, "images");
    const std::size_t rows = detail::read_be32(images, 8, "images");
    const std::size_t cols = detail::read_be32(images, 12, "images");
    const std::size_t label_count = detail::read_be32(labels, 4, "labels");
    if (count != label_count) {
        throw FormatError("images file holds " + std::to_string(count) + " items but labels file holds " +
                              std::to_string(label_count),
                          4);
    }
    const std::size_t pixels = rows * cols;
    if (pixels == 0) throw FormatError("images have zero pixels", 8);
    const std::size_t img_header = 16, lbl_header = 8;
    if (images.size() < img_header + count * pixels) {
        throw FormatError("images file truncated: expected " + std::to_string(img_header + count * pixels) +
                              " bytes",
                          images.size());
    }
    if (labels.size() < lbl_header + count) {
        throw FormatError("labels file truncated: expected " + std::to_string(lbl_header + count) + " bytes",
                          labels.size());
    }
    LabeledData data;
    for (std::size_t i = 0; i < count; ++i) {
        Point p(pixels);
        for (std::size_t k = 0; k < pixels; ++k) {
            p[k] = static_cast<double>(static_cast<unsigned char>(images[img_header + i * pixels + k])) / 255.0;
        }
        data.push(std::move(p), static_cast<unsigned char>(labels[lbl_header + i]));
    }
    data.box.lo.assign(pixels, 0.0);
    data.box.hi.assign(pixels, 1.0);
    return data;
}

inline LabeledData load_idx(const std::string& images_path, const std::string& labels_path) {
    return parse_idx(read_text_file(images_path), read_text_file(labels_path));
}

}  // namespace trajdet

#endif  // TRAJDET_IDX_HPP
