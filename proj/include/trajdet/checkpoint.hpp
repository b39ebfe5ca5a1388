#ifndef TRAJDET_CHECKPOINT_HPP
#define TRAJDET_CHECKPOINT_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "trajdet/errors.hpp"
#include "trajdet/model.hpp"
#include "trajdet/text_format.hpp"

namespace trajdet {

inline constexpr int checkpoint_format_version = 1;

/// JSON checkpoint. Weight arrays are flat row-major and every real is
/// written with 17 significant digits, so save/load is bit-exact.
inline std::string save_checkpoint(const ResidualNet& net) {
    std::string s = "{\n";
    s += "  \"format_version\": " + std::to_string(checkpoint_format_version) + ",\n";
    s += "  \"d\": " + std::to_string(net.dim()) + ",\n";
    s += "  \"w\": " + std::to_string(net.width()) + ",\n";
    s += "  \"M\": " + std::to_string(net.num_blocks()) + ",\n";
    s += "  \"K\": " + std::to_string(net.num_classes()) + ",\n";
    s += "  \"h\": " + format_real(net.h()) + ",\n";
    s += "  \"blocks\": [\n";
    for (std::size_t m = 0; m < net.num_blocks(); ++m) {
        const auto& b = net.blocks()[m];
        s += "    {\"w1\": " + format_real_array(b.w1.values()) + ",\n";
        s += "     \"b1\": " + format_real_array(b.b1.values()) + ",\n";
        s += "     \"w2\": " + format_real_array(b.w2.values()) + ",\n";
        s += "     \"b2\": " + format_real_array(b.b2.values()) + "}";
        s += m + 1 < net.num_blocks() ? ",\n" : "\n";
    }
    s += "  ],\n";
    s += "  \"head\": {\"w\": " + format_real_array(net.head_w().values()) +
         ",\n           \"b\": " + format_real_array(net.head_b().values()) + "}\n";
    s += "}\n";
    return s;
}

namespace detail {

inline Tensor read_weights(const nlohmann::json& j, const char* key, Shape shape, const std::string& where) {
    if (!j.contains(key) || !j[key].is_array()) {
        throw ContractError("checkpoint " + where + " is missing array '" + key + "'");
    }
    std::vector<double> v;
    for (const auto& e : j[key]) {
        if (!e.is_number()) throw ContractError("checkpoint " + where + "." + key + " has a non-numeric entry");
        v.push_back(e.get<double>());
    }
    if (v.size() != shape_size(shape)) {
        throw DimensionError("checkpoint " + where + "." + key + " has " + std::to_string(v.size()) +
                             " values, expected shape " + shape_string(shape));
    }
    return Tensor(std::move(shape), std::move(v));
}

inline std::size_t read_extent(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || !j[key].is_number_unsigned() || j[key].get<std::size_t>() == 0) {
        throw ContractError(std::string("checkpoint field '") + key + "' must be a positive integer");
    }
    return j[key].get<std::size_t>();
}

}  // namespace detail

inline ResidualNet load_checkpoint(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("checkpoint is not valid JSON: ") + e.what(), e.byte);
    }
    if (!j.is_object()) throw ContractError("checkpoint must be a JSON object");
    if (!j.contains("format_version") || j["format_version"] != checkpoint_format_version) {
        throw ContractError("unsupported checkpoint format_version");
    }
    const std::size_t d = detail::read_extent(j, "d");
    const std::size_t w = detail::read_extent(j, "w");
    const std::size_t blocks = detail::read_extent(j, "M");
    const std::size_t k = detail::read_extent(j, "K");
    if (!j.contains("h") || !j["h"].is_number()) throw ContractError("checkpoint field 'h' must be a number");
    const double h = j["h"].get<double>();
    if (!j.contains("blocks") || !j["blocks"].is_array() || j["blocks"].size() != blocks) {
        throw DimensionError("checkpoint must list exactly M blocks");
    }
    std::vector<ResidualBlock> bs;
    for (std::size_t m = 0; m < blocks; ++m) {
        const auto& jb = j["blocks"][m];
        const std::string where = "block " + std::to_string(m);
        ResidualBlock b;
        b.w1 = detail::read_weights(jb, "w1", {d, w}, where);
        b.b1 = detail::read_weights(jb, "b1", {w}, where);
        b.w2 = detail::read_weights(jb, "w2", {w, d}, where);
        b.b2 = detail::read_weights(jb, "b2", {d}, where);
        bs.push_back(std::move(b));
    }
    if (!j.contains("head") || !j["head"].is_object()) throw ContractError("checkpoint is missing 'head'");
    Tensor hw = detail::read_weights(j["head"], "w", {d, k}, "head");
    Tensor hb = detail::read_weights(j["head"], "b", {k}, "head");
    return ResidualNet(std::move(bs), std::move(hw), std::move(hb), h);
}

}  // namespace trajdet

#endif  // TRAJDET_CHECKPOINT_HPP
