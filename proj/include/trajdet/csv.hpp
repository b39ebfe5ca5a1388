#ifndef TRAJDET_CSV_HPP
#define TRAJDET_CSV_HPP

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "trajdet/dataset.hpp"
#include "trajdet/errors.hpp"
#include "trajdet/features.hpp"
#include "trajdet/text_format.hpp"

namespace trajdet {

namespace detail {

/// Splits `text` into lines of comma-separated fields, remembering where each line starts.
struct CsvTable {
    struct Row {
        std::vector<std::string> fields;
        std::size_t offset = 0;
    };
    std::vector<Row> rows;
};

inline CsvTable split_csv(const std::string& text) {
    CsvTable t;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string_view line(text.data() + pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) {
            CsvTable::Row row;
            row.offset = pos;
            std::size_t s = 0;
            while (true) {
                const std::size_t c = line.find(',', s);
                row.fields.emplace_back(line.substr(s, c == std::string_view::npos ? std::string_view::npos : c - s));
                if (c == std::string_view::npos) break;
                s = c + 1;
            }
            t.rows.push_back(std::move(row));
        }
        pos = end + 1;
    }
    return t;
}

inline double parse_real(const std::string& s, std::size_t offset) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw FormatError("'" + s + "' is not a finite real", offset);
    }
    return v;
}

inline std::size_t parse_count(const std::string& s, std::size_t offset) {
    std::size_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw FormatError("'" + s + "' is not a non-negative integer", offset);
    }
    return v;
}

}  // namespace detail

/// CSV with columns x0..x{d-1}, label, origin (clean | adversarial | noisy).
inline std::string dataset_to_csv(const LabeledData& data) {
    data.validate();
    std::string s;
    for (std::size_t j = 0; j < data.dim(); ++j) s += "x" + std::to_string(j) + ",";
    s += "label,origin\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double v : data.points[i]) s += format_real(v) + ",";
        s += std::to_string(data.labels[i]) + "," + origin_name(data.origins[i]) + "\n";
    }
    return s;
}

inline LabeledData dataset_from_csv(const std::string& text) {
    const auto table = detail::split_csv(text);
    if (table.rows.empty()) throw FormatError("dataset CSV is empty", 0);
    const auto& header = table.rows.front().fields;
    if (header.size() < 3 || header[header.size() - 2] != "label" || header.back() != "origin") {
        throw FormatError("dataset CSV header must be x0,...,label,origin", 0);
    }
    const std::size_t d = header.size() - 2;
    for (std::size_t j = 0; j < d; ++j) {
        if (header[j] != "x" + std::to_string(j)) throw FormatError("unexpected dataset column '" + header[j] + "'", 0);
    }
    LabeledData data;
    for (std::size_t r = 1; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.fields.size() != header.size()) {
            throw FormatError("dataset row has " + std::to_string(row.fields.size()) + " fields, expected " +
                                  std::to_string(header.size()),
                              row.offset);
        }
        Point p(d);
        for (std::size_t j = 0; j < d; ++j) p[j] = detail::parse_real(row.fields[j], row.offset);
        const std::size_t label = detail::parse_count(row.fields[d], row.offset);
        Origin origin;
        try {
            origin = parse_origin(row.fields[d + 1]);
        } catch (const ContractError& e) {
            throw FormatError(e.what(), row.offset);
        }
        data.push(std::move(p), label, origin);
    }
    return data;
}

inline std::string box_sidecar_path(const std::string& csv_path) { return csv_path + ".box.json"; }

/// Writes the CSV and, when the data carries a bounding box, a JSON sidecar next to it.
inline void write_dataset(const std::string& path, const LabeledData& data) {
    write_text_file(path, dataset_to_csv(data));
    if (!data.box.empty()) {
        nlohmann::json j;
        j["lo"] = data.box.lo;
        j["hi"] = data.box.hi;
        write_text_file(box_sidecar_path(path), j.dump(2) + "\n");
    }
}

inline LabeledData read_dataset(const std::string& path) {
    LabeledData data = dataset_from_csv(read_text_file(path));
    const std::string side = box_sidecar_path(path);
    if (std::filesystem::exists(side)) {
        const auto j = nlohmann::json::parse(read_text_file(side));
        data.box.lo = j.at("lo").get<std::vector<double>>();
        data.box.hi = j.at("hi").get<std::vector<double>>();
    }
    data.validate();
    return data;
}

/// Header block_0_norm, block_0_cos, ..., label, predicted_class.
inline std::string features_to_csv(const std::vector<DetectionSample>& samples, std::size_t blocks) {
    std::string s;
    for (const auto& name : feature_names(blocks)) s += name + ",";
    s += "label,predicted_class\n";
    for (const auto& smp : samples) {
        if (smp.features.size() != 2 * blocks) throw DimensionError("feature vector length must be 2M");
        for (double v : smp.features) s += format_real(v) + ",";
        s += std::to_string(smp.label) + "," + std::to_string(smp.predicted_class) + "\n";
    }
    return s;
}

inline std::vector<DetectionSample> features_from_csv(const std::string& text) {
    const auto table = detail::split_csv(text);
    if (table.rows.empty()) throw FormatError("feature CSV is empty", 0);
    const auto& header = table.rows.front().fields;
    if (header.size() < 4 || header.size() % 2 != 0 || header[header.size() - 2] != "label" ||
        header.back() != "predicted_class") {
        throw FormatError("feature CSV header must be block_0_norm,block_0_cos,...,label,predicted_class", 0);
    }
    const std::size_t nf = header.size() - 2;
    const auto expected = feature_names(nf / 2);
    for (std::size_t j = 0; j < nf; ++j) {
        if (header[j] != expected[j]) throw FormatError("unexpected feature column '" + header[j] + "'", 0);
    }
    std::vector<DetectionSample> out;
    for (std::size_t r = 1; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        if (row.fields.size() != header.size()) throw FormatError("feature row has the wrong field count", row.offset);
        DetectionSample s;
        for (std::size_t j = 0; j < nf; ++j) s.features.push_back(detail::parse_real(row.fields[j], row.offset));
        const std::size_t label = detail::parse_count(row.fields[nf], row.offset);
        if (label > 1) throw FormatError("detection label must be 0 or 1", row.offset);
        s.label = static_cast<int>(label);
        s.predicted_class = detail::parse_count(row.fields[nf + 1], row.offset);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace trajdet

#endif  // TRAJDET_CSV_HPP
