#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "test_support.hpp"
#include "trajdet/checkpoint.hpp"
#include "trajdet/csv.hpp"
#include "trajdet/errors.hpp"
#include "trajdet/idx.hpp"
#include "trajdet/synthetic.hpp"
#include "trajdet/text_format.hpp"

using namespace trajdet;

namespace {

std::string be32(std::uint32_t v) {
    std::string s(4, '\0');
    for (int i = 0; i < 4; ++i) s[static_cast<std::size_t>(i)] = static_cast<char>((v >> (24 - 8 * i)) & 0xff);
    return s;
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("trajdet_test_" + name);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST(TextFormat, RealsRoundTripExactly) {
    for (double v : {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0}) EXPECT_EQ(std::strtod(format_real(v).c_str(), nullptr), v);
    EXPECT_EQ(format_real_array(std::vector<double>{1.0, 0.5}), "[1, 0.5]");
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const ResidualNet net = trajdet::testing::random_net(3, 5, 4, 3, 77, 0.37, 0.5);
    const std::string text = save_checkpoint(net);
    const ResidualNet back = load_checkpoint(text);
    const auto a = net.parameters(), b = back.parameters();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i], *b[i]);
    EXPECT_EQ(back.h(), 0.5);
    EXPECT_EQ(save_checkpoint(back), text);
}

TEST(Checkpoint, MalformedDocumentsAreRejected) {
    const ResidualNet net = trajdet::testing::random_net(2, 3, 2, 2, 1);
    auto j = nlohmann::json::parse(save_checkpoint(net));
    EXPECT_THROW(load_checkpoint("{\"format_version\": 1,"), FormatError);

    auto wrong_version = j;
    wrong_version["format_version"] = 2;
    EXPECT_THROW(load_checkpoint(wrong_version.dump()), ContractError);

    auto short_weights = j;
    short_weights["blocks"][0]["w1"].erase(0);
    EXPECT_THROW(load_checkpoint(short_weights.dump()), DimensionError);

    auto missing_block = j;
    missing_block["blocks"].erase(1);
    EXPECT_ANY_THROW(load_checkpoint(missing_block.dump()));

    auto bad_head = j;
    bad_head["head"]["b"] = {1.0, 2.0, 3.0};
    EXPECT_THROW(load_checkpoint(bad_head.dump()), DimensionError);
}

TEST(Synthetic, NoiseFreeCirclesLieOnTheirRadii) {
    SyntheticSpec spec;
    spec.n = 101;
    spec.noise = 0.0;
    const auto d = gen_synthetic(spec);
    std::size_t n0 = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double r = std::hypot(d.points[i][0], d.points[i][1]);
        EXPECT_NEAR(r, d.labels[i] == 0 ? 1.0 : 0.5, 1e-15);
        n0 += d.labels[i] == 0;
    }
    EXPECT_EQ(n0, 50u);
    EXPECT_TRUE(d.box.contains(d.points.front()));
}

TEST(Synthetic, DeterministicAndBalancedForEveryKind) {
    for (auto kind : {SyntheticKind::circles, SyntheticKind::moons, SyntheticKind::blobs}) {
        for (std::size_t n : {2u, 7u, 500u}) {
            SyntheticSpec spec;
            spec.kind = kind;
            spec.n = n;
            spec.seed = n;
            const auto a = gen_synthetic(spec), b = gen_synthetic(spec);
            EXPECT_EQ(a.points, b.points);
            EXPECT_EQ(a.labels, b.labels);
            std::size_t n1 = 0;
            for (auto l : a.labels) n1 += l;
            EXPECT_LE(std::abs(static_cast<long>(n - n1) - static_cast<long>(n1)), 1);
        }
        EXPECT_EQ(parse_synthetic_kind(synthetic_name(kind)), kind);
    }
    SyntheticSpec bad;
    bad.n = 1;
    EXPECT_THROW(gen_synthetic(bad), ContractError);
}

TEST(Idx, ParsesHandCraftedBytes) {
    std::string images = be32(0x803) + be32(2) + be32(2) + be32(2);
    images += std::string("\x00\xff\x80\x33", 4);
    images += std::string("\x01\x02\x03\x04", 4);
    const std::string labels = be32(0x801) + be32(2) + std::string("\x07\x03", 2);
    const auto d = parse_idx(images, labels);
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d.dim(), 4u);
    EXPECT_EQ(d.points[0][0], 0.0);
    EXPECT_EQ(d.points[0][1], 1.0);
    EXPECT_EQ(d.points[0][2], 128.0 / 255.0);
    EXPECT_EQ(d.points[1][3], 4.0 / 255.0);
    EXPECT_EQ(d.labels, (std::vector<std::size_t>{7, 3}));
    EXPECT_EQ(d.box.hi, std::vector<double>(4, 1.0));
}

TEST(Idx, RejectsMismatchTruncationAndEmptyFiles) {
    const std::string images = be32(0x803) + be32(2) + be32(1) + be32(1) + std::string("\x01\x02", 2);
    EXPECT_THROW(parse_idx(images, be32(0x801) + be32(3) + std::string("\x00\x00\x00", 3)), FormatError);
    EXPECT_THROW(parse_idx(images.substr(0, 17), be32(0x801) + be32(2) + std::string("\x00\x00", 2)), FormatError);
    EXPECT_THROW(parse_idx("", be32(0x801) + be32(0)), FormatError);
    EXPECT_THROW(parse_idx(be32(0x801) + be32(0) + be32(1) + be32(1), be32(0x801) + be32(0)), FormatError);
    try {
        parse_idx(images, be32(0x801) + be32(3));
    } catch (const FormatError& e) {
        EXPECT_EQ(e.offset(), 4u);
    }
    EXPECT_THROW(load_idx("/nonexistent/images", "/nonexistent/labels"), MissingFileError);
}

TEST(Csv, DatasetRoundTripWithBoxSidecar) {
    SyntheticSpec spec;
    spec.n = 30;
    spec.margin = 0.1;
    LabeledData d = gen_synthetic(spec);
    d.origins[3] = Origin::adversarial;
    d.origins[4] = Origin::noisy;
    const auto path = (scratch_dir("csv") / "data.csv").string();
    write_dataset(path, d);
    const auto back = read_dataset(path);
    EXPECT_EQ(back.points, d.points);
    EXPECT_EQ(back.labels, d.labels);
    EXPECT_EQ(back.origins, d.origins);
    EXPECT_EQ(back.box, d.box);
    EXPECT_THROW(dataset_from_csv("x0,x1,label,origin\n0.5,zz,1,clean\n"), FormatError);
    EXPECT_THROW(dataset_from_csv("x0,label,origin\n0.5,1,mystery\n"), FormatError);
    EXPECT_THROW(read_dataset("/nonexistent/data.csv"), MissingFileError);
}

TEST(Csv, FeatureRoundTrip) {
    std::vector<DetectionSample> s = {{{0.5, -1.0, 2.0, 0.25}, 1, 3}, {{0.0, 1.0, 1e-9, 0.0}, 0, 0}};
    const std::string text = features_to_csv(s, 2);
    EXPECT_EQ(text.substr(0, text.find('\n')), "block_0_norm,block_0_cos,block_1_norm,block_1_cos,label,predicted_class");
    const auto back = features_from_csv(text);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].features, s[0].features);
    EXPECT_EQ(back[0].label, 1);
    EXPECT_EQ(back[0].predicted_class, 3u);
    EXPECT_EQ(back[1].features, s[1].features);
    EXPECT_THROW(features_to_csv(s, 3), DimensionError);
}

TEST(Rng, DerivedSeedsAreDistinctAndStable) {
    EXPECT_EQ(derive_seed(1, 2), derive_seed(1, 2));
    EXPECT_NE(derive_seed(1, 2), derive_seed(1, 3));
    EXPECT_NE(derive_seed(1, 2), derive_seed(2, 2));
    EXPECT_NE(derive_seed(5, "general"), derive_seed(5, "attack"));
    Rng a(9), b(9);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(a.uniform(), b.uniform());
}
