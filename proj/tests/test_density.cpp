#include <cmath>
#include <random>

#include "doctest.h"
#include "iccnn/density.hpp"
#include "oracles.hpp"

using namespace iccnn;

namespace {
DotAnnotations make_ann(int w, int h, std::vector<DotAnnotations::Point> pts) {
    DotAnnotations ann;
    ann.image_w = w;
    ann.image_h = h;
    ann.points = std::move(pts);
    return ann;
}
}  // namespace

TEST_CASE("rasterize: empty, rounding, accumulation") {
    auto empty = rasterize(make_ann(8, 8, {}));
    CHECK(empty.sum() == 0.0);

    auto one = rasterize(make_ann(16, 16, {{3.2, 7.8}}));
    CHECK(one.sum() == 1.0);
    CHECK(one.at(8, 3) == 1.0);

    auto two = rasterize(make_ann(16, 16, {{5.0, 5.0}, {5.2, 4.9}}));
    CHECK(two.at(5, 5) == 2.0);
    CHECK(two.sum() == 2.0);

    // boundary rounding clamps to the last row/column
    auto edge = rasterize(make_ann(10, 10, {{9.7, 9.7}}));
    CHECK(edge.at(9, 9) == 1.0);
}

TEST_CASE("rasterize: out-of-bounds point names the offending index") {
    auto ann = make_ann(8, 8, {{1.0, 1.0}, {8.5, 2.0}});
    try {
        rasterize(ann);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("point 1") != std::string::npos);
    }
}

TEST_CASE("gaussian_density: centered dot sums to one") {
    auto m = gaussian_density(make_ann(64, 64, {{32.0, 32.0}}), 5.0);
    CHECK(m.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(m.denom == 1);
}

TEST_CASE("gaussian_density: peak equals the normalized truncated kernel center") {
    const double sigma = 5.0;
    auto m = gaussian_density(make_ann(64, 64, {{32.0, 32.0}}), sigma);

    // independent evaluation of the discrete kernel
    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    double total = 0.0;
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            total += std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
        }
    }
    const double expected_peak = 1.0 / total;
    CHECK(m.at(32, 32) == doctest::Approx(expected_peak).epsilon(1e-9));
    // close to the continuous value 1/(2*pi*sigma^2)
    CHECK(expected_peak == doctest::Approx(1.0 / (2.0 * M_PI * 25.0)).epsilon(1e-3));
}

TEST_CASE("gaussian_density: 37 interior dots sum to 37") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> pos(20.0, 107.0);  // >= 20 px from every border
    std::vector<DotAnnotations::Point> pts;
    for (int i = 0; i < 37; ++i) pts.push_back({pos(rng), pos(rng)});
    auto m = gaussian_density(make_ann(128, 128, std::move(pts)), 5.0);
    CHECK(m.sum() == doctest::Approx(37.0).epsilon(1e-6 / 37.0));
}

TEST_CASE("gaussian_density: sigma must be positive") {
    CHECK_THROWS_AS(gaussian_density(make_ann(8, 8, {}), 0.0), ConfigError);
    CHECK_THROWS_AS(gaussian_density(make_ann(8, 8, {}), -1.0), ConfigError);
}

TEST_CASE("count conservation over random annotation sets") {
    std::mt19937_64 rng(103);
    for (int trial = 0; trial < 20; ++trial) {
        std::uniform_int_distribution<int> size_dist(24, 96);
        const int w = size_dist(rng), h = size_dist(rng);
        std::uniform_int_distribution<int> n_dist(0, 500);
        const int n = n_dist(rng);
        std::uniform_real_distribution<double> px(0.0, w - 1e-9), py(0.0, h - 1e-9);
        std::vector<DotAnnotations::Point> pts;
        for (int i = 0; i < n; ++i) pts.push_back({px(rng), py(rng)});
        auto m = gaussian_density(make_ann(w, h, std::move(pts)), 5.0);
        CHECK(std::fabs(m.sum() - n) < 1e-6 * std::max(n, 1));
    }
}

TEST_CASE("gaussian_density is translation consistent for interior dots") {
    // stamps of radius 20 centered at 24..39 stay inside 64 before and after
    // an integer shift of (3, 2)
    std::mt19937_64 rng(107);
    std::uniform_real_distribution<double> pos(24.0, 39.0);
    std::vector<DotAnnotations::Point> pts, shifted;
    for (int i = 0; i < 5; ++i) {
        const double x = pos(rng), y = pos(rng);
        pts.push_back({x, y});
        shifted.push_back({x + 2.0, y + 3.0});
    }
    auto a = gaussian_density(make_ann(64, 64, pts), 5.0);
    auto b = gaussian_density(make_ann(64, 64, shifted), 5.0);
    for (int i = 0; i < 61; ++i) {
        for (int j = 0; j < 62; ++j) {
            CHECK(a.at(i, j) == b.at(i + 3, j + 2));  // bit-exact
        }
    }
}

TEST_CASE("gaussian_density is additive over dot sets") {
    std::mt19937_64 rng(109);
    std::uniform_real_distribution<double> pos(0.0, 47.999);
    std::vector<DotAnnotations::Point> s1, s2, both;
    for (int i = 0; i < 8; ++i) {
        s1.push_back({pos(rng), pos(rng)});
        s2.push_back({pos(rng), pos(rng)});
    }
    both = s1;
    both.insert(both.end(), s2.begin(), s2.end());
    auto a = gaussian_density(make_ann(48, 48, s1), 5.0);
    auto b = gaussian_density(make_ann(48, 48, s2), 5.0);
    auto c = gaussian_density(make_ann(48, 48, both), 5.0);
    for (size_t i = 0; i < c.values.size(); ++i) {
        CHECK(c.values[i] == doctest::Approx(a.values[i] + b.values[i]).epsilon(1e-12));
    }
}

TEST_CASE("downsample_sum") {
    DensityMap ones = DensityMap::zeros(4, 4);
    for (auto& v : ones.values) v = 1.0;
    auto d = downsample_sum(ones, 4);
    CHECK(d.height == 1);
    CHECK(d.width == 1);
    CHECK(d.values[0] == 16.0);
    CHECK(d.denom == 4);

    std::mt19937_64 rng(111);
    DensityMap m = DensityMap::zeros(8, 8);
    m.values = oracle::random_values(64, rng, 0.0, 1.0);
    auto half = downsample_sum(m, 2);
    auto ref = oracle::block_sum_naive(m.values, 8, 8, 2);
    for (size_t i = 0; i < ref.size(); ++i) {
        CHECK(half.values[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
    CHECK(half.sum() == doctest::Approx(m.sum()).epsilon(1e-15));

    CHECK_THROWS_AS(downsample_sum(m, 3), ConfigError);
    DensityMap odd = DensityMap::zeros(6, 6);
    CHECK_THROWS_AS(downsample_sum(odd, 4), ShapeError);
}

TEST_CASE("downsample of a gaussian map preserves the count exactly") {
    std::mt19937_64 rng(113);
    std::uniform_real_distribution<double> pos(0.0, 63.999);
    std::vector<DotAnnotations::Point> pts;
    for (int i = 0; i < 25; ++i) pts.push_back({pos(rng), pos(rng)});
    auto full = gaussian_density(make_ann(64, 64, pts), 5.0);
    auto low = downsample_sum(full, 4);
    CHECK(low.sum() == doctest::Approx(full.sum()).epsilon(1e-12));
}

TEST_CASE("pad_to_multiple") {
    std::mt19937_64 rng(115);
    auto img48 = oracle::random_tensor({3, 48, 48}, rng, 0.0, 1.0);
    auto same = pad_to_multiple(img48, {}, 4);
    CHECK(same.image->shape == std::vector<int>{3, 48, 48});
    CHECK(same.image->data == img48->data);

    auto img = oracle::random_tensor({3, 50, 47}, rng, 0.0, 1.0);
    DensityMap m = DensityMap::zeros(50, 47);
    m.values = oracle::random_values(50 * 47, rng, 0.0, 1.0);
    const double sum_before = m.sum();
    auto padded = pad_to_multiple(img, {m}, 4);
    CHECK(padded.image->shape == std::vector<int>{3, 52, 48});
    CHECK(padded.maps[0].height == 52);
    CHECK(padded.maps[0].width == 48);
    CHECK(padded.maps[0].sum() == doctest::Approx(sum_before).epsilon(1e-15));

    auto cropped = crop_map(padded.maps[0], padded.orig_h, padded.orig_w);
    CHECK(cropped.height == 50);
    CHECK(cropped.width == 47);
    CHECK(cropped.values == m.values);

    auto timg = crop_tensor_hw(padded.image, padded.orig_h, padded.orig_w);
    CHECK(timg->data == img->data);
}
