#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "iccnn/eval.hpp"
#include "oracles.hpp"

using namespace iccnn;

namespace {
std::vector<EvalRecord> make_records(std::vector<double> gt, std::vector<double> pred) {
    std::vector<EvalRecord> out;
    for (size_t i = 0; i < gt.size(); ++i) {
        out.push_back({"img" + std::to_string(i), gt[i], pred[i], ""});
    }
    return out;
}
}  // namespace

TEST_CASE("count_from_map") {
    DensityMap zero = DensityMap::zeros(5, 7);
    CHECK(count_from_map(zero) == 0.0);

    DotAnnotations ann;
    ann.image_w = ann.image_h = 96;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> pos(25.0, 70.0);
    for (int i = 0; i < 12; ++i) ann.points.push_back({pos(rng), pos(rng)});
    CHECK(count_from_map(gaussian_density(ann, 5.0)) == doctest::Approx(12.0).epsilon(1e-7));

    DensityMap m = DensityMap::zeros(6, 6);
    m.values = oracle::random_values(36, rng);  // negatives included
    CHECK(count_from_map(m) == doctest::Approx(oracle::sum(m.values)).epsilon(1e-12));
}

TEST_CASE("mae and rmse") {
    auto perfect = make_records({10, 20, 30}, {10, 20, 30});
    CHECK(mae(perfect) == 0.0);
    CHECK(rmse(perfect) == 0.0);

    auto fig5 = make_records({502, 270, 86}, {512, 280, 89});
    CHECK(mae(fig5) == doctest::Approx(23.0 / 3.0).epsilon(1e-9));
    CHECK(rmse(fig5) == doctest::Approx(std::sqrt(209.0 / 3.0)).epsilon(1e-9));

    auto single = make_records({100}, {93.5});
    CHECK(mae(single) == doctest::Approx(6.5));
    CHECK(rmse(single) == doctest::Approx(6.5));

    CHECK_THROWS_AS(mae({}), UsageError);
    CHECK_THROWS_AS(rmse({}), UsageError);
}

TEST_CASE("mae/rmse match a brute-force oracle on random integer counts") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> count(0, 2000);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> n_dist(1, 40);
        const int n = n_dist(rng);
        std::vector<EvalRecord> recs;
        double abs_sum = 0.0, sq_sum = 0.0;
        for (int i = 0; i < n; ++i) {
            const double c = count(rng), p = count(rng);
            recs.push_back({"r", c, p, ""});
            abs_sum += std::fabs(c - p);
            sq_sum += (c - p) * (c - p);
        }
        CHECK(mae(recs) == doctest::Approx(abs_sum / n).epsilon(1e-12));
        CHECK(rmse(recs) == doctest::Approx(std::sqrt(sq_sum / n)).epsilon(1e-12));
        CHECK(rmse(recs) >= mae(recs) - 1e-12);
    }
}

TEST_CASE("metrics are permutation invariant") {
    std::mt19937_64 rng(5);
    auto recs = make_records(oracle::random_values(17, rng, 0, 500),
                             oracle::random_values(17, rng, 0, 500));
    const double m0 = mae(recs), r0 = rmse(recs);
    std::shuffle(recs.begin(), recs.end(), rng);
    CHECK(mae(recs) == doctest::Approx(m0).epsilon(1e-12));
    CHECK(rmse(recs) == doctest::Approx(r0).epsilon(1e-12));
}

TEST_CASE("group_analysis") {
    auto one = make_records({7, 3}, {8, 2});
    auto g1 = group_analysis(one, 1);
    REQUIRE(g1.size() == 1);
    CHECK(g1[0].mean_gt == doctest::Approx(5.0));
    CHECK(g1[0].mean_pred == doctest::Approx(5.0));

    // 182 records in 10 groups: nine groups of 18 and a last group of 20
    std::mt19937_64 rng(7);
    auto recs = make_records(oracle::random_values(182, rng, 0, 3000),
                             oracle::random_values(182, rng, 0, 3000));
    auto groups = group_analysis(recs, 10);
    REQUIRE(groups.size() == 10);
    for (int g = 0; g < 9; ++g) CHECK(groups[static_cast<size_t>(g)].size == 18);
    CHECK(groups[9].size == 20);

    // brute-force oracle: sort, slice, average
    std::vector<EvalRecord> sorted = recs;
    std::sort(sorted.begin(), sorted.end(),
              [](const EvalRecord& a, const EvalRecord& b) { return a.gt_count < b.gt_count; });
    int pos = 0;
    for (int g = 0; g < 10; ++g) {
        const int size = g == 9 ? 20 : 18;
        double mg = 0, mp = 0;
        for (int i = 0; i < size; ++i) {
            mg += sorted[static_cast<size_t>(pos + i)].gt_count;
            mp += sorted[static_cast<size_t>(pos + i)].pred_count;
        }
        pos += size;
        CHECK(groups[static_cast<size_t>(g)].mean_gt == doctest::Approx(mg / size).epsilon(1e-12));
        CHECK(groups[static_cast<size_t>(g)].mean_pred == doctest::Approx(mp / size).epsilon(1e-12));
    }

    CHECK_THROWS_AS(group_analysis(one, 3), UsageError);
    CHECK_THROWS_AS(group_analysis(one, 0), UsageError);
}

TEST_CASE("rmse >= mae on random record sets") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        std::uniform_int_distribution<int> n_dist(1, 25);
        const int n = n_dist(rng);
        auto recs = make_records(oracle::random_values(static_cast<size_t>(n), rng, 0, 1000),
                                 oracle::random_values(static_cast<size_t>(n), rng, 0, 1000));
        CHECK(rmse(recs) >= mae(recs) - 1e-12);
    }
}

TEST_CASE("scene tags act as a grouping key") {
    std::vector<EvalRecord> recs = {{"a1", 10, 12, "s1"},
                                    {"a2", 20, 26, "s1"},
                                    {"b1", 5, 5, "s2"}};
    auto by_scene = scene_mae(recs);
    REQUIRE(by_scene.size() == 2);
    CHECK(by_scene[0].first == "s1");
    CHECK(by_scene[0].second == doctest::Approx(4.0));
    CHECK(by_scene[1].first == "s2");
    CHECK(by_scene[1].second == doctest::Approx(0.0));
}

TEST_CASE("report format") {
    auto recs = make_records({502, 270}, {512, 280});
    const std::string report = format_report(recs, 2);
    CHECK(report.find("img0\t502.000\t512.000\t10.000\n") != std::string::npos);
    CHECK(report.find("MAE 10.000\n") != std::string::npos);
    CHECK(report.find("RMSE 10.000\n") != std::string::npos);
    CHECK(report.find("group\tsize\tmean_gt\tmean_pred\n") != std::string::npos);

    const std::string perfect = format_report(make_records({12, 7}, {12, 7}));
    CHECK(perfect.find("MAE 0.000\n") != std::string::npos);
}
