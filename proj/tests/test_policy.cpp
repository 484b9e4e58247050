#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cpol/eval.hpp"
#include "cpol/policy.hpp"
#include "cpol/rng.hpp"
#include "cpol/scenario.hpp"

using Catch::Approx;

namespace {

/// Two arms whose data live far from the probed contexts, so every limit
/// saturates there.
cpol::Dataset far_away_data() {
    std::vector<int> xs;
    std::vector<double> ys;
    std::vector<double> zs;
    cpol::Rng rng(10);
    for (int i = 0; i < 30; ++i) {
        xs.push_back(i % 2);
        ys.push_back(rng.normal(0.0, 1.0));
        zs.push_back(rng.normal(100.0, 1.0));
    }
    return cpol::Dataset(xs, ys, zs, 1, {-30.0, 30.0});
}

cpol::RobustPolicy synthetic_policy(std::uint64_t seed, double alpha = 0.2, long n = 200) {
    cpol::SyntheticConfig cfg;
    cfg.n = n;
    cfg.seed = cpol::mix_seed(seed, 0);
    const auto ds = cpol::SyntheticScenario(cfg).sample().data;
    const auto wm = cpol::fit_synthetic_weight_model(ds, cpol::mix_seed(seed, 1));
    const auto grid = cpol::CostGrid::from_range(cpol::SyntheticScenario::cost_range(), 2001);
    return {ds, wm, alpha, grid, cpol::mix_seed(seed, 2)};
}

}  // namespace

TEST_CASE("strict argmin picks the smaller limit") {
    cpol::Rng rng(1);
    const auto [idx, tied] = cpol::pick_min_with_ties({3.0, 5.0}, 0.03, rng);
    CHECK(idx == 0);
    CHECK_FALSE(tied);
}

TEST_CASE("exact ties draw uniformly and deterministically") {
    long first = 0;
    for (int rep = 0; rep < 200; ++rep) {
        cpol::Rng rng(cpol::mix_seed(5, rep));
        const auto [idx, tied] = cpol::pick_min_with_ties({2.0, 2.0}, 0.03, rng);
        CHECK(tied);
        first += idx == 0 ? 1 : 0;
    }
    CHECK(first > 60);
    CHECK(first < 140);
    // Same seed, same pick.
    cpol::Rng a(33), b(33);
    CHECK(cpol::pick_min_with_ties({2.0, 2.0}, 0.03, a).first ==
          cpol::pick_min_with_ties({2.0, 2.0}, 0.03, b).first);
}

TEST_CASE("contexts far from all data give a saturated tied decision") {
    const auto ds = far_away_data();
    cpol::WeightFitConfig cfg;
    const auto wm = cpol::fit_weight_model(ds, cfg);
    const auto grid = cpol::CostGrid::from_range(ds.cost_range(), 2001);
    const cpol::RobustPolicy policy(ds, wm, 0.2, grid, 7);
    Eigen::VectorXd z(1);
    z << 0.0;
    const auto d = policy.decide(z);
    CHECK(d.tied);
    CHECK(d.certificate == 30.0);
    for (const auto& lim : d.per_arm_limits) {
        CHECK(lim.saturated);
        CHECK(lim.value == 30.0);
    }
}

TEST_CASE("decisions are reproducible given seed and context index") {
    const auto policy = synthetic_policy(3);
    Eigen::VectorXd z(2);
    z << 47.0, 0.0;
    const auto a = policy.decide(z, 5);
    const auto b = policy.decide(z, 5);
    CHECK(a.decision == b.decision);
    CHECK(a.certificate == b.certificate);
    CHECK(a.tied == b.tied);
}

TEST_CASE("males around 47 are treated with high frequency") {
    Eigen::VectorXd z(2);
    z << 47.0, 0.0;
    long treat = 0;
    const int reps = 100;
    for (int rep = 0; rep < reps; ++rep) {
        const auto policy = synthetic_policy(cpol::mix_seed(600, rep));
        treat += policy.decide(z).decision == 1 ? 1 : 0;
    }
    CHECK(static_cast<double>(treat) / reps >= 0.8);
}

TEST_CASE("certificate matches the chosen arm and tracks the minimum") {
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
        const auto policy = synthetic_policy(cpol::mix_seed(71, rep), 0.2, 60);
        cpol::Rng rng(rep);
        Eigen::VectorXd z(2);
        z << rng.normal(40.0, 8.0), (rng.bernoulli(0.5) ? 1.0 : 0.0);
        const auto d = policy.decide(z, static_cast<long>(rep));
        CHECK(d.certificate == d.per_arm_limits[d.decision].value);
        double min_v = d.per_arm_limits[0].value;
        for (const auto& lim : d.per_arm_limits) min_v = std::min(min_v, lim.value);
        CHECK(d.certificate <= min_v + policy.grid().step() + 1e-12);
    }
}

TEST_CASE("shifting every cost by a constant shifts limits and keeps decisions") {
    const double shift = 7.5;
    cpol::SyntheticConfig cfg;
    cfg.n = 80;
    cfg.seed = 41;
    const auto ds = cpol::SyntheticScenario(cfg).sample().data;
    std::vector<double> shifted_costs = ds.costs();
    for (double& y : shifted_costs) y += shift;
    const cpol::CostRange shifted_range{ds.cost_range().lo + shift, ds.cost_range().hi + shift};
    std::vector<double> zs;
    for (long i = 0; i < ds.size(); ++i)
        for (int j = 0; j < ds.dim(); ++j) zs.push_back(ds.feature(i)[j]);
    const cpol::Dataset shifted(ds.decisions(), shifted_costs, zs, ds.dim(), shifted_range,
                                ds.decision_count());

    const auto wm = cpol::fit_synthetic_weight_model(ds, 9);
    const auto wm2 = cpol::fit_synthetic_weight_model(shifted, 9);  // features unchanged
    const auto grid = cpol::CostGrid::from_range(ds.cost_range(), 2001);
    const auto grid2 = cpol::CostGrid::from_range(shifted_range, 2001);
    const cpol::RobustPolicy p1(ds, wm, 0.2, grid, 3);
    const cpol::RobustPolicy p2(shifted, wm2, 0.2, grid2, 3);

    cpol::Rng rng(6);
    for (int rep = 0; rep < 15; ++rep) {
        Eigen::VectorXd z(2);
        z << rng.normal(38.0, 8.0), (rng.bernoulli(0.5) ? 1.0 : 0.0);
        const auto a = p1.decide(z, rep);
        const auto b = p2.decide(z, rep);
        CHECK(b.decision == a.decision);
        for (int k = 0; k < 2; ++k)
            CHECK(b.per_arm_limits[k].value - shift ==
                  Approx(a.per_arm_limits[k].value).margin(grid.step() + 1e-9));
    }
}

TEST_CASE("two-point least squares is exact") {
    const cpol::Dataset ds({0, 0}, {1.0, 3.0}, {0.0, 1.0}, 1, {-9, 9});
    const auto lp = cpol::fit_linear_baseline(ds);
    const auto c = lp.coefficients(0);
    CHECK(c[0] == Approx(1.0).margin(1e-9));
    CHECK(c[1] == Approx(2.0).margin(1e-9));
}

TEST_CASE("duplicate feature rows fit their mean") {
    const cpol::Dataset ds({0, 0}, {1.0, 3.0}, {2.0, 2.0}, 1, {-9, 9});
    const auto lp = cpol::fit_linear_baseline(ds);
    Eigen::VectorXd z(1);
    z << 2.0;
    CHECK(lp.predict(0, z) == Approx(2.0).margin(1e-4));
}

TEST_CASE("baseline recovers the synthetic untreated surface") {
    cpol::SyntheticConfig cfg;
    cfg.n = 2000;
    cfg.seed = 17;
    cfg.clip_costs = false;  // keep the linear model well-specified
    const auto ds = cpol::SyntheticScenario(cfg).sample().data;
    const auto lp = cpol::fit_linear_baseline(ds);
    const auto c = lp.coefficients(0);
    CHECK(c[1] == Approx(1.0).margin(0.1));    // age slope
    CHECK(c[0] == Approx(-46.0).margin(1.5));  // intercept
}

TEST_CASE("linear decisions follow the smaller predicted mean") {
    Eigen::MatrixXd coef(2, 3);
    coef << -46.0, 1.0, 0.0, -45.0, 1.0, 0.0;
    const cpol::LinearPolicy lp(coef);
    cpol::Rng rng(2);
    for (int i = 0; i < 20; ++i) {
        Eigen::VectorXd z(2);
        z << rng.normal(40, 10), (rng.bernoulli(0.5) ? 1.0 : 0.0);
        CHECK(cpol::linear_decide(lp, z) == 0);
    }

    // Exact tie goes to the smallest id.
    Eigen::MatrixXd equal(2, 3);
    equal << 1.0, 2.0, 0.5, 1.0, 2.0, 0.5;
    const cpol::LinearPolicy tied(equal);
    Eigen::VectorXd z(2);
    z << 0.3, 1.0;
    CHECK(cpol::linear_decide(tied, z) == 0);

    // Negating the costs flips a strict two-arm comparison.
    const cpol::LinearPolicy flipped(Eigen::MatrixXd(-coef));
    CHECK(cpol::linear_decide(flipped, z) == 1);
}

TEST_CASE("baseline edge cases") {
    const cpol::Dataset empty_arm({0, 0}, {1.0, 2.0}, {0.0, 1.0}, 1, {-9, 9}, 2);
    const auto lp = cpol::fit_linear_baseline(empty_arm);  // arm 1 keeps zeros
    Eigen::VectorXd z(1);
    z << 0.5;
    CHECK(lp.predict(1, z) == 0.0);

    const cpol::Dataset none({}, {}, {}, 1, {-9, 9}, 2);
    CHECK_THROWS_AS(cpol::fit_linear_baseline(none), std::invalid_argument);
}
