#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "cpol/eval.hpp"
#include "cpol/rng.hpp"

using Catch::Approx;

TEST_CASE("exceedance counting") {
    const auto curve = cpol::empirical_ccdf({1.0, 2.0, 3.0}, {0.0, 2.0, 5.0});
    CHECK(curve.probabilities[0] == Approx(1.0));       // below the minimum
    CHECK(curve.probabilities[1] == Approx(1.0 / 3.0));  // strictly above 2
    CHECK(curve.probabilities[2] == Approx(0.0));        // above the maximum
    CHECK_THROWS_AS(cpol::empirical_ccdf({}, {1.0}), std::invalid_argument);
}

TEST_CASE("ccdf equals the rank-based oracle and is non-increasing") {
    cpol::Rng rng(1);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> costs;
        const int n = 1 + static_cast<int>(rng.below(30));
        for (int i = 0; i < n; ++i) costs.push_back(rng.normal(0.0, 5.0));
        std::vector<double> thresholds;
        for (int i = 0; i < 20; ++i) thresholds.push_back(rng.normal(0.0, 6.0));
        const auto curve = cpol::empirical_ccdf(costs, thresholds);
        for (std::size_t i = 0; i < curve.thresholds.size(); ++i) {
            long above = 0;
            for (const double c : costs) above += c > curve.thresholds[i] ? 1 : 0;
            CHECK(curve.probabilities[i] == Approx(static_cast<double>(above) / n));
            if (i > 0) CHECK(curve.probabilities[i] <= curve.probabilities[i - 1]);
        }
    }
}

TEST_CASE("cost quantile order statistics") {
    CHECK(cpol::cost_quantile({1, 2, 3, 4, 5}, 0.2) == 4.0);
    CHECK(cpol::cost_quantile({1, 2, 3, 4, 5}, 1e-9) == 5.0);  // alpha -> 0 gives the max
    CHECK_THROWS_AS(cpol::cost_quantile({}, 0.2), std::invalid_argument);
}

TEST_CASE("cost quantile equals a brute-force scan") {
    cpol::Rng rng(2);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> costs;
        const int n = 1 + static_cast<int>(rng.below(12));
        for (int i = 0; i < n; ++i) costs.push_back(rng.normal(0.0, 4.0));
        const double alpha = 0.02 + 0.95 * rng.uniform();

        std::vector<double> sorted(costs);
        std::sort(sorted.begin(), sorted.end());
        double expect = sorted.back();
        for (int k = 1; k <= n; ++k) {
            if (static_cast<double>(k) / n >= 1.0 - alpha) {
                expect = sorted[k - 1];
                break;
            }
        }
        CHECK(cpol::cost_quantile(costs, alpha) == expect);
    }
}

TEST_CASE("never treating matches the analytic mean cost") {
    cpol::SyntheticConfig cfg;
    cfg.clip_costs = false;
    const cpol::SyntheticScenario scenario(cfg);
    const auto eval = cpol::evaluate_policy(
        cpol::make_constant_policy_fn(0),
        [&](int x, const Eigen::VectorXd& z, cpol::Rng& rng) {
            return scenario.draw_cost(x, z, rng);
        },
        [&](cpol::Rng& rng) { return scenario.draw_context(rng); }, 100000, 77, 0.2);
    double mean = 0.0;
    for (const double c : eval.costs) mean += c;
    mean /= eval.costs.size();
    // E[z1] - 46 with z1 an equal mixture of N(30,5) and N(45,5).
    const double sd = std::sqrt(25.0 + 56.25 + 400.0);
    CHECK(mean == Approx(37.5 - 46.0).margin(3.0 * sd / std::sqrt(1e5)));
}

TEST_CASE("evaluation is deterministic given the seed") {
    const cpol::SyntheticScenario scenario{cpol::SyntheticConfig{}};
    const auto run = [&] {
        return cpol::evaluate_policy(
            cpol::make_past_policy_fn(scenario),
            [&](int x, const Eigen::VectorXd& z, cpol::Rng& rng) {
                return scenario.draw_cost(x, z, rng);
            },
            [&](cpol::Rng& rng) { return scenario.draw_context(rng); }, 5000, 123, 0.2);
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.costs == b.costs);
    CHECK(a.tail_quantile == b.tail_quantile);
}

TEST_CASE("the robust policy lowers the tail cost against the past policy") {
    cpol::SyntheticConfig cfg;
    cfg.n = 200;
    cfg.seed = 31;
    const cpol::SyntheticScenario scenario(cfg);
    const auto ds = scenario.sample().data;
    const auto wm = cpol::fit_synthetic_weight_model(ds, 32);
    const cpol::RobustPolicy robust(
        ds, wm, 0.2, cpol::CostGrid::from_range(scenario.cost_range(), 2001), 33);

    const auto outcome = [&](int x, const Eigen::VectorXd& z, cpol::Rng& rng) {
        return scenario.draw_cost(x, z, rng);
    };
    const auto context = [&](cpol::Rng& rng) { return scenario.draw_context(rng); };
    const auto rob = cpol::evaluate_policy(cpol::make_policy_fn(robust), outcome, context,
                                           10000, 34, 0.2);
    const auto past = cpol::evaluate_policy(cpol::make_past_policy_fn(scenario), outcome,
                                            context, 10000, 34, 0.2);
    CHECK(rob.tail_quantile <= past.tail_quantile);
}

TEST_CASE("coverage experiment aggregates seeded Bernoulli trials") {
    cpol::SyntheticConfig cfg;
    cfg.n = 60;
    const std::vector<double> alphas = {0.2, 0.4};
    const auto table = cpol::coverage_experiment(cfg, alphas, 40, 17);
    REQUIRE(table.rows.size() == 2);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        CHECK(row.alpha == alphas[i]);
        CHECK(row.runs == 40);
        CHECK(row.exceedance >= 0.0);
        CHECK(row.exceedance <= 1.0);
        CHECK(row.std_error ==
              Approx(std::sqrt(row.exceedance * (1.0 - row.exceedance) / 40.0)));
        // Theorem bound with Monte-Carlo slack.
        CHECK(row.exceedance <=
              row.alpha + 3.0 * std::sqrt(row.alpha * (1.0 - row.alpha) / 40.0));
    }
    const auto again = cpol::coverage_experiment(cfg, alphas, 40, 17);
    for (std::size_t i = 0; i < table.rows.size(); ++i)
        CHECK(again.rows[i].exceedance == table.rows[i].exceedance);

    CHECK_THROWS_AS(cpol::coverage_experiment(cfg, alphas, 10, 17), std::invalid_argument);
}

TEST_CASE("saturated certificates are never exceeded by bounded outcomes") {
    // All data far from the probed contexts: every certificate sits at the
    // top of the range, and clipped outcomes cannot exceed it.
    std::vector<int> xs;
    std::vector<double> ys;
    std::vector<double> zs;
    cpol::Rng data_rng(51);
    for (int i = 0; i < 40; ++i) {
        xs.push_back(i % 2);
        ys.push_back(data_rng.normal(0.0, 5.0));
        zs.push_back(data_rng.normal(100.0, 1.0));
    }
    const cpol::Dataset ds(xs, ys, zs, 1, {-30.0, 30.0});
    cpol::WeightFitConfig wcfg;
    const auto wm = cpol::fit_weight_model(ds, wcfg);
    const auto grid = cpol::CostGrid::from_range(ds.cost_range(), 2001);

    cpol::Rng rng(52);
    for (const double alpha : {0.2, 0.999}) {
        const cpol::RobustPolicy policy(ds, wm, alpha, grid, 53);
        long exceed = 0;
        for (int t = 0; t < 50; ++t) {
            Eigen::VectorXd z(1);
            z << rng.normal(0.0, 1.0);
            const auto d = policy.decide(z, t);
            CHECK(d.certificate == 30.0);
            const double y = std::clamp(rng.normal(0.0, 20.0), -30.0, 30.0);
            exceed += y > d.certificate ? 1 : 0;
        }
        CHECK(exceed == 0);
    }
}
