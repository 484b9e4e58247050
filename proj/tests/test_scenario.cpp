#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "cpol/reducer.hpp"
#include "cpol/rng.hpp"
#include "cpol/scenario.hpp"

using Catch::Approx;

namespace {

double normal_pdf(double x, double mean, double sd) {
    const double u = (x - mean) / sd;
    return std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * M_PI));
}

/// Simpson-rule average of the male treatment probability over an age band,
/// weighted by the age density. Independent of the scenario code paths.
double band_average_treat_prob(double lo, double hi) {
    const int steps = 400;  // even
    const double h = (hi - lo) / steps;
    double num = 0.0, den = 0.0;
    for (int i = 0; i <= steps; ++i) {
        const double age = lo + h * i;
        const double w = (i == 0 || i == steps) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        const double dens = normal_pdf(age, 45.0, 5.0);
        const double prob = 0.20 / (1.0 + std::exp((age - 45.0) / 2.0));
        num += w * dens * prob;
        den += w * dens;
    }
    return num / den;
}

}  // namespace

TEST_CASE("identical configuration and seed give bit-identical datasets") {
    cpol::SyntheticConfig cfg;
    cfg.n = 500;
    cfg.seed = 99;
    const auto a = cpol::SyntheticScenario(cfg).sample();
    const auto b = cpol::SyntheticScenario(cfg).sample();
    REQUIRE(a.data.size() == b.data.size());
    CHECK(a.clipped == b.clipped);
    for (long i = 0; i < a.data.size(); ++i) {
        CHECK(a.data.decision(i) == b.data.decision(i));
        CHECK(a.data.cost(i) == b.data.cost(i));
        CHECK(a.data.feature(i) == b.data.feature(i));
    }
}

TEST_CASE("female ages centre on 30") {
    cpol::SyntheticConfig cfg;
    cfg.n = 100000;
    cfg.seed = 4;
    cfg.clip_costs = false;
    const auto ds = cpol::SyntheticScenario(cfg).sample().data;
    double sum = 0.0;
    long m = 0;
    for (long i = 0; i < ds.size(); ++i) {
        if (ds.feature(i)[1] != 1.0) continue;
        sum += ds.feature(i)[0];
        ++m;
    }
    REQUIRE(m > 40000);
    CHECK(sum / m == Approx(30.0).margin(3.0 * 5.0 / std::sqrt(static_cast<double>(m))));
}

TEST_CASE("untreated costs centre on age minus 46") {
    cpol::SyntheticConfig cfg;
    cfg.n = 100000;
    cfg.seed = 5;
    cfg.clip_costs = false;  // clipping shifts the conditional mean
    const auto ds = cpol::SyntheticScenario(cfg).sample().data;
    double sum = 0.0;
    long m = 0;
    for (long i = 0; i < ds.size(); ++i) {
        if (ds.decision(i) != 0) continue;
        sum += ds.cost(i) + 46.0 - ds.feature(i)[0];
        ++m;
    }
    REQUIRE(m > 50000);
    CHECK(sum / m == Approx(0.0).margin(3.0 * 20.0 / std::sqrt(static_cast<double>(m))));
}

TEST_CASE("treated share of males near 45 matches the assignment rule") {
    cpol::SyntheticConfig cfg;
    cfg.n = 100000;
    cfg.seed = 6;
    const auto ds = cpol::SyntheticScenario(cfg).sample().data;
    long treated = 0, m = 0;
    for (long i = 0; i < ds.size(); ++i) {
        if (ds.feature(i)[1] != 0.0) continue;
        if (std::abs(ds.feature(i)[0] - 45.0) > 1.0) continue;
        treated += ds.decision(i);
        ++m;
    }
    REQUIRE(m > 4000);
    const double expect = band_average_treat_prob(44.0, 46.0);  // ~= 0.20 * f(0)
    CHECK(expect == Approx(0.10).margin(0.002));
    const double se = std::sqrt(expect * (1.0 - expect) / static_cast<double>(m));
    CHECK(static_cast<double>(treated) / m == Approx(expect).margin(3.0 * se));
}

TEST_CASE("outcome draws have the stated conditional moments") {
    cpol::SyntheticConfig cfg;
    cfg.clip_costs = false;
    const cpol::SyntheticScenario scenario(cfg);
    Eigen::VectorXd z(2);
    z << 45.0, 0.0;

    cpol::Rng rng(8);
    double sum = 0.0;
    const long m = 100000;
    for (long i = 0; i < m; ++i) sum += scenario.draw_cost(0, z, rng);
    CHECK(sum / m == Approx(-1.0).margin(3.0 * 20.0 / std::sqrt(static_cast<double>(m))));
}

TEST_CASE("vanishing treated dispersion pins the outcome to its mean") {
    cpol::SyntheticConfig cfg;
    cfg.sigma1 = 1e-12;
    cfg.clip_costs = false;
    const cpol::SyntheticScenario scenario(cfg);
    cpol::Rng rng(9);
    Eigen::VectorXd z(2);
    z << 47.0, 0.0;
    for (int i = 0; i < 20; ++i)
        CHECK(scenario.draw_cost(1, z, rng) == Approx(2.0).margin(1e-9));
}

TEST_CASE("treated-minus-untreated mean is one everywhere") {
    const cpol::SyntheticScenario scenario(cpol::SyntheticConfig{});
    cpol::Rng rng(11);
    for (int i = 0; i < 30; ++i) {
        Eigen::VectorXd z(2);
        z << rng.normal(37.0, 9.0), (rng.bernoulli(0.5) ? 1.0 : 0.0);
        CHECK(scenario.mean_cost(1, z) - scenario.mean_cost(0, z) == 1.0);
    }
}

TEST_CASE("clipping keeps costs in range and counts the events") {
    cpol::SyntheticConfig cfg;
    cfg.n = 2000;
    cfg.seed = 12;
    const auto sample = cpol::SyntheticScenario(cfg).sample();
    CHECK(sample.clipped > 0);
    for (long i = 0; i < sample.data.size(); ++i) {
        CHECK(sample.data.cost(i) >= -30.0);
        CHECK(sample.data.cost(i) <= 30.0);
    }

    cfg.clip_costs = false;
    const auto raw = cpol::SyntheticScenario(cfg).sample();
    CHECK(raw.clipped == 0);
    double extreme = 0.0;
    for (long i = 0; i < raw.data.size(); ++i)
        extreme = std::max(extreme, std::abs(raw.data.cost(i)));
    CHECK(extreme > 30.0);
}

TEST_CASE("surrogate study sample sizes and split") {
    cpol::IhdpStyleConfig cfg;
    cfg.seed = 13;
    const auto sample = cpol::generate_ihdp_style(cfg);
    CHECK(sample.train.size() == 600);
    CHECK(sample.train.dim() == 25);
    CHECK(sample.test_contexts.rows() == 147);
    CHECK(sample.test_contexts.cols() == 25);

    const auto again = cpol::generate_ihdp_style(cfg);
    CHECK(again.train.costs() == sample.train.costs());
    CHECK(again.test_contexts == sample.test_contexts);
}

TEST_CASE("coefficients come from the stated support with mostly zeros") {
    long zeros = 0, total = 0;
    for (std::uint64_t rep = 0; rep < 200; ++rep) {
        cpol::IhdpStyleConfig cfg;
        cfg.seed = cpol::mix_seed(140, rep);
        cfg.n_train = 30;  // keep the sweep cheap; beta is drawn first
        cfg.n_test = 5;
        const auto sample = cpol::generate_ihdp_style(cfg);
        for (int j = 0; j < 25; ++j) {
            const double b = sample.truth.beta[j];
            const bool known = b == 0.0 || b == 0.1 || b == 0.2 || b == 0.3 || b == 0.4;
            REQUIRE(known);
            zeros += b == 0.0 ? 1 : 0;
            ++total;
        }
    }
    const double frac = static_cast<double>(zeros) / static_cast<double>(total);
    const double se = std::sqrt(0.6 * 0.4 / static_cast<double>(total));
    CHECK(frac == Approx(0.6).margin(4.0 * se));
}

TEST_CASE("the treated surface offset fixes the effect on the treated at -2") {
    cpol::IhdpStyleConfig cfg;
    cfg.seed = 15;
    const auto sample = cpol::generate_ihdp_style(cfg);
    double gap = 0.0;
    long m = 0;
    for (long i = 0; i < sample.train.size(); ++i) {
        if (sample.train.decision(i) != 1) continue;
        const Eigen::VectorXd z = sample.train.feature(i);
        gap += sample.truth.mean_treated(z) - sample.truth.mean_untreated(z);
        ++m;
    }
    REQUIRE(m > 60);
    CHECK(gap / m == Approx(-2.0).margin(1e-9));
}

TEST_CASE("standardized covariates have zero mean and unit variance") {
    cpol::IhdpStyleConfig cfg;
    cfg.seed = 16;
    const auto sample = cpol::generate_ihdp_style(cfg);
    // Standardization happened over the full 747 rows; the 600-row train
    // split stays close.
    const Eigen::MatrixXd X = sample.train.feature_matrix();
    for (int j = 0; j < 5; ++j) {
        CHECK(X.col(j).mean() == Approx(0.0).margin(0.15));
        const double var = X.col(j).squaredNorm() / X.rows();
        CHECK(var == Approx(1.0).margin(0.2));
    }
}

TEST_CASE("PCA reproduces an exact low-dimensional subspace") {
    cpol::Rng rng(20);
    const int d_out = 4, d_in = 25;
    Eigen::MatrixXd basis(d_out, d_in);
    for (int i = 0; i < d_out; ++i)
        for (int j = 0; j < d_in; ++j) basis(i, j) = rng.normal();
    Eigen::VectorXd offset(d_in);
    for (int j = 0; j < d_in; ++j) offset[j] = rng.normal(0.0, 2.0);

    Eigen::MatrixXd X(200, d_in);
    for (int i = 0; i < 200; ++i) {
        Eigen::VectorXd coeff(d_out);
        for (int k = 0; k < d_out; ++k) coeff[k] = rng.normal(0.0, 3.0);
        X.row(i) = (offset + basis.transpose() * coeff).transpose();
    }

    const auto reducer = cpol::fit_reducer(X, d_out);
    for (int i = 0; i < 200; i += 17) {
        const Eigen::VectorXd z = X.row(i).transpose();
        const Eigen::VectorXd back = reducer.reconstruct(reducer.apply(z));
        CHECK((back - z).norm() == Approx(0.0).margin(1e-8));
    }

    // The column mean projects to the origin.
    CHECK(reducer.apply(reducer.mean).norm() == Approx(0.0).margin(1e-10));

    // Rows orthonormal.
    const Eigen::MatrixXd gram =
        reducer.projection * reducer.projection.transpose() -
        Eigen::MatrixXd::Identity(d_out, d_out);
    CHECK(gram.cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("leading component of a stretched cloud is the stretch direction") {
    cpol::Rng rng(21);
    Eigen::MatrixXd X(500, 2);
    for (int i = 0; i < 500; ++i) {
        const double t = rng.normal(0.0, 5.0);
        const double e = rng.normal(0.0, 0.1);
        X(i, 0) = t + e;
        X(i, 1) = t - e;
    }
    const auto reducer = cpol::fit_reducer(X, 1);
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    const double dot =
        std::abs(reducer.projection(0, 0) * inv_sqrt2 + reducer.projection(0, 1) * inv_sqrt2);
    CHECK(dot == Approx(1.0).margin(1e-6));
}

TEST_CASE("rank-deficient data cannot fill the requested dimension") {
    Eigen::MatrixXd X(50, 3);
    cpol::Rng rng(22);
    for (int i = 0; i < 50; ++i) {
        const double t = rng.normal();
        X(i, 0) = t;
        X(i, 1) = 2.0 * t;
        X(i, 2) = -t;
    }
    CHECK_THROWS(cpol::fit_reducer(X, 2));
}
