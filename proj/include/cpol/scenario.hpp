#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cpol/dataset.hpp"
#include "cpol/rng.hpp"

namespace cpol {

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

/// Synthetic blood-pressure scenario. Features are (age, gender); the
/// gender-specific age mixture, the treatment assignment and the outcome
/// draw are fixed apart from the outcome dispersions.
///
/// Every N(m, s) below reads s as a standard deviation.
struct SyntheticConfig {
    long n = 200;
    std::uint64_t seed = 0;
    double sigma1 = 0.2;  // treated outcome dispersion
    double sigma0 = 20.0;  // untreated outcome dispersion
    /// Clip costs to the declared range. Disable to sample the unbounded
    /// outcome model, e.g. for moment checks against the analytic means.
    bool clip_costs = true;

    void check() const {
        if (n < 1) throw std::invalid_argument("SyntheticConfig: n must be >= 1");
        if (sigma1 <= 0.0 || sigma0 <= 0.0)
            throw std::invalid_argument("SyntheticConfig: dispersions must be positive");
    }
};

class SyntheticScenario {
public:
    explicit SyntheticScenario(SyntheticConfig cfg) : cfg_(cfg) { cfg_.check(); }

    static CostRange cost_range() { return {-30.0, 30.0}; }
    const SyntheticConfig& config() const { return cfg_; }

    /// (age, gender): gender ~ Bernoulli(1/2); age ~ N(30, 5) for women and
    /// N(45, 5) for men.
    Eigen::VectorXd draw_context(Rng& rng) const {
        Eigen::VectorXd z(2);
        z[1] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        z[0] = z[1] == 1.0 ? rng.normal(30.0, 5.0) : rng.normal(45.0, 5.0);
        return z;
    }

    /// Past policy p(x=1 | z): a gender-specific scaled sigmoid in age.
    double treat_probability(const Eigen::VectorXd& z) const {
        const double age = z[0];
        const double female = z[1];
        return female * 0.95 * sigmoid(-(age - 20.0) / 6.0) +
               (1.0 - female) * 0.20 * sigmoid(-(age - 45.0) / 2.0);
    }

    /// E[y | x, z]: age - 45 when treated, age - 46 when untreated.
    double mean_cost(int x, const Eigen::VectorXd& z) const {
        return z[0] - 46.0 + (x == 1 ? 1.0 : 0.0);
    }

    /// One outcome draw; clipped to the cost range when configured.
    double draw_cost(int x, const Eigen::VectorXd& z, Rng& rng, long* clipped = nullptr) const {
        const double sd = x == 1 ? cfg_.sigma1 : cfg_.sigma0;
        double y = rng.normal(mean_cost(x, z), sd);
        if (cfg_.clip_costs) {
            const CostRange r = cost_range();
            if (y < r.lo || y > r.hi) {
                if (clipped) ++*clipped;
                y = std::clamp(y, r.lo, r.hi);
            }
        }
        return y;
    }

    struct Sample {
        Dataset data;
        long clipped = 0;
    };

    /// n i.i.d. records of (x, y, z) under the past policy; deterministic
    /// given the seed.
    Sample sample() const {
        Rng rng(cfg_.seed);
        std::vector<int> xs;
        std::vector<double> ys;
        std::vector<double> zs;
        xs.reserve(cfg_.n);
        ys.reserve(cfg_.n);
        zs.reserve(2 * cfg_.n);
        long clipped = 0;
        for (long i = 0; i < cfg_.n; ++i) {
            const Eigen::VectorXd z = draw_context(rng);
            const int x = rng.bernoulli(treat_probability(z)) ? 1 : 0;
            const double y = draw_cost(x, z, rng, &clipped);
            xs.push_back(x);
            ys.push_back(y);
            zs.push_back(z[0]);
            zs.push_back(z[1]);
        }
        return {Dataset(std::move(xs), std::move(ys), std::move(zs), 2, cost_range(), 2),
                clipped};
    }

private:
    SyntheticConfig cfg_;
};

/// Surrogate for the infant-care study: 25 standardized covariates, a
/// randomized past policy and nonlinear outcome surfaces whose treatment
/// effect on the treated is calibrated to a cost drop of 2.
struct IhdpStyleConfig {
    long n_train = 600;
    long n_test = 147;
    int raw_dim = 25;
    double sigma0 = 1.0;
    double sigma1 = 1.0;
    double treated_fraction = 0.186;  // empirical treated share of the study
    double treated_effect = 2.0;      // mean cost drop among the treated
    std::uint64_t seed = 0;

    void check() const {
        if (n_train < 1 || n_test < 0)
            throw std::invalid_argument("IhdpStyleConfig: bad sample sizes");
        if (raw_dim < 1) throw std::invalid_argument("IhdpStyleConfig: bad dimension");
        if (sigma0 < 0.0 || sigma1 < 0.0)
            throw std::invalid_argument("IhdpStyleConfig: dispersions must be non-negative");
        if (treated_fraction <= 0.0 || treated_fraction >= 1.0)
            throw std::invalid_argument("IhdpStyleConfig: treated fraction must be in (0,1)");
    }
};

/// Ground truth of one generated replication: outcome surfaces and their
/// parameters, usable as the evaluation oracle.
struct IhdpTruth {
    Eigen::VectorXd beta;
    double omega = 0.0;
    double sigma0 = 1.0;
    double sigma1 = 1.0;

    double mean_untreated(const Eigen::VectorXd& raw) const {
        return -std::exp((raw.array() + 0.5).matrix().dot(beta));
    }
    double mean_treated(const Eigen::VectorXd& raw) const { return -raw.dot(beta) - omega; }
    double mean_cost(int x, const Eigen::VectorXd& raw) const {
        return x == 1 ? mean_treated(raw) : mean_untreated(raw);
    }
    double draw_cost(int x, const Eigen::VectorXd& raw, Rng& rng) const {
        return rng.normal(mean_cost(x, raw), x == 1 ? sigma1 : sigma0);
    }
};

struct IhdpSample {
    Dataset train;                  // raw covariates, n_train records
    Eigen::MatrixXd test_contexts;  // n_test x raw_dim held-out covariates
    IhdpTruth truth;
};

/// Draws the coefficient vector, the standardized surrogate covariates and
/// the outcomes, then splits train and evaluation rows. The offset of the
/// treated surface is set from the treated units so that their mean
/// counterfactual cost difference equals -treated_effect exactly.
inline IhdpSample generate_ihdp_style(const IhdpStyleConfig& cfg) {
    cfg.check();
    Rng rng(cfg.seed);
    const long total = cfg.n_train + cfg.n_test;

    IhdpTruth truth;
    truth.sigma0 = cfg.sigma0;
    truth.sigma1 = cfg.sigma1;
    static const std::vector<double> beta_values = {0.0, 0.1, 0.2, 0.3, 0.4};
    static const std::vector<double> beta_probs = {0.6, 0.1, 0.1, 0.1, 0.1};
    truth.beta.resize(cfg.raw_dim);
    for (int j = 0; j < cfg.raw_dim; ++j)
        truth.beta[j] = beta_values[rng.categorical(beta_probs)];

    Eigen::MatrixXd raw(total, cfg.raw_dim);
    for (long i = 0; i < total; ++i)
        for (int j = 0; j < cfg.raw_dim; ++j) raw(i, j) = rng.normal();
    // Standardize each covariate to zero mean and unit standard deviation.
    for (int j = 0; j < cfg.raw_dim; ++j) {
        const double mean = raw.col(j).mean();
        raw.col(j).array() -= mean;
        const double sd = std::sqrt(raw.col(j).squaredNorm() / static_cast<double>(total));
        if (sd > 0.0) raw.col(j) /= sd;
    }

    std::vector<int> xs(total);
    for (long i = 0; i < total; ++i) xs[i] = rng.bernoulli(cfg.treated_fraction) ? 1 : 0;

    // Offset of the treated surface, from the treated units.
    double gap_sum = 0.0;
    long treated = 0;
    for (long i = 0; i < total; ++i) {
        if (xs[i] != 1) continue;
        const Eigen::VectorXd zi = raw.row(i).transpose();
        gap_sum += std::exp((zi.array() + 0.5).matrix().dot(truth.beta)) - zi.dot(truth.beta);
        ++treated;
    }
    truth.omega = (treated > 0 ? gap_sum / static_cast<double>(treated) : 0.0) +
                  cfg.treated_effect;

    std::vector<double> ys(total);
    for (long i = 0; i < total; ++i)
        ys[i] = truth.draw_cost(xs[i], raw.row(i).transpose(), rng);

    // Random train/test split.
    std::vector<long> order(total);
    for (long i = 0; i < total; ++i) order[i] = i;
    for (long i = total - 1; i > 0; --i)
        std::swap(order[i], order[static_cast<long>(rng.below(i + 1))]);

    double y_lo = ys[order[0]], y_hi = ys[order[0]];
    std::vector<int> train_x;
    std::vector<double> train_y;
    std::vector<double> train_z;
    for (long r = 0; r < cfg.n_train; ++r) {
        const long i = order[r];
        train_x.push_back(xs[i]);
        train_y.push_back(ys[i]);
        for (int j = 0; j < cfg.raw_dim; ++j) train_z.push_back(raw(i, j));
        y_lo = std::min(y_lo, ys[i]);
        y_hi = std::max(y_hi, ys[i]);
    }
    const double pad = 3.0 * std::max(cfg.sigma0, cfg.sigma1) + 1e-9;
    const CostRange range{y_lo - pad, y_hi + pad};

    IhdpSample out{Dataset(std::move(train_x), std::move(train_y), std::move(train_z),
                           cfg.raw_dim, range, 2),
                   Eigen::MatrixXd(cfg.n_test, cfg.raw_dim), truth};
    for (long r = 0; r < cfg.n_test; ++r) out.test_contexts.row(r) = raw.row(order[cfg.n_train + r]);
    return out;
}

}  // namespace cpol
