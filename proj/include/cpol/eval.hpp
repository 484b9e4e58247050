#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "cpol/policy.hpp"
#include "cpol/reducer.hpp"
#include "cpol/scenario.hpp"
#include "cpol/weights.hpp"

namespace cpol {

/// Exceedance curve Pr{y > threshold} at the given thresholds.
struct CcdfCurve {
    std::vector<double> thresholds;
    std::vector<double> probabilities;
};

inline CcdfCurve empirical_ccdf(const std::vector<double>& costs,
                                std::vector<double> thresholds) {
    if (costs.empty()) throw std::invalid_argument("empirical_ccdf: no costs");
    std::sort(thresholds.begin(), thresholds.end());
    CcdfCurve curve;
    curve.thresholds = std::move(thresholds);
    curve.probabilities.reserve(curve.thresholds.size());
    std::vector<double> sorted(costs);
    std::sort(sorted.begin(), sorted.end());
    for (const double t : curve.thresholds) {
        const auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
        curve.probabilities.push_back(static_cast<double>(sorted.end() - it) /
                                      static_cast<double>(sorted.size()));
    }
    return curve;
}

/// Smallest order statistic whose empirical cdf reaches 1 - alpha.
inline double cost_quantile(const std::vector<double>& costs, double alpha) {
    if (costs.empty()) throw std::invalid_argument("cost_quantile: no costs");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("cost_quantile: alpha must be in (0,1)");
    std::vector<double> sorted(costs);
    std::sort(sorted.begin(), sorted.end());
    const double level = 1.0 - alpha;
    const double n = static_cast<double>(sorted.size());
    for (std::size_t k = 1; k <= sorted.size(); ++k)
        if (static_cast<double>(k) / n >= level) return sorted[k - 1];
    return sorted.back();
}

/// Decision rule under evaluation; may consume the shared stream (stochastic
/// policies) and sees the draw index (seeded per-context tie-breaks).
using PolicyFn = std::function<int(const Eigen::VectorXd& z, long index, Rng& rng)>;
using ContextSampler = std::function<Eigen::VectorXd(Rng& rng)>;
using OutcomeSampler = std::function<double(int x, const Eigen::VectorXd& z, Rng& rng)>;

inline PolicyFn make_policy_fn(const RobustPolicy& policy) {
    return [&policy](const Eigen::VectorXd& z, long index, Rng&) {
        return policy.decide(z, index).decision;
    };
}

inline PolicyFn make_policy_fn(const LinearPolicy& policy) {
    return [policy](const Eigen::VectorXd& z, long, Rng&) { return linear_decide(policy, z); };
}

inline PolicyFn make_constant_policy_fn(int decision) {
    return [decision](const Eigen::VectorXd&, long, Rng&) { return decision; };
}

/// The scenario's own assignment mechanism, as a stochastic policy.
inline PolicyFn make_past_policy_fn(const SyntheticScenario& scenario) {
    return [&scenario](const Eigen::VectorXd& z, long, Rng& rng) {
        return rng.bernoulli(scenario.treat_probability(z)) ? 1 : 0;
    };
}

struct PolicyEvaluation {
    std::vector<double> costs;
    CcdfCurve ccdf;
    double tail_quantile = 0.0;  // empirical (1-alpha) cost quantile
};

/// Draws (z, x = pi(z), y) `draws` times and summarizes the realized costs.
/// Deterministic given the seed.
inline PolicyEvaluation evaluate_policy(const PolicyFn& policy, const OutcomeSampler& outcome,
                                        const ContextSampler& context, long draws,
                                        std::uint64_t seed, double alpha,
                                        int curve_points = 201) {
    if (draws < 1) throw std::invalid_argument("evaluate_policy: draws must be >= 1");
    Rng rng(seed);
    PolicyEvaluation out;
    out.costs.reserve(draws);
    for (long i = 0; i < draws; ++i) {
        const Eigen::VectorXd z = context(rng);
        const int x = policy(z, i, rng);
        out.costs.push_back(outcome(x, z, rng));
    }
    const auto [lo_it, hi_it] = std::minmax_element(out.costs.begin(), out.costs.end());
    std::vector<double> thresholds(curve_points);
    for (int i = 0; i < curve_points; ++i)
        thresholds[i] = *lo_it + (*hi_it - *lo_it) * i / static_cast<double>(curve_points - 1);
    out.ccdf = empirical_ccdf(out.costs, std::move(thresholds));
    out.tail_quantile = cost_quantile(out.costs, alpha);
    return out;
}

struct CoverageRow {
    double alpha = 0.0;
    double exceedance = 0.0;  // estimated Pr{y > y_alpha(z)}
    long runs = 0;
    double std_error = 0.0;
};

struct CoverageTable {
    std::vector<CoverageRow> rows;
};

/// The unsupervised weight recipe of the synthetic study: per arm a
/// Bernoulli model of gender and a single (misspecified) Gaussian of age per
/// gender.
inline WeightModel fit_synthetic_weight_model(const Dataset& ds, std::uint64_t seed,
                                              WeightMode mode = WeightMode::generative) {
    WeightFitConfig cfg;
    cfg.feature.kind = DensityModel::Kind::conditional_product;
    cfg.feature.binary_coord = 1;
    cfg.feature.slice_kind = DensityModel::Kind::gaussian;
    cfg.feature.em.seed = seed;
    cfg.mode = mode;
    return fit_weight_model(ds, cfg);
}

/// The weight recipe of the infant-care study: reduce the raw covariates to
/// four principal components, then per arm a four-component Gaussian mixture.
inline WeightModel fit_ihdp_weight_model(const Dataset& train_raw, std::uint64_t seed,
                                         int reduced_dim = 4, int mixture_components = 4,
                                         WeightMode mode = WeightMode::generative) {
    const Reducer reducer = fit_reducer(train_raw.feature_matrix(), reduced_dim);
    const Dataset reduced = reduce_dataset(train_raw, reducer);
    WeightFitConfig cfg;
    cfg.feature.kind = DensityModel::Kind::gmm;
    cfg.feature.mixture_components = mixture_components;
    cfg.feature.em.seed = seed;
    cfg.mode = mode;
    WeightModel wm = fit_weight_model(reduced, cfg);
    wm.reducer = reducer;
    return wm;
}

namespace detail {

inline CoverageTable aggregate_coverage(const std::vector<double>& alphas,
                                        const std::vector<std::vector<bool>>& exceeded) {
    CoverageTable table;
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
        CoverageRow row;
        row.alpha = alphas[ai];
        row.runs = static_cast<long>(exceeded[ai].size());
        long hits = 0;
        for (const bool b : exceeded[ai]) hits += b ? 1 : 0;
        row.exceedance = static_cast<double>(hits) / static_cast<double>(row.runs);
        row.std_error =
            std::sqrt(row.exceedance * (1.0 - row.exceedance) / static_cast<double>(row.runs));
        table.rows.push_back(row);
    }
    return table;
}

}  // namespace detail

/// Monte-Carlo accuracy of the certificate under the synthetic scenario:
/// each run draws a fresh training set, learns the weights, certifies one
/// fresh context and checks the realized outcome against the certificate.
inline CoverageTable coverage_experiment(const SyntheticConfig& scenario_cfg,
                                         const std::vector<double>& alphas, long runs,
                                         std::uint64_t seed, int grid_points = 2001) {
    if (runs < 30) throw std::invalid_argument("coverage_experiment: need at least 30 runs");
    std::vector<std::vector<bool>> exceeded(alphas.size());
    const CostGrid grid = CostGrid::from_range(SyntheticScenario::cost_range(), grid_points);
    for (long r = 0; r < runs; ++r) {
        SyntheticConfig cfg = scenario_cfg;
        cfg.seed = mix_seed(seed, r, 0);
        const SyntheticScenario scenario(cfg);
        const Dataset ds = scenario.sample().data;
        const WeightModel wm = fit_synthetic_weight_model(ds, mix_seed(seed, r, 1));
        Rng context_rng(mix_seed(seed, r, 2));
        const Eigen::VectorXd z = scenario.draw_context(context_rng);
        for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
            const RobustPolicy policy(ds, wm, alphas[ai], grid, mix_seed(seed, r, 3));
            const PolicyDecision d = policy.decide(z, static_cast<long>(ai));
            Rng outcome_rng(mix_seed(seed, r, 4 + ai));
            const double y = scenario.draw_cost(d.decision, z, outcome_rng);
            exceeded[ai].push_back(y > d.certificate);
        }
    }
    return detail::aggregate_coverage(alphas, exceeded);
}

/// Monte-Carlo accuracy of the certificate under the infant-care surrogate:
/// fresh coefficients, covariates and outcomes per run; the certified
/// context is drawn from the held-out rows.
inline CoverageTable coverage_experiment(const IhdpStyleConfig& scenario_cfg,
                                         const std::vector<double>& alphas, long runs,
                                         std::uint64_t seed, int grid_points = 2001) {
    if (runs < 30) throw std::invalid_argument("coverage_experiment: need at least 30 runs");
    std::vector<std::vector<bool>> exceeded(alphas.size());
    for (long r = 0; r < runs; ++r) {
        IhdpStyleConfig cfg = scenario_cfg;
        cfg.seed = mix_seed(seed, r, 0);
        const IhdpSample sample = generate_ihdp_style(cfg);
        const WeightModel wm = fit_ihdp_weight_model(sample.train, mix_seed(seed, r, 1));
        const CostGrid grid = CostGrid::from_range(sample.train.cost_range(), grid_points);
        Rng context_rng(mix_seed(seed, r, 2));
        const Eigen::VectorXd z =
            sample.test_contexts.row(static_cast<long>(context_rng.below(sample.test_contexts.rows())))
                .transpose();
        for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
            const RobustPolicy policy(sample.train, wm, alphas[ai], grid, mix_seed(seed, r, 3));
            const PolicyDecision d = policy.decide(z, static_cast<long>(ai));
            Rng outcome_rng(mix_seed(seed, r, 4 + ai));
            const double y = sample.truth.draw_cost(d.decision, z, outcome_rng);
            exceeded[ai].push_back(y > d.certificate);
        }
    }
    return detail::aggregate_coverage(alphas, exceeded);
}

}  // namespace cpol
