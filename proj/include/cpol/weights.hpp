#pragma once

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cpol/dataset.hpp"
#include "cpol/density.hpp"
#include "cpol/reducer.hpp"

namespace cpol {

enum class WeightMode { generative, propensity };

/// z -> probability vector over decisions, p̂(x|z).
using PropensityFn = std::function<std::vector<double>(const Eigen::VectorXd&)>;

/// Fitted components behind the probability weights
/// w_k(x, z) = 1{x=k} p̂(z) / (p̂(z|x) p̂(x)), with p̂(z) = Σ_j p̂(z|j) p̂(j).
/// In propensity mode the equivalent form w_k(x, z) = 1{x=k} / p̂(x=k|z) is
/// used instead.
struct WeightModel {
    CategoricalModel marginal;
    std::vector<std::optional<DensityModel>> per_arm;  // empty slot: arm with no data
    WeightMode mode = WeightMode::generative;
    PropensityFn propensity;  // required in propensity mode
    std::optional<Reducer> reducer;
    int feature_dim = 0;

    int decision_count() const { return static_cast<int>(per_arm.size()); }

    double log_arm_density(int k, const Eigen::VectorXd& z) const {
        if (!per_arm[k]) return kNegInf;
        return per_arm[k]->log_density(z);
    }

    /// log p̂(z) through the mixture identity; never stored independently.
    double log_marginal_density(const Eigen::VectorXd& z) const {
        std::vector<double> terms;
        terms.reserve(per_arm.size());
        for (int k = 0; k < decision_count(); ++k) {
            if (marginal.probs[k] <= 0.0 || !per_arm[k]) continue;
            terms.push_back(std::log(marginal.probs[k]) + per_arm[k]->log_density(z));
        }
        return log_sum_exp(terms);
    }
};

struct WeightFitConfig {
    FeatureModelConfig feature;
    WeightMode mode = WeightMode::generative;
};

/// Propensity map implied by the generative components via Bayes' rule.
inline PropensityFn bayes_propensity(const WeightModel& wm) {
    return [marginal = wm.marginal, per_arm = wm.per_arm](const Eigen::VectorXd& z) {
        const int arms = static_cast<int>(per_arm.size());
        std::vector<double> log_joint(arms, kNegInf);
        for (int k = 0; k < arms; ++k)
            if (marginal.probs[k] > 0.0 && per_arm[k])
                log_joint[k] = std::log(marginal.probs[k]) + per_arm[k]->log_density(z);
        const double lse = log_sum_exp(log_joint);
        std::vector<double> out(arms, 0.0);
        if (lse == kNegInf) return out;
        for (int k = 0; k < arms; ++k) out[k] = std::exp(log_joint[k] - lse);
        return out;
    };
}

/// Fits p̂(x) and one feature model per non-empty arm. Empty arms keep no
/// model; their weights degenerate to the test point downstream.
inline WeightModel fit_weight_model(const Dataset& ds, const WeightFitConfig& cfg) {
    WeightModel wm;
    wm.marginal = fit_decision_marginal(ds);
    wm.feature_dim = ds.dim();
    wm.mode = cfg.mode;
    wm.per_arm.resize(ds.decision_count());
    for (int k = 0; k < ds.decision_count(); ++k) {
        if (wm.marginal.probs[k] <= 0.0) continue;
        FeatureModelConfig fc = cfg.feature;
        fc.em.seed = mix_seed(cfg.feature.em.seed, static_cast<std::uint64_t>(k));
        wm.per_arm[k] = fit_feature_model(ds, k, fc);
    }
    if (wm.mode == WeightMode::propensity) wm.propensity = bayes_propensity(wm);
    return wm;
}

/// Normalized probability masses over the training points plus the test
/// point. `degenerate` flags "no usable arm data": all training mass
/// underflowed (or the arm is empty), so the test point carries mass 1.
struct NormalizedWeights {
    std::vector<double> train_mass;  // length n; exactly 0 off-arm
    double test_mass = 0.0;
    bool degenerate = false;
};

/// Core normalization: log weights of the arm's training points plus the
/// test point's log weight. Entries more than 700 below the maximum get
/// exact mass zero.
inline std::pair<std::vector<double>, double> normalize_log_weights(
    const std::vector<double>& train_logs, double test_log) {
    double m = test_log;
    for (const double v : train_logs) m = std::max(m, v);

    std::vector<double> w(train_logs.size(), 0.0);
    double wt;
    if (std::isinf(m) && m > 0.0) {
        // Infinite weights dominate everything finite.
        wt = std::isinf(test_log) && test_log > 0.0 ? 1.0 : 0.0;
        for (std::size_t i = 0; i < train_logs.size(); ++i)
            w[i] = std::isinf(train_logs[i]) && train_logs[i] > 0.0 ? 1.0 : 0.0;
    } else {
        wt = test_log >= m - 700.0 ? std::exp(test_log - m) : 0.0;
        for (std::size_t i = 0; i < train_logs.size(); ++i)
            w[i] = train_logs[i] >= m - 700.0 ? std::exp(train_logs[i] - m) : 0.0;
    }
    double total = wt;
    for (const double v : w) total += v;
    for (double& v : w) v /= total;
    return {std::move(w), wt / total};
}

/// Probability weights of a hypothetical decision k at context z_test,
/// normalized over the n training points and the test point. Computation is
/// carried out in log space with a max shift before exponentiation.
inline NormalizedWeights normalized_weights(const WeightModel& wm, int k, const Dataset& ds,
                                            const Eigen::VectorXd& z_test) {
    if (k < 0 || k >= wm.decision_count())
        throw std::invalid_argument("normalized_weights: decision id out of range");

    NormalizedWeights out;
    out.train_mass.assign(ds.size(), 0.0);

    // Map raw covariates through the reducer when the model carries one.
    const bool reduce_rows = wm.reducer && ds.dim() == wm.reducer->input_dim();
    if (!reduce_rows && ds.dim() != wm.feature_dim)
        throw std::invalid_argument("normalized_weights: dataset dimension mismatch");
    Eigen::VectorXd zt = z_test;
    if (wm.reducer && zt.size() == wm.reducer->input_dim()) zt = wm.reducer->apply(zt);
    if (zt.size() != wm.feature_dim)
        throw std::invalid_argument("normalized_weights: context dimension mismatch");
    auto feature_of = [&](long i) -> Eigen::VectorXd {
        Eigen::VectorXd z = ds.feature(i);
        return reduce_rows ? wm.reducer->apply(z) : z;
    };

    auto degenerate = [&]() {
        out.test_mass = 1.0;
        out.degenerate = true;
        return out;
    };

    double test_log;
    std::vector<long> arm_rows;
    std::vector<double> train_logs;
    if (wm.mode == WeightMode::propensity) {
        if (!wm.propensity) throw std::runtime_error("normalized_weights: propensity not set");
        const auto pt = wm.propensity(zt);
        if (static_cast<int>(pt.size()) != wm.decision_count())
            throw std::runtime_error("normalized_weights: propensity arity mismatch");
        if (pt[k] <= 0.0) return degenerate();
        test_log = -std::log(pt[k]);
        for (long i = 0; i < ds.size(); ++i) {
            if (ds.decision(i) != k) continue;
            arm_rows.push_back(i);
            const auto pi = wm.propensity(feature_of(i));
            train_logs.push_back(pi[k] > 0.0 ? -std::log(pi[k]) : kNegInf);
        }
    } else {
        if (wm.marginal.probs[k] <= 0.0 || !wm.per_arm[k]) return degenerate();
        const double log_pk = std::log(wm.marginal.probs[k]);
        const double test_arm = wm.log_arm_density(k, zt);
        if (test_arm == kNegInf) return degenerate();
        test_log = wm.log_marginal_density(zt) - test_arm - log_pk;
        for (long i = 0; i < ds.size(); ++i) {
            if (ds.decision(i) != k) continue;
            arm_rows.push_back(i);
            const Eigen::VectorXd zi = feature_of(i);
            const double arm_d = wm.log_arm_density(k, zi);
            train_logs.push_back(arm_d == kNegInf
                                     ? std::numeric_limits<double>::infinity()
                                     : wm.log_marginal_density(zi) - arm_d - log_pk);
        }
    }

    auto [mass, test_mass] = normalize_log_weights(train_logs, test_log);
    double train_total = 0.0;
    for (std::size_t r = 0; r < arm_rows.size(); ++r) {
        out.train_mass[arm_rows[r]] = mass[r];
        train_total += mass[r];
    }
    out.test_mass = test_mass;
    if (train_total == 0.0) {
        out.test_mass = 1.0;
        out.degenerate = true;
    }
    return out;
}

}  // namespace cpol
