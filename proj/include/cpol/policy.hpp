#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cpol/conformal.hpp"
#include "cpol/dataset.hpp"
#include "cpol/rng.hpp"
#include "cpol/weights.hpp"

namespace cpol {

struct PolicyDecision {
    int decision = 0;
    double certificate = 0.0;
    std::vector<ConformalLimit> per_arm_limits;
    bool tied = false;
};

/// Index of the minimum with values within `tie_tol` of it treated as tied;
/// ties resolve by a uniform draw from the tied set.
inline std::pair<int, bool> pick_min_with_ties(const std::vector<double>& values, double tie_tol,
                                               Rng& rng) {
    if (values.empty()) throw std::invalid_argument("pick_min_with_ties: no values");
    double best = values[0];
    for (const double v : values) best = std::min(best, v);
    std::vector<int> tied;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (values[i] <= best + tie_tol) tied.push_back(static_cast<int>(i));
    if (tied.size() == 1) return {tied[0], false};
    return {tied[static_cast<std::size_t>(rng.below(tied.size()))], true};
}

/// Policy that selects the decision with the smallest conformal cost limit
/// at the configured level, certifying each decision with that limit.
class RobustPolicy {
public:
    RobustPolicy(Dataset data, WeightModel weights, double alpha, CostGrid grid,
                 std::uint64_t seed, LimitOptions options = {})
        : data_(std::move(data)),
          weights_(std::move(weights)),
          alpha_(alpha),
          grid_(grid),
          seed_(seed),
          options_(options) {
        if (!(alpha_ > 0.0 && alpha_ < 1.0))
            throw std::invalid_argument("RobustPolicy: alpha must be in (0,1)");
        // Pre-reduce the training features once when the model reduces.
        if (weights_.reducer && data_.dim() == weights_.reducer->input_dim())
            data_ = reduce_dataset(data_, *weights_.reducer);
    }

    double alpha() const { return alpha_; }
    const CostGrid& grid() const { return grid_; }
    const Dataset& data() const { return data_; }
    const WeightModel& weights() const { return weights_; }

    /// Limits for every decision at context z; the tie-break stream is split
    /// from (seed, context_index), so identical inputs give identical
    /// decisions.
    PolicyDecision decide(const Eigen::VectorXd& z, long context_index = 0) const {
        PolicyDecision out;
        out.per_arm_limits.reserve(weights_.decision_count());
        std::vector<double> values;
        for (int k = 0; k < weights_.decision_count(); ++k) {
            out.per_arm_limits.push_back(
                conformal_limit(data_, weights_, k, z, alpha_, grid_, options_));
            values.push_back(out.per_arm_limits.back().value);
        }
        Rng rng(mix_seed(seed_, static_cast<std::uint64_t>(context_index)));
        const auto [pick, tied] = pick_min_with_ties(values, grid_.step() + 1e-12, rng);
        out.decision = pick;
        out.tied = tied;
        out.certificate = out.per_arm_limits[pick].value;
        return out;
    }

private:
    Dataset data_;
    WeightModel weights_;
    double alpha_;
    CostGrid grid_;
    std::uint64_t seed_;
    LimitOptions options_;
};

inline PolicyDecision robust_decide(const RobustPolicy& policy, const Eigen::VectorXd& z,
                                    long context_index = 0) {
    return policy.decide(z, context_index);
}

/// Mean-optimal baseline: one least-squares fit of the cost on (1, z) per
/// decision, choosing the decision with the smallest predicted mean.
class LinearPolicy {
public:
    LinearPolicy() = default;
    explicit LinearPolicy(Eigen::MatrixXd coefficients) : coef_(std::move(coefficients)) {
        if (!coef_.allFinite())
            throw std::invalid_argument("LinearPolicy: coefficients must be finite");
    }

    int decision_count() const { return static_cast<int>(coef_.rows()); }
    int dim() const { return static_cast<int>(coef_.cols()) - 1; }

    /// Coefficient vector (intercept, slopes) for decision k.
    Eigen::VectorXd coefficients(int k) const { return coef_.row(k).transpose(); }

    double predict(int k, const Eigen::VectorXd& z) const {
        if (z.size() != coef_.cols() - 1)
            throw std::invalid_argument("LinearPolicy::predict: dimension mismatch");
        double v = coef_(k, 0);
        for (Eigen::Index j = 0; j < z.size(); ++j) v += coef_(k, j + 1) * z[j];
        return v;
    }

private:
    Eigen::MatrixXd coef_;
};

/// Per-arm ordinary least squares of y on (1, z), with a small ridge term
/// when the normal equations are singular (or an arm has too few records).
/// An arm with no records keeps zero coefficients; both arms empty is an
/// error.
inline LinearPolicy fit_linear_baseline(const Dataset& ds, double ridge = 1e-8) {
    const int p = ds.dim() + 1;
    Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(ds.decision_count(), p);
    bool any = false;
    for (int k = 0; k < ds.decision_count(); ++k) {
        long m = 0;
        for (long i = 0; i < ds.size(); ++i)
            if (ds.decision(i) == k) ++m;
        if (m == 0) continue;
        any = true;
        Eigen::MatrixXd X(m, p);
        Eigen::VectorXd y(m);
        long r = 0;
        for (long i = 0; i < ds.size(); ++i) {
            if (ds.decision(i) != k) continue;
            X(r, 0) = 1.0;
            X.block(r, 1, 1, ds.dim()) = ds.feature(i).transpose();
            y[r] = ds.cost(i);
            ++r;
        }
        const Eigen::MatrixXd xtx = X.transpose() * X;
        const Eigen::VectorXd xty = X.transpose() * y;
        Eigen::LLT<Eigen::MatrixXd> llt(xtx);
        Eigen::VectorXd beta;
        if (m >= p && llt.info() == Eigen::Success) {
            beta = llt.solve(xty);
        } else {
            Eigen::MatrixXd reg = xtx;
            reg.diagonal().array() += ridge;
            beta = Eigen::LLT<Eigen::MatrixXd>(reg).solve(xty);
        }
        if (!beta.allFinite()) {
            Eigen::MatrixXd reg = xtx;
            reg.diagonal().array() += ridge;
            beta = Eigen::LLT<Eigen::MatrixXd>(reg).solve(xty);
        }
        coef.row(k) = beta.transpose();
    }
    if (!any) throw std::invalid_argument("fit_linear_baseline: all arms empty");
    return LinearPolicy(coef);
}

/// Argmin over per-arm predictions; exact ties go to the smallest id.
inline int linear_decide(const LinearPolicy& lp, const Eigen::VectorXd& z) {
    int best = 0;
    double best_v = lp.predict(0, z);
    for (int k = 1; k < lp.decision_count(); ++k) {
        const double v = lp.predict(k, z);
        if (v < best_v) {
            best_v = v;
            best = k;
        }
    }
    return best;
}

}  // namespace cpol
