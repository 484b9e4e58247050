#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cpol/dataset.hpp"
#include "cpol/weights.hpp"

namespace cpol {

/// Absolute-residual nonconformity score.
inline double nonconformity_score(double y, double mu) { return std::abs(y - mu); }

/// Locally weighted average of the augmented costs,
/// mu = Σ_i mass_i y_i + test_mass · y_candidate. Linear in y_candidate.
inline double augmented_mean(const std::vector<double>& mass, const std::vector<double>& costs,
                             double test_mass, double y_candidate) {
    if (mass.size() != costs.size())
        throw std::invalid_argument("augmented_mean: mass/cost size mismatch");
    double mu = test_mass * y_candidate;
    for (std::size_t i = 0; i < mass.size(); ++i) mu += mass[i] * costs[i];
    return mu;
}

/// Step function over nonconformity scores. Atoms are sorted by score and
/// their masses sum to 1; evaluation is right-continuous.
struct WeightedCdf {
    struct Atom {
        double score;
        double mass;
    };
    std::vector<Atom> atoms;

    double evaluate(double s) const {
        double cum = 0.0;
        for (const auto& a : atoms) {
            if (a.score > s) break;
            cum += a.mass;
        }
        return cum;
    }
};

/// Merges the training scores (with their masses) and the test score (with
/// the test mass) into a weighted step function. Equal scores merge into one
/// atom; zero-mass entries are dropped.
inline WeightedCdf build_cdf(const std::vector<double>& scores, const std::vector<double>& mass,
                             double test_score, double test_mass) {
    if (scores.size() != mass.size())
        throw std::invalid_argument("build_cdf: score/mass size mismatch");
    std::vector<WeightedCdf::Atom> atoms;
    atoms.reserve(scores.size() + 1);
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (mass[i] != 0.0) atoms.push_back({scores[i], mass[i]});
    if (test_mass != 0.0) atoms.push_back({test_score, test_mass});
    if (atoms.empty()) throw std::invalid_argument("build_cdf: no mass");
    std::sort(atoms.begin(), atoms.end(),
              [](const auto& a, const auto& b) { return a.score < b.score; });
    WeightedCdf cdf;
    for (const auto& a : atoms) {
        if (!cdf.atoms.empty() && cdf.atoms.back().score == a.score)
            cdf.atoms.back().mass += a.mass;
        else
            cdf.atoms.push_back(a);
    }
    return cdf;
}

/// Smallest atom score s with F̂(s) >= level; the largest atom when rounding
/// keeps the total just below the level.
inline double cdf_quantile(const WeightedCdf& cdf, double level) {
    if (!(level > 0.0 && level <= 1.0))
        throw std::invalid_argument("cdf_quantile: level must be in (0,1]");
    if (cdf.atoms.empty()) throw std::invalid_argument("cdf_quantile: empty cdf");
    double cum = 0.0;
    for (const auto& a : cdf.atoms) {
        cum += a.mass;
        if (cum >= level) return a.score;
    }
    return cdf.atoms.back().score;
}

/// Uniform discretization of the cost support, endpoints included.
struct CostGrid {
    double lo;
    double hi;
    int points;

    static CostGrid from_range(const CostRange& r, int points = 2001) {
        r.check();
        if (points < 2) throw std::invalid_argument("CostGrid: need at least 2 points");
        return {r.lo, r.hi, points};
    }

    double step() const { return (hi - lo) / static_cast<double>(points - 1); }
    double value(int i) const { return i == points - 1 ? hi : lo + step() * i; }
};

enum class LimitStrategy { grid_scan, interval_halving };

struct LimitOptions {
    LimitStrategy strategy = LimitStrategy::grid_scan;
    /// Places the test point's mass at +infinity instead of at its own
    /// score. The qualifying set is unchanged (mass at or above the test
    /// score cannot pull the quantile below it); only the reported quantile
    /// diagnostic moves.
    bool conservative_test_mass = false;
};

/// The cost limit together with its diagnostics. `saturated` marks a limit
/// at the top of the range, the non-informative fallback.
struct ConformalLimit {
    double value = 0.0;
    double test_mass = 0.0;
    double quantile_at_value = 0.0;
    bool saturated = false;
};

namespace detail {

/// Sorted arm costs with prefix masses; answers "probability mass strictly
/// inside an open interval" in O(log m).
struct SortedMasses {
    std::vector<double> costs;   // ascending
    std::vector<double> prefix;  // prefix[i] = mass of the first i atoms
    double mu0 = 0.0;

    SortedMasses(std::vector<double> arm_costs, std::vector<double> arm_mass) {
        const std::size_t m = arm_costs.size();
        std::vector<std::size_t> order(m);
        for (std::size_t i = 0; i < m; ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return arm_costs[a] < arm_costs[b]; });
        costs.resize(m);
        prefix.assign(m + 1, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            costs[i] = arm_costs[order[i]];
            prefix[i + 1] = prefix[i] + arm_mass[order[i]];
            mu0 += arm_mass[order[i]] * arm_costs[order[i]];
        }
    }

    double mass_inside(double a, double b) const {
        const auto lo = std::upper_bound(costs.begin(), costs.end(), a);
        const auto hi = std::lower_bound(costs.begin(), costs.end(), b);
        if (hi <= lo) return 0.0;
        return prefix[hi - costs.begin()] - prefix[lo - costs.begin()];
    }
};

}  // namespace detail

/// Cost limit over pre-normalized arm masses: the largest grid value whose
/// candidate score stays within the (1-alpha) quantile of the weighted score
/// distribution. Grid scan evaluates the membership test top-down; interval
/// halving binary-searches from the score-zero anchor under the assumption
/// that the qualifying set is contiguous above it.
inline ConformalLimit conformal_limit_from_masses(const std::vector<double>& arm_costs,
                                                  const std::vector<double>& arm_mass,
                                                  double test_mass, double alpha,
                                                  const CostGrid& grid,
                                                  const LimitOptions& options = {}) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("conformal_limit: alpha must be in (0,1)");
    if (arm_costs.size() != arm_mass.size())
        throw std::invalid_argument("conformal_limit: cost/mass size mismatch");
    const double level = 1.0 - alpha;

    const detail::SortedMasses sm(arm_costs, arm_mass);

    // The membership test: a candidate y qualifies when the training mass
    // strictly below the candidate's own score stays under 1-alpha. Training
    // scores |y_i - mu| fall strictly below t = |y - mu| exactly when y_i
    // lies strictly inside (mu-t, mu+t).
    auto member = [&](double y) {
        const double mu = sm.mu0 + test_mass * y;
        const double t = std::abs(y - mu);
        return sm.mass_inside(mu - t, mu + t) < level;
    };

    ConformalLimit limit;
    limit.test_mass = test_mass;

    // Above the score-zero anchor the candidate's score interval is
    // (2 mu0 - (1 - 2 p_test) y, y): nested in y exactly when p_test <= 1/2,
    // which makes the qualifying set one contiguous interval and the binary
    // search exact. Larger test masses can split the set, so they take the
    // exhaustive scan regardless of the requested strategy.
    const bool scan = options.strategy == LimitStrategy::grid_scan || test_mass > 0.5;

    int found = -1;
    if (test_mass >= 1.0 - 1e-12) {
        found = grid.points - 1;  // mass concentrated on the test point
    } else if (scan) {
        for (int i = grid.points - 1; i >= 0; --i) {
            if (member(grid.value(i))) {
                found = i;
                break;
            }
        }
    } else {
        if (member(grid.value(grid.points - 1))) {
            found = grid.points - 1;
        } else {
            // Anchor at the score-zero point mu0 / (1 - test_mass).
            const double vertex = sm.mu0 / (1.0 - test_mass);
            const int anchor = std::clamp(
                static_cast<int>(std::llround((vertex - grid.lo) / grid.step())), 0,
                grid.points - 1);
            int low = -1;
            for (const int probe : {anchor, anchor - 1, anchor + 1}) {
                if (probe >= 0 && probe < grid.points && member(grid.value(probe))) {
                    low = probe;
                    break;
                }
            }
            if (low < 0) {
                // Discretization left no qualifying point near the anchor;
                // fall back to the exhaustive scan.
                for (int i = grid.points - 1; i >= 0; --i) {
                    if (member(grid.value(i))) {
                        found = i;
                        break;
                    }
                }
            } else {
                int high = grid.points - 1;  // established non-member
                while (high - low > 1) {
                    const int mid = low + (high - low) / 2;
                    if (member(grid.value(mid)))
                        low = mid;
                    else
                        high = mid;
                }
                found = low;
            }
        }
    }

    limit.value = found >= 0 ? grid.value(found) : grid.hi;
    limit.saturated = limit.value == grid.hi;

    // Diagnostic: the quantile the reported value was tested against,
    // through the literal weighted-cdf route.
    {
        const double mu = sm.mu0 + test_mass * limit.value;
        std::vector<double> scores(arm_costs.size());
        for (std::size_t i = 0; i < arm_costs.size(); ++i)
            scores[i] = nonconformity_score(arm_costs[i], mu);
        const double t = nonconformity_score(limit.value, mu);
        if (options.conservative_test_mass) {
            double cum = 0.0;
            limit.quantile_at_value = std::numeric_limits<double>::infinity();
            std::vector<std::size_t> order(scores.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            std::sort(order.begin(), order.end(),
                      [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
            for (const std::size_t i : order) {
                cum += arm_mass[i];
                if (cum >= level) {
                    limit.quantile_at_value = scores[i];
                    break;
                }
            }
        } else {
            limit.quantile_at_value =
                cdf_quantile(build_cdf(scores, arm_mass, t, test_mass), level);
        }
    }
    return limit;
}

/// Cost limit y_alpha(k, z) for hypothetically assigning decision k in
/// context z, computed from the fitted weight model.
inline ConformalLimit conformal_limit(const Dataset& ds, const WeightModel& wm, int k,
                                      const Eigen::VectorXd& z, double alpha,
                                      const CostGrid& grid, const LimitOptions& options = {}) {
    const NormalizedWeights nw = normalized_weights(wm, k, ds, z);
    std::vector<double> arm_costs;
    std::vector<double> arm_mass;
    for (long i = 0; i < ds.size(); ++i) {
        if (nw.train_mass[i] == 0.0) continue;
        arm_costs.push_back(ds.cost(i));
        arm_mass.push_back(nw.train_mass[i]);
    }
    return conformal_limit_from_masses(arm_costs, arm_mass, nw.test_mass, alpha, grid, options);
}

}  // namespace cpol
