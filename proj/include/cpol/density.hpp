#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "cpol/dataset.hpp"
#include "cpol/rng.hpp"

namespace cpol {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double log_sum_exp(const std::vector<double>& logs) {
    double m = kNegInf;
    for (const double v : logs) m = std::max(m, v);
    if (m == kNegInf) return kNegInf;
    if (std::isinf(m)) return m;
    double s = 0.0;
    for (const double v : logs) s += std::exp(v - m);
    return m + std::log(s);
}

/// Empirical distribution over decision ids, p̂(x=k) = count(k)/n.
struct CategoricalModel {
    std::vector<double> probs;
};

inline CategoricalModel fit_decision_marginal(const Dataset& ds) {
    if (ds.size() == 0) throw std::invalid_argument("fit_decision_marginal: empty dataset");
    CategoricalModel m;
    m.probs.assign(ds.decision_count(), 0.0);
    for (long i = 0; i < ds.size(); ++i) m.probs[ds.decision(i)] += 1.0;
    for (double& p : m.probs) p /= static_cast<double>(ds.size());
    return m;
}

/// Multivariate Gaussian with full covariance. The Cholesky factor and the
/// normalization constant are cached at construction.
class GaussianModel {
public:
    GaussianModel() = default;
    GaussianModel(Eigen::VectorXd mean, Eigen::MatrixXd cov)
        : mean_(std::move(mean)), cov_(std::move(cov)) {
        if (cov_.rows() != cov_.cols() || cov_.rows() != mean_.size())
            throw std::invalid_argument("GaussianModel: dimension mismatch");
        Eigen::LLT<Eigen::MatrixXd> llt(cov_);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("GaussianModel: covariance not positive definite");
        chol_ = llt.matrixL();
        double log_det = 0.0;
        for (Eigen::Index i = 0; i < chol_.rows(); ++i) log_det += 2.0 * std::log(chol_(i, i));
        log_norm_ = -0.5 * (mean_.size() * std::log(2.0 * M_PI) + log_det);
    }

    int dim() const { return static_cast<int>(mean_.size()); }
    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& covariance() const { return cov_; }

    double log_density(const Eigen::VectorXd& z) const {
        if (z.size() != mean_.size())
            throw std::invalid_argument("GaussianModel::log_density: dimension mismatch");
        const Eigen::VectorXd w =
            chol_.triangularView<Eigen::Lower>().solve(z - mean_);
        return log_norm_ - 0.5 * w.squaredNorm();
    }

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd cov_;
    Eigen::MatrixXd chol_;
    double log_norm_ = 0.0;
};

/// Maximum-likelihood Gaussian fit (divisor n) with `floor` added to the
/// covariance diagonal.
inline GaussianModel fit_gaussian(const Eigen::MatrixXd& X, double floor = 1e-6) {
    if (X.rows() < 1) throw std::invalid_argument("fit_gaussian: no data");
    const Eigen::VectorXd mean = X.colwise().mean();
    const Eigen::MatrixXd centered = X.rowwise() - mean.transpose();
    Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(X.rows());
    cov.diagonal().array() += floor;
    return {mean, cov};
}

struct EmConfig {
    int max_iterations = 200;
    double tol = 1e-6;  // on the mean log-likelihood
    double covariance_floor = 1e-6;
    std::uint64_t seed = 0;
};

/// Gaussian mixture fitted by EM from a k-means++ start.
class GmmModel {
public:
    GmmModel() = default;
    GmmModel(std::vector<double> mixing, std::vector<GaussianModel> components,
             std::vector<double> log_lik_trace = {})
        : mixing_(std::move(mixing)),
          components_(std::move(components)),
          log_lik_trace_(std::move(log_lik_trace)) {
        if (mixing_.size() != components_.size() || mixing_.empty())
            throw std::invalid_argument("GmmModel: mixing/component size mismatch");
        double s = 0.0;
        for (const double w : mixing_) {
            if (w < 0.0) throw std::invalid_argument("GmmModel: negative mixing weight");
            s += w;
        }
        if (std::abs(s - 1.0) > 1e-9)
            throw std::invalid_argument("GmmModel: mixing weights must sum to 1");
    }

    int dim() const { return components_.front().dim(); }
    int component_count() const { return static_cast<int>(components_.size()); }
    const std::vector<double>& mixing() const { return mixing_; }
    const std::vector<GaussianModel>& components() const { return components_; }

    /// Per-iteration mean log-likelihood recorded during fitting.
    const std::vector<double>& log_likelihood_trace() const { return log_lik_trace_; }

    double log_density(const Eigen::VectorXd& z) const {
        std::vector<double> terms;
        terms.reserve(components_.size());
        for (std::size_t k = 0; k < components_.size(); ++k) {
            if (mixing_[k] <= 0.0) continue;
            terms.push_back(std::log(mixing_[k]) + components_[k].log_density(z));
        }
        return log_sum_exp(terms);
    }

private:
    std::vector<double> mixing_;
    std::vector<GaussianModel> components_;
    std::vector<double> log_lik_trace_;
};

namespace detail {

inline std::vector<Eigen::VectorXd> kmeanspp_centers(const Eigen::MatrixXd& X, int k, Rng& rng) {
    const long n = X.rows();
    std::vector<Eigen::VectorXd> centers;
    centers.reserve(k);
    centers.emplace_back(X.row(static_cast<long>(rng.below(n))).transpose());
    std::vector<double> dist2(n);
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (long i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers)
                best = std::min(best, (X.row(i).transpose() - c).squaredNorm());
            dist2[i] = best;
            total += best;
        }
        long pick;
        if (total <= 0.0) {
            pick = static_cast<long>(rng.below(n));
        } else {
            const double u = rng.uniform() * total;
            double cum = 0.0;
            pick = n - 1;
            for (long i = 0; i < n; ++i) {
                cum += dist2[i];
                if (u < cum) {
                    pick = i;
                    break;
                }
            }
        }
        centers.emplace_back(X.row(pick).transpose());
    }
    return centers;
}

}  // namespace detail

inline GmmModel fit_gmm(const Eigen::MatrixXd& X, int k, const EmConfig& cfg = {}) {
    const long n = X.rows();
    const long d = X.cols();
    if (k < 1) throw std::invalid_argument("fit_gmm: need at least one component");
    if (n < k) throw std::invalid_argument("fit_gmm: fewer points than components");

    Rng rng(cfg.seed);
    const auto centers = detail::kmeanspp_centers(X, k, rng);

    // Hard-assignment start: each point joins its nearest seed.
    Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, k);
    for (long i = 0; i < n; ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            const double dd = (X.row(i).transpose() - centers[c]).squaredNorm();
            if (dd < best_d) {
                best_d = dd;
                best = c;
            }
        }
        resp(i, best) = 1.0;
    }

    const Eigen::MatrixXd global_cov =
        fit_gaussian(X, cfg.covariance_floor).covariance();

    std::vector<double> mixing(k);
    std::vector<GaussianModel> comps(k);
    auto m_step = [&]() {
        for (int c = 0; c < k; ++c) {
            const double nc = resp.col(c).sum();
            if (nc <= 0.0) {
                // Dead component: park it on the global fit with zero weight.
                mixing[c] = 0.0;
                comps[c] = GaussianModel(X.colwise().mean(), global_cov);
                continue;
            }
            mixing[c] = nc / static_cast<double>(n);
            const Eigen::VectorXd mu = (resp.col(c).transpose() * X).transpose() / nc;
            Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
            for (long i = 0; i < n; ++i) {
                if (resp(i, c) == 0.0) continue;
                const Eigen::VectorXd diff = X.row(i).transpose() - mu;
                cov.noalias() += resp(i, c) * diff * diff.transpose();
            }
            cov /= nc;
            cov.diagonal().array() += cfg.covariance_floor;
            comps[c] = GaussianModel(mu, cov);
        }
        double s = 0.0;
        for (const double w : mixing) s += w;
        for (double& w : mixing) w /= s;
    };
    m_step();

    std::vector<double> trace;
    Eigen::MatrixXd log_resp(n, k);
    double prev_ll = kNegInf;
    for (int iter = 0; iter < cfg.max_iterations; ++iter) {
        // E step in log space.
        double ll = 0.0;
        for (long i = 0; i < n; ++i) {
            const Eigen::VectorXd zi = X.row(i).transpose();
            double m = kNegInf;
            for (int c = 0; c < k; ++c) {
                log_resp(i, c) =
                    mixing[c] > 0.0 ? std::log(mixing[c]) + comps[c].log_density(zi) : kNegInf;
                m = std::max(m, log_resp(i, c));
            }
            double s = 0.0;
            for (int c = 0; c < k; ++c) s += std::exp(log_resp(i, c) - m);
            const double lse = m + std::log(s);
            ll += lse;
            for (int c = 0; c < k; ++c) resp(i, c) = std::exp(log_resp(i, c) - lse);
        }
        ll /= static_cast<double>(n);
        trace.push_back(ll);
        if (iter > 0 && std::abs(ll - prev_ll) < cfg.tol) break;
        prev_ll = ll;
        m_step();
    }

    return {std::move(mixing), std::move(comps), std::move(trace)};
}

/// Independent Bernoulli coordinates for binary feature vectors.
class BernoulliModel {
public:
    BernoulliModel() = default;
    explicit BernoulliModel(Eigen::VectorXd probs) : probs_(std::move(probs)) {
        for (Eigen::Index j = 0; j < probs_.size(); ++j)
            if (probs_[j] < 0.0 || probs_[j] > 1.0)
                throw std::invalid_argument("BernoulliModel: probabilities must be in [0,1]");
    }

    int dim() const { return static_cast<int>(probs_.size()); }
    const Eigen::VectorXd& probs() const { return probs_; }

    double log_density(const Eigen::VectorXd& z) const {
        if (z.size() != probs_.size())
            throw std::invalid_argument("BernoulliModel::log_density: dimension mismatch");
        double lp = 0.0;
        for (Eigen::Index j = 0; j < z.size(); ++j) {
            if (z[j] != 0.0 && z[j] != 1.0)
                throw std::invalid_argument("BernoulliModel: coordinates must be 0 or 1");
            const double p = z[j] == 1.0 ? probs_[j] : 1.0 - probs_[j];
            if (p == 0.0) return kNegInf;
            lp += std::log(p);
        }
        return lp;
    }

private:
    Eigen::VectorXd probs_;
};

inline BernoulliModel fit_bernoulli(const Eigen::MatrixXd& X) {
    if (X.rows() < 1) throw std::invalid_argument("fit_bernoulli: no data");
    for (long i = 0; i < X.rows(); ++i)
        for (long j = 0; j < X.cols(); ++j)
            if (X(i, j) != 0.0 && X(i, j) != 1.0)
                throw std::invalid_argument("fit_bernoulli: coordinates must be 0 or 1");
    return BernoulliModel(X.colwise().mean());
}

using ContinuousModel = std::variant<GaussianModel, GmmModel>;

inline double continuous_log_density(const ContinuousModel& m, const Eigen::VectorXd& z) {
    return std::visit([&](const auto& model) { return model.log_density(z); }, m);
}

/// p̂(z_cont | z_b) p̂(z_b) for a feature vector with one binary coordinate:
/// a Bernoulli mass on the binary coordinate and a continuous model per
/// binary value. A slice with no data keeps no model; its Bernoulli mass is
/// zero by construction.
struct ConditionalProductModel {
    int binary_coord = 0;
    double p_one = 0.0;
    std::array<std::optional<ContinuousModel>, 2> slices;
    int dim = 0;

    Eigen::VectorXd continuous_part(const Eigen::VectorXd& z) const {
        Eigen::VectorXd out(z.size() - 1);
        Eigen::Index r = 0;
        for (Eigen::Index j = 0; j < z.size(); ++j)
            if (j != binary_coord) out[r++] = z[j];
        return out;
    }

    double log_density(const Eigen::VectorXd& z) const {
        if (z.size() != dim)
            throw std::invalid_argument("ConditionalProductModel: dimension mismatch");
        const double b = z[binary_coord];
        if (b != 0.0 && b != 1.0)
            throw std::invalid_argument("ConditionalProductModel: binary coordinate must be 0 or 1");
        const int bit = b == 1.0 ? 1 : 0;
        const double mass = bit == 1 ? p_one : 1.0 - p_one;
        if (mass == 0.0 || !slices[bit]) return kNegInf;
        return std::log(mass) + continuous_log_density(*slices[bit], continuous_part(z));
    }
};

/// One fitted model of p̂(z | x=k).
class DensityModel {
public:
    enum class Kind { gaussian, gmm, bernoulli, conditional_product };

    DensityModel() = default;
    explicit DensityModel(GaussianModel m) : v_(std::move(m)) {}
    explicit DensityModel(GmmModel m) : v_(std::move(m)) {}
    explicit DensityModel(BernoulliModel m) : v_(std::move(m)) {}
    explicit DensityModel(ConditionalProductModel m) : v_(std::move(m)) {}

    Kind kind() const { return static_cast<Kind>(v_.index()); }

    double log_density(const Eigen::VectorXd& z) const {
        return std::visit([&](const auto& m) { return m.log_density(z); }, v_);
    }

    template <typename T>
    const T& as() const {
        return std::get<T>(v_);
    }

private:
    std::variant<GaussianModel, GmmModel, BernoulliModel, ConditionalProductModel> v_;
};

struct FeatureModelConfig {
    DensityModel::Kind kind = DensityModel::Kind::gaussian;
    int mixture_components = 1;
    /// Binary coordinate for the conditional product kind.
    int binary_coord = -1;
    /// Continuous sub-model kind for the conditional product slices.
    DensityModel::Kind slice_kind = DensityModel::Kind::gaussian;
    EmConfig em;
};

namespace detail {

inline ContinuousModel fit_continuous(const Eigen::MatrixXd& X, DensityModel::Kind kind,
                                      int components, const EmConfig& em) {
    if (kind == DensityModel::Kind::gaussian || components <= 1 || X.rows() < components)
        return fit_gaussian(X, em.covariance_floor);
    return fit_gmm(X, components, em);
}

}  // namespace detail

/// Fits p̂(z | x=k) on the records of arm k. Throws on an empty arm; callers
/// treat that arm as "no data" (see the weight computation).
inline DensityModel fit_feature_model(const Dataset& ds, int k, const FeatureModelConfig& cfg) {
    const Eigen::MatrixXd X = ds.feature_matrix(k);
    if (X.rows() == 0) throw std::invalid_argument("fit_feature_model: arm has no records");

    switch (cfg.kind) {
        case DensityModel::Kind::gaussian:
            return DensityModel(fit_gaussian(X, cfg.em.covariance_floor));
        case DensityModel::Kind::gmm:
            return DensityModel(fit_gmm(X, cfg.mixture_components, cfg.em));
        case DensityModel::Kind::bernoulli:
            return DensityModel(fit_bernoulli(X));
        case DensityModel::Kind::conditional_product: {
            if (cfg.binary_coord < 0 || cfg.binary_coord >= ds.dim())
                throw std::invalid_argument("fit_feature_model: binary coordinate out of range");
            if (ds.dim() < 2)
                throw std::invalid_argument(
                    "fit_feature_model: conditional product needs a continuous block");
            ConditionalProductModel m;
            m.binary_coord = cfg.binary_coord;
            m.dim = ds.dim();
            std::array<std::vector<long>, 2> rows;
            for (long i = 0; i < X.rows(); ++i) {
                const double b = X(i, cfg.binary_coord);
                if (b != 0.0 && b != 1.0)
                    throw std::invalid_argument(
                        "fit_feature_model: binary coordinate must be 0 or 1");
                rows[b == 1.0 ? 1 : 0].push_back(i);
            }
            m.p_one = static_cast<double>(rows[1].size()) / static_cast<double>(X.rows());
            for (int bit = 0; bit < 2; ++bit) {
                if (rows[bit].empty()) continue;
                Eigen::MatrixXd sub(rows[bit].size(), ds.dim() - 1);
                for (std::size_t r = 0; r < rows[bit].size(); ++r) {
                    Eigen::Index c = 0;
                    for (int j = 0; j < ds.dim(); ++j)
                        if (j != cfg.binary_coord) sub(r, c++) = X(rows[bit][r], j);
                }
                EmConfig em = cfg.em;
                em.seed = mix_seed(cfg.em.seed, static_cast<std::uint64_t>(bit));
                m.slices[bit] =
                    detail::fit_continuous(sub, cfg.slice_kind, cfg.mixture_components, em);
            }
            return DensityModel(std::move(m));
        }
    }
    throw std::logic_error("fit_feature_model: unknown kind");
}

}  // namespace cpol
