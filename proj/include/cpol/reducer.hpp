#pragma once

#include <Eigen/Core>
#include <Eigen/SVD>

#include <stdexcept>

#include "cpol/dataset.hpp"

namespace cpol {

/// Linear map from raw covariates to low-dimensional features: centering
/// followed by projection onto the top principal directions. Rows of the
/// projection are orthonormal.
struct Reducer {
    Eigen::VectorXd mean;
    Eigen::MatrixXd projection;  // output_dim x input_dim

    int input_dim() const { return static_cast<int>(projection.cols()); }
    int output_dim() const { return static_cast<int>(projection.rows()); }

    Eigen::VectorXd apply(const Eigen::VectorXd& raw) const {
        if (raw.size() != mean.size())
            throw std::invalid_argument("Reducer::apply: dimension mismatch");
        return projection * (raw - mean);
    }

    Eigen::VectorXd reconstruct(const Eigen::VectorXd& features) const {
        return mean + projection.transpose() * features;
    }
};

/// PCA: center by column means, keep the top `output_dim` right singular
/// vectors. Throws when the data rank is below `output_dim`.
inline Reducer fit_reducer(const Eigen::MatrixXd& raw, int output_dim) {
    if (output_dim < 1) throw std::invalid_argument("fit_reducer: output dimension must be >= 1");
    if (raw.rows() < output_dim)
        throw std::invalid_argument("fit_reducer: need at least output_dim rows");
    if (raw.cols() < output_dim)
        throw std::invalid_argument("fit_reducer: output dimension exceeds input dimension");

    Reducer r;
    r.mean = raw.colwise().mean();
    const Eigen::MatrixXd centered = raw.rowwise() - r.mean.transpose();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv[output_dim - 1] <= 1e-10 * std::max(1.0, sv[0]))
        throw std::runtime_error("fit_reducer: data rank below requested dimension");

    r.projection = svd.matrixV().leftCols(output_dim).transpose();
    // Sign convention: largest-magnitude entry of each direction positive.
    for (int i = 0; i < output_dim; ++i) {
        Eigen::Index j;
        r.projection.row(i).cwiseAbs().maxCoeff(&j);
        if (r.projection(i, j) < 0.0) r.projection.row(i) *= -1.0;
    }
    return r;
}

/// Maps every feature row of `ds` through the reducer.
inline Dataset reduce_dataset(const Dataset& ds, const Reducer& r) {
    if (ds.dim() != r.input_dim())
        throw std::invalid_argument("reduce_dataset: dimension mismatch");
    std::vector<double> features;
    features.reserve(static_cast<std::size_t>(ds.size()) * r.output_dim());
    for (long i = 0; i < ds.size(); ++i) {
        const Eigen::VectorXd f = r.apply(ds.feature(i));
        for (int j = 0; j < r.output_dim(); ++j) features.push_back(f[j]);
    }
    return Dataset(ds.decisions(), ds.costs(), std::move(features), r.output_dim(),
                   ds.cost_range(), ds.decision_count());
}

}  // namespace cpol
