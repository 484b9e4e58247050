#pragma once

#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "cpol/conformal.hpp"
#include "cpol/dataset.hpp"
#include "cpol/density.hpp"
#include "cpol/reducer.hpp"
#include "cpol/scenario.hpp"
#include "cpol/weights.hpp"

namespace cpol {

using nlohmann::json;

/// JSON dataset schema: an array of objects with keys `x`, `y` and `z`
/// (the feature array).
inline Dataset load_dataset_json(const std::string& path, CostRange cost_range,
                                 std::optional<int> declared_decision_count = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("load_dataset_json: cannot open '" + path + "'");
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("load_dataset_json: parse failure: ") + e.what());
    }
    if (!doc.is_array() || doc.empty())
        throw std::invalid_argument("load_dataset_json: expected a non-empty array of records");

    std::vector<int> xs;
    std::vector<double> ys;
    std::vector<double> zs;
    int dim = -1;
    for (const auto& rec : doc) {
        if (!rec.contains("x") || !rec.contains("y") || !rec.contains("z"))
            throw std::invalid_argument("load_dataset_json: record missing x, y or z");
        xs.push_back(rec.at("x").get<int>());
        ys.push_back(rec.at("y").get<double>());
        const auto& z = rec.at("z");
        if (!z.is_array()) throw std::invalid_argument("load_dataset_json: z must be an array");
        if (dim < 0) dim = static_cast<int>(z.size());
        if (static_cast<int>(z.size()) != dim)
            throw std::invalid_argument("load_dataset_json: feature vectors differ in length");
        for (const auto& v : z) zs.push_back(v.get<double>());
    }
    return Dataset(std::move(xs), std::move(ys), std::move(zs), dim, cost_range,
                   declared_decision_count);
}

namespace detail {

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const json& rows) {
    const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rows.at(i).at(j).get<double>();
    return m;
}

inline json vector_to_json(const Eigen::VectorXd& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

inline Eigen::VectorXd vector_from_json(const json& arr) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = arr.at(i).get<double>();
    return v;
}

inline json continuous_to_json(const ContinuousModel& m);
inline ContinuousModel continuous_from_json(const json& j);

inline json density_to_json(const DensityModel& m) {
    json j;
    switch (m.kind()) {
        case DensityModel::Kind::gaussian: {
            const auto& g = m.as<GaussianModel>();
            j["kind"] = "gaussian";
            j["mean"] = vector_to_json(g.mean());
            j["cov"] = matrix_to_json(g.covariance());
            break;
        }
        case DensityModel::Kind::gmm: {
            const auto& g = m.as<GmmModel>();
            j["kind"] = "gmm";
            j["weights"] = g.mixing();
            json comps = json::array();
            for (const auto& c : g.components()) {
                json cj;
                cj["mean"] = vector_to_json(c.mean());
                cj["cov"] = matrix_to_json(c.covariance());
                comps.push_back(std::move(cj));
            }
            j["components"] = std::move(comps);
            break;
        }
        case DensityModel::Kind::bernoulli: {
            j["kind"] = "bernoulli";
            j["probs"] = vector_to_json(m.as<BernoulliModel>().probs());
            break;
        }
        case DensityModel::Kind::conditional_product: {
            const auto& p = m.as<ConditionalProductModel>();
            j["kind"] = "product";
            j["binary_coord"] = p.binary_coord;
            j["p_one"] = p.p_one;
            j["dim"] = p.dim;
            for (int bit = 0; bit < 2; ++bit) {
                const std::string key = bit == 1 ? "slice1" : "slice0";
                if (p.slices[bit]) j[key] = continuous_to_json(*p.slices[bit]);
            }
            break;
        }
    }
    return j;
}

inline DensityModel density_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "gaussian")
        return DensityModel(
            GaussianModel(vector_from_json(j.at("mean")), matrix_from_json(j.at("cov"))));
    if (kind == "gmm") {
        std::vector<GaussianModel> comps;
        for (const auto& cj : j.at("components"))
            comps.emplace_back(vector_from_json(cj.at("mean")), matrix_from_json(cj.at("cov")));
        return DensityModel(GmmModel(j.at("weights").get<std::vector<double>>(), std::move(comps)));
    }
    if (kind == "bernoulli")
        return DensityModel(BernoulliModel(vector_from_json(j.at("probs"))));
    if (kind == "product") {
        ConditionalProductModel p;
        p.binary_coord = j.at("binary_coord").get<int>();
        p.p_one = j.at("p_one").get<double>();
        p.dim = j.at("dim").get<int>();
        if (j.contains("slice0")) p.slices[0] = continuous_from_json(j.at("slice0"));
        if (j.contains("slice1")) p.slices[1] = continuous_from_json(j.at("slice1"));
        return DensityModel(std::move(p));
    }
    throw std::invalid_argument("density_from_json: unknown kind '" + kind + "'");
}

inline json continuous_to_json(const ContinuousModel& m) {
    if (std::holds_alternative<GaussianModel>(m))
        return density_to_json(DensityModel(std::get<GaussianModel>(m)));
    return density_to_json(DensityModel(std::get<GmmModel>(m)));
}

inline ContinuousModel continuous_from_json(const json& j) {
    const DensityModel m = density_from_json(j);
    if (m.kind() == DensityModel::Kind::gaussian) return m.as<GaussianModel>();
    if (m.kind() == DensityModel::Kind::gmm) return m.as<GmmModel>();
    throw std::invalid_argument("continuous_from_json: slice must be gaussian or gmm");
}

}  // namespace detail

inline json reducer_to_json(const Reducer& r) {
    json j;
    j["mean"] = detail::vector_to_json(r.mean);
    j["projection"] = detail::matrix_to_json(r.projection);
    return j;
}

inline Reducer reducer_from_json(const json& j) {
    return {detail::vector_from_json(j.at("mean")), detail::matrix_from_json(j.at("projection"))};
}

inline json weight_model_to_json(const WeightModel& wm) {
    json j;
    j["marginal"] = wm.marginal.probs;
    j["mode"] = wm.mode == WeightMode::propensity ? "propensity" : "generative";
    j["feature_dim"] = wm.feature_dim;
    json arms = json::array();
    for (const auto& arm : wm.per_arm)
        arms.push_back(arm ? detail::density_to_json(*arm) : json(nullptr));
    j["arms"] = std::move(arms);
    if (wm.reducer) j["reducer"] = reducer_to_json(*wm.reducer);
    return j;
}

/// Rebuilds a weight model; a stored propensity mode reconstitutes the map
/// from the generative components via Bayes' rule.
inline WeightModel weight_model_from_json(const json& j) {
    WeightModel wm;
    wm.marginal.probs = j.at("marginal").get<std::vector<double>>();
    wm.feature_dim = j.at("feature_dim").get<int>();
    for (const auto& arm : j.at("arms")) {
        if (arm.is_null())
            wm.per_arm.emplace_back(std::nullopt);
        else
            wm.per_arm.emplace_back(detail::density_from_json(arm));
    }
    if (j.contains("reducer")) wm.reducer = reducer_from_json(j.at("reducer"));
    const std::string mode = j.at("mode").get<std::string>();
    if (mode == "propensity") {
        wm.mode = WeightMode::propensity;
        wm.propensity = bayes_propensity(wm);
    } else if (mode == "generative") {
        wm.mode = WeightMode::generative;
    } else {
        throw std::invalid_argument("weight_model_from_json: unknown mode '" + mode + "'");
    }
    return wm;
}

inline void save_weight_model(const WeightModel& wm, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("save_weight_model: cannot open '" + path + "'");
    out << weight_model_to_json(wm).dump(2) << "\n";
}

inline WeightModel load_weight_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("load_weight_model: cannot open '" + path + "'");
    json j;
    in >> j;
    return weight_model_from_json(j);
}

inline json limit_to_json(int decision, const ConformalLimit& limit) {
    json j;
    j["decision"] = decision;
    j["value"] = limit.value;
    j["saturated"] = limit.saturated;
    j["test_mass"] = limit.test_mass;
    return j;
}

inline json ihdp_truth_to_json(const IhdpTruth& truth) {
    json j;
    j["beta"] = detail::vector_to_json(truth.beta);
    j["omega"] = truth.omega;
    j["sigma0"] = truth.sigma0;
    j["sigma1"] = truth.sigma1;
    return j;
}

inline IhdpTruth ihdp_truth_from_json(const json& j) {
    IhdpTruth t;
    t.beta = detail::vector_from_json(j.at("beta"));
    t.omega = j.at("omega").get<double>();
    t.sigma0 = j.at("sigma0").get<double>();
    t.sigma1 = j.at("sigma1").get<double>();
    return t;
}

}  // namespace cpol
