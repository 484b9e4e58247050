// Command-line front end: scenario generation, weight fitting, cost limits,
// batch decisions and the Monte-Carlo evaluation harness.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cpol/cpol.hpp"

namespace {

cpol::CostRange parse_range(double lo, double hi) { return cpol::CostRange{lo, hi}; }

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        out.push_back(std::stod(tok));
    }
    if (out.empty()) throw std::invalid_argument("expected a comma-separated list of numbers");
    return out;
}

Eigen::MatrixXd load_contexts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open contexts file '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("empty contexts file");
    const auto header = cpol::detail::split_csv_line(line);
    const int dim = static_cast<int>(header.size());
    for (int j = 0; j < dim; ++j)
        if (header[j] != "z" + std::to_string(j + 1))
            throw std::invalid_argument("contexts header must be z1,...,zd");
    std::vector<double> values;
    long rows = 0;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = cpol::detail::split_csv_line(line);
        if (static_cast<int>(fields.size()) != dim)
            throw std::invalid_argument("contexts line " + std::to_string(line_no) +
                                        ": wrong field count");
        for (int j = 0; j < dim; ++j)
            values.push_back(cpol::detail::parse_double(fields[j], "feature", line_no));
        ++rows;
    }
    Eigen::MatrixXd m(rows, dim);
    for (long i = 0; i < rows; ++i)
        for (int j = 0; j < dim; ++j) m(i, j) = values[i * dim + j];
    return m;
}

void save_contexts(const Eigen::MatrixXd& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot open '" + path + "'");
    for (int j = 0; j < m.cols(); ++j) out << (j ? "," : "") << "z" << (j + 1);
    out << "\n";
    char buf[64];
    for (long i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
            out << (j ? "," : "") << buf;
        }
        out << "\n";
    }
}

std::ostream& open_output(std::ofstream& file, const std::string& path) {
    if (path.empty() || path == "-") return std::cout;
    file.open(path);
    if (!file) throw std::invalid_argument("cannot open output '" + path + "'");
    return file;
}

cpol::DensityModel::Kind parse_kind(const std::string& s) {
    if (s == "gaussian") return cpol::DensityModel::Kind::gaussian;
    if (s == "gmm") return cpol::DensityModel::Kind::gmm;
    if (s == "bernoulli") return cpol::DensityModel::Kind::bernoulli;
    if (s == "product") return cpol::DensityModel::Kind::conditional_product;
    throw std::invalid_argument("unknown model kind '" + s + "'");
}

struct CommonLimitArgs {
    double alpha = 0.2;
    double y_lo = 0.0;
    double y_hi = 0.0;
    int grid_points = 2001;
    std::string strategy = "grid-scan";
    bool conservative = false;
    std::uint64_t seed = 0;

    cpol::LimitOptions options() const {
        cpol::LimitOptions o;
        if (strategy == "interval-halving")
            o.strategy = cpol::LimitStrategy::interval_halving;
        else if (strategy != "grid-scan")
            throw std::invalid_argument("strategy must be grid-scan or interval-halving");
        o.conservative_test_mass = conservative;
        return o;
    }
};

int run(int argc, char** argv) {
    CLI::App app{"Robust decision policies with conformal cost limits"};
    app.require_subcommand(1);

    // ---- generate ----------------------------------------------------
    auto* gen = app.add_subcommand("generate", "draw a scenario dataset and write it as CSV");
    std::string gen_scenario = "synthetic";
    std::string gen_out;
    std::string gen_test_out;
    std::string gen_truth_out;
    long gen_n = 200;
    long gen_n_test = 147;
    std::uint64_t gen_seed = 0;
    double gen_sigma0 = -1.0, gen_sigma1 = -1.0;
    double gen_treated_fraction = 0.186;
    bool gen_no_clip = false;
    gen->add_option("--scenario", gen_scenario, "synthetic | ihdp")->capture_default_str();
    gen->add_option("--out", gen_out, "output dataset CSV")->required();
    gen->add_option("--n", gen_n, "records (synthetic) / training records (ihdp)")
        ->capture_default_str();
    gen->add_option("--n-test", gen_n_test, "held-out contexts (ihdp)")->capture_default_str();
    gen->add_option("--seed", gen_seed, "random seed")->capture_default_str();
    gen->add_option("--sigma0", gen_sigma0, "untreated outcome dispersion");
    gen->add_option("--sigma1", gen_sigma1, "treated outcome dispersion");
    gen->add_option("--treated-fraction", gen_treated_fraction,
                    "randomized treated share (ihdp)")
        ->capture_default_str();
    gen->add_flag("--no-clip", gen_no_clip, "disable cost clipping (synthetic)");
    gen->add_option("--test-out", gen_test_out, "held-out contexts CSV (ihdp)");
    gen->add_option("--truth", gen_truth_out, "outcome-model truth JSON (ihdp)");

    // ---- fit-weights -------------------------------------------------
    auto* fit = app.add_subcommand("fit-weights", "fit the generative weight model");
    std::string fit_data, fit_out;
    std::string fit_kind = "gaussian";
    std::string fit_mode = "generative";
    int fit_k = 1;
    int fit_binary_coord = -1;
    std::string fit_slice_kind = "gaussian";
    int fit_reduce = 0;
    std::uint64_t fit_seed = 0;
    int fit_em_max_iter = 200;
    double fit_em_tol = 1e-6;
    double fit_cov_floor = 1e-6;
    fit->add_option("--data", fit_data, "dataset CSV")->required();
    fit->add_option("--out", fit_out, "model JSON path")->required();
    fit->add_option("--kind", fit_kind, "gaussian | gmm | bernoulli | product")
        ->capture_default_str();
    fit->add_option("--K", fit_k, "mixture components")->capture_default_str();
    fit->add_option("--binary-coord", fit_binary_coord,
                    "binary coordinate index (product kind, 0-based)");
    fit->add_option("--slice-kind", fit_slice_kind, "continuous slice kind for product")
        ->capture_default_str();
    fit->add_option("--reduce", fit_reduce, "PCA feature dimension (0 = no reduction)")
        ->capture_default_str();
    fit->add_option("--mode", fit_mode, "generative | propensity")->capture_default_str();
    fit->add_option("--seed", fit_seed, "random seed")->capture_default_str();
    fit->add_option("--em-max-iter", fit_em_max_iter, "EM iteration cap")->capture_default_str();
    fit->add_option("--em-tol", fit_em_tol, "EM mean log-likelihood tolerance")
        ->capture_default_str();
    fit->add_option("--cov-floor", fit_cov_floor, "covariance diagonal floor")
        ->capture_default_str();

    // ---- limit -------------------------------------------------------
    auto* lim = app.add_subcommand("limit", "conformal cost limit for one decision and context");
    std::string lim_data, lim_model, lim_context, lim_out;
    int lim_decision = 0;
    CommonLimitArgs lim_args;
    lim->add_option("--data", lim_data, "dataset CSV")->required();
    lim->add_option("--model", lim_model, "weight model JSON")->required();
    lim->add_option("--decision", lim_decision, "decision id")->required();
    lim->add_option("--context", lim_context, "feature vector, comma separated")->required();
    lim->add_option("--alpha", lim_args.alpha, "miscoverage level")->capture_default_str();
    lim->add_option("--y-lo", lim_args.y_lo, "cost range lower bound")->required();
    lim->add_option("--y-hi", lim_args.y_hi, "cost range upper bound")->required();
    lim->add_option("--grid-points", lim_args.grid_points, "cost grid resolution")
        ->capture_default_str();
    lim->add_option("--strategy", lim_args.strategy, "grid-scan | interval-halving")
        ->capture_default_str();
    lim->add_flag("--conservative-test-mass", lim_args.conservative,
                  "place the test point's mass at +infinity");
    lim->add_option("--out", lim_out, "output path (default stdout)");

    // ---- policy ------------------------------------------------------
    auto* pol = app.add_subcommand("policy", "robust decisions for a batch of contexts");
    std::string pol_data, pol_model, pol_contexts, pol_out;
    CommonLimitArgs pol_args;
    pol->add_option("--data", pol_data, "dataset CSV")->required();
    pol->add_option("--model", pol_model, "weight model JSON")->required();
    pol->add_option("--contexts", pol_contexts, "contexts CSV (header z1,...,zd)")->required();
    pol->add_option("--alpha", pol_args.alpha, "miscoverage level")->capture_default_str();
    pol->add_option("--y-lo", pol_args.y_lo, "cost range lower bound")->required();
    pol->add_option("--y-hi", pol_args.y_hi, "cost range upper bound")->required();
    pol->add_option("--grid-points", pol_args.grid_points, "cost grid resolution")
        ->capture_default_str();
    pol->add_option("--seed", pol_args.seed, "tie-break seed")->capture_default_str();
    pol->add_option("--strategy", pol_args.strategy, "grid-scan | interval-halving")
        ->capture_default_str();
    pol->add_flag("--conservative-test-mass", pol_args.conservative,
                  "place the test point's mass at +infinity");
    pol->add_option("--out", pol_out, "output path (default stdout)");

    // ---- ccdf --------------------------------------------------------
    auto* ccdf = app.add_subcommand("ccdf", "cost exceedance curve of a policy under a scenario");
    std::string ccdf_scenario = "synthetic";
    std::string ccdf_policy = "robust";
    std::string ccdf_out;
    long ccdf_draws = 10000;
    long ccdf_train_n = 200;
    std::uint64_t ccdf_seed = 0;
    double ccdf_alpha = 0.2;
    int ccdf_grid_points = 2001;
    double ccdf_sigma0 = -1.0, ccdf_sigma1 = -1.0;
    ccdf->add_option("--scenario", ccdf_scenario, "synthetic | ihdp")->capture_default_str();
    ccdf->add_option("--policy", ccdf_policy, "robust | linear | past | treat-all | treat-none")
        ->capture_default_str();
    ccdf->add_option("--alpha", ccdf_alpha, "miscoverage level for the robust policy")
        ->capture_default_str();
    ccdf->add_option("--draws", ccdf_draws, "evaluation draws")->capture_default_str();
    ccdf->add_option("--train-n", ccdf_train_n, "training records")->capture_default_str();
    ccdf->add_option("--seed", ccdf_seed, "random seed")->capture_default_str();
    ccdf->add_option("--grid-points", ccdf_grid_points, "cost grid resolution")
        ->capture_default_str();
    ccdf->add_option("--sigma0", ccdf_sigma0, "untreated outcome dispersion");
    ccdf->add_option("--sigma1", ccdf_sigma1, "treated outcome dispersion");
    ccdf->add_option("--out", ccdf_out, "output path (default stdout)");

    // ---- coverage ----------------------------------------------------
    auto* cov = app.add_subcommand("coverage", "Monte-Carlo accuracy of the certificates");
    std::string cov_scenario = "synthetic";
    std::string cov_alphas = "0.05,0.1,0.15,0.2,0.3,0.4,0.5";
    std::string cov_out;
    long cov_runs = 300;
    long cov_n = 200;
    std::uint64_t cov_seed = 0;
    int cov_grid_points = 2001;
    double cov_sigma0 = -1.0, cov_sigma1 = -1.0;
    cov->add_option("--scenario", cov_scenario, "synthetic | ihdp")->capture_default_str();
    cov->add_option("--alphas", cov_alphas, "comma-separated miscoverage levels")
        ->capture_default_str();
    cov->add_option("--runs", cov_runs, "Monte-Carlo replications")->capture_default_str();
    cov->add_option("--n", cov_n, "training records per replication")->capture_default_str();
    cov->add_option("--seed", cov_seed, "random seed")->capture_default_str();
    cov->add_option("--grid-points", cov_grid_points, "cost grid resolution")
        ->capture_default_str();
    cov->add_option("--sigma0", cov_sigma0, "untreated outcome dispersion");
    cov->add_option("--sigma1", cov_sigma1, "treated outcome dispersion");
    cov->add_option("--out", cov_out, "output path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    if (*gen) {
        if (gen_scenario == "synthetic") {
            cpol::SyntheticConfig cfg;
            cfg.n = gen_n;
            cfg.seed = gen_seed;
            if (gen_sigma0 > 0.0) cfg.sigma0 = gen_sigma0;
            if (gen_sigma1 > 0.0) cfg.sigma1 = gen_sigma1;
            cfg.clip_costs = !gen_no_clip;
            const auto sample = cpol::SyntheticScenario(cfg).sample();
            cpol::save_dataset(sample.data, gen_out);
            std::cerr << "wrote " << sample.data.size() << " records (" << sample.clipped
                      << " clipped costs)\n";
        } else if (gen_scenario == "ihdp") {
            cpol::IhdpStyleConfig cfg;
            cfg.n_train = gen_n == 200 ? 600 : gen_n;  // scenario default
            cfg.n_test = gen_n_test;
            cfg.seed = gen_seed;
            if (gen_sigma0 > 0.0) cfg.sigma0 = gen_sigma0;
            if (gen_sigma1 > 0.0) cfg.sigma1 = gen_sigma1;
            cfg.treated_fraction = gen_treated_fraction;
            const auto sample = cpol::generate_ihdp_style(cfg);
            cpol::save_dataset(sample.train, gen_out);
            if (!gen_test_out.empty()) save_contexts(sample.test_contexts, gen_test_out);
            if (!gen_truth_out.empty()) {
                std::ofstream t(gen_truth_out);
                if (!t) throw std::invalid_argument("cannot open '" + gen_truth_out + "'");
                t << cpol::ihdp_truth_to_json(sample.truth).dump(2) << "\n";
            }
            std::cerr << "wrote " << sample.train.size() << " training records, "
                      << sample.test_contexts.rows() << " held-out contexts\n";
        } else {
            throw std::invalid_argument("unknown scenario '" + gen_scenario + "'");
        }
        return 0;
    }

    if (*fit) {
        const cpol::Dataset raw =
            cpol::load_dataset(fit_data, parse_range(-1e300, 1e300));
        cpol::WeightFitConfig cfg;
        cfg.feature.kind = parse_kind(fit_kind);
        cfg.feature.mixture_components = fit_k;
        cfg.feature.binary_coord = fit_binary_coord;
        cfg.feature.slice_kind = parse_kind(fit_slice_kind);
        cfg.feature.em.seed = fit_seed;
        cfg.feature.em.max_iterations = fit_em_max_iter;
        cfg.feature.em.tol = fit_em_tol;
        cfg.feature.em.covariance_floor = fit_cov_floor;
        if (fit_mode == "propensity")
            cfg.mode = cpol::WeightMode::propensity;
        else if (fit_mode != "generative")
            throw std::invalid_argument("mode must be generative or propensity");

        cpol::WeightModel wm;
        if (fit_reduce > 0) {
            const cpol::Reducer reducer = cpol::fit_reducer(raw.feature_matrix(), fit_reduce);
            wm = cpol::fit_weight_model(cpol::reduce_dataset(raw, reducer), cfg);
            wm.reducer = reducer;
        } else {
            wm = cpol::fit_weight_model(raw, cfg);
        }
        cpol::save_weight_model(wm, fit_out);
        std::cerr << "fitted weight model over " << raw.size() << " records, "
                  << raw.decision_count() << " decisions\n";
        return 0;
    }

    if (*lim) {
        const cpol::CostRange range = parse_range(lim_args.y_lo, lim_args.y_hi);
        const cpol::Dataset ds = cpol::load_dataset(lim_data, range);
        const cpol::WeightModel wm = cpol::load_weight_model(lim_model);
        const auto vals = parse_double_list(lim_context);
        Eigen::VectorXd z(vals.size());
        for (std::size_t i = 0; i < vals.size(); ++i) z[i] = vals[i];
        const auto grid = cpol::CostGrid::from_range(range, lim_args.grid_points);
        const auto limit = cpol::conformal_limit(ds, wm, lim_decision, z, lim_args.alpha, grid,
                                                 lim_args.options());
        std::ofstream file;
        open_output(file, lim_out) << cpol::limit_to_json(lim_decision, limit).dump() << "\n";
        return 0;
    }

    if (*pol) {
        const cpol::CostRange range = parse_range(pol_args.y_lo, pol_args.y_hi);
        const cpol::Dataset ds = cpol::load_dataset(pol_data, range);
        const cpol::WeightModel wm = cpol::load_weight_model(pol_model);
        const Eigen::MatrixXd contexts = load_contexts(pol_contexts);
        const auto grid = cpol::CostGrid::from_range(range, pol_args.grid_points);
        const cpol::RobustPolicy policy(ds, wm, pol_args.alpha, grid, pol_args.seed,
                                        pol_args.options());
        std::ofstream file;
        auto& out = open_output(file, pol_out);
        out << "decision,certificate,tied\n";
        char buf[64];
        for (long i = 0; i < contexts.rows(); ++i) {
            const auto d = policy.decide(contexts.row(i).transpose(), i);
            std::snprintf(buf, sizeof(buf), "%.17g", d.certificate);
            out << d.decision << ',' << buf << ',' << (d.tied ? 1 : 0) << "\n";
        }
        return 0;
    }

    if (*ccdf) {
        std::vector<double> costs;
        double tail_quantile = 0.0;
        if (ccdf_scenario == "synthetic") {
            cpol::SyntheticConfig cfg;
            cfg.n = ccdf_train_n;
            cfg.seed = cpol::mix_seed(ccdf_seed, 0);
            if (ccdf_sigma0 > 0.0) cfg.sigma0 = ccdf_sigma0;
            if (ccdf_sigma1 > 0.0) cfg.sigma1 = ccdf_sigma1;
            const cpol::SyntheticScenario scenario(cfg);
            const cpol::Dataset ds = scenario.sample().data;

            cpol::PolicyFn policy_fn;
            std::optional<cpol::RobustPolicy> robust;
            if (ccdf_policy == "robust") {
                const auto wm = cpol::fit_synthetic_weight_model(ds, cpol::mix_seed(ccdf_seed, 1));
                robust.emplace(ds, wm, ccdf_alpha,
                               cpol::CostGrid::from_range(scenario.cost_range(),
                                                          ccdf_grid_points),
                               cpol::mix_seed(ccdf_seed, 2));
                policy_fn = cpol::make_policy_fn(*robust);
            } else if (ccdf_policy == "linear") {
                policy_fn = cpol::make_policy_fn(cpol::fit_linear_baseline(ds));
            } else if (ccdf_policy == "past") {
                policy_fn = cpol::make_past_policy_fn(scenario);
            } else if (ccdf_policy == "treat-all") {
                policy_fn = cpol::make_constant_policy_fn(1);
            } else if (ccdf_policy == "treat-none") {
                policy_fn = cpol::make_constant_policy_fn(0);
            } else {
                throw std::invalid_argument("unknown policy '" + ccdf_policy + "'");
            }
            const auto eval = cpol::evaluate_policy(
                policy_fn,
                [&](int x, const Eigen::VectorXd& z, cpol::Rng& rng) {
                    return scenario.draw_cost(x, z, rng);
                },
                [&](cpol::Rng& rng) { return scenario.draw_context(rng); }, ccdf_draws,
                cpol::mix_seed(ccdf_seed, 3), ccdf_alpha);
            costs = eval.costs;
            tail_quantile = eval.tail_quantile;

            std::ofstream file;
            auto& out = open_output(file, ccdf_out);
            out << "threshold,prob\n";
            for (std::size_t i = 0; i < eval.ccdf.thresholds.size(); ++i)
                out << eval.ccdf.thresholds[i] << ',' << eval.ccdf.probabilities[i] << "\n";
        } else if (ccdf_scenario == "ihdp") {
            cpol::IhdpStyleConfig cfg;
            cfg.seed = cpol::mix_seed(ccdf_seed, 0);
            if (ccdf_sigma0 > 0.0) cfg.sigma0 = ccdf_sigma0;
            if (ccdf_sigma1 > 0.0) cfg.sigma1 = ccdf_sigma1;
            const auto sample = cpol::generate_ihdp_style(cfg);

            cpol::PolicyFn policy_fn;
            std::optional<cpol::RobustPolicy> robust;
            if (ccdf_policy == "robust") {
                const auto wm =
                    cpol::fit_ihdp_weight_model(sample.train, cpol::mix_seed(ccdf_seed, 1));
                robust.emplace(sample.train, wm, ccdf_alpha,
                               cpol::CostGrid::from_range(sample.train.cost_range(),
                                                          ccdf_grid_points),
                               cpol::mix_seed(ccdf_seed, 2));
                policy_fn = cpol::make_policy_fn(*robust);
            } else if (ccdf_policy == "linear") {
                policy_fn = cpol::make_policy_fn(cpol::fit_linear_baseline(sample.train));
            } else if (ccdf_policy == "past") {
                const double q = cfg.treated_fraction;
                policy_fn = [q](const Eigen::VectorXd&, long, cpol::Rng& rng) {
                    return rng.bernoulli(q) ? 1 : 0;
                };
            } else if (ccdf_policy == "treat-all") {
                policy_fn = cpol::make_constant_policy_fn(1);
            } else if (ccdf_policy == "treat-none") {
                policy_fn = cpol::make_constant_policy_fn(0);
            } else {
                throw std::invalid_argument("unknown policy '" + ccdf_policy + "'");
            }
            const Eigen::MatrixXd& contexts = sample.test_contexts;
            const auto eval = cpol::evaluate_policy(
                policy_fn,
                [&](int x, const Eigen::VectorXd& z, cpol::Rng& rng) {
                    return sample.truth.draw_cost(x, z, rng);
                },
                [&](cpol::Rng& rng) -> Eigen::VectorXd {
                    return contexts.row(static_cast<long>(rng.below(contexts.rows())))
                        .transpose();
                },
                ccdf_draws, cpol::mix_seed(ccdf_seed, 3), ccdf_alpha);
            costs = eval.costs;
            tail_quantile = eval.tail_quantile;

            std::ofstream file;
            auto& out = open_output(file, ccdf_out);
            out << "threshold,prob\n";
            for (std::size_t i = 0; i < eval.ccdf.thresholds.size(); ++i)
                out << eval.ccdf.thresholds[i] << ',' << eval.ccdf.probabilities[i] << "\n";
        } else {
            throw std::invalid_argument("unknown scenario '" + ccdf_scenario + "'");
        }
        std::cerr << "evaluated " << costs.size() << " draws; (1-alpha) cost quantile "
                  << tail_quantile << "\n";
        return 0;
    }

    if (*cov) {
        const auto alphas = parse_double_list(cov_alphas);
        cpol::CoverageTable table;
        if (cov_scenario == "synthetic") {
            cpol::SyntheticConfig cfg;
            cfg.n = cov_n;
            if (cov_sigma0 > 0.0) cfg.sigma0 = cov_sigma0;
            if (cov_sigma1 > 0.0) cfg.sigma1 = cov_sigma1;
            table = cpol::coverage_experiment(cfg, alphas, cov_runs, cov_seed, cov_grid_points);
        } else if (cov_scenario == "ihdp") {
            cpol::IhdpStyleConfig cfg;
            if (cov_sigma0 > 0.0) cfg.sigma0 = cov_sigma0;
            if (cov_sigma1 > 0.0) cfg.sigma1 = cov_sigma1;
            table = cpol::coverage_experiment(cfg, alphas, cov_runs, cov_seed, cov_grid_points);
        } else {
            throw std::invalid_argument("unknown scenario '" + cov_scenario + "'");
        }
        std::ofstream file;
        auto& out = open_output(file, cov_out);
        out << "alpha,exceedance,runs,stderr\n";
        for (const auto& row : table.rows)
            out << row.alpha << ',' << row.exceedance << ',' << row.runs << ','
                << row.std_error << "\n";
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
