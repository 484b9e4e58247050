#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpol {

/// Declared cost support. The upper end doubles as the fallback limit for
/// decisions with no usable data, so it must be finite.
struct CostRange {
    double lo;
    double hi;

    void check() const {
        if (!std::isfinite(lo) || !std::isfinite(hi))
            throw std::invalid_argument("CostRange: bounds must be finite");
        if (!(lo < hi)) throw std::invalid_argument("CostRange: lo must be < hi");
    }
    double span() const { return hi - lo; }
};

/// Logged observational data: per record a decision id, a scalar cost and a
/// feature vector. Immutable after construction; safe for concurrent reads.
class Dataset {
public:
    Dataset(std::vector<int> decisions, std::vector<double> costs,
            std::vector<double> features, int dim, CostRange cost_range,
            std::optional<int> declared_decision_count = std::nullopt)
        : decisions_(std::move(decisions)),
          costs_(std::move(costs)),
          features_(std::move(features)),
          dim_(dim),
          cost_range_(cost_range) {
        cost_range_.check();
        if (dim_ <= 0) throw std::invalid_argument("Dataset: feature dimension must be positive");
        const std::size_t n = decisions_.size();
        if (costs_.size() != n)
            throw std::invalid_argument("Dataset: decision and cost counts differ");
        if (features_.size() != n * static_cast<std::size_t>(dim_))
            throw std::invalid_argument("Dataset: feature vectors do not all have the declared length");
        int max_id = -1;
        for (const int x : decisions_) {
            if (x < 0) throw std::invalid_argument("Dataset: decision ids must be non-negative");
            max_id = std::max(max_id, x);
        }
        decision_count_ = declared_decision_count ? *declared_decision_count : max_id + 1;
        if (decision_count_ < 1) decision_count_ = 1;
        if (max_id >= decision_count_)
            throw std::invalid_argument("Dataset: decision id out of range");
        for (const double y : costs_)
            if (!std::isfinite(y)) throw std::invalid_argument("Dataset: costs must be finite");
        for (const double v : features_)
            if (!std::isfinite(v))
                throw std::invalid_argument("Dataset: missing or non-finite feature value");
    }

    long size() const { return static_cast<long>(decisions_.size()); }
    int dim() const { return dim_; }
    int decision_count() const { return decision_count_; }
    const CostRange& cost_range() const { return cost_range_; }

    int decision(long i) const { return decisions_[static_cast<std::size_t>(i)]; }
    double cost(long i) const { return costs_[static_cast<std::size_t>(i)]; }
    Eigen::Map<const Eigen::VectorXd> feature(long i) const {
        return {features_.data() + static_cast<std::size_t>(i) * dim_, dim_};
    }

    const std::vector<int>& decisions() const { return decisions_; }
    const std::vector<double>& costs() const { return costs_; }

    /// Row-major n x dim copy of the feature block for decision k
    /// (all rows when k < 0).
    Eigen::MatrixXd feature_matrix(int k = -1) const {
        long rows = 0;
        for (long i = 0; i < size(); ++i)
            if (k < 0 || decision(i) == k) ++rows;
        Eigen::MatrixXd out(rows, dim_);
        long r = 0;
        for (long i = 0; i < size(); ++i)
            if (k < 0 || decision(i) == k) out.row(r++) = feature(i).transpose();
        return out;
    }

private:
    std::vector<int> decisions_;
    std::vector<double> costs_;
    std::vector<double> features_;
    int dim_;
    int decision_count_ = 0;
    CostRange cost_range_;
};

/// Exact tallies over the records; never throws.
struct ValidationReport {
    std::vector<long> arm_counts;
    long out_of_range_costs = 0;
    long dimension_mismatches = 0;
};

inline ValidationReport validate_dataset(const Dataset& ds, const CostRange& range) {
    ValidationReport report;
    report.arm_counts.assign(ds.decision_count(), 0);
    for (long i = 0; i < ds.size(); ++i) {
        ++report.arm_counts[ds.decision(i)];
        const double y = ds.cost(i);
        if (y < range.lo || y > range.hi) ++report.out_of_range_costs;
    }
    // Dimension mismatches cannot survive construction; rows from a file with
    // ragged lengths are rejected by the loader. The count stays for the
    // report schema.
    return report;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (const char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double parse_double(const std::string& s, const char* what, long line_no) {
    if (s.empty())
        throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": missing " + what);
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": non-numeric " +
                                    what + " '" + s + "'");
    }
    if (pos != s.size())
        throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": non-numeric " +
                                    what + " '" + s + "'");
    return v;
}

}  // namespace detail

/// Reads the `x,y,z1,...,zd` CSV schema. The feature dimension is inferred
/// from the header; rows are kept in file order.
inline Dataset load_dataset(const std::string& path, CostRange cost_range,
                            std::optional<int> declared_decision_count = std::nullopt) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("load_dataset: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("load_dataset: empty file");
    const auto header = detail::split_csv_line(line);
    if (header.size() < 3 || header[0] != "x" || header[1] != "y")
        throw std::invalid_argument("load_dataset: header must be x,y,z1,...,zd");
    const int dim = static_cast<int>(header.size()) - 2;
    for (int j = 0; j < dim; ++j)
        if (header[2 + j] != "z" + std::to_string(j + 1))
            throw std::invalid_argument("load_dataset: unexpected header column '" + header[2 + j] +
                                        "'");

    std::vector<int> xs;
    std::vector<double> ys;
    std::vector<double> zs;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = detail::split_csv_line(line);
        if (static_cast<int>(fields.size()) != dim + 2)
            throw std::invalid_argument("CSV line " + std::to_string(line_no) + ": expected " +
                                        std::to_string(dim + 2) + " fields, got " +
                                        std::to_string(fields.size()));
        const double xv = detail::parse_double(fields[0], "decision", line_no);
        if (xv != std::floor(xv) || xv < 0)
            throw std::invalid_argument("CSV line " + std::to_string(line_no) +
                                        ": decision must be a non-negative integer");
        xs.push_back(static_cast<int>(xv));
        ys.push_back(detail::parse_double(fields[1], "cost", line_no));
        for (int j = 0; j < dim; ++j)
            zs.push_back(detail::parse_double(fields[2 + j], "feature", line_no));
    }
    if (xs.empty()) throw std::invalid_argument("load_dataset: no records");
    return Dataset(std::move(xs), std::move(ys), std::move(zs), dim, cost_range,
                   declared_decision_count);
}

/// Writes the CSV schema with round-trip precision.
inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("save_dataset: cannot open '" + path + "'");
    out << "x,y";
    for (int j = 0; j < ds.dim(); ++j) out << ",z" << (j + 1);
    out << "\n";
    char buf[64];
    for (long i = 0; i < ds.size(); ++i) {
        out << ds.decision(i);
        std::snprintf(buf, sizeof(buf), "%.17g", ds.cost(i));
        out << ',' << buf;
        const auto z = ds.feature(i);
        for (int j = 0; j < ds.dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", z[j]);
            out << ',' << buf;
        }
        out << "\n";
    }
}

}  // namespace cpol
