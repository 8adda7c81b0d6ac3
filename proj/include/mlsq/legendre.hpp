#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "mlsq/multi_index.hpp"

namespace mlsq {

/// Value of the L^2([0,1])-orthonormal Legendre polynomial of degree n,
/// computed by the three-term recurrence on the shifted variable 2x-1 and
/// normalized by sqrt(2n+1).
inline double legendre_eval(int n, double x) {
    if (x < 0.0 || x > 1.0) throw std::domain_error("legendre_eval: x outside [0,1]");
    double t = 2.0 * x - 1.0;
    double p_prev = 1.0;
    if (n == 0) return 1.0;
    double p = t;
    for (int k = 2; k <= n; ++k) {
        double p_next = ((2 * k - 1) * t * p - (k - 1) * p_prev) / k;
        p_prev = p;
        p = p_next;
    }
    return std::sqrt(2.0 * n + 1.0) * p;
}

/// Fills out[0..max_degree] with orthonormal values at x; one recurrence
/// sweep instead of max_degree separate ones.
inline void legendre_eval_all(int max_degree, double x, std::span<double> out) {
    if (x < 0.0 || x > 1.0) throw std::domain_error("legendre_eval_all: x outside [0,1]");
    double t = 2.0 * x - 1.0;
    out[0] = 1.0;
    if (max_degree == 0) return;
    double p_prev = 1.0, p = t;
    out[1] = std::sqrt(3.0) * p;
    for (int k = 2; k <= max_degree; ++k) {
        double p_next = ((2 * k - 1) * t * p - (k - 1) * p_prev) / k;
        p_prev = p;
        p = p_next;
        out[k] = std::sqrt(2.0 * k + 1.0) * p;
    }
}

/// Product of univariate orthonormal evaluations.
inline double tensor_eval(const multi_index& eta, std::span<const double> y) {
    if (eta.dim() != y.size())
        throw std::invalid_argument("tensor_eval: dimension mismatch");
    double v = 1.0;
    for (std::size_t j = 0; j < y.size(); ++j) v *= legendre_eval(eta[j], y[j]);
    return v;
}

/// Enumerated tensor Legendre basis of a polynomial space. The exponent
/// order is lexicographic and stable, so coefficient vectors are
/// comparable across runs. Evaluation of the whole basis at one point
/// shares per-coordinate univariate tables.
class tensor_basis {
public:
    tensor_basis() = default;

    explicit tensor_basis(std::vector<multi_index> exponents)
        : exps_(std::move(exponents)) {
        std::sort(exps_.begin(), exps_.end());
        for (std::size_t i = 0; i + 1 < exps_.size(); ++i)
            if (exps_[i] == exps_[i + 1])
                throw std::invalid_argument("tensor_basis: duplicate exponent");
        if (!exps_.empty()) {
            d_ = exps_.front().dim();
            max_deg_.assign(d_, 0);
            for (const auto& e : exps_) {
                if (e.dim() != d_)
                    throw std::invalid_argument("tensor_basis: mixed dimensions");
                for (std::size_t j = 0; j < d_; ++j)
                    max_deg_[j] = std::max(max_deg_[j], e[j]);
            }
        }
        for (std::size_t i = 0; i < exps_.size(); ++i) position_[exps_[i]] = i;
    }

    explicit tensor_basis(const downward_closed_set& space)
        : tensor_basis(space.members()) {}

    std::size_t size() const { return exps_.size(); }
    std::size_t dim() const { return d_; }
    const std::vector<multi_index>& exponents() const { return exps_; }
    const std::vector<int>& max_degrees() const { return max_deg_; }

    /// Position of an exponent in the enumeration, or npos.
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t position_of(const multi_index& e) const {
        auto it = position_.find(e);
        return it == position_.end() ? npos : it->second;
    }

    std::size_t table_stride() const {
        std::size_t s = 0;
        for (int m : max_deg_) s += static_cast<std::size_t>(m) + 1;
        return s;
    }

    /// Fills the concatenated univariate tables for one point; layout is
    /// coordinate-major, [P_0(y_0)..P_m0(y_0), P_0(y_1)..].
    void fill_tables(std::span<const double> y, std::span<double> tables) const {
        std::size_t off = 0;
        for (std::size_t j = 0; j < d_; ++j) {
            std::size_t len = static_cast<std::size_t>(max_deg_[j]) + 1;
            legendre_eval_all(max_deg_[j], y[j], tables.subspan(off, len));
            off += len;
        }
    }

    /// Basis values at one point from previously filled tables.
    void eval_from_tables(std::span<const double> tables, std::span<double> out) const {
        std::vector<std::size_t> offsets(d_);
        std::size_t off = 0;
        for (std::size_t j = 0; j < d_; ++j) {
            offsets[j] = off;
            off += static_cast<std::size_t>(max_deg_[j]) + 1;
        }
        for (std::size_t i = 0; i < exps_.size(); ++i) {
            double v = 1.0;
            const auto& e = exps_[i];
            for (std::size_t j = 0; j < d_; ++j) v *= tables[offsets[j] + e[j]];
            out[i] = v;
        }
    }

    /// Basis values at one point.
    void eval_all(std::span<const double> y, std::span<double> out) const {
        if (y.size() != d_) throw std::invalid_argument("tensor_basis: dimension mismatch");
        std::vector<double> tables(table_stride());
        fill_tables(y, tables);
        eval_from_tables(tables, out);
    }

    /// Sum of squared basis values at one point.
    double sum_of_squares(std::span<const double> y) const {
        std::vector<double> vals(size());
        eval_all(y, vals);
        double s = 0.0;
        for (double v : vals) s += v * v;
        return s;
    }

private:
    std::vector<multi_index> exps_;
    std::size_t d_ = 0;
    std::vector<int> max_deg_;
    std::unordered_map<multi_index, std::size_t, multi_index_hash> position_;
};

} // namespace mlsq
