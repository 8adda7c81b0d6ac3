#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace mlsq {

/// Exponent tuple of a tensor basis function, or a (spatial, level) index
/// of the adaptive lattice. Entries are non-negative; the length is fixed
/// at construction.
class multi_index {
public:
    multi_index() = default;

    explicit multi_index(std::vector<int> entries) : entries_(std::move(entries)) {
        for (int e : entries_)
            if (e < 0) throw std::invalid_argument("multi_index: negative entry");
    }

    multi_index(std::initializer_list<int> entries)
        : multi_index(std::vector<int>(entries)) {}

    static multi_index zero(std::size_t dim) {
        return multi_index(std::vector<int>(dim, 0));
    }

    std::size_t dim() const { return entries_.size(); }
    int operator[](std::size_t i) const { return entries_[i]; }

    const std::vector<int>& entries() const { return entries_; }

    int degree() const {
        int s = 0;
        for (int e : entries_) s += e;
        return s;
    }

    /// Copy with entry i shifted by delta; returns false if that would go
    /// negative.
    bool shifted(std::size_t i, int delta, multi_index& out) const {
        if (entries_[i] + delta < 0) return false;
        out = *this;
        out.entries_[i] += delta;
        return true;
    }

    bool operator==(const multi_index& o) const { return entries_ == o.entries_; }
    bool operator!=(const multi_index& o) const { return !(*this == o); }

    /// Lexicographic order; the canonical iteration order everywhere.
    bool operator<(const multi_index& o) const {
        return std::lexicographical_compare(entries_.begin(), entries_.end(),
                                            o.entries_.begin(), o.entries_.end());
    }

    bool leq_componentwise(const multi_index& o) const {
        if (dim() != o.dim()) return false;
        for (std::size_t i = 0; i < dim(); ++i)
            if (entries_[i] > o.entries_[i]) return false;
        return true;
    }

private:
    std::vector<int> entries_;
};

struct multi_index_hash {
    std::size_t operator()(const multi_index& m) const {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (int e : m.entries()) {
            h ^= static_cast<std::uint64_t>(e) + 0x9E3779B97F4A7C15ULL;
            h *= 0x100000001B3ULL;
        }
        return static_cast<std::size_t>(h ^ (m.dim() << 1));
    }
};

using index_hash_set = std::unordered_set<multi_index, multi_index_hash>;

/// True iff every componentwise-smaller index of a member is itself a
/// member. Throws if the members do not share one dimension.
inline bool is_downward_closed(const std::vector<multi_index>& members) {
    if (members.empty()) return true;
    std::size_t d = members.front().dim();
    index_hash_set present;
    for (const auto& m : members) {
        if (m.dim() != d)
            throw std::invalid_argument("is_downward_closed: mixed dimensions");
        present.insert(m);
    }
    multi_index pred;
    for (const auto& m : members)
        for (std::size_t i = 0; i < d; ++i)
            if (m.shifted(i, -1, pred) && !present.count(pred)) return false;
    return true;
}

/// A finite downward closed set of multi-indices. Immutable from the
/// outside except through admissible insertions, which preserve the
/// closure property by construction.
class downward_closed_set {
public:
    downward_closed_set() = default;

    explicit downward_closed_set(std::vector<multi_index> members) {
        if (!is_downward_closed(members))
            throw std::invalid_argument("downward_closed_set: not downward closed");
        for (auto& m : members) set_.insert(m);
        sorted_ = std::move(members);
        std::sort(sorted_.begin(), sorted_.end());
        sorted_.erase(std::unique(sorted_.begin(), sorted_.end()), sorted_.end());
    }

    std::size_t size() const { return sorted_.size(); }
    bool empty() const { return sorted_.empty(); }

    std::size_t dim() const {
        return sorted_.empty() ? 0 : sorted_.front().dim();
    }

    bool contains(const multi_index& m) const { return set_.count(m) > 0; }

    /// Members in lexicographic order.
    const std::vector<multi_index>& members() const { return sorted_; }

    /// True iff adding idx keeps the set downward closed. An empty set
    /// admits only the zero index.
    bool admits(const multi_index& idx) const {
        if (contains(idx)) return false;
        if (empty()) return idx == multi_index::zero(idx.dim());
        if (idx.dim() != dim()) return false;
        multi_index pred;
        for (std::size_t i = 0; i < idx.dim(); ++i)
            if (idx.shifted(i, -1, pred) && !contains(pred)) return false;
        return true;
    }

    /// Inserts an admissible index. Throws if the insertion would break
    /// downward closedness.
    void insert_admissible(const multi_index& idx) {
        if (!admits(idx))
            throw std::invalid_argument("downward_closed_set: index not admissible");
        set_.insert(idx);
        sorted_.insert(std::upper_bound(sorted_.begin(), sorted_.end(), idx), idx);
    }

private:
    index_hash_set set_;
    std::vector<multi_index> sorted_;
};

/// All exponents with |eta|_1 <= degree in the given dimension.
inline downward_closed_set total_degree_set(std::size_t d, int degree) {
    if (d < 1) throw std::invalid_argument("total_degree_set: d must be >= 1");
    if (degree < 0) throw std::invalid_argument("total_degree_set: negative degree");
    std::vector<multi_index> out;
    std::vector<int> cur(d, 0);
    // depth-first enumeration in lexicographic order
    auto rec = [&](auto&& self, std::size_t pos, int budget) -> void {
        if (pos + 1 == d) {
            for (int e = 0; e <= budget; ++e) {
                cur[pos] = e;
                out.emplace_back(cur);
            }
            cur[pos] = 0;
            return;
        }
        for (int e = 0; e <= budget; ++e) {
            cur[pos] = e;
            self(self, pos + 1, budget - e);
        }
        cur[pos] = 0;
    };
    rec(rec, 0, degree);
    return downward_closed_set(std::move(out));
}

/// Exponents covered by the dyadic block with index k: the Cartesian
/// product of the ranges [2^{k_j}-1, 2^{k_j+1}-1) per coordinate. The
/// block itself is not downward closed; unions over a downward closed set
/// of block indices are.
inline std::vector<multi_index> block_indices(const multi_index& k) {
    std::size_t d = k.dim();
    std::vector<int> lo(d), hi(d);
    for (std::size_t j = 0; j < d; ++j) {
        lo[j] = (1 << k[j]) - 1;
        hi[j] = (1 << (k[j] + 1)) - 1;
    }
    std::vector<multi_index> out;
    std::vector<int> cur(d);
    auto rec = [&](auto&& self, std::size_t pos) -> void {
        if (pos == d) {
            out.emplace_back(cur);
            return;
        }
        for (int e = lo[pos]; e < hi[pos]; ++e) {
            cur[pos] = e;
            self(self, pos + 1);
        }
    };
    rec(rec, 0);
    return out;
}

/// Number of exponents in the block of index k, i.e. 2^{|k|_1}.
inline std::size_t block_size(const multi_index& k) {
    return std::size_t{1} << k.degree();
}

/// Indices not in I whose insertion keeps I downward closed. For an empty
/// set of the given dimension only the zero index is admissible.
inline std::vector<multi_index> admissible_set(const downward_closed_set& I,
                                               std::size_t dim_if_empty = 0) {
    std::vector<multi_index> out;
    if (I.empty()) {
        if (dim_if_empty > 0) out.push_back(multi_index::zero(dim_if_empty));
        return out;
    }
    std::set<multi_index> candidates;
    multi_index succ;
    for (const auto& m : I.members())
        for (std::size_t j = 0; j < m.dim(); ++j)
            if (m.shifted(j, +1, succ) && I.admits(succ)) candidates.insert(succ);
    out.assign(candidates.begin(), candidates.end());
    return out;
}

/// Members of I at distance one from idx in a single coordinate (either
/// direction). idx itself need not belong to I.
inline std::vector<multi_index> neighbors(const multi_index& idx,
                                          const downward_closed_set& I) {
    std::vector<multi_index> out;
    multi_index n;
    for (std::size_t j = 0; j < idx.dim(); ++j) {
        if (idx.shifted(j, -1, n) && I.contains(n)) out.push_back(n);
        if (idx.shifted(j, +1, n) && I.contains(n)) out.push_back(n);
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Newline-delimited tuple dump used in result files.
inline void write_index_set(std::ostream& os, const std::vector<multi_index>& set) {
    for (const auto& m : set) {
        for (std::size_t j = 0; j < m.dim(); ++j) {
            if (j) os << ' ';
            os << m[j];
        }
        os << '\n';
    }
}

inline std::vector<multi_index> read_index_set(std::istream& is) {
    std::vector<multi_index> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<int> entries;
        int e;
        while (ls >> e) entries.push_back(e);
        out.emplace_back(std::move(entries));
    }
    return out;
}

} // namespace mlsq
