#pragma once

#include "kglp/types.hpp"

#include <span>
#include <utility>
#include <vector>

namespace kglp {

// Boolean sparse matrix in CSR form; column ids are sorted within each row.
struct SparseBoolMatrix {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<std::int64_t> row_ptr;  // rows + 1 offsets into col_idx
    std::vector<std::int64_t> col_idx;

    std::int64_t nnz() const { return static_cast<std::int64_t>(col_idx.size()); }

    std::span<const std::int64_t> row(std::int64_t i) const {
        return {col_idx.data() + row_ptr[i],
                static_cast<std::size_t>(row_ptr[i + 1] - row_ptr[i])};
    }

    bool contains(std::int64_t i, std::int64_t j) const;

    // Builds from (row, col) pairs; sorts and deduplicates.
    static SparseBoolMatrix from_pairs(std::int64_t rows, std::int64_t cols,
                                       std::vector<std::pair<std::int64_t, std::int64_t>> pairs);
};

// Boolean product: entry (i, j) is set iff some k has a(i, k) and b(k, j).
SparseBoolMatrix bool_multiply(const SparseBoolMatrix& a, const SparseBoolMatrix& b);

// Number of positions set in both matrices (shapes must match).
std::int64_t intersection_count(const SparseBoolMatrix& a, const SparseBoolMatrix& b);

// Positions set in a but not in b, in row-major order.
std::vector<std::pair<std::int64_t, std::int64_t>> difference_pairs(const SparseBoolMatrix& a,
                                                                    const SparseBoolMatrix& b);

}  // namespace kglp
