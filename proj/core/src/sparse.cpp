#include "kglp/sparse.hpp"

#include <algorithm>

namespace kglp {

bool SparseBoolMatrix::contains(std::int64_t i, std::int64_t j) const {
    if (i < 0 || i >= rows) return false;
    const auto r = row(i);
    return std::binary_search(r.begin(), r.end(), j);
}

SparseBoolMatrix SparseBoolMatrix::from_pairs(
    std::int64_t rows, std::int64_t cols,
    std::vector<std::pair<std::int64_t, std::int64_t>> pairs) {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

    SparseBoolMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.row_ptr.assign(static_cast<std::size_t>(rows + 1), 0);
    m.col_idx.reserve(pairs.size());
    std::int64_t current = 0;
    for (const auto& [r, c] : pairs) {
        while (current < r) m.row_ptr[static_cast<std::size_t>(++current)] = m.nnz();
        m.col_idx.push_back(c);
    }
    while (current < rows) m.row_ptr[static_cast<std::size_t>(++current)] = m.nnz();
    return m;
}

SparseBoolMatrix bool_multiply(const SparseBoolMatrix& a, const SparseBoolMatrix& b) {
    if (a.cols != b.rows) throw ValidationError("bool_multiply: inner dimensions differ");

    SparseBoolMatrix out;
    out.rows = a.rows;
    out.cols = b.cols;
    out.row_ptr.assign(static_cast<std::size_t>(a.rows + 1), 0);

    // Classic CSR SpGEMM with a stamp array marking columns seen in this row.
    std::vector<std::int64_t> stamp(static_cast<std::size_t>(b.cols), -1);
    std::vector<std::int64_t> found;
    for (std::int64_t i = 0; i < a.rows; ++i) {
        found.clear();
        for (std::int64_t k : a.row(i)) {
            for (std::int64_t j : b.row(k)) {
                if (stamp[static_cast<std::size_t>(j)] != i) {
                    stamp[static_cast<std::size_t>(j)] = i;
                    found.push_back(j);
                }
            }
        }
        std::sort(found.begin(), found.end());
        out.col_idx.insert(out.col_idx.end(), found.begin(), found.end());
        out.row_ptr[static_cast<std::size_t>(i + 1)] = out.nnz();
    }
    return out;
}

std::int64_t intersection_count(const SparseBoolMatrix& a, const SparseBoolMatrix& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw ValidationError("intersection_count: shapes differ");
    std::int64_t count = 0;
    for (std::int64_t i = 0; i < a.rows; ++i) {
        const auto ra = a.row(i);
        const auto rb = b.row(i);
        std::size_t x = 0, y = 0;
        while (x < ra.size() && y < rb.size()) {
            if (ra[x] < rb[y]) {
                ++x;
            } else if (rb[y] < ra[x]) {
                ++y;
            } else {
                ++count;
                ++x;
                ++y;
            }
        }
    }
    return count;
}

std::vector<std::pair<std::int64_t, std::int64_t>> difference_pairs(const SparseBoolMatrix& a,
                                                                    const SparseBoolMatrix& b) {
    if (a.rows != b.rows || a.cols != b.cols) throw ValidationError("difference_pairs: shapes differ");
    std::vector<std::pair<std::int64_t, std::int64_t>> out;
    for (std::int64_t i = 0; i < a.rows; ++i) {
        const auto ra = a.row(i);
        const auto rb = b.row(i);
        std::size_t y = 0;
        for (std::int64_t j : ra) {
            while (y < rb.size() && rb[y] < j) ++y;
            if (y < rb.size() && rb[y] == j) continue;
            out.emplace_back(i, j);
        }
    }
    return out;
}

}  // namespace kglp
