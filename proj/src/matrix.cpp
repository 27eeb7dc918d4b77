#include "pcnst/matrix.hpp"

#include "pcnst/error.hpp"

#include <algorithm>
#include <array>

namespace pcnst {

namespace {

constexpr Eigen::Index kRowBlock = 4;
constexpr Eigen::Index kColTile = 256;

// Computes kRowBlock consecutive output rows. The accumulation order over k is
// fixed and identical for every row in the block.
void row_block_product(const double* a, Eigen::Index lda, const double* w, Eigen::Index inner,
                       Eigen::Index cols, double* out, Eigen::Index ldo) {
    std::array<std::array<double, kColTile>, kRowBlock> acc;
    for (Eigen::Index j0 = 0; j0 < cols; j0 += kColTile) {
        const Eigen::Index jn = std::min(kColTile, cols - j0);
        for (auto& row : acc) {
            std::fill_n(row.begin(), jn, 0.0);
        }
        for (Eigen::Index k = 0; k < inner; ++k) {
            const double* wk = w + k * cols + j0;
            const double a0 = a[k];
            const double a1 = a[lda + k];
            const double a2 = a[2 * lda + k];
            const double a3 = a[3 * lda + k];
            for (Eigen::Index j = 0; j < jn; ++j) {
                const double x = wk[j];
                acc[0][j] += a0 * x;
                acc[1][j] += a1 * x;
                acc[2][j] += a2 * x;
                acc[3][j] += a3 * x;
            }
        }
        for (Eigen::Index r = 0; r < kRowBlock; ++r) {
            std::copy_n(acc[r].begin(), jn, out + r * ldo + j0);
        }
    }
}

}  // namespace

std::string shape_string(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

bool all_finite(const Matrix& m) {
    return m.allFinite();
}

void require_finite(const Matrix& m, std::string_view what) {
    if (!m.allFinite()) {
        throw NumericError("non-finite values in " + std::string(what));
    }
}

Matrix matmul(const Matrix& a, const Matrix& w) {
    if (a.cols() != w.rows()) {
        throw ShapeError("matmul: inner dimensions disagree (" + shape_string(a) + " times " +
                         shape_string(w) + ")");
    }
    const Eigen::Index rows = a.rows();
    const Eigen::Index inner = a.cols();
    const Eigen::Index cols = w.cols();
    Matrix out(rows, cols);
    if (rows == 0 || cols == 0) {
        return out;
    }
    if (inner == 0) {
        out.setZero();
        return out;
    }

    Eigen::Index i = 0;
    for (; i + kRowBlock <= rows; i += kRowBlock) {
        row_block_product(a.data() + i * inner, inner, w.data(), inner, cols,
                          out.data() + i * cols, cols);
    }
    if (i < rows) {
        // Ragged tail goes through the same kernel on a zero-padded copy.
        Matrix padded_a = Matrix::Zero(kRowBlock, inner);
        padded_a.topRows(rows - i) = a.bottomRows(rows - i);
        Matrix padded_out(kRowBlock, cols);
        row_block_product(padded_a.data(), inner, w.data(), inner, cols, padded_out.data(), cols);
        out.bottomRows(rows - i) = padded_out.topRows(rows - i);
    }
    return out;
}

Matrix column_sums(const Eigen::Ref<const Matrix>& m) {
    Eigen::Array<double, 1, Eigen::Dynamic> acc = Eigen::Array<double, 1, Eigen::Dynamic>::Zero(m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        acc += m.row(r).array();
    }
    return acc.matrix();
}

}  // namespace pcnst
