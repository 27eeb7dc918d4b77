#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <string_view>

namespace pcnst {

/// Dense row-major matrix of 64-bit reals. Point sets are stored one point per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// "RxC", used in error messages.
std::string shape_string(const Matrix& m);

bool all_finite(const Matrix& m);

/// Throws NumericError naming `what` if any entry is NaN or Inf.
void require_finite(const Matrix& m, std::string_view what);

/// Row-independent matrix product: every output row is computed by the same
/// instruction sequence regardless of its position, so permuting the rows of
/// `a` permutes the rows of the result bit-for-bit.
Matrix matmul(const Matrix& a, const Matrix& w);

/// 1 x cols sums, accumulated row by row (cache friendly for row-major data).
Matrix column_sums(const Eigen::Ref<const Matrix>& m);

}  // namespace pcnst
