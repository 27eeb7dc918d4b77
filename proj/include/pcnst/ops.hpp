#pragma once

#include "pcnst/graph.hpp"
#include "pcnst/matrix.hpp"

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace pcnst {

inline constexpr double kDefaultLeakySlope = 0.2;
inline constexpr double kBatchNormEpsilon = 1e-5;
/// Weight kept on the old running statistic at each training update.
inline constexpr double kBatchNormMomentum = 0.9;

enum class Mode { train, infer };

enum class GramNormalization {
    none,       ///< G = FᵀF
    per_point,  ///< G = FᵀF / N
};

/// Running statistics of one batch-norm layer (1 x m each). Non-differentiable state.
struct BatchNormState {
    Matrix running_mean;
    Matrix running_var;
    bool initialized = false;

    static BatchNormState zeros(Eigen::Index width);
};

/// Row ranges [offsets[s], offsets[s+1]) partitioning a stacked matrix into
/// independent point sets.
class Segments {
public:
    Segments() = default;
    explicit Segments(std::vector<Eigen::Index> offsets);

    static Segments single(Eigen::Index rows);
    static Segments from_sizes(std::span<const Eigen::Index> sizes);

    [[nodiscard]] std::size_t count() const { return offsets_.size() - 1; }
    [[nodiscard]] Eigen::Index begin(std::size_t s) const { return offsets_[s]; }
    [[nodiscard]] Eigen::Index end(std::size_t s) const { return offsets_[s + 1]; }
    [[nodiscard]] Eigen::Index total_rows() const { return offsets_.back(); }

private:
    std::vector<Eigen::Index> offsets_{0};
};

// Value-level kernels.

Matrix leaky_relu(const Matrix& x, double slope = kDefaultLeakySlope);
Matrix rowwise_max(const Matrix& x);
Matrix concat_broadcast(const Matrix& f, const Matrix& g);
Matrix gram(const Matrix& f, GramNormalization normalization);
/// Applies batch norm. In train mode the running statistics are updated.
Matrix batch_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, BatchNormState& state,
                  Mode mode);
Matrix softmax_rows(const Matrix& logits);

// Differentiable operations. All inputs must live on the same graph.

Var matmul(Var a, Var w);
/// Product with a fixed matrix. `w` is held by reference and must outlive the graph.
Var matmul(Var a, const Matrix& w);
/// x * scale + shift per column, with fixed 1 x m scale and shift.
Var affine_columns(Var x, const Matrix& scale, const Matrix& shift);
/// x + row, with `row` (1 x m) broadcast to every row of x.
Var add_row(Var x, Var row);
Var add(Var a, Var b);
Var scale(Var x, double factor);
/// Elementwise product.
Var hadamard(Var a, Var b);
/// Sum of all entries as a 1x1.
Var sum(Var x);
/// Derivative at exactly 0 is 1.
Var leaky_relu(Var x, double slope = kDefaultLeakySlope);
/// In train mode gradients flow through the batch statistics; running
/// statistics are updated but never differentiated.
Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state, Mode mode);
/// Column-wise max of each segment, one output row per segment. Ties route the
/// gradient to the lowest row index.
Var segment_max(Var x, const Segments& segments);
Var rowwise_max(Var x);
/// Row r of segment s becomes [f_r | g_s].
Var segment_concat_broadcast(Var f, Var g, const Segments& segments);
Var concat_broadcast(Var f, Var g);
Var concat_cols(Var a, Var b);
Var gram(Var f, GramNormalization normalization);
/// Squared Frobenius norm of a - b, as a 1x1.
Var squared_distance(Var a, Var b);
/// Inverted dropout: surviving entries are scaled by 1/keep.
Var dropout(Var x, double keep, std::mt19937_64& rng);
/// Mean cross-entropy of softmax(logits) against integer labels.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

}  // namespace pcnst
