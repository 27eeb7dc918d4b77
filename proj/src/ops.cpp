#include "pcnst/ops.hpp"

#include "pcnst/error.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <utility>

namespace pcnst {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shapes differ (" + shape_string(a) + " vs " +
                         shape_string(b) + ")");
    }
}

void require_row_vector(const Matrix& v, Eigen::Index width, const char* op, const char* name) {
    if (v.rows() != 1 || v.cols() != width) {
        throw ShapeError(std::string(op) + ": " + name + " must be 1x" + std::to_string(width) +
                         ", got " + shape_string(v));
    }
}

struct NormalizedBatch {
    Matrix output;
    Matrix normalized;  // x̂
    Matrix inv_std;     // 1 x m
};

NormalizedBatch batch_norm_impl(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                                BatchNormState& state, Mode mode) {
    const Eigen::Index n = x.rows();
    const Eigen::Index m = x.cols();
    require_row_vector(gamma, m, "batch_norm", "gamma");
    require_row_vector(beta, m, "batch_norm", "beta");

    Matrix mean;
    Matrix var;
    if (mode == Mode::train) {
        if (n < 2) {
            throw ShapeError("batch_norm: train mode needs at least 2 rows, got " +
                             std::to_string(n));
        }
        mean = column_sums(x) / static_cast<double>(n);
        var = column_sums((x.rowwise() - mean.row(0)).array().square().matrix()) /
              static_cast<double>(n);
        const Matrix unbiased = var * (static_cast<double>(n) / static_cast<double>(n - 1));
        if (!state.initialized) {
            state.running_mean = mean;
            state.running_var = unbiased;
            state.initialized = true;
        } else {
            require_row_vector(state.running_mean, m, "batch_norm", "running mean");
            state.running_mean =
                kBatchNormMomentum * state.running_mean + (1.0 - kBatchNormMomentum) * mean;
            state.running_var =
                kBatchNormMomentum * state.running_var + (1.0 - kBatchNormMomentum) * unbiased;
        }
    } else {
        if (!state.initialized) {
            throw ConfigError("batch_norm: infer mode requires initialized running statistics");
        }
        require_row_vector(state.running_mean, m, "batch_norm", "running mean");
        require_row_vector(state.running_var, m, "batch_norm", "running var");
        mean = state.running_mean;
        var = state.running_var;
    }

    NormalizedBatch out;
    out.inv_std = (var.array() + kBatchNormEpsilon).rsqrt().matrix();
    out.normalized = (x.rowwise() - mean.row(0)).array().rowwise() * out.inv_std.row(0).array();
    out.output = (out.normalized.array().rowwise() * gamma.row(0).array()).rowwise() +
                 beta.row(0).array();
    return out;
}

}  // namespace

BatchNormState BatchNormState::zeros(Eigen::Index width) {
    BatchNormState state;
    state.running_mean = Matrix::Zero(1, width);
    state.running_var = Matrix::Ones(1, width);
    state.initialized = true;
    return state;
}

Segments::Segments(std::vector<Eigen::Index> offsets) : offsets_(std::move(offsets)) {
    if (offsets_.size() < 2 || offsets_.front() != 0) {
        throw ShapeError("segments: offsets must start at 0 and describe at least one segment");
    }
    for (std::size_t i = 1; i < offsets_.size(); ++i) {
        if (offsets_[i] <= offsets_[i - 1]) {
            throw ShapeError("segments: every segment must be non-empty");
        }
    }
}

Segments Segments::single(Eigen::Index rows) {
    return Segments({0, rows});
}

Segments Segments::from_sizes(std::span<const Eigen::Index> sizes) {
    std::vector<Eigen::Index> offsets{0};
    for (Eigen::Index size : sizes) {
        offsets.push_back(offsets.back() + size);
    }
    return Segments(std::move(offsets));
}

// ---------------------------------------------------------------------------
// Value-level kernels

Matrix leaky_relu(const Matrix& x, double slope) {
    // max(v, slope * v) is the leaky ReLU for any slope in (0, 1].
    return x.cwiseMax(slope * x);
}

Matrix rowwise_max(const Matrix& x) {
    if (x.rows() == 0) {
        throw ShapeError("rowwise_max: empty input");
    }
    Matrix out = x.row(0);
    for (Eigen::Index r = 1; r < x.rows(); ++r) {
        out = out.cwiseMax(x.row(r));
    }
    return out;
}

Matrix concat_broadcast(const Matrix& f, const Matrix& g) {
    if (g.rows() != 1 || g.cols() != f.cols()) {
        throw ShapeError("concat_broadcast: global row must be 1x" + std::to_string(f.cols()) +
                         ", got " + shape_string(g));
    }
    Matrix out(f.rows(), 2 * f.cols());
    out.leftCols(f.cols()) = f;
    out.rightCols(f.cols()) = g.replicate(f.rows(), 1);
    return out;
}

Matrix gram(const Matrix& f, GramNormalization normalization) {
    if (f.rows() == 0) {
        throw ShapeError("gram: empty input");
    }
    const Eigen::Index m = f.cols();
    Matrix g = Matrix::Zero(m, m);
    g.selfadjointView<Eigen::Lower>().rankUpdate(f.transpose());
    // Mirror the lower triangle so the result is exactly symmetric.
    g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
    if (normalization == GramNormalization::per_point) {
        g /= static_cast<double>(f.rows());
    }
    return g;
}

Matrix batch_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta, BatchNormState& state,
                  Mode mode) {
    return batch_norm_impl(x, gamma, beta, state, mode).output;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double top = logits.row(r).maxCoeff();
        out.row(r) = (logits.row(r).array() - top).exp();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Differentiable operations

Var matmul(Var a, Var w) {
    Graph& g = a.graph();
    return g.record(pcnst::matmul(a.value(), w.value()), {a, w},
                    [a, w](Graph& graph, const Matrix& up) {
                        if (graph.requires_grad(a)) {
                            graph.accumulate(a, up * w.value().transpose());
                        }
                        if (graph.requires_grad(w)) {
                            graph.accumulate(w, a.value().transpose() * up);
                        }
                    });
}

Var matmul(Var a, const Matrix& w) {
    return a.graph().record(pcnst::matmul(a.value(), w), {a},
                            [a, &w](Graph& graph, const Matrix& up) {
                                graph.accumulate(a, up * w.transpose());
                            });
}

Var affine_columns(Var x, const Matrix& scale, const Matrix& shift) {
    require_row_vector(scale, x.cols(), "affine_columns", "scale");
    require_row_vector(shift, x.cols(), "affine_columns", "shift");
    Matrix out = (x.value().array().rowwise() * scale.row(0).array()).rowwise() +
                 shift.row(0).array();
    return x.graph().record(std::move(out), {x}, [x, scale](Graph& graph, const Matrix& up) {
        graph.accumulate(x, (up.array().rowwise() * scale.row(0).array()).matrix());
    });
}

Var add_row(Var x, Var row) {
    require_row_vector(row.value(), x.cols(), "add_row", "row");
    Matrix out = x.value().rowwise() + row.value().row(0);
    return x.graph().record(std::move(out), {x, row}, [x, row](Graph& graph, const Matrix& up) {
        graph.accumulate(x, up);
        if (graph.requires_grad(row)) {
            graph.accumulate(row, column_sums(up));
        }
    });
}

Var add(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "add");
    return a.graph().record(a.value() + b.value(), {a, b}, [a, b](Graph& graph, const Matrix& up) {
        graph.accumulate(a, up);
        graph.accumulate(b, up);
    });
}

Var scale(Var x, double factor) {
    return x.graph().record(x.value() * factor, {x}, [x, factor](Graph& graph, const Matrix& up) {
        graph.accumulate(x, up * factor);
    });
}

Var hadamard(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "hadamard");
    Matrix out = a.value().cwiseProduct(b.value());
    return a.graph().record(std::move(out), {a, b}, [a, b](Graph& graph, const Matrix& up) {
        if (graph.requires_grad(a)) {
            graph.accumulate(a, up.cwiseProduct(b.value()));
        }
        if (graph.requires_grad(b)) {
            graph.accumulate(b, up.cwiseProduct(a.value()));
        }
    });
}

Var sum(Var x) {
    Matrix out(1, 1);
    out(0, 0) = x.value().sum();
    return x.graph().record(std::move(out), {x}, [x](Graph& graph, const Matrix& up) {
        graph.accumulate(x, Matrix::Constant(x.rows(), x.cols(), up(0, 0)));
    });
}

Var leaky_relu(Var x, double slope) {
    if (!(slope > 0.0 && slope < 1.0)) {
        throw ConfigError("leaky_relu: slope must lie in (0, 1)");
    }
    return x.graph().record(leaky_relu(x.value(), slope), {x},
                            [x, slope](Graph& graph, const Matrix& up) {
                                const Matrix slopes = x.value().unaryExpr(
                                    [slope](double v) { return v >= 0.0 ? 1.0 : slope; });
                                graph.accumulate(x, up.cwiseProduct(slopes));
                            });
}

Var batch_norm(Var x, Var gamma, Var beta, BatchNormState& state, Mode mode) {
    auto cache = std::make_shared<NormalizedBatch>(
        batch_norm_impl(x.value(), gamma.value(), beta.value(), state, mode));
    Matrix out = cache->output;
    cache->output.resize(0, 0);
    return x.graph().record(
        std::move(out), {x, gamma, beta}, [x, gamma, beta, mode, cache](Graph& graph,
                                                                        const Matrix& up) {
            const Matrix& xhat = cache->normalized;
            if (graph.requires_grad(gamma)) {
                graph.accumulate(gamma, column_sums(up.cwiseProduct(xhat)));
            }
            if (graph.requires_grad(beta)) {
                graph.accumulate(beta, column_sums(up));
            }
            if (!graph.requires_grad(x)) {
                return;
            }
            const auto scale_row = (gamma.value().array() * cache->inv_std.array()).eval();
            if (mode == Mode::infer) {
                graph.accumulate(x, (up.array().rowwise() * scale_row.row(0)).matrix());
                return;
            }
            const double n = static_cast<double>(up.rows());
            const Eigen::Array<double, 1, Eigen::Dynamic> up_mean = column_sums(up).array() / n;
            const Eigen::Array<double, 1, Eigen::Dynamic> cross_mean =
                column_sums(up.cwiseProduct(xhat)).array() / n;
            Matrix dx = ((up.array().rowwise() - up_mean) -
                         xhat.array().rowwise() * cross_mean)
                            .rowwise() *
                        scale_row.row(0);
            graph.accumulate(x, dx);
        });
}

Var segment_max(Var x, const Segments& segments) {
    const Matrix& in = x.value();
    if (segments.total_rows() != in.rows()) {
        throw ShapeError("segment_max: segments cover " + std::to_string(segments.total_rows()) +
                         " rows but input has " + std::to_string(in.rows()));
    }
    const auto count = static_cast<Eigen::Index>(segments.count());
    Matrix out(count, in.cols());
    auto argmax = std::make_shared<std::vector<Eigen::Index>>(count * in.cols());
    const Eigen::Index cols = in.cols();
    for (Eigen::Index s = 0; s < count; ++s) {
        // Row-major sweep; strict comparison keeps the lowest row on ties.
        const Eigen::Index first = segments.begin(s);
        out.row(s) = in.row(first);
        Eigen::Index* best = argmax->data() + s * cols;
        std::fill(best, best + cols, first);
        for (Eigen::Index r = first + 1; r < segments.end(s); ++r) {
            const double* row = in.data() + r * cols;
            double* top = out.data() + s * cols;
            for (Eigen::Index c = 0; c < cols; ++c) {
                if (row[c] > top[c]) {
                    top[c] = row[c];
                    best[c] = r;
                }
            }
        }
    }
    return x.graph().record(std::move(out), {x}, [x, argmax, count](Graph& graph,
                                                                    const Matrix& up) {
        Matrix dx = Matrix::Zero(x.rows(), x.cols());
        const Eigen::Index cols = x.cols();
        for (Eigen::Index s = 0; s < count; ++s) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                dx((*argmax)[s * cols + c], c) += up(s, c);
            }
        }
        graph.accumulate(x, dx);
    });
}

Var rowwise_max(Var x) {
    if (x.rows() == 0) {
        throw ShapeError("rowwise_max: empty input");
    }
    return segment_max(x, Segments::single(x.rows()));
}

Var segment_concat_broadcast(Var f, Var g, const Segments& segments) {
    const Matrix& fv = f.value();
    const Matrix& gv = g.value();
    if (gv.cols() != fv.cols() || gv.rows() != static_cast<Eigen::Index>(segments.count())) {
        throw ShapeError("concat_broadcast: global rows " + shape_string(gv) +
                         " do not match features " + shape_string(fv));
    }
    if (segments.total_rows() != fv.rows()) {
        throw ShapeError("concat_broadcast: segments do not cover the feature rows");
    }
    const Eigen::Index m = fv.cols();
    Matrix out(fv.rows(), 2 * m);
    out.leftCols(m) = fv;
    for (std::size_t s = 0; s < segments.count(); ++s) {
        const Eigen::Index begin = segments.begin(s);
        const Eigen::Index len = segments.end(s) - begin;
        out.block(begin, m, len, m) = gv.row(static_cast<Eigen::Index>(s)).replicate(len, 1);
    }
    return f.graph().record(std::move(out), {f, g}, [f, g, segments, m](Graph& graph,
                                                                        const Matrix& up) {
        if (graph.requires_grad(f)) {
            graph.accumulate(f, up.leftCols(m));
        }
        if (graph.requires_grad(g)) {
            Matrix dg(static_cast<Eigen::Index>(segments.count()), m);
            for (std::size_t s = 0; s < segments.count(); ++s) {
                const Eigen::Index begin = segments.begin(s);
                dg.row(static_cast<Eigen::Index>(s)) =
                    column_sums(up.block(begin, m, segments.end(s) - begin, m));
            }
            graph.accumulate(g, dg);
        }
    });
}

Var concat_broadcast(Var f, Var g) {
    return segment_concat_broadcast(f, g, Segments::single(f.rows()));
}

Var concat_cols(Var a, Var b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("concat_cols: row counts differ (" + shape_string(a.value()) + " vs " +
                         shape_string(b.value()) + ")");
    }
    Matrix out(a.rows(), a.cols() + b.cols());
    out.leftCols(a.cols()) = a.value();
    out.rightCols(b.cols()) = b.value();
    return a.graph().record(std::move(out), {a, b}, [a, b](Graph& graph, const Matrix& up) {
        if (graph.requires_grad(a)) {
            graph.accumulate(a, up.leftCols(a.cols()));
        }
        if (graph.requires_grad(b)) {
            graph.accumulate(b, up.rightCols(b.cols()));
        }
    });
}

Var gram(Var f, GramNormalization normalization) {
    return f.graph().record(gram(f.value(), normalization), {f},
                            [f, normalization](Graph& graph, const Matrix& up) {
                                Matrix sym = up + up.transpose();
                                Matrix df = f.value() * sym;
                                if (normalization == GramNormalization::per_point) {
                                    df /= static_cast<double>(f.rows());
                                }
                                graph.accumulate(f, df);
                            });
}

Var squared_distance(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "squared_distance");
    auto diff = std::make_shared<Matrix>(a.value() - b.value());
    Matrix out(1, 1);
    out(0, 0) = diff->squaredNorm();
    return a.graph().record(std::move(out), {a, b}, [a, b, diff](Graph& graph, const Matrix& up) {
        const Matrix d = (2.0 * up(0, 0)) * *diff;
        if (graph.requires_grad(a)) {
            graph.accumulate(a, d);
        }
        if (graph.requires_grad(b)) {
            graph.accumulate(b, -d);
        }
    });
}

Var dropout(Var x, double keep, std::mt19937_64& rng) {
    if (!(keep > 0.0 && keep <= 1.0)) {
        throw ConfigError("dropout: keep ratio must lie in (0, 1]");
    }
    if (keep == 1.0) {
        return x;
    }
    std::bernoulli_distribution survive(keep);
    auto mask = std::make_shared<Matrix>(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < mask->size(); ++i) {
        mask->data()[i] = survive(rng) ? 1.0 / keep : 0.0;
    }
    return x.graph().record(x.value().cwiseProduct(*mask), {x},
                            [x, mask](Graph& graph, const Matrix& up) {
                                graph.accumulate(x, up.cwiseProduct(*mask));
                            });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
    const Matrix& z = logits.value();
    if (static_cast<Eigen::Index>(labels.size()) != z.rows() || z.rows() == 0) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + shape_string(z) + " logits");
    }
    auto probs = std::make_shared<Matrix>(softmax_rows(z));
    std::vector<int> targets(labels.begin(), labels.end());
    double loss = 0.0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const int label = targets[r];
        if (label < 0 || label >= z.cols()) {
            throw ConfigError("softmax_cross_entropy: label " + std::to_string(label) +
                              " out of range");
        }
        const double top = z.row(r).maxCoeff();
        const double log_norm = top + std::log((z.row(r).array() - top).exp().sum());
        loss += log_norm - z(r, label);
    }
    Matrix out(1, 1);
    out(0, 0) = loss / static_cast<double>(z.rows());
    return logits.graph().record(
        std::move(out), {logits}, [logits, probs, targets](Graph& graph, const Matrix& up) {
            Matrix d = *probs;
            for (Eigen::Index r = 0; r < d.rows(); ++r) {
                d(r, targets[r]) -= 1.0;
            }
            d *= up(0, 0) / static_cast<double>(d.rows());
            graph.accumulate(logits, d);
        });
}

}  // namespace pcnst
