#pragma once

#include "pcnst/matrix.hpp"

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <vector>

namespace pcnst {

class Graph;

/// Handle to a value recorded on a Graph. Cheap to copy; valid for the
/// lifetime of the owning graph.
class Var {
public:
    Var() = default;

    [[nodiscard]] std::size_t id() const { return id_; }
    [[nodiscard]] Graph& graph() const { return *graph_; }
    [[nodiscard]] const Matrix& value() const;
    [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
    [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
    [[nodiscard]] bool valid() const { return graph_ != nullptr; }

private:
    friend class Graph;
    Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

/// Eagerly evaluated tape for reverse-mode differentiation.
///
/// Every operation computes its value immediately and appends a node holding
/// the value and a closure that propagates an upstream gradient to its inputs.
/// Nodes are appended in creation order, which is a topological order, so the
/// backward pass is a single reverse sweep.
class Graph {
public:
    /// Receives the gradient of the output w.r.t. this node and must call
    /// accumulate() on each input that requires a gradient.
    using BackwardFn = std::function<void(Graph&, const Matrix& upstream)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Leaf that never receives a gradient.
    Var constant(Matrix value);
    /// Trainable leaf.
    Var parameter(Matrix value);

    /// Appends an interior node. The node requires a gradient iff any input does;
    /// otherwise `backward` is dropped.
    Var record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward);

    [[nodiscard]] const Matrix& value(Var v) const { return nodes_[v.id()].value; }
    [[nodiscard]] bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
    [[nodiscard]] bool is_parameter(Var v) const { return nodes_[v.id()].trainable; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a 1x1 output. Clears gradients from any previous sweep.
    void backward(Var output);

    /// Gradient of the last backward() output w.r.t. the parameter `v`; zeros
    /// when `v` did not influence the output. Interior gradients are released
    /// during the sweep.
    [[nodiscard]] Matrix grad(Var v) const;

    void accumulate(Var v, const Matrix& contribution);

private:
    struct Node {
        Matrix value;
        Matrix grad;
        BackwardFn backward;
        bool requires_grad = false;
        bool trainable = false;
        bool has_grad = false;
    };

    Var push(Node node);

    std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const {
    return graph_->value(*this);
}

}  // namespace pcnst
