#include "pcnst/graph.hpp"

#include "pcnst/error.hpp"

#include <utility>

namespace pcnst {

Var Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Matrix value) {
    Node node;
    node.value = std::move(value);
    return push(std::move(node));
}

Var Graph::parameter(Matrix value) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = true;
    node.trainable = true;
    return push(std::move(node));
}

Var Graph::record(Matrix value, std::initializer_list<Var> inputs, BackwardFn backward) {
    Node node;
    node.value = std::move(value);
    for (const Var& in : inputs) {
        if (&in.graph() != this) {
            throw Error("graph: input recorded on a different graph");
        }
        node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
    }
    if (node.requires_grad) {
        node.backward = std::move(backward);
    }
    return push(std::move(node));
}

void Graph::backward(Var output) {
    const Matrix& out = value(output);
    if (out.rows() != 1 || out.cols() != 1) {
        throw ShapeError("backward: output must be a scalar, got " + shape_string(out));
    }
    for (auto& node : nodes_) {
        node.has_grad = false;
        node.grad.resize(0, 0);
    }
    Node& root = nodes_[output.id()];
    root.grad = Matrix::Ones(1, 1);
    root.has_grad = true;

    for (std::size_t i = output.id() + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.has_grad || !node.backward) {
            continue;
        }
        node.backward(*this, node.grad);
        if (!node.trainable) {
            // Interior gradients are not queried after the sweep.
            node.grad.resize(0, 0);
        }
    }
}

Matrix Graph::grad(Var v) const {
    const Node& node = nodes_[v.id()];
    if (!node.has_grad || node.grad.size() == 0) {
        return Matrix::Zero(node.value.rows(), node.value.cols());
    }
    return node.grad;
}

void Graph::accumulate(Var v, const Matrix& contribution) {
    Node& node = nodes_[v.id()];
    if (!node.requires_grad) {
        return;
    }
    if (contribution.rows() != node.value.rows() || contribution.cols() != node.value.cols()) {
        throw ShapeError("graph: gradient shape " + shape_string(contribution) +
                         " does not match value shape " + shape_string(node.value));
    }
    if (node.has_grad) {
        node.grad += contribution;
    } else {
        node.grad = contribution;
        node.has_grad = true;
    }
}

}  // namespace pcnst
