#include "pcnst/optimizer.hpp"

#include "pcnst/error.hpp"

#include <array>
#include <cmath>
#include <utility>

namespace pcnst {

namespace {

constexpr std::array<std::pair<OptimizerKind, std::string_view>, 5> kNames{{
    {OptimizerKind::sgd, "sgd"},
    {OptimizerKind::momentum, "momentum"},
    {OptimizerKind::adagrad, "adagrad"},
    {OptimizerKind::rmsprop, "rmsprop"},
    {OptimizerKind::adam, "adam"},
}};

}  // namespace

std::string_view to_string(OptimizerKind kind) {
    for (const auto& [k, name] : kNames) {
        if (k == kind) {
            return name;
        }
    }
    return "unknown";
}

std::optional<OptimizerKind> parse_optimizer_kind(std::string_view name) {
    for (const auto& [k, n] : kNames) {
        if (n == name) {
            return k;
        }
    }
    return std::nullopt;
}

Optimizer::Optimizer(OptimizerSettings settings) : settings_(settings) {
    if (!(settings_.learning_rate > 0.0)) {
        throw ConfigError("optimizer: learning rate must be positive");
    }
}

void Optimizer::ensure_state(std::span<Matrix* const> params, std::span<const Matrix> grads) {
    if (params.size() != grads.size()) {
        throw ShapeError("optimizer: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols()) {
            throw ShapeError("optimizer: parameter " + std::to_string(i) + " is " +
                             shape_string(*params[i]) + " but its gradient is " +
                             shape_string(grads[i]));
        }
    }
    if (steps_ == 0) {
        first_.clear();
        second_.clear();
        for (Matrix* p : params) {
            first_.push_back(Matrix::Zero(p->rows(), p->cols()));
            if (settings_.kind == OptimizerKind::adam) {
                second_.push_back(Matrix::Zero(p->rows(), p->cols()));
            }
        }
        return;
    }
    if (first_.size() != params.size()) {
        throw ShapeError("optimizer: parameter count changed between steps");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (first_[i].rows() != params[i]->rows() || first_[i].cols() != params[i]->cols()) {
            throw ShapeError("optimizer: parameter " + std::to_string(i) +
                             " changed shape between steps");
        }
    }
}

void Optimizer::step(std::span<Matrix* const> params, std::span<const Matrix> grads) {
    ensure_state(params, grads);
    ++steps_;
    const double lr = settings_.learning_rate;
    const double eps = settings_.epsilon;

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i]->array();
        const auto g = grads[i].array();
        switch (settings_.kind) {
            case OptimizerKind::sgd:
                p -= lr * g;
                break;
            case OptimizerKind::momentum: {
                auto v = first_[i].array();
                v = settings_.momentum * v + g;
                p -= lr * v;
                break;
            }
            case OptimizerKind::adagrad: {
                auto acc = first_[i].array();
                acc += g.square();
                p -= lr * g / (acc.sqrt() + eps);
                break;
            }
            case OptimizerKind::rmsprop: {
                auto acc = first_[i].array();
                const double d = settings_.rmsprop_decay;
                acc = d * acc + (1.0 - d) * g.square();
                p -= lr * g / (acc.sqrt() + eps);
                break;
            }
            case OptimizerKind::adam: {
                auto m = first_[i].array();
                auto v = second_[i].array();
                const double b1 = settings_.beta1;
                const double b2 = settings_.beta2;
                m = b1 * m + (1.0 - b1) * g;
                v = b2 * v + (1.0 - b2) * g.square();
                const double t = static_cast<double>(steps_);
                const double c1 = 1.0 - std::pow(b1, t);
                const double c2 = 1.0 - std::pow(b2, t);
                p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
                break;
            }
        }
    }
}

}  // namespace pcnst
