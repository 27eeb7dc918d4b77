#pragma once

#include "pcnst/matrix.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pcnst {

enum class OptimizerKind { sgd, momentum, adagrad, rmsprop, adam };

std::string_view to_string(OptimizerKind kind);
/// Accepts the names produced by to_string().
std::optional<OptimizerKind> parse_optimizer_kind(std::string_view name);

struct OptimizerSettings {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 0.01;
    double momentum = 0.9;
    double rmsprop_decay = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// First-order optimizer with per-parameter accumulators.
///
/// Accumulators are allocated on the first step() to match the parameter
/// shapes; later steps must present the same number and shapes of parameters.
class Optimizer {
public:
    explicit Optimizer(OptimizerSettings settings);

    /// Updates each params[i] in place from grads[i].
    void step(std::span<Matrix* const> params, std::span<const Matrix> grads);

    [[nodiscard]] std::size_t step_count() const { return steps_; }
    [[nodiscard]] const OptimizerSettings& settings() const { return settings_; }
    void set_learning_rate(double lr) { settings_.learning_rate = lr; }

private:
    void ensure_state(std::span<Matrix* const> params, std::span<const Matrix> grads);

    OptimizerSettings settings_;
    std::size_t steps_ = 0;
    std::vector<Matrix> first_;   // velocity / first moment / squared-gradient sum
    std::vector<Matrix> second_;  // adam second moment
};

}  // namespace pcnst
