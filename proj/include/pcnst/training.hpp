#pragma once

#include "pcnst/dataset.hpp"
#include "pcnst/network.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pcnst {

struct TrainConfig {
    int epochs = 50;
    int batch_size = 32;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double dropout_keep = 0.7;
    double leaky_slope = kDefaultLeakySlope;
    /// Instances per class after rebalancing; 0 disables rebalancing.
    int rebalance_target = 320;
    std::uint64_t seed = 0;

    // Architecture.
    std::array<Eigen::Index, kLayerCount> layer_widths{64, 256, 1024, 2048};
    std::array<Eigen::Index, 2> head_widths{512, 128};
    Fusion fusion = Fusion::late;
    LayerKind layer_kind = LayerKind::fel;

    /// Held out from the training data (per class, before rebalancing) when no
    /// validation set is passed to train().
    double validation_fraction = 0.1;
    /// Stop after this many epochs without a validation improvement; 0 disables.
    int patience = 0;
    /// Learning rate multiplier applied after every epoch.
    double lr_decay = 1.0;
};

void validate(const TrainConfig& config);
std::string describe(const TrainConfig& config);
NetworkConfig network_config(const TrainConfig& config, int class_count);

/// Every class resampled to exactly `target` instances: larger classes are
/// subsampled without replacement, smaller ones keep all members plus extra
/// draws with replacement. Throws ConfigError on an empty class.
LabeledDataset rebalance(const LabeledDataset& dataset, int target, std::uint64_t seed);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    /// NaN when there is no validation data.
    double val_acc = 0.0;
};

struct TrainResult {
    /// Parameters from the last epoch reaching the best validation accuracy
    /// (the last epoch when there is no validation data).
    NetworkParams params;
    std::vector<EpochRecord> trace;
    int best_epoch = 0;
    std::size_t skipped_batches = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam on mean softmax cross-entropy. Deterministic in config.seed. Batches
/// holding a single cloud are skipped with a warning. Throws NumericError if
/// the loss becomes non-finite.
TrainResult train(const LabeledDataset& dataset, const TrainConfig& config,
                  const std::optional<LabeledDataset>& validation = std::nullopt,
                  const EpochCallback& on_epoch = {});

void write_trace_csv(std::span<const EpochRecord> trace, const std::filesystem::path& path);

struct EvalReport {
    double accuracy = 0.0;
    /// Macro average of one-vs-rest ROC AUC over the classes present in the data.
    double multiclass_auc = 0.0;
    std::vector<std::size_t> class_counts;
    /// confusion[true][predicted]
    std::vector<std::vector<std::size_t>> confusion;
    std::vector<int> auc_classes;
};

EvalReport evaluate(const NetworkParams& params, const LabeledDataset& dataset);

/// Area under the ROC curve via the rank-sum statistic, ties averaged.
/// Throws ConfigError unless both classes are present.
double binary_auc(std::span<const double> scores, const std::vector<bool>& positive);

/// Macro one-vs-rest AUC of per-class scores (n x K). Classes without
/// positives or negatives are skipped with a warning; `used` receives the
/// classes that were averaged. NaN when no class qualifies.
double multiclass_auc(const Matrix& scores, std::span<const int> labels,
                      std::vector<int>* used = nullptr);

}  // namespace pcnst
