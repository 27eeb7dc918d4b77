#include "pcnst/training.hpp"

#include "pcnst/error.hpp"
#include "pcnst/io.hpp"
#include "pcnst/optimizer.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace pcnst {

namespace {

// Independent streams derived from one user seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    std::array<std::uint32_t, 2> words{};
    seq.generate(words.begin(), words.end());
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

enum Stream : std::uint64_t { kSplit = 1, kRebalance, kInit, kShuffle, kDropout };

struct Batch {
    Matrix positions;
    Matrix colors;
    Segments segments;
    std::vector<int> labels;
};

Batch stack(const LabeledDataset& data, std::span<const std::size_t> members) {
    std::vector<Eigen::Index> sizes;
    Eigen::Index rows = 0;
    for (std::size_t i : members) {
        sizes.push_back(data.clouds[i].size());
        rows += data.clouds[i].size();
    }
    Batch batch;
    batch.positions.resize(rows, 3);
    batch.colors.resize(rows, 3);
    Eigen::Index at = 0;
    for (std::size_t i : members) {
        const auto& cloud = data.clouds[i];
        batch.positions.middleRows(at, cloud.size()) = cloud.positions();
        batch.colors.middleRows(at, cloud.size()) = cloud.colors();
        at += cloud.size();
        batch.labels.push_back(*cloud.label());
    }
    batch.segments = Segments::from_sizes(sizes);
    return batch;
}

double accuracy(const NetworkParams& params, const LabeledDataset& data) {
    if (data.size() == 0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    std::size_t correct = 0;
    for (const auto& cloud : data.clouds) {
        correct += predict(cloud, params) == *cloud.label() ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace

void validate(const TrainConfig& config) {
    if (config.epochs < 1) {
        throw ConfigError("train: epochs must be positive");
    }
    if (config.batch_size < 2) {
        throw ConfigError("train: batch size must be at least 2 (batch norm needs two clouds)");
    }
    if (!(config.learning_rate > 0.0)) {
        throw ConfigError("train: learning rate must be positive");
    }
    if (!(config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 &&
          config.beta2 < 1.0)) {
        throw ConfigError("train: Adam betas must lie in [0, 1)");
    }
    if (config.rebalance_target < 0) {
        throw ConfigError("train: rebalance target must be non-negative");
    }
    if (!(config.validation_fraction >= 0.0 && config.validation_fraction < 1.0)) {
        throw ConfigError("train: validation fraction must lie in [0, 1)");
    }
    if (config.patience < 0) {
        throw ConfigError("train: patience must be non-negative");
    }
    if (!(config.lr_decay > 0.0 && config.lr_decay <= 1.0)) {
        throw ConfigError("train: lr decay must lie in (0, 1]");
    }
    validate(network_config(config, 2));
}

std::string describe(const TrainConfig& config) {
    std::ostringstream s;
    s << "epochs=" << config.epochs << " batch=" << config.batch_size
      << " lr=" << config.learning_rate << " beta1=" << config.beta1 << " beta2=" << config.beta2
      << " rebalance=" << config.rebalance_target << " val_fraction=" << config.validation_fraction
      << " patience=" << config.patience << " lr_decay=" << config.lr_decay
      << " seed=" << config.seed;
    return s.str();
}

NetworkConfig network_config(const TrainConfig& config, int class_count) {
    NetworkConfig net;
    net.layer_widths = config.layer_widths;
    net.head_widths = config.head_widths;
    net.class_count = class_count;
    net.fusion = config.fusion;
    net.layer_kind = config.layer_kind;
    net.leaky_slope = config.leaky_slope;
    net.dropout_keep = config.dropout_keep;
    return net;
}

LabeledDataset rebalance(const LabeledDataset& dataset, int target, std::uint64_t seed) {
    if (target < 1) {
        throw ConfigError("rebalance: target must be positive");
    }
    validate(dataset);
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(dataset.class_count));
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        by_class[static_cast<std::size_t>(*dataset.clouds[i].label())].push_back(i);
    }
    std::mt19937_64 rng(seed);
    LabeledDataset out{{}, dataset.class_count, dataset.split, dataset.class_names};
    const auto want = static_cast<std::size_t>(target);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const auto& members = by_class[c];
        if (members.empty()) {
            throw ConfigError("rebalance: class " + std::to_string(c) + " has no instances");
        }
        std::vector<std::size_t> chosen;
        if (members.size() >= want) {
            std::sample(members.begin(), members.end(), std::back_inserter(chosen), want, rng);
        } else {
            chosen = members;
            std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
            while (chosen.size() < want) {
                chosen.push_back(members[pick(rng)]);
            }
        }
        for (std::size_t i : chosen) {
            out.clouds.push_back(dataset.clouds[i]);
        }
    }
    return out;
}

TrainResult train(const LabeledDataset& dataset, const TrainConfig& config,
                  const std::optional<LabeledDataset>& validation,
                  const EpochCallback& on_epoch) {
    validate(config);
    validate(dataset);
    if (dataset.class_count < 2) {
        throw ConfigError("train: at least two classes are required");
    }

    LabeledDataset train_set = dataset;
    LabeledDataset val_set{{}, dataset.class_count, Split::val, dataset.class_names};
    if (validation) {
        validate(*validation);
        if (validation->class_count != dataset.class_count) {
            throw ConfigError("train: validation class count differs from the training set");
        }
        val_set = *validation;
    } else if (config.validation_fraction > 0.0) {
        // Held out before rebalancing so oversampled duplicates cannot leak into validation.
        std::tie(train_set, val_set) = stratified_split(
            dataset, config.validation_fraction, derive_seed(config.seed, kSplit), Split::val);
    }
    if (config.rebalance_target > 0) {
        train_set = rebalance(train_set, config.rebalance_target,
                              derive_seed(config.seed, kRebalance));
    }
    if (train_set.size() < 2) {
        throw ConfigError("train: at least two training clouds are required");
    }

    spdlog::info("train: {} clouds ({} after rebalancing), {} validation; {}; {}", dataset.size(),
                 train_set.size(), val_set.size(), describe(config),
                 describe(network_config(config, dataset.class_count)));
    TrainResult result;
    NetworkParams params = init_params(network_config(config, dataset.class_count),
                                       derive_seed(config.seed, kInit));
    if (dataset.class_names.size() == static_cast<std::size_t>(dataset.class_count)) {
        params.class_names = dataset.class_names;
    }
    OptimizerSettings settings;
    settings.kind = OptimizerKind::adam;
    settings.learning_rate = config.learning_rate;
    settings.beta1 = config.beta1;
    settings.beta2 = config.beta2;
    Optimizer optimizer(settings);

    std::mt19937_64 shuffle_rng(derive_seed(config.seed, kShuffle));
    std::mt19937_64 dropout_rng(derive_seed(config.seed, kDropout));
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    double best_val = -1.0;
    int since_best = 0;
    double lr = config.learning_rate;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const std::span<const std::size_t> members(order.data() + start, stop - start);
            if (members.size() < 2) {
                spdlog::warn("epoch {}: skipping a batch with a single cloud (batch norm needs two)",
                             epoch);
                ++result.skipped_batches;
                continue;
            }
            Batch batch = stack(train_set, members);
            Graph graph;
            TrainingPass pass = training_forward(graph, params, batch.positions, batch.colors,
                                                 batch.segments, dropout_rng);
            Var loss = softmax_cross_entropy(pass.logits, batch.labels);
            const double value = loss.value()(0, 0);
            if (!std::isfinite(value)) {
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
            }
            graph.backward(loss);
            std::vector<Matrix> grads;
            grads.reserve(pass.parameters.size());
            for (Var p : pass.parameters) {
                grads.push_back(graph.grad(p));
            }
            optimizer.step(params.trainable(), grads);

            const Matrix& logits = pass.logits.value();
            for (Eigen::Index r = 0; r < logits.rows(); ++r) {
                Eigen::Index best = 0;
                logits.row(r).maxCoeff(&best);
                correct += best == batch.labels[static_cast<std::size_t>(r)] ? 1 : 0;
            }
            loss_sum += value * static_cast<double>(members.size());
            seen += members.size();
        }

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
        record.train_acc = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
        record.val_acc = accuracy(params, val_set);
        result.trace.push_back(record);
        spdlog::info("epoch {}: loss {:.4f} train acc {:.4f} val acc {:.4f}", epoch,
                     record.train_loss, record.train_acc, record.val_acc);
        if (on_epoch) {
            on_epoch(record);
        }

        // Ties go to the later epoch; only strict improvements reset the patience counter.
        const double score = std::isnan(record.val_acc) ? 0.0 : record.val_acc;
        if (score >= best_val) {
            result.params = params;
            result.best_epoch = epoch;
        }
        if (score > best_val) {
            best_val = score;
            since_best = 0;
        } else if (config.patience > 0 && ++since_best >= config.patience) {
            spdlog::info("stopping early after epoch {} (best epoch {})", epoch,
                         result.best_epoch);
            break;
        }
        lr *= config.lr_decay;
        optimizer.set_learning_rate(lr);
    }
    return result;
}

void write_trace_csv(std::span<const EpochRecord> trace, const std::filesystem::path& path) {
    write_file_atomically(path, [&](std::ostream& out) {
        out << "epoch,train_loss,train_acc,val_acc\n";
        out.precision(10);
        for (const auto& r : trace) {
            out << r.epoch << ',' << r.train_loss << ',' << r.train_acc << ',';
            if (!std::isnan(r.val_acc)) {
                out << r.val_acc;
            }
            out << '\n';
        }
    });
}

double binary_auc(std::span<const double> scores, const std::vector<bool>& positive) {
    if (scores.size() != positive.size()) {
        throw ShapeError("binary_auc: score and label counts differ");
    }
    const std::size_t n = scores.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] < scores[b];
    });
    double positive_rank_sum = 0.0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[idx[j]] == scores[idx[i]]) {
            ++j;
        }
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
        for (std::size_t k = i; k < j; ++k) {
            if (positive[idx[k]]) {
                positive_rank_sum += avg_rank;
                ++pos;
            }
        }
        i = j;
    }
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) {
        throw ConfigError("binary_auc: both positive and negative samples are required");
    }
    const double p = static_cast<double>(pos);
    return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double multiclass_auc(const Matrix& scores, std::span<const int> labels, std::vector<int>* used) {
    if (scores.rows() != static_cast<Eigen::Index>(labels.size())) {
        throw ShapeError("multiclass_auc: " + std::to_string(scores.rows()) + " score rows for " +
                         std::to_string(labels.size()) + " labels");
    }
    double total = 0.0;
    int counted = 0;
    std::vector<double> column(labels.size());
    std::vector<bool> positive(labels.size());
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            column[i] = scores(static_cast<Eigen::Index>(i), c);
            positive[i] = labels[i] == c;
            pos += positive[i] ? 1 : 0;
        }
        if (pos == 0 || pos == labels.size()) {
            spdlog::warn("multiclass AUC: class {} is {} in the data and is excluded", c,
                         pos == 0 ? "absent" : "the only class");
            continue;
        }
        total += binary_auc(column, positive);
        ++counted;
        if (used) {
            used->push_back(static_cast<int>(c));
        }
    }
    if (counted == 0) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return total / counted;
}

EvalReport evaluate(const NetworkParams& params, const LabeledDataset& dataset) {
    validate(dataset);
    const int k = params.config.class_count;
    if (dataset.class_count != k) {
        throw ConfigError("evaluate: dataset has " + std::to_string(dataset.class_count) +
                          " classes but the network predicts " + std::to_string(k));
    }
    if (dataset.size() == 0) {
        throw ConfigError("evaluate: dataset is empty");
    }
    EvalReport report;
    report.class_counts.assign(static_cast<std::size_t>(k), 0);
    report.confusion.assign(static_cast<std::size_t>(k),
                            std::vector<std::size_t>(static_cast<std::size_t>(k), 0));
    Matrix probabilities(static_cast<Eigen::Index>(dataset.size()), k);
    std::vector<int> labels;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& cloud = dataset.clouds[i];
        const Matrix logits = classify(cloud, params);
        probabilities.row(static_cast<Eigen::Index>(i)) = softmax_rows(logits);
        Eigen::Index predicted = 0;
        logits.row(0).maxCoeff(&predicted);
        const int label = *cloud.label();
        labels.push_back(label);
        ++report.class_counts[static_cast<std::size_t>(label)];
        ++report.confusion[static_cast<std::size_t>(label)][static_cast<std::size_t>(predicted)];
        correct += predicted == label ? 1 : 0;
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
    report.multiclass_auc = multiclass_auc(probabilities, labels, &report.auc_classes);
    return report;
}

}  // namespace pcnst
