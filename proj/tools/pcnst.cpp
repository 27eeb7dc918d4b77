// pcnst: synthetic data, classifier training, classification and style transfer.

#include "pcnst/dataset.hpp"
#include "pcnst/error.hpp"
#include "pcnst/image.hpp"
#include "pcnst/io.hpp"
#include "pcnst/network.hpp"
#include "pcnst/training.hpp"
#include "pcnst/transfer.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <malloc.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace pcnst;

namespace {

constexpr const char* kManifest = "manifest.csv";

struct ManifestRow {
    std::string file;
    int label = 0;
    std::string name;
    std::string split;
};

std::vector<std::string> split_fields(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::stringstream in(line);
    std::string field;
    while (std::getline(in, field, sep)) {
        out.push_back(field);
    }
    if (!line.empty() && line.back() == sep) {
        out.emplace_back();
    }
    return out;
}

std::vector<ManifestRow> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || line != "file,label,name,split") {
        throw ParseError(path.string() + ":1: expected header 'file,label,name,split'");
    }
    std::vector<ManifestRow> rows;
    for (int number = 2; std::getline(in, line); ++number) {
        if (line.empty()) {
            continue;
        }
        auto fields = split_fields(line, ',');
        if (fields.size() != 4) {
            throw ParseError(path.string() + ":" + std::to_string(number) +
                             ": expected 4 fields, found " + std::to_string(fields.size()));
        }
        ManifestRow row{fields[0], 0, fields[2], fields[3]};
        try {
            std::size_t used = 0;
            row.label = std::stoi(fields[1], &used);
            if (used != fields[1].size() || row.label < 0) {
                throw std::invalid_argument("label");
            }
        } catch (const std::exception&) {
            throw ParseError(path.string() + ":" + std::to_string(number) + ": bad label '" +
                             fields[1] + "'");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw ParseError(path.string() + ": manifest lists no clouds");
    }
    return rows;
}

ColorRange parse_color_range(const std::string& text) {
    if (text == "auto") return ColorRange::auto_detect;
    if (text == "unit") return ColorRange::unit;
    if (text == "byte") return ColorRange::byte;
    throw ConfigError("unknown color range '" + text + "' (expected auto, unit or byte)");
}

ColoredPointCloud load_normalized(const fs::path& path, ColorRange range) {
    return normalize(load_ply(path), {range, true});
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
    std::vector<int> out;
    for (const auto& field : split_fields(text, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(field, &used));
            if (used != field.size()) {
                throw std::invalid_argument(what);
            }
        } catch (const std::exception&) {
            throw ConfigError(std::string("bad ") + what + " list '" + text + "'");
        }
    }
    return out;
}

template <std::size_t N>
std::array<Eigen::Index, N> parse_widths(const std::string& text, const char* what) {
    auto values = parse_int_list(text, what);
    if (values.size() != N) {
        throw ConfigError(std::string(what) + " needs " + std::to_string(N) + " values, got '" +
                          text + "'");
    }
    std::array<Eigen::Index, N> out{};
    for (std::size_t i = 0; i < N; ++i) {
        out[i] = values[i];
    }
    return out;
}

std::set<int> parse_layer_set(const std::string& text) {
    if (text.empty() || text == "none") {
        return {};
    }
    auto values = parse_int_list(text, "layer");
    return {values.begin(), values.end()};
}

// ---- synth ----

struct SynthOptions {
    SyntheticConfig config;
    double test_fraction = 0.2;
    std::string out;
};

void run_synth(const SynthOptions& o) {
    spdlog::info("synth: classes={} per_class={} points={} jitter={} test_fraction={} seed={} "
                 "out={}",
                 o.config.class_count, o.config.instances_per_class, o.config.points_per_cloud,
                 o.config.jitter, o.test_fraction, o.config.seed, o.out);
    LabeledDataset data = generate_synthetic_dataset(o.config);
    const std::vector<bool> test = stratified_holdout(data, o.test_fraction, o.config.seed);
    fs::create_directories(o.out);
    std::vector<int> per_class(static_cast<std::size_t>(data.class_count), 0);
    std::ostringstream manifest;
    manifest << "file,label,name,split\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        const int label = *data.clouds[i].label();
        const std::string& name = data.class_names[static_cast<std::size_t>(label)];
        char file[256];
        std::snprintf(file, sizeof(file), "%s_%04d.ply", name.c_str(),
                      per_class[static_cast<std::size_t>(label)]++);
        save_ply(data.clouds[i], fs::path(o.out) / file);
        manifest << file << ',' << label << ',' << name << ','
                 << to_string(test[i] ? Split::test : Split::train) << '\n';
    }
    write_file_atomically(fs::path(o.out) / kManifest,
                          [&](std::ostream& out) { out << manifest.str(); });
    spdlog::info("synth: wrote {} clouds and {}", data.size(), kManifest);
}

// ---- train ----

struct TrainOptions {
    TrainConfig config;
    std::string data;
    std::string out;
    std::string trace;
    std::string widths = "64,256,1024,2048";
    std::string head_widths = "512,128";
    std::string fusion = "late";
    std::string layer_kind = "fel";
    std::string color_range = "auto";
};

struct LoadedData {
    LabeledDataset train, val, test;
};

LoadedData load_dataset(const fs::path& dir, ColorRange range) {
    auto rows = read_manifest(dir / kManifest);
    int class_count = 0;
    for (const auto& r : rows) {
        class_count = std::max(class_count, r.label + 1);
    }
    std::vector<std::string> names(static_cast<std::size_t>(class_count));
    for (int k = 0; k < class_count; ++k) {
        names[static_cast<std::size_t>(k)] = "class_" + std::to_string(k);
    }
    for (const auto& r : rows) {
        names[static_cast<std::size_t>(r.label)] = r.name;
    }
    LoadedData d;
    d.train = {{}, class_count, Split::train, names};
    d.val = {{}, class_count, Split::val, names};
    d.test = {{}, class_count, Split::test, names};
    for (const auto& r : rows) {
        ColoredPointCloud cloud = load_normalized(dir / r.file, range);
        cloud.set_label(r.label);
        if (r.split == "train" || r.split.empty()) {
            d.train.clouds.push_back(std::move(cloud));
        } else if (r.split == "val") {
            d.val.clouds.push_back(std::move(cloud));
        } else if (r.split == "test") {
            d.test.clouds.push_back(std::move(cloud));
        } else {
            throw ParseError("manifest: unknown split '" + r.split + "' for " + r.file);
        }
    }
    return d;
}

void print_report(const EvalReport& report, const std::vector<std::string>& names,
                  const char* what) {
    std::printf("%s accuracy %.4f  macro AUC %.4f\n", what, report.accuracy,
                report.multiclass_auc);
    std::printf("confusion (rows true, columns predicted):\n");
    for (std::size_t k = 0; k < report.confusion.size(); ++k) {
        std::printf("  %-20s", k < names.size() ? names[k].c_str() : "?");
        for (auto v : report.confusion[k]) {
            std::printf(" %4zu", v);
        }
        std::printf("\n");
    }
}

void run_train(TrainOptions o) {
    o.config.layer_widths = parse_widths<kLayerCount>(o.widths, "widths");
    o.config.head_widths = parse_widths<2>(o.head_widths, "head widths");
    o.config.fusion = parse_fusion(o.fusion);
    o.config.layer_kind = parse_layer_kind(o.layer_kind);
    validate(o.config);
    LoadedData d = load_dataset(o.data, parse_color_range(o.color_range));
    if (d.train.size() == 0) {
        throw ConfigError("train: manifest has no training clouds");
    }
    std::optional<LabeledDataset> validation;
    if (d.val.size() > 0) {
        validation = d.val;
    }
    TrainResult result = train(d.train, o.config, validation);
    save_params(result.params, o.out);
    const fs::path trace = o.trace.empty() ? fs::path(o.out).replace_extension(".csv")
                                           : fs::path(o.trace);
    write_trace_csv(result.trace, trace);
    spdlog::info("train: checkpoint {} (best epoch {}), trace {}", o.out, result.best_epoch,
                 trace.string());
    const bool has_test = d.test.size() > 0;
    print_report(evaluate(result.params, has_test ? d.test : d.train), result.params.class_names,
                 has_test ? "test" : "train");
}

// ---- classify ----

struct ClassifyOptions {
    std::string ckpt;
    std::string input;
    std::string color_range = "auto";
};

void run_classify(const ClassifyOptions& o) {
    NetworkParams params = load_params(o.ckpt);
    ColoredPointCloud cloud = load_normalized(o.input, parse_color_range(o.color_range));
    Matrix probs = softmax_rows(classify(cloud, params));
    Eigen::Index best = 0;
    probs.row(0).maxCoeff(&best);
    std::printf("class %td %s\n", best, params.class_names[static_cast<std::size_t>(best)].c_str());
    for (Eigen::Index k = 0; k < probs.cols(); ++k) {
        std::printf("%td,%s,%.12f\n", k, params.class_names[static_cast<std::size_t>(k)].c_str(),
                    probs(0, k));
    }
}

// ---- transfer ----

struct TransferOptions {
    std::string content;
    std::string style;
    std::string style_type = "auto";
    std::string ckpt;
    std::string preset = "pc-to-pc";
    std::string out;
    std::string trace;
    std::string color_range = "auto";

    double alpha_geo = 0, beta_geo = 0, alpha_color = 0, beta_color = 0, alpha = 0, beta = 0;
    std::string content_layers, style_layers, mask, init, optimizer, gram;
    double lr = 0, sigma = 0;
    int steps = 0, trace_every = 0;
    Eigen::Index points = 0;
    std::uint64_t seed = 0;
};

struct TransferFlags {
    CLI::Option *alpha_geo, *beta_geo, *alpha_color, *beta_color, *alpha, *beta, *content_layers,
        *style_layers, *mask, *init, *optimizer, *gram, *lr, *sigma, *steps, *trace_every, *points,
        *seed;
};

bool given(const CLI::Option* opt) { return opt->count() > 0; }

void run_transfer(const TransferOptions& o, const TransferFlags& f) {
    NetworkParams params = load_params(o.ckpt);
    TransferConfig config = preset(o.preset);
    config.fusion = params.config.fusion;
    if (given(f.alpha_geo)) config.alpha_geo = o.alpha_geo;
    if (given(f.beta_geo)) config.beta_geo = o.beta_geo;
    if (given(f.alpha_color)) config.alpha_color = o.alpha_color;
    if (given(f.beta_color)) config.beta_color = o.beta_color;
    if (given(f.alpha)) config.alpha_fused = o.alpha;
    if (given(f.beta)) config.beta_fused = o.beta;
    if (given(f.content_layers)) config.content_layers = parse_layer_set(o.content_layers);
    if (given(f.style_layers)) config.style_layers = parse_layer_set(o.style_layers);
    if (given(f.mask)) config.update_mask = parse_update_mask(o.mask);
    if (given(f.init)) config.init = parse_init_strategy(o.init);
    if (given(f.optimizer)) {
        auto kind = parse_optimizer_kind(o.optimizer);
        if (!kind) {
            throw ConfigError("unknown optimizer '" + o.optimizer +
                              "' (expected one of: sgd, momentum, adagrad, rmsprop, adam)");
        }
        config.optimizer.kind = *kind;
    }
    if (given(f.gram)) {
        if (o.gram == "none") {
            config.gram_normalization = GramNormalization::none;
        } else if (o.gram == "per_point") {
            config.gram_normalization = GramNormalization::per_point;
        } else {
            throw ConfigError("unknown gram normalization '" + o.gram +
                              "' (expected none or per_point)");
        }
    }
    if (given(f.lr)) config.optimizer.learning_rate = o.lr;
    if (given(f.sigma)) config.gaussian_sigma = o.sigma;
    if (given(f.steps)) config.steps = o.steps;
    if (given(f.trace_every)) config.trace_every = o.trace_every;
    if (given(f.points)) config.target_points = o.points;
    if (given(f.seed)) config.seed = o.seed;
    validate(config);

    const ColorRange range = parse_color_range(o.color_range);
    ColoredPointCloud content = load_normalized(o.content, range);
    bool image = false;
    if (o.style_type == "auto") {
        image = !looks_like_ply(o.style) && looks_like_image(o.style);
        if (!image && !looks_like_ply(o.style)) {
            throw ParseError(o.style + ": neither a PLY file nor a PPM/PNG image");
        }
    } else if (o.style_type == "image") {
        image = true;
    } else if (o.style_type != "cloud") {
        throw ConfigError("unknown style type '" + o.style_type + "' (expected auto, cloud or image)");
    }
    if (image && config.update_mask != UpdateMask::color) {
        throw ConfigError("an image style only defines color style; pass --mask color or use an "
                          "image preset");
    }
    StyleSource style = image ? StyleSource{image_to_pixel_set(o.style)}
                              : StyleSource{load_normalized(o.style, range)};
    spdlog::info("transfer: content {} ({} points), style {} ({})", o.content, content.size(),
                 o.style, image ? "image" : "cloud");

    TransferResult result = stylize(content, style, params, config);
    save_ply(result.stylized, o.out);
    if (!o.trace.empty()) {
        write_transfer_trace_csv(result.trace, config.fusion, o.trace);
    }
    const LossBreakdown& b = result.final_loss;
    std::printf("final total %.6g\n", b.total);
    if (config.fusion == Fusion::late) {
        std::printf("content_geo %.6g style_geo %.6g content_color %.6g style_color %.6g\n",
                    b.content_geo, b.style_geo, b.content_color, b.style_color);
    } else {
        std::printf("content %.6g style %.6g\n", b.content_fused, b.style_fused);
    }
}

void use_config_file(CLI::App* sub) {
    // Expanded before parsing; declared so --help documents it.
    sub->add_option("--config", "Flat key=value file; keys are long flag names without dashes");
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Replaces --config FILE with one --key=value argument per line, placed
// right after the subcommand so flags given on the command line win.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                       args.begin() + static_cast<std::ptrdiff_t>(i + 2));
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            config = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (config.empty()) {
        return args;
    }
    std::ifstream in(config);
    if (!in) {
        throw ConfigError("cannot open config file " + config);
    }
    std::vector<std::string> injected;
    std::string line;
    for (int number = 1; std::getline(in, line); ++number) {
        line = trim(line);
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
            throw ConfigError(config + ":" + std::to_string(number) + ": expected key=value");
        }
        injected.push_back("--" + trim(line.substr(0, eq)) + "=" + trim(line.substr(eq + 1)));
    }
    auto sub = std::find_if(args.begin(), args.end(),
                            [](const std::string& a) { return a.empty() || a[0] != '-'; });
    if (sub != args.end()) {
        ++sub;
    }
    args.insert(sub, injected.begin(), injected.end());
    return args;
}

}  // namespace

int main(int argc, char** argv) {
    // Keep freed blocks in the heap: the training and transfer loops allocate
    // and release the same large matrices every step.
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);

    CLI::App app{"Style transfer for colored point clouds"};
    app.require_subcommand(1);
    app.fallthrough();
    app.option_defaults()->always_capture_default()->multi_option_policy(
        CLI::MultiOptionPolicy::TakeLast);
    bool verbose = false;
    bool quiet = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");
    app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

    SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic labeled dataset as PLY files");
    use_config_file(synth_cmd);
    synth_cmd->add_option("--classes", synth.config.class_count, "Number of classes (2-16)");
    synth_cmd->add_option("--per-class", synth.config.instances_per_class, "Clouds per class")
        ->check(CLI::PositiveNumber);
    synth_cmd->add_option("--points", synth.config.points_per_cloud, "Points per cloud")
        ->check(CLI::PositiveNumber);
    synth_cmd->add_option("--jitter", synth.config.jitter, "Surface noise");
    synth_cmd->add_option("--test-fraction", synth.test_fraction,
                          "Fraction of each class tagged as test");
    synth_cmd->add_option("--seed", synth.config.seed, "Random seed");
    synth_cmd->add_option("--out", synth.out, "Output directory")->required();

    TrainOptions tr;
    auto* train_cmd = app.add_subcommand("train", "Train the classifier on a manifest dataset");
    use_config_file(train_cmd);
    train_cmd->add_option("--data", tr.data, "Directory holding manifest.csv")->required();
    train_cmd->add_option("--epochs", tr.config.epochs, "Training epochs");
    train_cmd->add_option("--batch", tr.config.batch_size, "Clouds per batch");
    train_cmd->add_option("--lr", tr.config.learning_rate, "Adam learning rate");
    train_cmd->add_option("--rebalance", tr.config.rebalance_target,
                          "Instances per class after rebalancing (0 disables)");
    train_cmd->add_option("--fusion", tr.fusion, "late or early");
    train_cmd->add_option("--layer-kind", tr.layer_kind, "fel or shared_fc");
    train_cmd->add_option("--widths", tr.widths, "Four per-point layer widths");
    train_cmd->add_option("--head-widths", tr.head_widths, "Two hidden head widths");
    train_cmd->add_option("--keep", tr.config.dropout_keep, "Dropout keep probability");
    train_cmd->add_option("--val-fraction", tr.config.validation_fraction,
                          "Held-out share of each class when the manifest has no val split");
    train_cmd->add_option("--patience", tr.config.patience,
                          "Stop after this many epochs without improvement (0 disables)");
    train_cmd->add_option("--lr-decay", tr.config.lr_decay, "Learning rate factor per epoch");
    train_cmd->add_option("--seed", tr.config.seed, "Random seed");
    train_cmd->add_option("--color-range", tr.color_range, "Input colors: auto, unit or byte");
    train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
    train_cmd->add_option("--trace", tr.trace, "Epoch trace CSV (default: checkpoint with .csv)");

    ClassifyOptions cl;
    auto* classify_cmd = app.add_subcommand("classify", "Print class scores of a PLY cloud");
    use_config_file(classify_cmd);
    classify_cmd->add_option("--ckpt", cl.ckpt, "Checkpoint")->required();
    classify_cmd->add_option("--input", cl.input, "PLY cloud")->required();
    classify_cmd->add_option("--color-range", cl.color_range, "Input colors: auto, unit or byte");

    TransferOptions to;
    TransferFlags tf{};
    auto* transfer_cmd = app.add_subcommand("transfer", "Stylize a content cloud");
    use_config_file(transfer_cmd);
    transfer_cmd->add_option("--content", to.content, "Content PLY")->required();
    transfer_cmd->add_option("--style", to.style, "Style PLY or PPM/PNG image")->required();
    transfer_cmd->add_option("--style-type", to.style_type, "auto, cloud or image");
    transfer_cmd->add_option("--ckpt", to.ckpt, "Checkpoint")->required();
    transfer_cmd->add_option("--preset", to.preset,
                             "pc-to-pc, image-to-object or image-to-scene; flags below override it");
    tf.alpha_geo = transfer_cmd->add_option("--alpha-geo", to.alpha_geo, "Geometry content weight (1)");
    tf.beta_geo = transfer_cmd->add_option("--beta-geo", to.beta_geo, "Geometry style weight (1)");
    tf.alpha_color = transfer_cmd->add_option("--alpha-color", to.alpha_color, "Color content weight (1)");
    tf.beta_color = transfer_cmd->add_option("--beta-color", to.beta_color, "Color style weight (100)");
    tf.alpha = transfer_cmd->add_option("--alpha", to.alpha, "Content weight, early fusion (1)");
    tf.beta = transfer_cmd->add_option("--beta", to.beta, "Style weight, early fusion (100)");
    tf.content_layers = transfer_cmd->add_option("--content-layers", to.content_layers,
                                                 "Comma list from 1-4, or none (preset)");
    tf.style_layers = transfer_cmd->add_option("--style-layers", to.style_layers,
                                               "Comma list from 1-4, or none (preset)");
    tf.mask = transfer_cmd->add_option("--mask", to.mask, "geometry, color or both (preset)");
    tf.init = transfer_cmd->add_option("--init", to.init, "content or gaussian (content)");
    tf.sigma = transfer_cmd->add_option("--sigma", to.sigma, "Gaussian init deviation (0.5)");
    tf.points = transfer_cmd->add_option("--points", to.points,
                                         "Target points for gaussian init (content count)");
    tf.optimizer = transfer_cmd->add_option("--optimizer", to.optimizer,
                                            "sgd, momentum, adagrad, rmsprop or adam (adam)");
    tf.lr = transfer_cmd->add_option("--lr", to.lr, "Learning rate (preset)");
    tf.steps = transfer_cmd->add_option("--steps", to.steps, "Optimizer steps (preset)");
    tf.gram = transfer_cmd->add_option("--gram", to.gram, "Gram normalization: per_point or none (per_point)");
    tf.trace_every = transfer_cmd->add_option("--trace-every", to.trace_every, "Trace interval (10)");
    tf.seed = transfer_cmd->add_option("--seed", to.seed, "Random seed (0)");
    transfer_cmd->add_option("--color-range", to.color_range, "Input colors: auto, unit or byte");
    transfer_cmd->add_option("--out", to.out, "Output PLY")->required();
    transfer_cmd->add_option("--trace", to.trace, "Loss trace CSV");

    try {
        std::vector<std::string> args = expand_config(argc, argv);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    spdlog::set_default_logger(spdlog::default_logger());
    spdlog::set_level(verbose ? spdlog::level::debug
                              : quiet ? spdlog::level::warn : spdlog::level::info);

    try {
        if (*synth_cmd) {
            run_synth(synth);
        } else if (*train_cmd) {
            run_train(tr);
        } else if (*classify_cmd) {
            run_classify(cl);
        } else if (*transfer_cmd) {
            run_transfer(to, tf);
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
