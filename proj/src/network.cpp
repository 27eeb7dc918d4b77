#include "pcnst/network.hpp"

#include "pcnst/error.hpp"
#include "pcnst/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <sstream>

namespace pcnst {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'P', 'C', 'N', 'S', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view text, const std::array<std::string_view, N>& names,
                const char* what) {
    for (std::size_t i = 0; i < N; ++i) {
        if (text == names[i]) {
            return static_cast<Enum>(i);
        }
    }
    std::string choices;
    for (std::size_t i = 0; i < N; ++i) {
        choices += (i ? ", " : "") + std::string(names[i]);
    }
    throw ConfigError(std::string("unknown ") + what + " '" + std::string(text) +
                      "' (expected one of: " + choices + ")");
}

constexpr std::array<std::string_view, 2> kFusionNames{"late", "early"};
constexpr std::array<std::string_view, 2> kLayerKindNames{"fel", "shared_fc"};
constexpr std::array<std::string_view, 3> kRouteNames{"geometry", "color", "fused"};

double init_bound(Eigen::Index fan_in, double slope) {
    return std::sqrt(6.0 / ((1.0 + slope * slope) * static_cast<double>(fan_in)));
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = dist(rng);
    }
    return m;
}

std::string route_label(const NetworkConfig& config, std::size_t index) {
    if (config.fusion == Fusion::early) {
        return "fused";
    }
    return index == 0 ? "geometry" : "color";
}

// Calls fn(name, matrix) for every stored block in checkpoint order.
template <typename Params, typename Fn>
void visit_blocks(Params& params, Fn&& fn) {
    for (std::size_t r = 0; r < params.routes.size(); ++r) {
        const std::string route = route_label(params.config, r);
        for (std::size_t l = 0; l < params.routes[r].layers.size(); ++l) {
            auto& layer = params.routes[r].layers[l];
            const std::string prefix = route + " layer " + std::to_string(l + 1) + " ";
            fn(prefix + "weight", layer.weight);
            fn(prefix + "bias", layer.bias);
            fn(prefix + "gamma", layer.gamma);
            fn(prefix + "beta", layer.beta);
            fn(prefix + "running mean", layer.stats.running_mean);
            fn(prefix + "running var", layer.stats.running_var);
        }
    }
    for (std::size_t h = 0; h < params.head.size(); ++h) {
        auto& dense = params.head[h];
        const std::string prefix = "head layer " + std::to_string(h + 1) + " ";
        fn(prefix + "weight", dense.weight);
        fn(prefix + "bias", dense.bias);
        if (dense.batch_norm) {
            fn(prefix + "gamma", dense.gamma);
            fn(prefix + "beta", dense.beta);
            fn(prefix + "running mean", dense.stats.running_mean);
            fn(prefix + "running var", dense.stats.running_var);
        }
    }
}

// Parameters with the right shapes and default values.
NetworkParams skeleton(const NetworkConfig& config) {
    validate(config);
    NetworkParams params;
    params.config = config;
    const std::size_t route_count = config.fusion == Fusion::late ? 2 : 1;
    for (std::size_t r = 0; r < route_count; ++r) {
        RouteParams route;
        for (int l = 1; l <= kLayerCount; ++l) {
            const Eigen::Index m = config.layer_widths[static_cast<std::size_t>(l - 1)];
            FELParams layer;
            layer.weight = Matrix::Zero(layer_input_width(config, l), m);
            layer.bias = Matrix::Zero(1, m);
            layer.gamma = Matrix::Ones(1, m);
            layer.beta = Matrix::Zero(1, m);
            layer.stats = BatchNormState::zeros(m);
            route.layers.push_back(std::move(layer));
        }
        params.routes.push_back(std::move(route));
    }
    Eigen::Index in = head_input_width(config);
    const std::array<Eigen::Index, 3> outs{config.head_widths[0], config.head_widths[1],
                                           config.class_count};
    for (std::size_t h = 0; h < outs.size(); ++h) {
        DenseParams dense;
        dense.weight = Matrix::Zero(in, outs[h]);
        dense.bias = Matrix::Zero(1, outs[h]);
        dense.batch_norm = h + 1 < outs.size();
        if (dense.batch_norm) {
            dense.gamma = Matrix::Ones(1, outs[h]);
            dense.beta = Matrix::Zero(1, outs[h]);
            dense.stats = BatchNormState::zeros(outs[h]);
        }
        params.head.push_back(std::move(dense));
        in = outs[h];
    }
    for (int c = 0; c < config.class_count; ++c) {
        params.class_names.push_back("class_" + std::to_string(c));
    }
    return params;
}

// Inference batch norm folded with the preceding bias into one affine map.
std::pair<Matrix, Matrix> folded_affine(const Matrix& bias, const Matrix& gamma,
                                        const Matrix& beta, const BatchNormState& stats) {
    if (!stats.initialized) {
        throw ConfigError("inference requires initialized batch-norm statistics");
    }
    Matrix scale = (gamma.array() / (stats.running_var.array() + kBatchNormEpsilon).sqrt()).matrix();
    Matrix shift =
        ((bias - stats.running_mean).array() * scale.array() + beta.array()).matrix();
    return {std::move(scale), std::move(shift)};
}

Var dense_infer(Var x, const DenseParams& dense, double slope) {
    Var pre = matmul(x, dense.weight);
    if (!dense.batch_norm) {
        return affine_columns(pre, Matrix::Ones(1, dense.bias.cols()), dense.bias);
    }
    auto [s, t] = folded_affine(dense.bias, dense.gamma, dense.beta, dense.stats);
    return leaky_relu(affine_columns(pre, s, t), slope);
}

void require_layers(const std::set<int>& layers, const char* what) {
    for (int l : layers) {
        if (l < 1 || l > kLayerCount) {
            throw ConfigError(std::string(what) + " layer " + std::to_string(l) +
                              " is out of range 1.." + std::to_string(kLayerCount));
        }
    }
}

template <typename T>
void put(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

class Reader {
public:
    Reader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}

    template <typename T>
    T get(const char* what) {
        T value{};
        in_.read(reinterpret_cast<char*>(&value), sizeof(T));
        if (in_.gcount() != static_cast<std::streamsize>(sizeof(T))) {
            truncated(what);
        }
        return value;
    }

    void bytes(char* dst, std::size_t n, const std::string& what) {
        in_.read(dst, static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n)) {
            truncated(what);
        }
    }

    [[noreturn]] void truncated(const std::string& what) const {
        throw ParseError(name_ + ": checkpoint is truncated (while reading " + what + ")");
    }

    [[noreturn]] void fail(const std::string& message) const {
        throw ParseError(name_ + ": " + message);
    }

    const std::string& name() const { return name_; }

private:
    std::istream& in_;
    std::string name_;
};

std::string widths_string(std::span<const Eigen::Index> widths) {
    std::string s;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        s += (i ? "," : "") + std::to_string(widths[i]);
    }
    return s;
}

}  // namespace

std::string_view to_string(Fusion fusion) {
    return kFusionNames[static_cast<std::size_t>(fusion)];
}
std::string_view to_string(LayerKind kind) {
    return kLayerKindNames[static_cast<std::size_t>(kind)];
}
std::string_view to_string(RouteKind route) {
    return kRouteNames[static_cast<std::size_t>(route)];
}
Fusion parse_fusion(std::string_view text) {
    return parse_enum<Fusion>(text, kFusionNames, "fusion mode");
}
LayerKind parse_layer_kind(std::string_view text) {
    return parse_enum<LayerKind>(text, kLayerKindNames, "layer kind");
}
RouteKind parse_route_kind(std::string_view text) {
    return parse_enum<RouteKind>(text, kRouteNames, "route");
}

void validate(const NetworkConfig& config) {
    for (Eigen::Index w : config.layer_widths) {
        if (w < 1) {
            throw ConfigError("network: layer widths must be positive");
        }
    }
    for (Eigen::Index w : config.head_widths) {
        if (w < 1) {
            throw ConfigError("network: head widths must be positive");
        }
    }
    if (config.class_count < 2) {
        throw ConfigError("network: at least two classes are required");
    }
    if (!(config.leaky_slope > 0.0 && config.leaky_slope < 1.0)) {
        throw ConfigError("network: leaky slope must lie in (0, 1)");
    }
    if (!(config.dropout_keep > 0.0 && config.dropout_keep <= 1.0)) {
        throw ConfigError("network: dropout keep probability must lie in (0, 1]");
    }
}

std::string describe(const NetworkConfig& config) {
    std::ostringstream s;
    s << "fusion=" << to_string(config.fusion) << " layer_kind=" << to_string(config.layer_kind)
      << " widths=" << widths_string(config.layer_widths)
      << " head=" << widths_string(config.head_widths) << " classes=" << config.class_count
      << " slope=" << config.leaky_slope << " keep=" << config.dropout_keep;
    return s.str();
}

Eigen::Index layer_input_width(const NetworkConfig& config, int layer) {
    if (layer < 1 || layer > kLayerCount) {
        throw ConfigError("network: layer index " + std::to_string(layer) + " out of range");
    }
    if (layer == 1) {
        return route_input_width(config);
    }
    const Eigen::Index prev = config.layer_widths[static_cast<std::size_t>(layer - 2)];
    return config.layer_kind == LayerKind::fel ? 2 * prev : prev;
}

Eigen::Index route_input_width(const NetworkConfig& config) {
    return config.fusion == Fusion::late ? 3 : 6;
}

Eigen::Index head_input_width(const NetworkConfig& config) {
    const Eigen::Index last = config.layer_widths.back();
    return config.fusion == Fusion::late ? 2 * last : last;
}

const RouteParams& NetworkParams::route(RouteKind kind) const {
    if (config.fusion == Fusion::early) {
        if (kind != RouteKind::fused) {
            throw ConfigError("early-fusion network has a single fused route, no separate " +
                              std::string(to_string(kind)) + " route");
        }
        return routes.at(0);
    }
    if (kind == RouteKind::fused) {
        throw ConfigError("late-fusion network has no fused route");
    }
    return routes.at(kind == RouteKind::geometry ? 0 : 1);
}

std::vector<Matrix*> NetworkParams::trainable() {
    std::vector<Matrix*> out;
    for (auto& route : routes) {
        for (auto& layer : route.layers) {
            out.insert(out.end(), {&layer.weight, &layer.bias, &layer.gamma, &layer.beta});
        }
    }
    for (auto& dense : head) {
        out.insert(out.end(), {&dense.weight, &dense.bias});
        if (dense.batch_norm) {
            out.insert(out.end(), {&dense.gamma, &dense.beta});
        }
    }
    return out;
}

NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed) {
    NetworkParams params = skeleton(config);
    std::mt19937_64 rng(seed);
    for (auto& route : params.routes) {
        for (auto& layer : route.layers) {
            layer.weight = uniform_matrix(layer.weight.rows(), layer.weight.cols(),
                                          init_bound(layer.weight.rows(), config.leaky_slope),
                                          rng);
        }
    }
    for (auto& dense : params.head) {
        dense.weight = uniform_matrix(dense.weight.rows(), dense.weight.cols(),
                                      init_bound(dense.weight.rows(), config.leaky_slope), rng);
    }
    return params;
}

void check_structure(const NetworkParams& params) {
    const NetworkParams expected = skeleton(params.config);
    if (params.routes.size() != expected.routes.size() ||
        params.head.size() != expected.head.size()) {
        throw ShapeError("network: route or head layer count does not match the configuration");
    }
    for (std::size_t r = 0; r < params.routes.size(); ++r) {
        if (params.routes[r].layers.size() != expected.routes[r].layers.size()) {
            throw ShapeError("network: route must have exactly " + std::to_string(kLayerCount) +
                             " layers");
        }
    }
    for (std::size_t h = 0; h < params.head.size(); ++h) {
        if (params.head[h].batch_norm != expected.head[h].batch_norm) {
            throw ShapeError("network: head batch-norm layout does not match the configuration");
        }
    }
    std::vector<std::pair<Eigen::Index, Eigen::Index>> want;
    visit_blocks(expected, [&](const std::string&, const Matrix& m) {
        want.emplace_back(m.rows(), m.cols());
    });
    std::size_t i = 0;
    visit_blocks(params, [&](const std::string& name, const Matrix& m) {
        const auto [rows, cols] = want[i++];
        if (m.rows() != rows || m.cols() != cols) {
            throw ShapeError("network: " + name + " is " + shape_string(m) + ", expected " +
                             std::to_string(rows) + "x" + std::to_string(cols));
        }
    });
    if (params.class_names.size() != static_cast<std::size_t>(params.config.class_count)) {
        throw ShapeError("network: class name count does not match class count");
    }
}

namespace {

Var fel_features(Var input, const FELParams& params, double slope) {
    if (input.cols() != params.weight.rows()) {
        throw ShapeError("fel_forward: input is " + shape_string(input.value()) +
                         " but the layer expects " + std::to_string(params.weight.rows()) +
                         " columns");
    }
    auto [s, t] = folded_affine(params.bias, params.gamma, params.beta, params.stats);
    return leaky_relu(affine_columns(matmul(input, params.weight), s, t), slope);
}

}  // namespace

FelOutput fel_forward(Var input, const FELParams& params, LayerKind kind, double slope) {
    Var f = fel_features(input, params, slope);
    if (kind == LayerKind::shared_fc) {
        return {f, f};
    }
    return {f, concat_broadcast(f, rowwise_max(f))};
}

RouteOutput route_forward(Var input, const RouteParams& route, const NetworkConfig& config,
                          int depth) {
    if (depth < 1 || depth > kLayerCount) {
        throw ConfigError("route_forward: depth must lie in 1.." + std::to_string(kLayerCount));
    }
    if (input.cols() != route_input_width(config)) {
        throw ShapeError("route_forward: expected N x " +
                         std::to_string(route_input_width(config)) + " points, got " +
                         shape_string(input.value()));
    }
    if (input.rows() < 1) {
        throw ShapeError("route_forward: at least one point is required");
    }
    RouteOutput out;
    Var a = input;
    for (int l = 0; l < depth; ++l) {
        const auto& layer = route.layers[static_cast<std::size_t>(l)];
        if (l + 1 < depth) {
            FelOutput step = fel_forward(a, layer, config.layer_kind, config.leaky_slope);
            out.features.push_back(step.features);
            a = step.output;
        } else {
            // The last requested layer's concatenated output is never consumed.
            out.features.push_back(fel_features(a, layer, config.leaky_slope));
        }
    }
    if (depth == kLayerCount) {
        out.global = rowwise_max(out.features.back());
    }
    return out;
}

Matrix route_points(const ColoredPointCloud& cloud, RouteKind route) {
    switch (route) {
        case RouteKind::geometry: return cloud.positions();
        case RouteKind::color: return cloud.colors();
        case RouteKind::fused: return combined(cloud);
    }
    return {};
}

Matrix classify(const ColoredPointCloud& cloud, const NetworkParams& params) {
    if (!cloud.normalized()) {
        throw ConfigError("classify: the point cloud must be normalized first");
    }
    const NetworkConfig& config = params.config;
    Graph graph;
    Var features;
    if (config.fusion == Fusion::late) {
        Var geo = route_forward(graph.constant(cloud.positions()),
                                params.route(RouteKind::geometry), config)
                      .global;
        Var color = route_forward(graph.constant(cloud.colors()), params.route(RouteKind::color),
                                  config)
                        .global;
        features = concat_cols(geo, color);
    } else {
        features =
            route_forward(graph.constant(combined(cloud)), params.route(RouteKind::fused), config)
                .global;
    }
    for (const auto& dense : params.head) {
        features = dense_infer(features, dense, config.leaky_slope);
    }
    return features.value();
}

int predict(const ColoredPointCloud& cloud, const NetworkParams& params) {
    Eigen::Index best = 0;
    classify(cloud, params).row(0).maxCoeff(&best);
    return static_cast<int>(best);
}

RepresentationVars extract_representations(Var points, const NetworkParams& params,
                                           RouteKind route, const std::set<int>& content_layers,
                                           const std::set<int>& style_layers,
                                           GramNormalization normalization) {
    if (content_layers.empty() && style_layers.empty()) {
        throw ConfigError("extract_representations: no content or style layers requested");
    }
    require_layers(content_layers, "content");
    require_layers(style_layers, "style");
    const RouteParams& route_params = params.route(route);
    int depth = 0;
    if (!content_layers.empty()) {
        depth = std::max(depth, *content_layers.rbegin());
    }
    if (!style_layers.empty()) {
        depth = std::max(depth, *style_layers.rbegin());
    }
    RouteOutput out = route_forward(points, route_params, params.config, depth);
    RepresentationVars reps;
    reps.route = route;
    for (int l : content_layers) {
        reps.content[l] = out.features[static_cast<std::size_t>(l - 1)];
    }
    for (int l : style_layers) {
        reps.style[l] = gram(out.features[static_cast<std::size_t>(l - 1)], normalization);
    }
    return reps;
}

Representations extract_representations(const Matrix& points, const NetworkParams& params,
                                        RouteKind route, const std::set<int>& content_layers,
                                        const std::set<int>& style_layers,
                                        GramNormalization normalization) {
    Graph graph;
    RepresentationVars vars = extract_representations(
        graph.constant(points), params, route, content_layers, style_layers, normalization);
    Representations reps;
    reps.route = route;
    for (const auto& [l, v] : vars.content) {
        reps.content[l] = v.value();
    }
    for (const auto& [l, v] : vars.style) {
        reps.style[l] = v.value();
    }
    return reps;
}

TrainingPass training_forward(Graph& graph, NetworkParams& params, const Matrix& positions,
                              const Matrix& colors, const Segments& segments,
                              std::mt19937_64& dropout_rng) {
    const NetworkConfig& config = params.config;
    if (positions.rows() != segments.total_rows() || colors.rows() != segments.total_rows()) {
        throw ShapeError("training_forward: point rows do not match the segment layout");
    }
    if (segments.count() < 2) {
        throw ShapeError("training_forward: batch norm needs at least two clouds per batch");
    }
    TrainingPass pass;
    for (Matrix* m : params.trainable()) {
        pass.parameters.push_back(graph.parameter(*m));
    }
    std::size_t next = 0;
    auto take = [&]() { return pass.parameters[next++]; };

    auto run_route = [&](RouteParams& route, Var a) {
        Var f;
        for (std::size_t l = 0; l < route.layers.size(); ++l) {
            auto& layer = route.layers[l];
            Var w = take();
            Var b = take();
            Var gamma = take();
            Var beta = take();
            f = leaky_relu(batch_norm(add_row(matmul(a, w), b), gamma, beta, layer.stats,
                                      Mode::train),
                           config.leaky_slope);
            if (l + 1 == route.layers.size()) {
                break;
            }
            a = config.layer_kind == LayerKind::fel
                    ? segment_concat_broadcast(f, segment_max(f, segments), segments)
                    : f;
        }
        return segment_max(f, segments);
    };

    Var features;
    if (config.fusion == Fusion::late) {
        Var geo = run_route(params.routes[0], graph.constant(positions));
        Var color = run_route(params.routes[1], graph.constant(colors));
        features = concat_cols(geo, color);
    } else {
        Matrix both(positions.rows(), 6);
        both << positions, colors;
        features = run_route(params.routes[0], graph.constant(std::move(both)));
    }
    for (auto& dense : params.head) {
        Var x = dropout(features, config.dropout_keep, dropout_rng);
        Var w = take();
        Var b = take();
        x = add_row(matmul(x, w), b);
        if (dense.batch_norm) {
            Var gamma = take();
            Var beta = take();
            x = leaky_relu(batch_norm(x, gamma, beta, dense.stats, Mode::train),
                           config.leaky_slope);
        }
        features = x;
    }
    pass.logits = features;
    return pass;
}

void save_params(const NetworkParams& params, const fs::path& path) {
    check_structure(params);
    write_file_atomically(
        path,
        [&](std::ostream& out) {
            const NetworkConfig& c = params.config;
            out.write(kMagic, sizeof(kMagic));
            put(out, kCheckpointVersion);
            put(out, static_cast<std::uint32_t>(c.fusion));
            put(out, static_cast<std::uint32_t>(c.layer_kind));
            for (Eigen::Index w : c.layer_widths) {
                put(out, static_cast<std::int64_t>(w));
            }
            for (Eigen::Index w : c.head_widths) {
                put(out, static_cast<std::int64_t>(w));
            }
            put(out, static_cast<std::int32_t>(c.class_count));
            put(out, c.leaky_slope);
            put(out, c.dropout_keep);
            for (const auto& name : params.class_names) {
                put(out, static_cast<std::uint32_t>(name.size()));
                out.write(name.data(), static_cast<std::streamsize>(name.size()));
            }
            visit_blocks(params, [&](const std::string&, const Matrix& m) {
                put(out, static_cast<std::int64_t>(m.rows()));
                put(out, static_cast<std::int64_t>(m.cols()));
                out.write(reinterpret_cast<const char*>(m.data()),
                          static_cast<std::streamsize>(m.size() * sizeof(double)));
            });
        },
        true);
}

NetworkParams load_params(const fs::path& path, const std::optional<NetworkConfig>& expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint " + path.string());
    }
    Reader reader(in, path.string());
    char magic[sizeof(kMagic)];
    reader.bytes(magic, sizeof(magic), "magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        reader.fail("not a checkpoint file (bad magic)");
    }
    const auto version = reader.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        reader.fail("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
    }
    NetworkConfig config;
    const auto fusion = reader.get<std::uint32_t>("fusion mode");
    const auto kind = reader.get<std::uint32_t>("layer kind");
    if (fusion > 1 || kind > 1) {
        reader.fail("invalid mode flags");
    }
    config.fusion = static_cast<Fusion>(fusion);
    config.layer_kind = static_cast<LayerKind>(kind);
    for (auto& w : config.layer_widths) {
        w = reader.get<std::int64_t>("layer widths");
    }
    for (auto& w : config.head_widths) {
        w = reader.get<std::int64_t>("head widths");
    }
    config.class_count = reader.get<std::int32_t>("class count");
    config.leaky_slope = reader.get<double>("leaky slope");
    config.dropout_keep = reader.get<double>("dropout keep");
    try {
        validate(config);
    } catch (const ConfigError& e) {
        reader.fail(std::string("invalid configuration: ") + e.what());
    }
    if (expected) {
        if (expected->layer_widths != config.layer_widths) {
            throw ConfigError(path.string() + ": checkpoint layer widths " +
                              widths_string(config.layer_widths) + " differ from expected " +
                              widths_string(expected->layer_widths));
        }
        if (!(*expected == config)) {
            throw ConfigError(path.string() + ": checkpoint configuration (" + describe(config) +
                              ") differs from expected (" + describe(*expected) + ")");
        }
    }
    NetworkParams params = skeleton(config);
    for (auto& name : params.class_names) {
        const auto len = reader.get<std::uint32_t>("class names");
        if (len > 4096) {
            reader.fail("class name too long");
        }
        name.resize(len);
        reader.bytes(name.data(), len, "class names");
    }
    visit_blocks(params, [&](const std::string& name, Matrix& m) {
        const auto rows = reader.get<std::int64_t>(name.c_str());
        const auto cols = reader.get<std::int64_t>(name.c_str());
        if (rows != m.rows() || cols != m.cols()) {
            throw ShapeError(reader.name() + ": " + name + " is " + std::to_string(rows) + "x" +
                             std::to_string(cols) + ", expected " + shape_string(m));
        }
        reader.bytes(reinterpret_cast<char*>(m.data()),
                     static_cast<std::size_t>(m.size()) * sizeof(double), name);
        if (!all_finite(m)) {
            reader.fail(name + " contains non-finite values");
        }
    });
    if (in.peek() != std::char_traits<char>::eof()) {
        reader.fail("trailing data after the last parameter block");
    }
    return params;
}

}  // namespace pcnst
