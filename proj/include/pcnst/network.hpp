#pragma once

#include "pcnst/graph.hpp"
#include "pcnst/ops.hpp"
#include "pcnst/point_cloud.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace pcnst {

inline constexpr int kLayerCount = 4;

/// late: separate geometry and color routes whose global features are
/// concatenated; early: one route over the N x 6 cloud.
enum class Fusion { late, early };
/// fel: each layer appends the per-cloud max to every row; shared_fc: plain
/// per-point layers.
enum class LayerKind { fel, shared_fc };
enum class RouteKind { geometry, color, fused };

std::string_view to_string(Fusion fusion);
std::string_view to_string(LayerKind kind);
std::string_view to_string(RouteKind route);
Fusion parse_fusion(std::string_view text);
LayerKind parse_layer_kind(std::string_view text);
RouteKind parse_route_kind(std::string_view text);

struct NetworkConfig {
    std::array<Eigen::Index, kLayerCount> layer_widths{64, 256, 1024, 2048};
    /// Hidden widths of the classification head; the third layer maps to class_count.
    std::array<Eigen::Index, 2> head_widths{512, 128};
    int class_count = 16;
    Fusion fusion = Fusion::late;
    LayerKind layer_kind = LayerKind::fel;
    double leaky_slope = kDefaultLeakySlope;
    double dropout_keep = 0.7;

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Throws ConfigError on non-positive widths, fewer than two classes or a
/// slope/keep probability out of range.
void validate(const NetworkConfig& config);
std::string describe(const NetworkConfig& config);

/// Width of the input to layer `layer` (1-based) of a route.
Eigen::Index layer_input_width(const NetworkConfig& config, int layer);
Eigen::Index route_input_width(const NetworkConfig& config);
Eigen::Index head_input_width(const NetworkConfig& config);

struct FELParams {
    Matrix weight;  // d_in x m
    Matrix bias;    // 1 x m
    Matrix gamma;
    Matrix beta;
    BatchNormState stats;
};

struct RouteParams {
    std::vector<FELParams> layers;
};

struct DenseParams {
    Matrix weight;
    Matrix bias;
    bool batch_norm = false;
    Matrix gamma;
    Matrix beta;
    BatchNormState stats;
};

struct NetworkParams {
    NetworkConfig config;
    std::vector<std::string> class_names;
    /// late fusion: {geometry, color}; early fusion: {fused}.
    std::vector<RouteParams> routes;
    std::vector<DenseParams> head;

    /// Throws ConfigError when the route does not exist for this fusion mode.
    [[nodiscard]] const RouteParams& route(RouteKind kind) const;
    /// Every trainable matrix in a fixed order.
    std::vector<Matrix*> trainable();
};

/// He-style uniform weights scaled by fan-in, zero biases, gamma 1, beta 0,
/// running statistics mean 0 / variance 1. Deterministic in the seed.
NetworkParams init_params(const NetworkConfig& config, std::uint64_t seed);

/// Throws ShapeError describing the first parameter block that disagrees
/// with `params.config`.
void check_structure(const NetworkParams& params);

struct FelOutput {
    Var features;  // F: N x m
    Var output;    // A: N x 2m (fel) or N x m (shared_fc)
};

/// Inference-mode layer with frozen batch-norm statistics. Parameters are
/// held by reference and must outlive the graph.
FelOutput fel_forward(Var input, const FELParams& params, LayerKind kind, double slope);

struct RouteOutput {
    std::vector<Var> features;  // F^1 .. F^depth
    Var global;                 // 1 x m_4 when depth == 4
};

/// Runs layers 1..depth of a route in inference mode.
RouteOutput route_forward(Var input, const RouteParams& route, const NetworkConfig& config,
                          int depth = kLayerCount);

/// Route input matrix: positions, colors or [positions | colors].
Matrix route_points(const ColoredPointCloud& cloud, RouteKind route);

/// Inference logits, 1 x class_count. Requires a normalized cloud.
Matrix classify(const ColoredPointCloud& cloud, const NetworkParams& params);
int predict(const ColoredPointCloud& cloud, const NetworkParams& params);

struct RepresentationVars {
    RouteKind route = RouteKind::geometry;
    std::map<int, Var> content;  // layer -> F^l
    std::map<int, Var> style;    // layer -> G(F^l)
};

/// Records content features and style Grams of `points` on the graph owning
/// `points`, so that they are differentiable w.r.t. the input.
RepresentationVars extract_representations(Var points, const NetworkParams& params,
                                           RouteKind route, const std::set<int>& content_layers,
                                           const std::set<int>& style_layers,
                                           GramNormalization normalization);

struct Representations {
    RouteKind route = RouteKind::geometry;
    std::map<int, Matrix> content;
    std::map<int, Matrix> style;
};

Representations extract_representations(const Matrix& points, const NetworkParams& params,
                                        RouteKind route, const std::set<int>& content_layers,
                                        const std::set<int>& style_layers,
                                        GramNormalization normalization);

/// Train-mode forward over several stacked clouds (one segment per cloud).
/// Batch norm uses batch statistics and updates the running statistics in
/// `params`; dropout is active on the head inputs.
struct TrainingPass {
    Var logits;                   // clouds x class_count
    std::vector<Var> parameters;  // aligned with params.trainable()
};
TrainingPass training_forward(Graph& graph, NetworkParams& params, const Matrix& positions,
                              const Matrix& colors, const Segments& segments,
                              std::mt19937_64& dropout_rng);

/// Binary checkpoint holding the configuration, class names, every parameter
/// block and the running statistics. Written atomically.
void save_params(const NetworkParams& params, const std::filesystem::path& path);
/// Throws ParseError on a bad magic, version or truncation, ShapeError on
/// inconsistent blocks, and ConfigError when `expected` is given and differs.
NetworkParams load_params(const std::filesystem::path& path,
                          const std::optional<NetworkConfig>& expected = std::nullopt);

}  // namespace pcnst
