#pragma once

#include "pcnst/image.hpp"
#include "pcnst/network.hpp"
#include "pcnst/optimizer.hpp"
#include "pcnst/point_cloud.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace pcnst {

/// Which point properties the optimizer may change.
enum class UpdateMask { geometry, color, both };
enum class InitStrategy { content, gaussian };

std::string_view to_string(UpdateMask mask);
std::string_view to_string(InitStrategy init);
UpdateMask parse_update_mask(std::string_view text);
InitStrategy parse_init_strategy(std::string_view text);

struct TransferConfig {
    double alpha_geo = 1.0;
    double beta_geo = 1.0;
    double alpha_color = 1.0;
    double beta_color = 100.0;
    /// Weights of the single fused route in early fusion.
    double alpha_fused = 1.0;
    double beta_fused = 100.0;
    std::set<int> content_layers{1};
    std::set<int> style_layers{1};
    UpdateMask update_mask = UpdateMask::both;
    Fusion fusion = Fusion::late;
    InitStrategy init = InitStrategy::content;
    double gaussian_sigma = 0.5;
    /// Target point count for gaussian init; 0 means the content cloud's count.
    Eigen::Index target_points = 0;
    OptimizerSettings optimizer{};
    int steps = 4000;
    GramNormalization gram_normalization = GramNormalization::per_point;
    int trace_every = 10;
    std::uint64_t seed = 0;
};

void validate(const TransferConfig& config);
std::string describe(const TransferConfig& config);

/// Recipes: "pc-to-pc", "image-to-object", "image-to-scene". Throws
/// ConfigError listing the valid names otherwise.
TransferConfig preset(std::string_view name);
std::vector<std::string_view> preset_names();

/// A style cloud, or an image treated as a set of colors.
using StyleSource = std::variant<ColoredPointCloud, PixelSet>;

/// Unweighted loss terms. Terms of properties outside the update mask are 0;
/// early fusion only fills the fused terms.
struct LossBreakdown {
    double content_geo = 0.0;
    double style_geo = 0.0;
    double content_color = 0.0;
    double style_color = 0.0;
    double content_fused = 0.0;
    double style_fused = 0.0;
    double total = 0.0;
};

/// Sum over layers of ||F^l(P) - F^l(C)||^2. Both maps must name the same
/// layers; row counts must agree because rows correspond point to point.
Var content_loss(const std::map<int, Var>& features, const std::map<int, Matrix>& targets);
double content_loss(const std::map<int, Matrix>& features_p,
                    const std::map<int, Matrix>& features_c);

/// Sum over layers of ||G^l(P) - G^l(S)||^2 given Gram matrices.
Var style_loss(const std::map<int, Var>& grams, const std::map<int, Matrix>& targets);
/// Same, starting from features; point counts may differ.
double style_loss(const std::map<int, Matrix>& features_p, const std::map<int, Matrix>& features_s,
                  GramNormalization normalization);

/// Precomputed content features of C and style Grams of S for every route the
/// configuration uses.
struct TransferTargets {
    std::map<RouteKind, std::map<int, Matrix>> content;
    std::map<RouteKind, std::map<int, Matrix>> style;
};

TransferTargets prepare_targets(const ColoredPointCloud& content, const StyleSource& style,
                                const NetworkParams& params, const TransferConfig& config);

struct ObjectiveVars {
    Var total;
    LossBreakdown values;
};

/// Records the weighted objective for target point matrices `geo` and
/// `color` (N x 3 each) on their graph. Terms are added in the order
/// geometry content, geometry style, color content, color style.
ObjectiveVars record_objective(Var geo, Var color, const TransferTargets& targets,
                               const NetworkParams& params, const TransferConfig& config);

LossBreakdown total_objective(const ColoredPointCloud& target, const ColoredPointCloud& content,
                              const StyleSource& style, const NetworkParams& params,
                              const TransferConfig& config);

struct RouteLosses {
    double content = 0.0;
    double style = 0.0;
};

/// Unweighted content and style losses of a single route. Early-fusion
/// networks have no geometry or color route, so asking for one throws ConfigError.
RouteLosses route_losses(const ColoredPointCloud& target, const ColoredPointCloud& content,
                         const StyleSource& style, const NetworkParams& params, RouteKind route,
                         const TransferConfig& config);

/// content: an exact copy of C. gaussian: N(0, sigma) per value clamped to
/// [-1, 1]; properties outside the update mask are copied from C.
ColoredPointCloud init_target(const ColoredPointCloud& content, const TransferConfig& config);

struct TraceRecord {
    int step = 0;
    LossBreakdown loss;
};

struct TransferResult {
    ColoredPointCloud stylized;
    /// Losses before the update at step 1, every trace_every steps, and the last step.
    std::vector<TraceRecord> trace;
    /// Losses of the returned cloud.
    LossBreakdown final_loss;
};

using StepCallback = std::function<void(const TraceRecord&)>;

/// Optimizes the target's unmasked properties with the network frozen. Values
/// are clamped to [-1, 1] after every update. Throws NumericError on a
/// non-finite loss, naming the step and the terms.
TransferResult stylize(const ColoredPointCloud& content, const StyleSource& style,
                       const NetworkParams& params, const TransferConfig& config,
                       const StepCallback& on_trace = {});

void write_transfer_trace_csv(std::span<const TraceRecord> trace, Fusion fusion,
                              const std::filesystem::path& path);

}  // namespace pcnst
