#include "pcnst/transfer.hpp"

#include "pcnst/error.hpp"
#include "pcnst/io.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>

namespace pcnst {

namespace {

constexpr std::array<std::string_view, 3> kMaskNames{"geometry", "color", "both"};
constexpr std::array<std::string_view, 2> kInitNames{"content", "gaussian"};
constexpr std::array<std::string_view, 3> kPresetNames{"pc-to-pc", "image-to-object",
                                                       "image-to-scene"};

template <typename Enum, std::size_t N>
Enum parse_named(std::string_view text, const std::array<std::string_view, N>& names,
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

bool updates_geometry(UpdateMask mask) { return mask != UpdateMask::color; }
bool updates_color(UpdateMask mask) { return mask != UpdateMask::geometry; }

std::string layers_string(const std::set<int>& layers) {
    std::string s;
    for (int l : layers) {
        s += (s.empty() ? "" : ",") + std::to_string(l);
    }
    return s.empty() ? "-" : s;
}

std::string breakdown_string(const LossBreakdown& b) {
    std::ostringstream s;
    s.precision(6);
    s << "content_geo=" << b.content_geo << " style_geo=" << b.style_geo
      << " content_color=" << b.content_color << " style_color=" << b.style_color
      << " content_fused=" << b.content_fused << " style_fused=" << b.style_fused
      << " total=" << b.total;
    return s.str();
}

bool breakdown_finite(const LossBreakdown& b) {
    return std::isfinite(b.content_geo) && std::isfinite(b.style_geo) &&
           std::isfinite(b.content_color) && std::isfinite(b.style_color) &&
           std::isfinite(b.content_fused) && std::isfinite(b.style_fused) &&
           std::isfinite(b.total);
}

void check_compatible(const StyleSource& style, const NetworkParams& params,
                      const TransferConfig& config) {
    validate(config);
    if (params.config.fusion != config.fusion) {
        throw ConfigError("transfer: configuration asks for " +
                          std::string(to_string(config.fusion)) + " fusion but the network uses " +
                          std::string(to_string(params.config.fusion)) + " fusion");
    }
    if (std::holds_alternative<PixelSet>(style)) {
        if (config.fusion != Fusion::late) {
            throw ConfigError("transfer: image style needs a late-fusion network (pixels have no "
                              "geometry to feed a fused route)");
        }
        if (config.update_mask != UpdateMask::color) {
            throw ConfigError("transfer: image style defines no geometry style; use the color "
                              "update mask");
        }
        if (std::get<PixelSet>(style).colors.rows() < 1) {
            throw ConfigError("transfer: style image has no pixels");
        }
    } else if (!std::get<ColoredPointCloud>(style).normalized()) {
        throw ConfigError("transfer: style cloud must be normalized");
    }
}

std::vector<RouteKind> active_routes(const TransferConfig& config) {
    if (config.fusion == Fusion::early) {
        return {RouteKind::fused};
    }
    std::vector<RouteKind> routes;
    if (updates_geometry(config.update_mask)) {
        routes.push_back(RouteKind::geometry);
    }
    if (updates_color(config.update_mask)) {
        routes.push_back(RouteKind::color);
    }
    return routes;
}

Matrix style_points(const StyleSource& style, RouteKind route) {
    if (const auto* pixels = std::get_if<PixelSet>(&style)) {
        return pixels->colors;
    }
    return route_points(std::get<ColoredPointCloud>(style), route);
}

}  // namespace

std::string_view to_string(UpdateMask mask) { return kMaskNames[static_cast<std::size_t>(mask)]; }
std::string_view to_string(InitStrategy init) { return kInitNames[static_cast<std::size_t>(init)]; }
UpdateMask parse_update_mask(std::string_view text) {
    return parse_named<UpdateMask>(text, kMaskNames, "update mask");
}
InitStrategy parse_init_strategy(std::string_view text) {
    return parse_named<InitStrategy>(text, kInitNames, "init strategy");
}

void validate(const TransferConfig& config) {
    for (double w : {config.alpha_geo, config.beta_geo, config.alpha_color, config.beta_color,
                     config.alpha_fused, config.beta_fused}) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw ConfigError("transfer: loss weights must be finite and non-negative");
        }
    }
    for (const auto* layers : {&config.content_layers, &config.style_layers}) {
        for (int l : *layers) {
            if (l < 1 || l > kLayerCount) {
                throw ConfigError("transfer: layer " + std::to_string(l) +
                                  " is outside 1.." + std::to_string(kLayerCount));
            }
        }
    }
    if (config.content_layers.empty() && config.style_layers.empty()) {
        throw ConfigError("transfer: at least one content or style layer is required");
    }
    if (config.steps < 1) {
        throw ConfigError("transfer: steps must be at least 1");
    }
    if (!(config.optimizer.learning_rate > 0.0) || !std::isfinite(config.optimizer.learning_rate)) {
        throw ConfigError("transfer: learning rate must be positive");
    }
    if (config.trace_every < 1) {
        throw ConfigError("transfer: trace_every must be at least 1");
    }
    if (!(config.gaussian_sigma > 0.0)) {
        throw ConfigError("transfer: gaussian sigma must be positive");
    }
    if (config.target_points < 0) {
        throw ConfigError("transfer: target point count must be non-negative");
    }
}

std::string describe(const TransferConfig& config) {
    std::ostringstream s;
    s << "fusion=" << to_string(config.fusion) << " mask=" << to_string(config.update_mask)
      << " init=" << to_string(config.init) << " content_layers="
      << layers_string(config.content_layers)
      << " style_layers=" << layers_string(config.style_layers);
    if (config.fusion == Fusion::late) {
        s << " alpha_geo=" << config.alpha_geo << " beta_geo=" << config.beta_geo
          << " alpha_color=" << config.alpha_color << " beta_color=" << config.beta_color;
    } else {
        s << " alpha=" << config.alpha_fused << " beta=" << config.beta_fused;
    }
    s << " optimizer=" << to_string(config.optimizer.kind)
      << " lr=" << config.optimizer.learning_rate << " steps=" << config.steps;
    return s.str();
}

std::vector<std::string_view> preset_names() { return {kPresetNames.begin(), kPresetNames.end()}; }

TransferConfig preset(std::string_view name) {
    TransferConfig config;
    if (name == "pc-to-pc") {
        return config;
    }
    if (name == "image-to-object" || name == "image-to-scene") {
        config.content_layers = {1};
        config.style_layers = {3, 4};
        config.update_mask = UpdateMask::color;
        if (name == "image-to-scene") {
            config.optimizer.learning_rate = 0.001;
            config.steps = 30000;
        }
        return config;
    }
    std::string choices;
    for (std::string_view n : kPresetNames) {
        choices += (choices.empty() ? "" : ", ") + std::string(n);
    }
    throw ConfigError("unknown preset '" + std::string(name) + "' (expected one of: " + choices +
                      ")");
}

Var content_loss(const std::map<int, Var>& features, const std::map<int, Matrix>& targets) {
    if (features.empty()) {
        throw ConfigError("content_loss: no layers given");
    }
    Var total;
    for (const auto& [layer, f] : features) {
        auto it = targets.find(layer);
        if (it == targets.end()) {
            throw ConfigError("content_loss: no content target for layer " +
                              std::to_string(layer));
        }
        if (f.rows() != it->second.rows()) {
            throw ShapeError("content_loss: target has " + std::to_string(f.rows()) +
                             " points but the content cloud has " +
                             std::to_string(it->second.rows()) +
                             "; content loss needs equal point counts with row-to-row "
                             "correspondence");
        }
        Var term = squared_distance(f, f.graph().constant(it->second));
        total = total.valid() ? add(total, term) : term;
    }
    return total;
}

double content_loss(const std::map<int, Matrix>& features_p,
                    const std::map<int, Matrix>& features_c) {
    Graph graph;
    std::map<int, Var> vars;
    for (const auto& [layer, f] : features_p) {
        vars[layer] = graph.constant(f);
    }
    return content_loss(vars, features_c).value()(0, 0);
}

Var style_loss(const std::map<int, Var>& grams, const std::map<int, Matrix>& targets) {
    if (grams.empty()) {
        throw ConfigError("style_loss: no layers given");
    }
    Var total;
    for (const auto& [layer, g] : grams) {
        auto it = targets.find(layer);
        if (it == targets.end()) {
            throw ConfigError("style_loss: no style target for layer " + std::to_string(layer));
        }
        Var term = squared_distance(g, g.graph().constant(it->second));
        total = total.valid() ? add(total, term) : term;
    }
    return total;
}

double style_loss(const std::map<int, Matrix>& features_p, const std::map<int, Matrix>& features_s,
                  GramNormalization normalization) {
    Graph graph;
    std::map<int, Var> grams;
    std::map<int, Matrix> targets;
    for (const auto& [layer, f] : features_p) {
        grams[layer] = gram(graph.constant(f), normalization);
    }
    for (const auto& [layer, f] : features_s) {
        targets[layer] = gram(f, normalization);
    }
    return style_loss(grams, targets).value()(0, 0);
}

TransferTargets prepare_targets(const ColoredPointCloud& content, const StyleSource& style,
                                const NetworkParams& params, const TransferConfig& config) {
    check_compatible(style, params, config);
    if (!content.normalized()) {
        throw ConfigError("transfer: content cloud must be normalized");
    }
    TransferTargets targets;
    for (RouteKind route : active_routes(config)) {
        if (!config.content_layers.empty()) {
            targets.content[route] =
                extract_representations(route_points(content, route), params, route,
                                        config.content_layers, {}, config.gram_normalization)
                    .content;
        }
        if (!config.style_layers.empty()) {
            targets.style[route] =
                extract_representations(style_points(style, route), params, route, {},
                                        config.style_layers, config.gram_normalization)
                    .style;
        }
    }
    return targets;
}

ObjectiveVars record_objective(Var geo, Var color, const TransferTargets& targets,
                               const NetworkParams& params, const TransferConfig& config) {
    ObjectiveVars out;
    auto add_term = [&](Var term, double weight) {
        if (weight == 0.0) {
            return;
        }
        Var weighted = scale(term, weight);
        out.total = out.total.valid() ? add(out.total, weighted) : weighted;
    };
    auto route_terms = [&](Var points, RouteKind route, double alpha, double beta, double& content,
                           double& style) {
        RepresentationVars reps =
            extract_representations(points, params, route, config.content_layers,
                                    config.style_layers, config.gram_normalization);
        if (!reps.content.empty()) {
            Var c = content_loss(reps.content, targets.content.at(route));
            content = c.value()(0, 0);
            add_term(c, alpha);
        }
        if (!reps.style.empty()) {
            Var s = style_loss(reps.style, targets.style.at(route));
            style = s.value()(0, 0);
            add_term(s, beta);
        }
    };

    LossBreakdown& v = out.values;
    if (config.fusion == Fusion::early) {
        route_terms(concat_cols(geo, color), RouteKind::fused, config.alpha_fused,
                    config.beta_fused, v.content_fused, v.style_fused);
    } else {
        if (updates_geometry(config.update_mask)) {
            route_terms(geo, RouteKind::geometry, config.alpha_geo, config.beta_geo,
                        v.content_geo, v.style_geo);
        }
        if (updates_color(config.update_mask)) {
            route_terms(color, RouteKind::color, config.alpha_color, config.beta_color,
                        v.content_color, v.style_color);
        }
    }
    if (!out.total.valid()) {
        // Every active weight is zero.
        out.total = scale(geo.graph().constant(Matrix::Zero(1, 1)), 1.0);
    }
    v.total = out.total.value()(0, 0);
    return out;
}

LossBreakdown total_objective(const ColoredPointCloud& target, const ColoredPointCloud& content,
                              const StyleSource& style, const NetworkParams& params,
                              const TransferConfig& config) {
    TransferTargets targets = prepare_targets(content, style, params, config);
    Graph graph;
    return record_objective(graph.constant(target.positions()), graph.constant(target.colors()),
                            targets, params, config)
        .values;
}

RouteLosses route_losses(const ColoredPointCloud& target, const ColoredPointCloud& content,
                         const StyleSource& style, const NetworkParams& params, RouteKind route,
                         const TransferConfig& config) {
    if (params.config.fusion == Fusion::early && route != RouteKind::fused) {
        throw ConfigError("transfer: early-fusion network has no separate " +
                          std::string(to_string(route)) + " route; only fused losses exist");
    }
    if (params.config.fusion == Fusion::late && route == RouteKind::fused) {
        throw ConfigError("transfer: late-fusion network has no fused route");
    }
    TransferConfig single = config;
    single.fusion = params.config.fusion;
    if (route == RouteKind::geometry) {
        single.update_mask = UpdateMask::geometry;
    } else if (route == RouteKind::color) {
        single.update_mask = UpdateMask::color;
    }
    LossBreakdown b = total_objective(target, content, style, params, single);
    switch (route) {
        case RouteKind::geometry: return {b.content_geo, b.style_geo};
        case RouteKind::color: return {b.content_color, b.style_color};
        case RouteKind::fused: return {b.content_fused, b.style_fused};
    }
    return {};
}

ColoredPointCloud init_target(const ColoredPointCloud& content, const TransferConfig& config) {
    if (!content.normalized()) {
        throw ConfigError("transfer: content cloud must be normalized");
    }
    const Eigen::Index n = config.target_points == 0 ? content.size() : config.target_points;
    if (config.init == InitStrategy::content) {
        if (n != content.size()) {
            throw ConfigError("transfer: content init copies C, so the target point count must "
                              "equal the content cloud's (" +
                              std::to_string(content.size()) + ")");
        }
        return content;
    }
    if (n != content.size() && config.update_mask != UpdateMask::both) {
        throw ConfigError("transfer: a partial update mask keeps C's other property, so the "
                          "target point count must equal the content cloud's");
    }
    if (!config.content_layers.empty() && n != content.size()) {
        throw ConfigError("transfer: content loss needs the target point count to equal the "
                          "content cloud's (" + std::to_string(content.size()) + ")");
    }
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, config.gaussian_sigma);
    auto sample = [&]() {
        Matrix m(n, 3);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < 3; ++j) {
                m(i, j) = std::clamp(normal(rng), -1.0, 1.0);
            }
        }
        return m;
    };
    Matrix positions = sample();
    Matrix colors = sample();
    if (!updates_geometry(config.update_mask)) {
        positions = content.positions();
    }
    if (!updates_color(config.update_mask)) {
        colors = content.colors();
    }
    return ColoredPointCloud::from_normalized(std::move(positions), std::move(colors),
                                              *content.transform(), content.label());
}

TransferResult stylize(const ColoredPointCloud& content, const StyleSource& style,
                       const NetworkParams& params, const TransferConfig& config,
                       const StepCallback& on_trace) {
    TransferTargets targets = prepare_targets(content, style, params, config);
    ColoredPointCloud init = init_target(content, config);
    Matrix positions = init.positions();
    Matrix colors = init.colors();
    const bool move_geo = updates_geometry(config.update_mask);
    const bool move_color = updates_color(config.update_mask);

    Optimizer optimizer(config.optimizer);
    TransferResult result;
    spdlog::info("transfer: {} points, {}", positions.rows(), describe(config));

    auto evaluate = [&](Graph& graph, Var& geo, Var& color) {
        geo = move_geo ? graph.parameter(positions) : graph.constant(positions);
        color = move_color ? graph.parameter(colors) : graph.constant(colors);
        return record_objective(geo, color, targets, params, config);
    };

    for (int step = 1; step <= config.steps; ++step) {
        Graph graph;
        Var geo;
        Var color;
        ObjectiveVars objective = evaluate(graph, geo, color);
        if (!breakdown_finite(objective.values)) {
            throw NumericError("transfer: non-finite loss at step " + std::to_string(step) + " (" +
                               breakdown_string(objective.values) + ")");
        }
        if (step == 1 || step % config.trace_every == 0 || step == config.steps) {
            result.trace.push_back({step, objective.values});
            if (on_trace) {
                on_trace(result.trace.back());
            }
        }
        graph.backward(objective.total);
        std::vector<Matrix*> leaves;
        std::vector<Matrix> grads;
        if (move_geo) {
            leaves.push_back(&positions);
            grads.push_back(graph.grad(geo));
        }
        if (move_color) {
            leaves.push_back(&colors);
            grads.push_back(graph.grad(color));
        }
        optimizer.step(leaves, grads);
        for (Matrix* m : leaves) {
            if (!all_finite(*m)) {
                throw NumericError("transfer: non-finite point values after step " +
                                   std::to_string(step) + " (" +
                                   breakdown_string(objective.values) + ")");
            }
            *m = m->cwiseMax(-1.0).cwiseMin(1.0);
        }
    }

    {
        Graph graph;
        Var geo;
        Var color;
        result.final_loss = evaluate(graph, geo, color).values;
    }
    result.stylized = ColoredPointCloud::from_normalized(std::move(positions), std::move(colors),
                                                         *content.transform(), content.label());
    spdlog::info("transfer: done, total loss {:.6g} -> {:.6g}",
                 result.trace.front().loss.total, result.final_loss.total);
    return result;
}

void write_transfer_trace_csv(std::span<const TraceRecord> trace, Fusion fusion,
                              const std::filesystem::path& path) {
    write_file_atomically(path, [&](std::ostream& out) {
        if (fusion == Fusion::late) {
            out << "step,content_loss_geo,style_loss_geo,content_loss_color,style_loss_color,"
                   "total\n";
        } else {
            out << "step,content_loss,style_loss,total\n";
        }
        out.precision(12);
        for (const auto& r : trace) {
            const LossBreakdown& b = r.loss;
            out << r.step << ',';
            if (fusion == Fusion::late) {
                out << b.content_geo << ',' << b.style_geo << ',' << b.content_color << ','
                    << b.style_color;
            } else {
                out << b.content_fused << ',' << b.style_fused;
            }
            out << ',' << b.total << '\n';
        }
    });
}

}  // namespace pcnst
