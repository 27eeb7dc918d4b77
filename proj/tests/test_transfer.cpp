#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fixtures.hpp"
#include "gradient_oracle.hpp"
#include "pcnst/error.hpp"
#include "pcnst/transfer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <unistd.h>

using namespace pcnst;
using namespace pcnst::testing;
namespace fs = std::filesystem;

namespace {

NetworkParams small_network(Fusion fusion = Fusion::late, std::uint64_t seed = 3) {
    NetworkParams params = init_params(small_config(fusion), seed);
    randomize_stats(params, seed + 100);
    return params;
}

ColoredPointCloud shifted(const ColoredPointCloud& c, double dp, double dc) {
    Matrix p = (c.positions().array() + dp).cwiseMax(-1.0).cwiseMin(1.0);
    Matrix k = (c.colors().array() + dc).cwiseMax(-1.0).cwiseMin(1.0);
    return ColoredPointCloud::from_normalized(p, k, *c.transform());
}

TransferConfig quick_config(Fusion fusion = Fusion::late) {
    TransferConfig c;
    c.fusion = fusion;
    c.content_layers = {1, 2};
    c.style_layers = {1, 3};
    c.steps = 20;
    c.trace_every = 5;
    return c;
}

}  // namespace

TEST_CASE("content loss of an all-ones difference is the entry count") {
    std::map<int, Matrix> p{{1, Matrix::Ones(2, 3)}};
    std::map<int, Matrix> c{{1, Matrix::Zero(2, 3)}};
    CHECK(content_loss(p, c) == 6.0);
    CHECK(content_loss(c, c) == 0.0);
}

TEST_CASE("content loss adds over layers") {
    std::mt19937_64 rng(1);
    Matrix a1 = random_matrix(4, 3, rng), b1 = random_matrix(4, 3, rng);
    Matrix a2 = random_matrix(4, 5, rng), b2 = random_matrix(4, 5, rng);
    const double both = content_loss({{1, a1}, {2, a2}}, {{1, b1}, {2, b2}});
    const double sum = content_loss({{1, a1}}, {{1, b1}}) + content_loss({{2, a2}}, {{2, b2}});
    CHECK(both == doctest::Approx(sum).epsilon(1e-14));
}

TEST_CASE("content loss rejects differing point counts") {
    std::map<int, Matrix> p{{1, Matrix::Ones(3, 2)}};
    std::map<int, Matrix> c{{1, Matrix::Ones(4, 2)}};
    CHECK_THROWS_WITH_AS(content_loss(p, c), doctest::Contains("row-to-row correspondence"),
                         ShapeError);
}

TEST_CASE("style loss is zero on itself and ignores the style point order") {
    std::mt19937_64 rng(2);
    NetworkParams params = small_network();
    Matrix p = random_matrix(50, 3, rng);
    Matrix s = random_matrix(80, 3, rng);
    auto features = [&](const Matrix& m) {
        return extract_representations(m, params, RouteKind::color, {1, 2, 3, 4}, {},
                                       GramNormalization::per_point)
            .content;
    };
    CHECK(style_loss(features(p), features(p), GramNormalization::per_point) == 0.0);
    const double base = style_loss(features(p), features(s), GramNormalization::per_point);
    const double permuted = style_loss(
        features(p), features(permute_rows(s, random_permutation(80, rng))),
        GramNormalization::per_point);
    CHECK(base > 0.0);
    CHECK(permuted == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("style loss between very different cardinalities stays finite") {
    std::mt19937_64 rng(3);
    NetworkParams params = small_network();
    auto features = [&](Eigen::Index n) {
        return extract_representations(random_matrix(n, 3, rng), params, RouteKind::geometry,
                                       {1, 2, 3, 4}, {}, GramNormalization::per_point)
            .content;
    };
    const double loss = style_loss(features(4096), features(512), GramNormalization::per_point);
    CHECK(std::isfinite(loss));
    CHECK(loss < 1e3);
}

TEST_CASE("objective is zero when target, content and style coincide") {
    NetworkParams params = small_network();
    ColoredPointCloud c = random_normalized_cloud(30, 4);
    LossBreakdown b = total_objective(c, c, c, params, quick_config());
    CHECK(b.total == 0.0);
    CHECK(b.content_geo == 0.0);
    CHECK(b.style_color == 0.0);
}

TEST_CASE("objective is the weighted sum of its breakdown") {
    NetworkParams params = small_network();
    ColoredPointCloud c = random_normalized_cloud(30, 5);
    ColoredPointCloud s = random_normalized_cloud(40, 6);
    ColoredPointCloud p = shifted(c, 0.05, -0.1);
    TransferConfig config = quick_config();
    config.alpha_geo = 2.0;
    config.beta_geo = 3.0;
    config.alpha_color = 0.5;
    config.beta_color = 7.0;
    LossBreakdown b = total_objective(p, c, s, params, config);
    for (double term : {b.content_geo, b.style_geo, b.content_color, b.style_color}) {
        CHECK(term > 0.0);
    }
    const double expected =
        ((2.0 * b.content_geo + 3.0 * b.style_geo) + 0.5 * b.content_color) + 7.0 * b.style_color;
    CHECK(b.total == expected);
    CHECK(b.content_fused == 0.0);

    config.update_mask = UpdateMask::color;
    LossBreakdown color_only = total_objective(p, c, s, params, config);
    CHECK(color_only.content_geo == 0.0);
    CHECK(color_only.style_geo == 0.0);
    CHECK(color_only.total == 0.5 * b.content_color + 7.0 * b.style_color);
}

TEST_CASE("style weight acts linearly") {
    NetworkParams params = small_network();
    ColoredPointCloud c = random_normalized_cloud(30, 7);
    ColoredPointCloud s = random_normalized_cloud(25, 8);
    ColoredPointCloud p = shifted(c, 0.0, 0.2);
    TransferConfig config = quick_config();
    config.update_mask = UpdateMask::color;

    config.beta_color = 0.0;
    LossBreakdown none = total_objective(p, c, s, params, config);
    CHECK(none.total == config.alpha_color * none.content_color);
    CHECK(none.style_color > 0.0);

    config.beta_color = 10.0;
    LossBreakdown single = total_objective(p, c, s, params, config);
    config.beta_color = 20.0;
    LossBreakdown twice = total_objective(p, c, s, params, config);
    CHECK(single.style_color == twice.style_color);
    const double style_single = single.total - single.content_color;
    const double style_twice = twice.total - twice.content_color;
    CHECK(style_twice == doctest::Approx(2.0 * style_single).epsilon(1e-12));
}

TEST_CASE("early fusion objective matches independent fused losses") {
    NetworkParams params = small_network(Fusion::early);
    ColoredPointCloud c = random_normalized_cloud(20, 9);
    ColoredPointCloud s = random_normalized_cloud(35, 10);
    ColoredPointCloud p = shifted(c, 0.1, -0.05);
    TransferConfig config = quick_config(Fusion::early);
    config.content_layers = {2};
    config.style_layers = {2};
    config.alpha_fused = 1.5;
    config.beta_fused = 40.0;
    LossBreakdown b = total_objective(p, c, s, params, config);

    auto reps = [&](const ColoredPointCloud& x) {
        return extract_representations(combined(x), params, RouteKind::fused, {2}, {2},
                                       GramNormalization::per_point);
    };
    const double lc = content_loss(reps(p).content, reps(c).content);
    const double ls = style_loss(
        extract_representations(combined(p), params, RouteKind::fused, {2}, {},
                                GramNormalization::per_point)
            .content,
        extract_representations(combined(s), params, RouteKind::fused, {2}, {},
                                GramNormalization::per_point)
            .content,
        GramNormalization::per_point);
    CHECK(b.content_fused == lc);
    CHECK(b.style_fused == ls);
    CHECK(b.total == 1.5 * lc + 40.0 * ls);
    CHECK(b.content_geo == 0.0);

    CHECK_THROWS_AS(route_losses(p, c, s, params, RouteKind::geometry, config), ConfigError);
    CHECK_THROWS_AS(route_losses(p, c, s, params, RouteKind::color, config), ConfigError);
    RouteLosses fused = route_losses(p, c, s, params, RouteKind::fused, config);
    CHECK(fused.content == lc);
}

TEST_CASE("route losses of a late-fusion network") {
    NetworkParams params = small_network();
    ColoredPointCloud c = random_normalized_cloud(20, 11);
    ColoredPointCloud p = shifted(c, 0.1, 0.1);
    TransferConfig config = quick_config();
    LossBreakdown b = total_objective(p, c, c, params, config);
    RouteLosses geo = route_losses(p, c, c, params, RouteKind::geometry, config);
    RouteLosses color = route_losses(p, c, c, params, RouteKind::color, config);
    CHECK(geo.content == b.content_geo);
    CHECK(geo.style == b.style_geo);
    CHECK(color.style == b.style_color);
    CHECK_THROWS_AS(route_losses(p, c, c, params, RouteKind::fused, config), ConfigError);
}

TEST_CASE("objective gradient matches finite differences") {
    NetworkParams params = small_network(Fusion::late, 12);
    ColoredPointCloud c = random_normalized_cloud(16, 13);
    ColoredPointCloud s = random_normalized_cloud(24, 14);
    ColoredPointCloud p = shifted(c, 0.03, -0.04);
    TransferConfig config = quick_config();
    config.content_layers = {1, 2, 3, 4};
    config.style_layers = {1, 2, 3, 4};
    TransferTargets targets = prepare_targets(c, s, params, config);

    Graph graph;
    Var geo = graph.parameter(p.positions());
    Var color = graph.parameter(p.colors());
    ObjectiveVars objective = record_objective(geo, color, targets, params, config);
    graph.backward(objective.total);

    auto value_at = [&](const Matrix& positions, const Matrix& colors) {
        Graph g;
        return record_objective(g.constant(positions), g.constant(colors), targets, params,
                                config)
            .values.total;
    };
    Matrix fd_geo = finite_difference_gradient(
        [&](const Matrix& x) { return value_at(x, p.colors()); }, p.positions());
    Matrix fd_color = finite_difference_gradient(
        [&](const Matrix& x) { return value_at(p.positions(), x); }, p.colors());
    CHECK(max_relative_error(graph.grad(geo), fd_geo, 1e-6) < 1e-4);
    CHECK(max_relative_error(graph.grad(color), fd_color, 1e-6) < 1e-4);
}

TEST_CASE("content init copies the content cloud") {
    ColoredPointCloud c = random_normalized_cloud(10, 15);
    TransferConfig config;
    ColoredPointCloud p = init_target(c, config);
    CHECK(p.positions() == c.positions());
    CHECK(p.colors() == c.colors());
    config.target_points = 11;
    CHECK_THROWS_AS(init_target(c, config), ConfigError);
}

TEST_CASE("gaussian init statistics") {
    ColoredPointCloud c = random_normalized_cloud(16667, 16);
    TransferConfig config;
    config.init = InitStrategy::gaussian;
    config.seed = 99;
    ColoredPointCloud p = init_target(c, config);
    Matrix all(p.size(), 6);
    all << p.positions(), p.colors();
    const double mean = all.mean();
    const double var = (all.array() - mean).square().sum() / static_cast<double>(all.size() - 1);
    CHECK(all.size() >= 100000);
    CHECK(std::abs(mean) <= 0.02);
    CHECK(std::sqrt(var) >= 0.45);
    CHECK(std::sqrt(var) <= 0.52);
    CHECK(all.maxCoeff() <= 1.0);
    CHECK(all.minCoeff() >= -1.0);
    CHECK(init_target(c, config) == p);
}

TEST_CASE("gaussian init keeps the property outside the mask") {
    ColoredPointCloud c = random_normalized_cloud(40, 17);
    TransferConfig config;
    config.init = InitStrategy::gaussian;
    config.update_mask = UpdateMask::color;
    ColoredPointCloud p = init_target(c, config);
    CHECK(p.positions() == c.positions());
    CHECK(p.colors() != c.colors());

    config.target_points = 50;
    CHECK_THROWS_AS(init_target(c, config), ConfigError);
    config.update_mask = UpdateMask::both;
    config.content_layers.clear();
    CHECK(init_target(c, config).size() == 50);
}

TEST_CASE("identity transfer stays at the content cloud") {
    NetworkParams params = small_network();
    ColoredPointCloud c = random_normalized_cloud(64, 18);
    TransferConfig config = preset("pc-to-pc");
    config.steps = 100;
    config.trace_every = 1;
    TransferResult r = stylize(c, c, params, config);
    REQUIRE(r.trace.size() == 100);
    for (const auto& t : r.trace) {
        CHECK(t.loss.total < 1e-8);
    }
    CHECK((r.stylized.positions() - c.positions()).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((r.stylized.colors() - c.colors()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("masked properties are bitwise frozen") {
    NetworkParams params = small_network();
    ColoredPointCloud c = random_normalized_cloud(40, 19);
    ColoredPointCloud s = random_normalized_cloud(30, 20);
    TransferConfig config = quick_config();

    config.update_mask = UpdateMask::color;
    TransferResult color_run = stylize(c, s, params, config);
    CHECK(color_run.stylized.positions() == c.positions());
    CHECK(color_run.stylized.colors() != c.colors());

    config.update_mask = UpdateMask::geometry;
    TransferResult geo_run = stylize(c, s, params, config);
    CHECK(geo_run.stylized.colors() == c.colors());
    CHECK(geo_run.stylized.positions() != c.positions());
}

TEST_CASE("trace layout and clamping") {
    NetworkParams params = small_network();
    ColoredPointCloud c = random_normalized_cloud(40, 21);
    ColoredPointCloud s = random_normalized_cloud(30, 22);
    TransferConfig config = quick_config();
    config.steps = 23;
    config.optimizer.learning_rate = 0.5;
    std::vector<int> seen;
    TransferResult r = stylize(c, s, params, config, [&](const TraceRecord& t) {
        seen.push_back(t.step);
    });
    std::vector<int> steps;
    for (const auto& t : r.trace) {
        steps.push_back(t.step);
        CHECK(t.loss.total >= 0.0);
    }
    CHECK(steps == std::vector<int>{1, 5, 10, 15, 20, 23});
    CHECK(seen == steps);
    CHECK(r.trace.front().loss.content_geo == 0.0);
    CHECK(r.trace.front().loss.content_color == 0.0);
    CHECK(r.stylized.positions().cwiseAbs().maxCoeff() <= 1.0);
    CHECK(r.stylized.colors().cwiseAbs().maxCoeff() <= 1.0);
    CHECK(r.final_loss.total == total_objective(r.stylized, c, s, params, config).total);
}

TEST_CASE("small-step gradient descent does not increase the loss") {
    NetworkParams params = small_network();
    ColoredPointCloud c = random_normalized_cloud(40, 23);
    ColoredPointCloud s = random_normalized_cloud(30, 24);
    TransferConfig config = quick_config();
    config.optimizer.kind = OptimizerKind::sgd;
    config.optimizer.learning_rate = 1e-3;
    config.beta_color = 1.0;
    config.steps = 50;
    config.trace_every = 1;
    TransferResult r = stylize(c, s, params, config);
    for (std::size_t i = 1; i < r.trace.size(); ++i) {
        CHECK(r.trace[i].loss.total <= r.trace[i - 1].loss.total + 1e-7);
    }
    CHECK(r.trace.back().loss.total < r.trace.front().loss.total);
}

TEST_CASE("transfer runs are deterministic") {
    NetworkParams params = small_network();
    ColoredPointCloud c = random_normalized_cloud(30, 25);
    ColoredPointCloud s = random_normalized_cloud(30, 26);
    TransferConfig config = quick_config();
    config.init = InitStrategy::gaussian;
    config.seed = 5;
    CHECK(stylize(c, s, params, config).stylized == stylize(c, s, params, config).stylized);
}

TEST_CASE("image style drives the color route only") {
    NetworkParams params = small_network();
    ColoredPointCloud c = random_normalized_cloud(40, 27);
    std::mt19937_64 rng(28);
    PixelSet image{random_matrix(36, 3, rng, 0.2, 0.9), 6, 6};
    TransferConfig config = preset("image-to-object");
    config.steps = 30;
    TransferResult r = stylize(c, image, params, config);
    CHECK(r.stylized.positions() == c.positions());
    CHECK(r.final_loss.style_color < r.trace.front().loss.style_color);

    config.update_mask = UpdateMask::both;
    CHECK_THROWS_WITH_AS(stylize(c, image, params, config), doctest::Contains("geometry"),
                         ConfigError);
    TransferConfig early = config;
    early.fusion = Fusion::early;
    early.update_mask = UpdateMask::color;
    CHECK_THROWS_AS(stylize(c, image, small_network(Fusion::early), early), ConfigError);
}

TEST_CASE("configuration errors") {
    NetworkParams params = small_network();
    ColoredPointCloud c = random_normalized_cloud(10, 29);
    TransferConfig config = quick_config();
    config.fusion = Fusion::early;
    CHECK_THROWS_WITH_AS(stylize(c, c, params, config), doctest::Contains("fusion"), ConfigError);

    auto rejects = [&](auto edit) {
        TransferConfig bad = quick_config();
        edit(bad);
        CHECK_THROWS_AS(validate(bad), ConfigError);
    };
    rejects([](TransferConfig& t) { t.beta_color = -1.0; });
    rejects([](TransferConfig& t) { t.steps = 0; });
    rejects([](TransferConfig& t) { t.optimizer.learning_rate = 0.0; });
    rejects([](TransferConfig& t) { t.content_layers = {5}; });
    rejects([](TransferConfig& t) {
        t.content_layers.clear();
        t.style_layers.clear();
    });
    rejects([](TransferConfig& t) { t.trace_every = 0; });

    ColoredPointCloud raw(c.positions(), c.colors());
    CHECK_THROWS_AS(stylize(raw, c, params, quick_config()), ConfigError);
    CHECK_THROWS_AS(stylize(c, raw, params, quick_config()), ConfigError);
}

TEST_CASE("non-finite loss aborts with the step and terms") {
    NetworkParams params = small_network();
    ColoredPointCloud c = random_normalized_cloud(20, 30);
    ColoredPointCloud s = random_normalized_cloud(20, 31);
    TransferConfig config = quick_config();
    config.beta_color = 1e308;
    config.beta_geo = 1e308;
    CHECK_THROWS_WITH_AS(stylize(c, s, params, config), doctest::Contains("step 1"),
                         NumericError);
}

TEST_CASE("presets") {
    TransferConfig pc = preset("pc-to-pc");
    CHECK(pc.beta_color == 100.0);
    CHECK(pc.alpha_geo == 1.0);
    CHECK(pc.beta_geo == 1.0);
    CHECK(pc.alpha_color == 1.0);
    CHECK(pc.content_layers == std::set<int>{1});
    CHECK(pc.style_layers == std::set<int>{1});
    CHECK(pc.optimizer.kind == OptimizerKind::adam);
    CHECK(pc.optimizer.learning_rate == 0.01);
    CHECK(pc.steps == 4000);
    CHECK(pc.update_mask == UpdateMask::both);

    TransferConfig obj = preset("image-to-object");
    CHECK(obj.update_mask == UpdateMask::color);
    CHECK(obj.style_layers == std::set<int>{3, 4});
    CHECK(obj.content_layers == std::set<int>{1});
    CHECK(obj.beta_color == 100.0);

    TransferConfig scene = preset("image-to-scene");
    CHECK(scene.steps == 30000);
    CHECK(scene.optimizer.learning_rate == 0.001);
    CHECK(scene.update_mask == UpdateMask::color);

    CHECK_THROWS_WITH_AS(preset("nope"), doctest::Contains("image-to-scene"), ConfigError);
    CHECK(parse_update_mask("geometry") == UpdateMask::geometry);
    CHECK(parse_init_strategy("gaussian") == InitStrategy::gaussian);
    CHECK_THROWS_AS(parse_update_mask("position"), ConfigError);
}

TEST_CASE("trace csv columns") {
    fs::path dir = fs::temp_directory_path() / ("pcnst_transfer_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    std::vector<TraceRecord> trace{{1, {0.0, 2.0, 0.0, 3.0, 0.0, 0.0, 302.0}},
                                   {10, {0.5, 1.0, 0.25, 1.5, 0.0, 0.0, 152.0}}};
    write_transfer_trace_csv(trace, Fusion::late, dir / "late.csv");
    std::ifstream late(dir / "late.csv");
    std::string header, row;
    std::getline(late, header);
    std::getline(late, row);
    CHECK(header == "step,content_loss_geo,style_loss_geo,content_loss_color,style_loss_color,total");
    CHECK(row == "1,0,2,0,3,302");

    std::vector<TraceRecord> fused{{1, {0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 201.0}}};
    write_transfer_trace_csv(fused, Fusion::early, dir / "early.csv");
    std::ifstream early(dir / "early.csv");
    std::getline(early, header);
    std::getline(early, row);
    CHECK(header == "step,content_loss,style_loss,total");
    CHECK(row == "1,1,2,201");
    fs::remove_all(dir);
}
