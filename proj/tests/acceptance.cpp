// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include "fixtures.hpp"
#include "gradient_oracle.hpp"
#include "pcnst/dataset.hpp"
#include "pcnst/error.hpp"
#include "pcnst/image.hpp"
#include "pcnst/training.hpp"
#include "pcnst/transfer.hpp"

#include <spdlog/spdlog.h>

#include <malloc.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <unistd.h>

using namespace pcnst;
using namespace pcnst::testing;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::map<int, Outcome> results;

void report(int id, const char* title, Outcome outcome, Clock::time_point start) {
    std::printf("%s  %2d  %-28s %s (%.1fs)\n", outcome.pass ? "PASS" : "FAIL", id, title,
                outcome.detail.c_str(), seconds_since(start));
    std::fflush(stdout);
    results[id] = std::move(outcome);
}

void run(int id, const char* title, const std::function<Outcome()>& check) {
    const auto start = Clock::now();
    try {
        report(id, title, check(), start);
    } catch (const std::exception& e) {
        report(id, title, {false, std::string("exception: ") + e.what()}, start);
    }
}

std::string fmt(const char* format, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), format, args...);
    return buf;
}

// Desk-scale network and data.
constexpr std::array<Eigen::Index, kLayerCount> kDeskWidths{64, 64, 128, 256};
constexpr std::array<Eigen::Index, 2> kDeskHead{128, 64};

// One instance of synthetic class `label` drawn from the 16-class generator.
ColoredPointCloud synthetic_instance(int label, Eigen::Index points, std::uint64_t seed) {
    SyntheticConfig config;
    config.class_count = kMaxSyntheticClasses;
    config.instances_per_class = 1;
    config.points_per_cloud = points;
    config.seed = seed;
    return generate_synthetic_dataset(config).clouds[static_cast<std::size_t>(label)];
}

// Content (sphere, solid) and style (cylinder, gradient) clouds of the desk transfers.
ColoredPointCloud desk_content() { return synthetic_instance(0, 2048, 11); }
ColoredPointCloud desk_style() { return synthetic_instance(10, 512, 12); }

double relative_gap(const Matrix& a, const Matrix& b) {
    const double scale = std::max({1.0, a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()});
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

// ---- 9: training signal ----

struct TrainedNetworks {
    std::optional<NetworkParams> late_fel;
    std::optional<NetworkParams> early_fel;
};

Outcome training_signal(TrainedNetworks& nets) {
    SyntheticConfig data_config;  // 8 classes x 64 instances x 1024 points
    LabeledDataset data = generate_synthetic_dataset(data_config);
    auto [train_set, test_set] = stratified_split(data, 0.2, 7, Split::test);

    struct Variant {
        const char* name;
        Fusion fusion;
        LayerKind kind;
    };
    const Variant variants[] = {{"late+fel", Fusion::late, LayerKind::fel},
                                {"early+fel", Fusion::early, LayerKind::fel},
                                {"late+shared_fc", Fusion::late, LayerKind::shared_fc}};
    bool pass = true;
    std::string detail;
    for (const auto& v : variants) {
        TrainConfig config;  // epochs 50, batch 32, Adam lr 0.01
        config.layer_widths = kDeskWidths;
        config.head_widths = kDeskHead;
        config.rebalance_target = 0;
        config.patience = 2;
        config.seed = 1;
        config.fusion = v.fusion;
        config.layer_kind = v.kind;
        TrainResult result = train(train_set, config);
        const double acc = evaluate(result.params, test_set).accuracy;
        const double needed = v.fusion == Fusion::late && v.kind == LayerKind::fel ? 0.90 : 0.80;
        pass = pass && acc >= needed;
        detail += fmt("%s %.3f (>= %.2f, %zu epochs); ", v.name, acc, needed, result.trace.size());
        if (v.fusion == Fusion::early) {
            nets.early_fel = std::move(result.params);
        } else if (v.kind == LayerKind::fel) {
            nets.late_fel = std::move(result.params);
        }
    }
    return {pass, detail};
}

// ---- 1: gradient correctness ----

Outcome gradient_correctness(const NetworkParams& params) {
    std::mt19937_64 rng(101);
    ColoredPointCloud c = ColoredPointCloud::from_normalized(
        random_matrix(16, 3, rng, -0.9, 0.9), random_matrix(16, 3, rng, -0.9, 0.9), {});
    ColoredPointCloud s = ColoredPointCloud::from_normalized(
        random_matrix(16, 3, rng, -0.9, 0.9), random_matrix(16, 3, rng, -0.9, 0.9), {});
    Matrix p_geo = c.positions() + random_matrix(16, 3, rng, -0.05, 0.05);
    Matrix p_color = c.colors() + random_matrix(16, 3, rng, -0.05, 0.05);

    TransferConfig config = preset("pc-to-pc");
    config.content_layers = {1, 2, 3, 4};
    config.style_layers = {1, 2, 3, 4};
    TransferTargets targets = prepare_targets(c, s, params, config);

    Graph graph;
    Var geo = graph.parameter(p_geo);
    Var color = graph.parameter(p_color);
    graph.backward(record_objective(geo, color, targets, params, config).total);
    const Matrix analytic_geo = graph.grad(geo);
    const Matrix analytic_color = graph.grad(color);

    auto objective = [&](const Matrix& positions, const Matrix& colors) {
        Graph g;
        return record_objective(g.constant(positions), g.constant(colors), targets, params, config)
            .values.total;
    };
    const Matrix fd_geo = finite_difference_gradient(
        [&](const Matrix& x) { return objective(x, p_color); }, p_geo, 1e-6);
    const Matrix fd_color = finite_difference_gradient(
        [&](const Matrix& x) { return objective(p_geo, x); }, p_color, 1e-6);

    const double scale = std::max(analytic_geo.cwiseAbs().maxCoeff(),
                                  analytic_color.cwiseAbs().maxCoeff());
    int good = 0;
    int total = 0;
    double worst = 0.0;
    auto tally = [&](const Matrix& a, const Matrix& b) {
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            const double x = a.data()[i];
            const double y = b.data()[i];
            const double err =
                std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-8 * scale});
            worst = std::max(worst, err);
            good += err < 1e-4;
            ++total;
        }
    };
    tally(analytic_geo, fd_geo);
    tally(analytic_color, fd_color);
    const double share = static_cast<double>(good) / total;
    return {share >= 0.95,
            fmt("%d/%d components within 1e-4 (%.1f%%, need 95%%), worst %.2e", good, total,
                100.0 * share, worst)};
}

// ---- 2: permutation properties ----

Outcome permutation_properties(const NetworkParams& params) {
    std::mt19937_64 rng(202);
    std::uniform_int_distribution<Eigen::Index> size(8, 400);
    double worst_gram = 0.0;
    double worst_logits = 0.0;
    bool equivariant = true;
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = size(rng);
        ColoredPointCloud cloud = ColoredPointCloud::from_normalized(random_matrix(n, 3, rng),
                                                                     random_matrix(n, 3, rng), {});
        const auto perm = random_permutation(n, rng);
        ColoredPointCloud shuffled = permute(cloud, perm);
        worst_logits = std::max(worst_logits,
                                relative_gap(classify(cloud, params), classify(shuffled, params)));
        for (RouteKind route : {RouteKind::geometry, RouteKind::color}) {
            auto a = extract_representations(route_points(cloud, route), params, route,
                                             {1, 2, 3, 4}, {1, 2, 3, 4},
                                             GramNormalization::per_point);
            auto b = extract_representations(route_points(shuffled, route), params, route,
                                             {1, 2, 3, 4}, {1, 2, 3, 4},
                                             GramNormalization::per_point);
            for (int l = 1; l <= kLayerCount; ++l) {
                worst_gram = std::max(worst_gram, relative_gap(a.style[l], b.style[l]));
                equivariant = equivariant && permute_rows(a.content[l], perm) == b.content[l];
            }
        }
    }
    const bool pass = worst_gram <= 1e-9 && worst_logits <= 1e-9 && equivariant;
    return {pass, fmt("100 clouds: max Gram gap %.1e, max logit gap %.1e (scaled, <= 1e-9), "
                      "features %s row-equivariant",
                      worst_gram, worst_logits, equivariant ? "exactly" : "NOT")};
}

// ---- 3: cardinality independence ----

Outcome cardinality_independence(const NetworkParams& params) {
    std::mt19937_64 rng(303);
    const Eigen::Index sizes[] = {16, 512, 4096};
    std::map<Eigen::Index, Representations> reps;
    for (Eigen::Index n : sizes) {
        reps[n] = extract_representations(random_matrix(n, 3, rng), params, RouteKind::color,
                                          {1, 2, 3, 4}, {1, 2, 3, 4},
                                          GramNormalization::per_point);
    }
    bool pass = true;
    double largest = 0.0;
    for (int l = 1; l <= kLayerCount; ++l) {
        const Eigen::Index m = params.config.layer_widths[static_cast<std::size_t>(l - 1)];
        for (Eigen::Index a : sizes) {
            pass = pass && reps[a].style[l].rows() == m && reps[a].style[l].cols() == m;
            for (Eigen::Index b : sizes) {
                const double loss =
                    style_loss({{l, reps[a].content[l]}}, {{l, reps[b].content[l]}},
                               GramNormalization::per_point);
                pass = pass && std::isfinite(loss) && loss >= 0.0;
                largest = std::max(largest, loss);
            }
        }
    }
    return {pass, fmt("style loss finite for all N pairs in {16,512,4096} x 4 layers (max %.3g), "
                      "Gram shapes m_l x m_l",
                      largest)};
}

// ---- 4: identity transfer ----

Outcome identity_transfer(const NetworkParams& params) {
    ColoredPointCloud c = desk_content();
    TransferConfig config = preset("pc-to-pc");
    config.steps = 100;
    config.trace_every = 1;
    TransferResult r = stylize(c, c, params, config);
    double worst_loss = 0.0;
    for (const auto& t : r.trace) {
        worst_loss = std::max(worst_loss, t.loss.total);
    }
    const double deviation =
        std::max((r.stylized.positions() - c.positions()).cwiseAbs().maxCoeff(),
                 (r.stylized.colors() - c.colors()).cwiseAbs().maxCoeff());
    return {deviation < 1e-6 && worst_loss < 1e-8 && r.trace.size() == 100,
            fmt("max deviation %.1e (< 1e-6), max traced loss %.1e (< 1e-8)", deviation,
                worst_loss)};
}

// ---- 5: convergence ----

Outcome convergence(const NetworkParams& params) {
    ColoredPointCloud c = desk_content();
    ColoredPointCloud s = desk_style();
    TransferConfig config = preset("pc-to-pc");  // 4000 steps
    config.trace_every = 1;
    const auto start = Clock::now();
    TransferResult r = stylize(c, s, params, config);
    const double elapsed = seconds_since(start);
    const LossBreakdown& first = r.trace.front().loss;
    const LossBreakdown& at200 = r.trace[199].loss;
    const double ratio = at200.total / first.total;
    const bool content_zero = first.content_geo == 0.0 && first.content_color == 0.0;
    return {ratio <= 0.20 && elapsed < 900.0 && content_zero && r.trace[199].step == 200,
            fmt("step-200 / step-1 total = %.3f (<= 0.20); 4000 steps in %.0fs (< 900s); "
                "step-1 content loss %s; final ratio %.3f",
                ratio, elapsed, content_zero ? "0" : "non-zero",
                r.final_loss.total / first.total)};
}

// ---- 6: content-style trade-off ----

// Non-increasing up to one adjacent violation of at most 5%.
bool monotone_with_slack(const std::vector<double>& v, const std::vector<double>& betas,
                         std::string& note) {
    int violations = 0;
    bool ok = true;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[i - 1]) {
            ++violations;
            const double excess = (v[i] - v[i - 1]) / std::max(std::abs(v[i - 1]), 1e-300);
            note += fmt(" [rise %.1f%% from beta %g to %g]", 100.0 * excess, betas[i - 1],
                        betas[i]);
            ok = ok && excess <= 0.05;
        }
    }
    return ok && violations <= 1;
}

Outcome content_style_tradeoff(const NetworkParams& params) {
    ColoredPointCloud c = desk_content();
    ColoredPointCloud s = desk_style();
    const Eigen::RowVectorXd style_mean = s.colors().colwise().mean();
    std::vector<double> style_terms;
    std::vector<double> mean_gaps;
    const std::vector<double> betas{0.1, 1.0, 10.0, 100.0, 1000.0};
    std::string detail = "beta_color ->";
    for (double beta : betas) {
        TransferConfig config = preset("pc-to-pc");
        config.update_mask = UpdateMask::color;
        config.beta_color = beta;
        TransferResult r = stylize(c, s, params, config);
        style_terms.push_back(r.final_loss.style_color);
        mean_gaps.push_back((r.stylized.colors().colwise().mean() - style_mean).norm());
        detail += fmt(" %g: style %.4g gap %.3f;", beta, style_terms.back(), mean_gaps.back());
    }
    std::string style_note;
    std::string gap_note;
    const bool style_ok = monotone_with_slack(style_terms, betas, style_note);
    const bool gap_ok = monotone_with_slack(mean_gaps, betas, gap_note);
    detail += " style" + (style_note.empty() ? std::string(" monotone") : style_note);
    detail += ", mean gap" + (gap_note.empty() ? std::string(" monotone") : gap_note);
    return {style_ok && gap_ok, detail};
}

// ---- 7: mask isolation ----

Outcome mask_isolation(const NetworkParams& params) {
    ColoredPointCloud c = desk_content();
    ColoredPointCloud s = desk_style();
    TransferConfig config = preset("pc-to-pc");
    config.steps = 300;
    config.update_mask = UpdateMask::color;
    TransferResult color_run = stylize(c, s, params, config);
    config.update_mask = UpdateMask::geometry;
    TransferResult geo_run = stylize(c, s, params, config);
    const bool positions_kept = color_run.stylized.positions() == c.positions();
    const bool colors_kept = geo_run.stylized.colors() == c.colors();
    const bool moved = color_run.stylized.colors() != c.colors() &&
                       geo_run.stylized.positions() != c.positions();
    return {positions_kept && colors_kept && moved,
            fmt("color-only positions %s, geometry-only colors %s, updated properties %s",
                positions_kept ? "bitwise equal" : "CHANGED",
                colors_kept ? "bitwise equal" : "CHANGED", moved ? "moved" : "did not move")};
}

// ---- 8: early-fusion ablation ----

Outcome early_fusion(const NetworkParams& params) {
    ColoredPointCloud c = desk_content();
    ColoredPointCloud s = desk_style();
    std::mt19937_64 rng(808);
    Matrix noise = random_matrix(c.size(), 3, rng, -0.05, 0.05);
    ColoredPointCloud p = ColoredPointCloud::from_normalized(
        (c.positions() + noise).cwiseMax(-1.0).cwiseMin(1.0), c.colors(), *c.transform());

    bool pass = true;
    std::string detail;
    for (int layer = 1; layer <= kLayerCount; ++layer) {
        TransferConfig config = preset("pc-to-pc");
        config.fusion = Fusion::early;
        config.content_layers = {layer};
        config.style_layers = {layer};
        config.alpha_fused = 1.0;
        config.beta_fused = 100.0;
        const LossBreakdown b = total_objective(p, c, s, params, config);

        const auto fused = [&](const ColoredPointCloud& x) {
            return extract_representations(combined(x), params, RouteKind::fused, {layer}, {},
                                           GramNormalization::per_point)
                .content;
        };
        const double content = content_loss(fused(p), fused(c));
        const double style = style_loss(fused(p), fused(s), GramNormalization::per_point);
        const bool exact = b.total == 1.0 * content + 100.0 * style;
        pass = pass && exact;
        if (!exact) {
            detail += fmt("layer %d: %.17g vs %.17g; ", layer, b.total, content + 100.0 * style);
        }
    }
    bool rejected = false;
    try {
        TransferConfig config = preset("pc-to-pc");
        config.fusion = Fusion::early;
        route_losses(p, c, s, params, RouteKind::geometry, config);
    } catch (const ConfigError&) {
        rejected = true;
    }
    pass = pass && rejected;
    detail += fmt("objective == alpha*Lc + beta*Ls exactly for layers 1-4: %s; geometry-route "
                  "request %s",
                  detail.empty() ? "yes" : "NO", rejected ? "rejected" : "ACCEPTED");
    return {pass, detail};
}

// ---- 10: image-to-cloud transfer ----

RgbImage test_image() {
    RgbImage image{64, 64, std::vector<std::uint8_t>(64 * 64 * 3)};
    const Eigen::RowVector3d warm(255, 140, 0);
    const Eigen::RowVector3d pale(250, 250, 210);
    const Eigen::RowVector3d blue(30, 60, 200);
    for (int y = 0; y < 64; ++y) {
        for (int x = 0; x < 64; ++x) {
            const double u = x / 63.0;
            const double v = y / 63.0;
            const Eigen::RowVector3d rgb = (1 - v) * ((1 - u) * warm + u * pale) + v * blue;
            for (int k = 0; k < 3; ++k) {
                image.pixels[static_cast<std::size_t>((y * 64 + x) * 3 + k)] =
                    static_cast<std::uint8_t>(std::lround(rgb(k)));
            }
        }
    }
    return image;
}

// Earth mover's distance between 64-bin histograms of one channel on [-1, 1].
double channel_emd(const Matrix& a, const Matrix& b, int channel) {
    constexpr int bins = 64;
    auto histogram = [&](const Matrix& m) {
        std::vector<double> h(bins, 0.0);
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            const int k = std::clamp(static_cast<int>((m(i, channel) + 1.0) / 2.0 * bins), 0,
                                     bins - 1);
            h[static_cast<std::size_t>(k)] += 1.0 / static_cast<double>(m.rows());
        }
        return h;
    };
    const auto ha = histogram(a);
    const auto hb = histogram(b);
    double ca = 0.0;
    double cb = 0.0;
    double emd = 0.0;
    for (int k = 0; k < bins; ++k) {
        ca += ha[static_cast<std::size_t>(k)];
        cb += hb[static_cast<std::size_t>(k)];
        emd += std::abs(ca - cb) * (2.0 / bins);
    }
    return emd;
}

Outcome image_transfer(const NetworkParams& params) {
    const fs::path path =
        fs::temp_directory_path() / ("pcnst_acceptance_" + std::to_string(::getpid()) + ".ppm");
    write_ppm(test_image(), path);
    PixelSet pixels = image_to_pixel_set(path);
    fs::remove(path);

    ColoredPointCloud c = desk_content();
    TransferConfig config = preset("image-to-object");
    config.steps = 2000;
    config.optimizer.learning_rate = 0.01;
    TransferResult r = stylize(c, pixels, params, config);
    const double ratio = r.final_loss.style_color / r.trace.front().loss.style_color;
    const bool positions_kept = r.stylized.positions() == c.positions();
    bool closer = true;
    std::string emd = "EMD per channel";
    for (int ch = 0; ch < 3; ++ch) {
        const double before = channel_emd(c.colors(), pixels.colors, ch);
        const double after = channel_emd(r.stylized.colors(), pixels.colors, ch);
        closer = closer && after < before;
        emd += fmt(" %.3f->%.3f", before, after);
    }
    return {ratio <= 0.30 && positions_kept && closer,
            fmt("color style loss final/initial %.4f (<= 0.30); positions %s; %s", ratio,
                positions_kept ? "unchanged" : "CHANGED", emd.c_str())};
}

// ---- 11: optimizer suite ----

Outcome optimizer_suite(const NetworkParams& params) {
    ColoredPointCloud c = desk_content();
    ColoredPointCloud s = desk_style();
    const OptimizerKind kinds[] = {OptimizerKind::sgd, OptimizerKind::momentum,
                                   OptimizerKind::adagrad, OptimizerKind::rmsprop,
                                   OptimizerKind::adam};
    // Each optimizer keeps its best learning rate from the grid {0.01, 0.1, 1}.
    std::map<OptimizerKind, double> best_loss;
    std::map<OptimizerKind, double> best_lr;
    int failures = 0;
    for (OptimizerKind kind : kinds) {
        for (double lr : {0.01, 0.1, 1.0}) {
            TransferConfig config = preset("pc-to-pc");
            config.optimizer.kind = kind;
            config.optimizer.learning_rate = lr;
            try {
                const double loss = stylize(c, s, params, config).final_loss.total;
                if (!best_loss.contains(kind) || loss < best_loss[kind]) {
                    best_loss[kind] = loss;
                    best_lr[kind] = lr;
                }
            } catch (const NumericError&) {
                ++failures;
            }
        }
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [kind, loss] : best_loss) {
        best = std::min(best, loss);
    }
    bool within = best_loss.size() == std::size(kinds);
    std::string detail;
    for (OptimizerKind kind : kinds) {
        if (!best_loss.contains(kind)) {
            detail += fmt("%s: no finite run; ", std::string(to_string(kind)).c_str());
            continue;
        }
        const double factor = best_loss[kind] / best;
        within = within && factor <= 10.0;
        detail += fmt("%s lr %g %.4g (x%.2f); ", std::string(to_string(kind)).c_str(),
                      best_lr[kind], best_loss[kind], factor);
    }
    detail += fmt("non-finite runs: %d of 15", failures);
    return {within && failures == 0, detail};
}

}  // namespace

int main() {
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    spdlog::set_level(spdlog::level::warn);
    const auto start = Clock::now();

    // Criterion 9 trains the feature extractors the transfer criteria use.
    TrainedNetworks nets;
    run(9, "training signal", [&] { return training_signal(nets); });
    if (!nets.late_fel || !nets.early_fel) {
        std::printf("FAIL  training did not produce networks; remaining criteria skipped\n");
        return 1;
    }
    const NetworkParams& late = *nets.late_fel;

    run(1, "gradient correctness", [&] { return gradient_correctness(late); });
    run(2, "permutation properties", [&] { return permutation_properties(late); });
    run(3, "cardinality independence", [&] { return cardinality_independence(late); });
    run(4, "identity transfer", [&] { return identity_transfer(late); });
    run(5, "convergence", [&] { return convergence(late); });
    run(6, "content-style trade-off", [&] { return content_style_tradeoff(late); });
    run(7, "mask isolation", [&] { return mask_isolation(late); });
    run(8, "early-fusion ablation", [&] { return early_fusion(*nets.early_fel); });
    run(10, "image-to-cloud transfer", [&] { return image_transfer(late); });
    run(11, "optimizer suite", [&] { return optimizer_suite(late); });

    int failed = 0;
    std::printf("\nsummary:");
    for (const auto& [id, outcome] : results) {
        std::printf(" %d:%s", id, outcome.pass ? "PASS" : "FAIL");
        failed += !outcome.pass;
    }
    std::printf("\n%d of %zu criteria passed in %.0fs\n", static_cast<int>(results.size()) - failed,
                results.size(), seconds_since(start));
    return failed == 0 ? 0 : 1;
}
