#include "pcnst/dataset.hpp"

#include "pcnst/error.hpp"

#include <algorithm>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <numbers>

namespace pcnst {

namespace {

constexpr std::array<std::array<double, 3>, kMaxSyntheticClasses> kPalette{{
    {230, 25, 75},   {60, 180, 75},   {255, 225, 25}, {0, 130, 200},
    {245, 130, 48},  {145, 30, 180},  {70, 240, 240}, {240, 50, 230},
    {210, 245, 60},  {250, 190, 212}, {0, 128, 128},  {220, 190, 255},
    {170, 110, 40},  {255, 250, 200}, {128, 0, 0},    {170, 255, 195},
}};

constexpr std::array<const char*, kShapeKindCount> kShapeNames{
    "sphere", "cube", "cylinder", "cone", "torus", "plane", "pyramid", "ellipsoid"};
constexpr std::array<const char*, 3> kPatternNames{"solid", "two-tone", "gradient"};

Eigen::RowVector3d random_direction(std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Eigen::RowVector3d v;
    do {
        v = {normal(rng), normal(rng), normal(rng)};
    } while (v.norm() < 1e-12);
    return v.normalized();
}

Eigen::RowVector3d triangle_point(const Eigen::RowVector3d& a, const Eigen::RowVector3d& b,
                                  const Eigen::RowVector3d& c, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double u = unit(rng);
    double v = unit(rng);
    if (u + v > 1.0) {
        u = 1.0 - u;
        v = 1.0 - v;
    }
    return a + u * (b - a) + v * (c - a);
}

// Picks index i with probability weights[i] / sum(weights).
template <std::size_t N>
std::size_t pick(const std::array<double, N>& weights, std::mt19937_64& rng) {
    std::discrete_distribution<std::size_t> dist(weights.begin(), weights.end());
    return dist(rng);
}

Eigen::RowVector3d surface_point(ShapeKind kind, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    constexpr double pi = std::numbers::pi;
    switch (kind) {
        case ShapeKind::sphere:
            return random_direction(rng);
        case ShapeKind::cube: {
            const int face = static_cast<int>(unit(rng) * 6.0) % 6;
            Eigen::RowVector3d p{sym(rng), sym(rng), sym(rng)};
            p(face / 2) = face % 2 == 0 ? -1.0 : 1.0;
            return p;
        }
        case ShapeKind::cylinder: {
            constexpr double r = 0.6;
            const std::array<double, 2> areas{2.0 * pi * r * 2.0, 2.0 * pi * r * r};
            const double theta = 2.0 * pi * unit(rng);
            if (pick(areas, rng) == 0) {
                return {r * std::cos(theta), r * std::sin(theta), sym(rng)};
            }
            const double rad = r * std::sqrt(unit(rng));
            return {rad * std::cos(theta), rad * std::sin(theta), unit(rng) < 0.5 ? -1.0 : 1.0};
        }
        case ShapeKind::cone: {
            constexpr double r = 0.8;
            const double slant = std::sqrt(r * r + 4.0);
            const std::array<double, 2> areas{pi * r * slant, pi * r * r};
            const double theta = 2.0 * pi * unit(rng);
            if (pick(areas, rng) == 0) {
                const double s = std::sqrt(unit(rng));  // fraction from the apex
                return {r * s * std::cos(theta), r * s * std::sin(theta), 1.0 - 2.0 * s};
            }
            const double rad = r * std::sqrt(unit(rng));
            return {rad * std::cos(theta), rad * std::sin(theta), -1.0};
        }
        case ShapeKind::torus: {
            constexpr double major = 0.75;
            constexpr double minor = 0.25;
            while (true) {
                const double theta = 2.0 * pi * unit(rng);
                const double phi = 2.0 * pi * unit(rng);
                // Rejection keeps the density uniform over the surface.
                if (unit(rng) * (major + minor) <= major + minor * std::cos(phi)) {
                    const double ring = major + minor * std::cos(phi);
                    return {ring * std::cos(theta), ring * std::sin(theta), minor * std::sin(phi)};
                }
            }
        }
        case ShapeKind::plane:
            return {sym(rng), sym(rng), 0.0};
        case ShapeKind::pyramid: {
            const Eigen::RowVector3d apex{0.0, 0.0, 1.0};
            const std::array<Eigen::RowVector3d, 4> base{Eigen::RowVector3d{-1, -1, -1},
                                                         Eigen::RowVector3d{1, -1, -1},
                                                         Eigen::RowVector3d{1, 1, -1},
                                                         Eigen::RowVector3d{-1, 1, -1}};
            const double side_area = 0.5 * 2.0 * std::sqrt(1.0 + 4.0);
            const std::array<double, 5> areas{side_area, side_area, side_area, side_area, 4.0};
            const std::size_t face = pick(areas, rng);
            if (face == 4) {
                return {sym(rng), sym(rng), -1.0};
            }
            return triangle_point(base[face], base[(face + 1) % 4], apex, rng);
        }
        case ShapeKind::ellipsoid: {
            const Eigen::RowVector3d d = random_direction(rng);
            return {d(0), 0.6 * d(1), 0.35 * d(2)};
        }
    }
    return Eigen::RowVector3d::Zero();
}

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
    q.normalize();
    return q.toRotationMatrix();
}

Eigen::RowVector3d pattern_color(ColorPattern pattern, const Eigen::RowVector3d& base,
                                 double height) {
    switch (pattern) {
        case ColorPattern::solid:
            return base;
        case ColorPattern::two_tone:
            return height > 0.0 ? base : Eigen::RowVector3d(0.35 * base.array() +
                                                            0.65 * (255.0 - base.array()));
        case ColorPattern::gradient: {
            const double t = std::clamp((height + 1.0) / 2.0, 0.0, 1.0);
            return (1.0 - t) * base + t * (0.25 * base);
        }
    }
    return base;
}

}  // namespace

std::string_view to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "unknown";
}

void validate(const LabeledDataset& dataset) {
    if (dataset.class_count < 1) {
        throw ConfigError("dataset: class count must be positive");
    }
    for (std::size_t i = 0; i < dataset.clouds.size(); ++i) {
        const auto& cloud = dataset.clouds[i];
        if (!cloud.normalized()) {
            throw ConfigError("dataset: cloud " + std::to_string(i) + " is not normalized");
        }
        const auto label = cloud.label();
        if (!label || *label < 0 || *label >= dataset.class_count) {
            throw ConfigError("dataset: cloud " + std::to_string(i) + " has an invalid label");
        }
    }
}

std::vector<std::size_t> class_histogram(const LabeledDataset& dataset) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(dataset.class_count, 0)), 0);
    for (const auto& cloud : dataset.clouds) {
        if (cloud.label() && *cloud.label() >= 0 && *cloud.label() < dataset.class_count) {
            ++counts[static_cast<std::size_t>(*cloud.label())];
        }
    }
    return counts;
}

std::vector<bool> stratified_holdout(const LabeledDataset& dataset, double held_out_fraction,
                                     std::uint64_t seed) {
    if (!(held_out_fraction >= 0.0 && held_out_fraction < 1.0)) {
        throw ConfigError("stratified_split: fraction must lie in [0, 1)");
    }
    validate(dataset);
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(dataset.class_count));
    for (std::size_t i = 0; i < dataset.clouds.size(); ++i) {
        by_class[static_cast<std::size_t>(*dataset.clouds[i].label())].push_back(i);
    }
    std::mt19937_64 rng(seed);
    std::vector<bool> held(dataset.clouds.size(), false);
    for (auto& members : by_class) {
        std::shuffle(members.begin(), members.end(), rng);
        const auto take = static_cast<std::size_t>(
            std::lround(held_out_fraction * static_cast<double>(members.size())));
        for (std::size_t k = 0; k < take && k < members.size(); ++k) {
            held[members[k]] = true;
        }
    }
    return held;
}

std::pair<LabeledDataset, LabeledDataset> stratified_split(const LabeledDataset& dataset,
                                                           double held_out_fraction,
                                                           std::uint64_t seed,
                                                           Split held_out_tag) {
    const std::vector<bool> held = stratified_holdout(dataset, held_out_fraction, seed);
    LabeledDataset kept{{}, dataset.class_count, dataset.split, dataset.class_names};
    LabeledDataset out{{}, dataset.class_count, held_out_tag, dataset.class_names};
    for (std::size_t i = 0; i < dataset.clouds.size(); ++i) {
        (held[i] ? out : kept).clouds.push_back(dataset.clouds[i]);
    }
    return {std::move(kept), std::move(out)};
}

Matrix sample_shape(ShapeKind kind, Eigen::Index count, double jitter, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> noise(-jitter, jitter);
    Matrix points(count, 3);
    for (Eigen::Index i = 0; i < count; ++i) {
        Eigen::RowVector3d p = surface_point(kind, rng);
        if (kind == ShapeKind::sphere) {
            p *= 1.0 + noise(rng);
        } else {
            p += Eigen::RowVector3d(noise(rng), noise(rng), noise(rng));
        }
        points.row(i) = p;
    }
    return points;
}

SyntheticClass synthetic_class(int label) {
    if (label < 0 || label >= kMaxSyntheticClasses) {
        throw ConfigError("synthetic_class: label out of range");
    }
    const auto shape = static_cast<ShapeKind>(label % kShapeKindCount);
    const auto pattern = static_cast<ColorPattern>((label + label / kShapeKindCount) % 3);
    std::string name = std::string(kShapeNames[static_cast<std::size_t>(shape)]) + "-" +
                       kPatternNames[static_cast<std::size_t>(pattern)];
    return {shape, pattern, std::move(name)};
}

LabeledDataset generate_synthetic_dataset(const SyntheticConfig& config) {
    if (config.class_count < 2 || config.class_count > kMaxSyntheticClasses) {
        throw ConfigError("synthetic dataset: class count must be between 2 and " +
                          std::to_string(kMaxSyntheticClasses) + ", got " +
                          std::to_string(config.class_count));
    }
    if (config.instances_per_class < 1 || config.points_per_cloud < 1) {
        throw ConfigError("synthetic dataset: instances and points per cloud must be positive");
    }
    if (!(config.jitter >= 0.0 && config.jitter < 0.5)) {
        throw ConfigError("synthetic dataset: jitter must lie in [0, 0.5)");
    }

    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> scale_jitter(0.8, 1.2);
    std::uniform_real_distribution<double> tint(0.9, 1.1);
    std::normal_distribution<double> color_noise(0.0, 6.0);

    LabeledDataset dataset;
    dataset.class_count = config.class_count;
    dataset.split = Split::train;
    for (int label = 0; label < config.class_count; ++label) {
        const SyntheticClass cls = synthetic_class(label);
        dataset.class_names.push_back(cls.name);
        const auto& rgb = kPalette[static_cast<std::size_t>(label)];
        for (int instance = 0; instance < config.instances_per_class; ++instance) {
            Matrix local = sample_shape(cls.shape, config.points_per_cloud, config.jitter, rng);
            Eigen::RowVector3d base(rgb[0] * tint(rng), rgb[1] * tint(rng), rgb[2] * tint(rng));
            base = base.cwiseMin(255.0);

            Matrix colors(config.points_per_cloud, 3);
            for (Eigen::Index i = 0; i < local.rows(); ++i) {
                Eigen::RowVector3d c = pattern_color(cls.pattern, base, local(i, 2));
                for (int k = 0; k < 3; ++k) {
                    c(k) = std::clamp(c(k) + color_noise(rng), 0.0, 255.0);
                }
                colors.row(i) = c;
            }

            const Eigen::RowVector3d stretch(scale_jitter(rng), scale_jitter(rng),
                                             scale_jitter(rng));
            const Eigen::Matrix3d rotation = random_rotation(rng);
            Matrix positions = (local.array().rowwise() * stretch.array()).matrix() *
                               rotation.transpose();

            ColoredPointCloud raw(std::move(positions), std::move(colors), label);
            dataset.clouds.push_back(normalize(
                raw, NormalizeOptions{.color_range = ColorRange::byte, .allow_degenerate = true}));
        }
    }
    return dataset;
}

}  // namespace pcnst
