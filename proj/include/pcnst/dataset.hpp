#pragma once

#include "pcnst/point_cloud.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pcnst {

enum class Split { train, val, test };

std::string_view to_string(Split split);

/// Labeled, normalized point clouds.
struct LabeledDataset {
    std::vector<ColoredPointCloud> clouds;
    int class_count = 0;
    Split split = Split::train;
    std::vector<std::string> class_names;

    [[nodiscard]] std::size_t size() const { return clouds.size(); }
};

/// Throws ConfigError unless every cloud is normalized and labeled within [0, class_count).
void validate(const LabeledDataset& dataset);

std::vector<std::size_t> class_histogram(const LabeledDataset& dataset);

/// held[i] is true for clouds in the held-out part of stratified_split().
std::vector<bool> stratified_holdout(const LabeledDataset& dataset, double held_out_fraction,
                                     std::uint64_t seed);

/// Per-class deterministic split: round(fraction * class size) instances of
/// each class go to the held-out part, tagged `held_out_tag`.
std::pair<LabeledDataset, LabeledDataset> stratified_split(const LabeledDataset& dataset,
                                                           double held_out_fraction,
                                                           std::uint64_t seed,
                                                           Split held_out_tag);

enum class ShapeKind { sphere, cube, cylinder, cone, torus, plane, pyramid, ellipsoid };
inline constexpr int kShapeKindCount = 8;

enum class ColorPattern { solid, two_tone, gradient };

/// Points on the surface of a unit-sized primitive in its own frame. Sphere
/// samples are displaced radially by at most `jitter`; other shapes get
/// per-coordinate jitter in [-jitter, jitter].
Matrix sample_shape(ShapeKind kind, Eigen::Index count, double jitter, std::mt19937_64& rng);

struct SyntheticConfig {
    int class_count = 8;
    int instances_per_class = 64;
    Eigen::Index points_per_cloud = 1024;
    std::uint64_t seed = 0;
    double jitter = 0.02;
};

inline constexpr int kMaxSyntheticClasses = 16;

struct SyntheticClass {
    ShapeKind shape;
    ColorPattern pattern;
    std::string name;
};

/// Shape and color pattern used for class `label`.
SyntheticClass synthetic_class(int label);

/// Procedural colored primitives. Each class pairs a shape with a color
/// pattern and base color; instances get a random rotation, anisotropic scale
/// and color jitter. Deterministic in the seed; every cloud is normalized.
LabeledDataset generate_synthetic_dataset(const SyntheticConfig& config);

}  // namespace pcnst
