#include "pcnst/point_cloud.hpp"

#include "pcnst/error.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace pcnst {

namespace {

void require_point_matrix(const Matrix& m, const char* name) {
    if (m.cols() != 3) {
        throw ShapeError(std::string("point cloud: ") + name + " must have 3 columns, got " +
                         shape_string(m));
    }
}

bool within_unit_box(const Matrix& m) {
    return m.size() == 0 || (m.minCoeff() >= -1.0 && m.maxCoeff() <= 1.0);
}

}  // namespace

ColoredPointCloud::ColoredPointCloud(Matrix positions, Matrix colors, std::optional<int> label)
    : positions_(std::move(positions)), colors_(std::move(colors)), label_(label) {
    require_point_matrix(positions_, "positions");
    require_point_matrix(colors_, "colors");
    if (positions_.rows() != colors_.rows()) {
        throw ShapeError("point cloud: " + std::to_string(positions_.rows()) + " positions but " +
                         std::to_string(colors_.rows()) + " colors");
    }
    if (positions_.rows() < 1) {
        throw ShapeError("point cloud: at least one point is required");
    }
    require_finite(positions_, "point positions");
    require_finite(colors_, "point colors");
}

ColoredPointCloud ColoredPointCloud::from_normalized(Matrix positions, Matrix colors,
                                                     NormalizationTransform transform,
                                                     std::optional<int> label) {
    ColoredPointCloud cloud(std::move(positions), std::move(colors), label);
    if (!within_unit_box(cloud.positions_) || !within_unit_box(cloud.colors_)) {
        throw ConfigError("point cloud: normalized values must lie in [-1, 1]");
    }
    cloud.transform_ = transform;
    return cloud;
}

std::pair<Matrix, Matrix> split(const ColoredPointCloud& cloud) {
    return {cloud.positions(), cloud.colors()};
}

Matrix combined(const ColoredPointCloud& cloud) {
    Matrix out(cloud.size(), 6);
    out.leftCols(3) = cloud.positions();
    out.rightCols(3) = cloud.colors();
    return out;
}

ColoredPointCloud normalize(const ColoredPointCloud& cloud, NormalizeOptions options) {
    if (cloud.normalized()) {
        throw ConfigError("normalize: cloud is already normalized");
    }
    NormalizationTransform t;
    t.centroid = cloud.positions().colwise().mean();
    Matrix centered = cloud.positions().rowwise() - t.centroid;
    const double extent = centered.cwiseAbs().maxCoeff();
    if (extent <= 1e-12 * std::max(1.0, t.centroid.cwiseAbs().maxCoeff())) {
        if (!options.allow_degenerate) {
            throw Error("normalize: degenerate cloud, all points coincide");
        }
        t.scale = 1.0;
        centered.setZero();
    } else {
        t.scale = extent;
        centered /= extent;
        // Division can overshoot by an ulp.
        centered = centered.cwiseMax(-1.0).cwiseMin(1.0);
    }

    const Matrix& colors = cloud.colors();
    if (colors.minCoeff() < 0.0) {
        throw ConfigError("normalize: negative color channel");
    }
    switch (options.color_range) {
        case ColorRange::unit: t.color_range = 1.0; break;
        case ColorRange::byte: t.color_range = 255.0; break;
        case ColorRange::auto_detect: t.color_range = colors.maxCoeff() <= 1.0 ? 1.0 : 255.0; break;
    }
    if (colors.maxCoeff() > t.color_range) {
        throw ConfigError("normalize: color channel exceeds " + std::to_string(t.color_range));
    }
    Matrix normalized_colors = (colors.array() * (2.0 / t.color_range) - 1.0).matrix();
    normalized_colors = normalized_colors.cwiseMax(-1.0).cwiseMin(1.0);
    return ColoredPointCloud::from_normalized(std::move(centered), std::move(normalized_colors), t,
                                              cloud.label());
}

ColoredPointCloud denormalize(const ColoredPointCloud& cloud) {
    if (!cloud.normalized()) {
        throw ConfigError("denormalize: cloud is not normalized");
    }
    const NormalizationTransform& t = *cloud.transform();
    Matrix positions = (cloud.positions() * t.scale).rowwise() + t.centroid;
    Matrix colors = ((cloud.colors().array() + 1.0) * (0.5 * t.color_range)).matrix();
    return ColoredPointCloud(std::move(positions), std::move(colors), cloud.label());
}

ColoredPointCloud downsample(const ColoredPointCloud& cloud, Eigen::Index n, std::uint64_t seed) {
    if (n < 1 || n > cloud.size()) {
        throw ConfigError("downsample: requested " + std::to_string(n) + " points from a cloud of " +
                          std::to_string(cloud.size()));
    }
    std::vector<Eigen::Index> all(static_cast<std::size_t>(cloud.size()));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    std::vector<Eigen::Index> chosen;
    chosen.reserve(static_cast<std::size_t>(n));
    std::mt19937_64 rng(seed);
    std::sample(all.begin(), all.end(), std::back_inserter(chosen), n, rng);
    return permute(cloud, chosen);
}

ColoredPointCloud permute(const ColoredPointCloud& cloud, std::span<const Eigen::Index> perm) {
    const auto n = static_cast<Eigen::Index>(perm.size());
    Matrix positions(n, 3);
    Matrix colors(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index src = perm[static_cast<std::size_t>(i)];
        if (src < 0 || src >= cloud.size()) {
            throw ShapeError("permute: index out of range");
        }
        positions.row(i) = cloud.positions().row(src);
        colors.row(i) = cloud.colors().row(src);
    }
    if (cloud.normalized()) {
        return ColoredPointCloud::from_normalized(std::move(positions), std::move(colors),
                                                  *cloud.transform(), cloud.label());
    }
    return ColoredPointCloud(std::move(positions), std::move(colors), cloud.label());
}

}  // namespace pcnst
