#pragma once

#include "pcnst/matrix.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <utility>

namespace pcnst {

/// Maps normalized values back to the source frame:
/// position = normalized * scale + centroid, color = (normalized + 1) / 2 * color_range.
struct NormalizationTransform {
    Eigen::RowVector3d centroid = Eigen::RowVector3d::Zero();
    double scale = 1.0;
    double color_range = 255.0;
};

/// N points with XYZ positions and RGB colors. Row i of both matrices is the
/// same point.
class ColoredPointCloud {
public:
    ColoredPointCloud() = default;
    /// Raw (unnormalized) cloud. Throws ShapeError unless both matrices are
    /// N x 3 with N >= 1.
    ColoredPointCloud(Matrix positions, Matrix colors, std::optional<int> label = std::nullopt);

    /// Cloud already in the normalized domain; every value must lie in [-1, 1].
    static ColoredPointCloud from_normalized(Matrix positions, Matrix colors,
                                             NormalizationTransform transform,
                                             std::optional<int> label = std::nullopt);

    [[nodiscard]] const Matrix& positions() const { return positions_; }
    [[nodiscard]] const Matrix& colors() const { return colors_; }
    [[nodiscard]] Eigen::Index size() const { return positions_.rows(); }
    [[nodiscard]] bool normalized() const { return transform_.has_value(); }
    [[nodiscard]] const std::optional<NormalizationTransform>& transform() const {
        return transform_;
    }
    [[nodiscard]] std::optional<int> label() const { return label_; }
    void set_label(std::optional<int> label) { label_ = label; }

    friend bool operator==(const ColoredPointCloud& a, const ColoredPointCloud& b) {
        return a.positions_ == b.positions_ && a.colors_ == b.colors_ && a.label_ == b.label_ &&
               a.transform_.has_value() == b.transform_.has_value();
    }

private:
    Matrix positions_;
    Matrix colors_;
    std::optional<NormalizationTransform> transform_;
    std::optional<int> label_;
};

/// (positions, colors), sharing the cloud's row order.
std::pair<Matrix, Matrix> split(const ColoredPointCloud& cloud);
/// N x 6 matrix [XYZ | RGB].
Matrix combined(const ColoredPointCloud& cloud);

enum class ColorRange {
    auto_detect,  ///< [0, 1] when every channel is <= 1, otherwise [0, 255]
    unit,
    byte,
};

struct NormalizeOptions {
    ColorRange color_range = ColorRange::auto_detect;
    /// Accept clouds whose points all coincide (scale falls back to 1).
    bool allow_degenerate = false;
};

/// Centers positions on their centroid and applies one isotropic scale so the
/// largest absolute coordinate is 1; maps colors affinely onto [-1, 1].
ColoredPointCloud normalize(const ColoredPointCloud& cloud, NormalizeOptions options = {});
ColoredPointCloud denormalize(const ColoredPointCloud& cloud);

/// Uniform random subsample of n points without replacement; selected points
/// keep their relative order.
ColoredPointCloud downsample(const ColoredPointCloud& cloud, Eigen::Index n, std::uint64_t seed);

/// Row i of the result is row perm[i] of the input.
ColoredPointCloud permute(const ColoredPointCloud& cloud, std::span<const Eigen::Index> perm);

}  // namespace pcnst
