#pragma once

#include "pcnst/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pcnst {

/// An RGB image flattened row-major to (H*W) x 3 colors in [-1, 1]. Spatial
/// layout is not retained beyond the source dimensions.
struct PixelSet {
    Matrix colors;
    Eigen::Index height = 0;
    Eigen::Index width = 0;
};

/// Interleaved 8-bit RGB, row-major.
struct RgbImage {
    Eigen::Index height = 0;
    Eigen::Index width = 0;
    std::vector<std::uint8_t> pixels;
};

/// Decodes binary PPM (P6), and PNG when built with libpng. Format is chosen
/// by magic bytes. Non-RGB images are rejected.
RgbImage read_image(const std::filesystem::path& path);
void write_ppm(const RgbImage& image, const std::filesystem::path& path);

PixelSet to_pixel_set(const RgbImage& image);
PixelSet image_to_pixel_set(const std::filesystem::path& path);

/// True if the file starts with a PPM or PNG signature.
bool looks_like_image(const std::filesystem::path& path);
bool png_supported();

}  // namespace pcnst
