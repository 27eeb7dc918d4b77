#pragma once

#include "pcnst/point_cloud.hpp"

#include <filesystem>
#include <functional>
#include <ostream>

namespace pcnst {

/// Writes through a temporary sibling file and renames it over `path` only
/// after `write` returns normally, so failures never leave partial output.
void write_file_atomically(const std::filesystem::path& path,
                           const std::function<void(std::ostream&)>& write, bool binary = false);

/// Reads an ASCII PLY with x,y,z and red,green,blue vertex properties.
/// The returned cloud is raw (not normalized). Throws ParseError with the
/// offending line number on malformed input.
ColoredPointCloud load_ply(const std::filesystem::path& path);
ColoredPointCloud parse_ply(std::istream& in);

/// Writes ASCII PLY (float positions, uchar colors). Normalized clouds are
/// denormalized first; colors are quantized to 8 bits.
void save_ply(const ColoredPointCloud& cloud, const std::filesystem::path& path);
void write_ply(const ColoredPointCloud& cloud, std::ostream& out);

/// True if the file starts with the PLY magic line.
bool looks_like_ply(const std::filesystem::path& path);

}  // namespace pcnst
