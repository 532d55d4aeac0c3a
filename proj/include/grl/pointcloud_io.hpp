#pragma once

#include <filesystem>
#include <string_view>

#include "grl/geometry.hpp"

namespace grl {

enum class CloudFormat {
  AsciiPly,   // standard PLY header, one "x y z" line per vertex
  BinaryF32,  // uint64 LE count, then count*3 float32 LE
};

CloudFormat parse_cloud_format(std::string_view name);
std::string_view to_string(CloudFormat format);
/// ".ply" or ".bin"
std::string_view file_extension(CloudFormat format);

void export_point_cloud(std::span<const Vec3> points, const std::filesystem::path& path,
                        CloudFormat format);

PointCloud load_point_cloud(const std::filesystem::path& path, CloudFormat format);
/// Format from the file extension.
PointCloud load_point_cloud(const std::filesystem::path& path);

}  // namespace grl
