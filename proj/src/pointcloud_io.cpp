#include "grl/pointcloud_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "grl/error.hpp"

namespace grl {

static_assert(std::endian::native == std::endian::little,
              "binary-f32 I/O assumes a little-endian host");

CloudFormat parse_cloud_format(std::string_view name) {
  if (name == "ascii-ply") return CloudFormat::AsciiPly;
  if (name == "binary-f32") return CloudFormat::BinaryF32;
  throw Error(ErrorKind::InvalidArgument, "unknown point cloud format '" + std::string(name) +
                                              "' (expected ascii-ply or binary-f32)");
}

std::string_view to_string(CloudFormat format) {
  return format == CloudFormat::AsciiPly ? "ascii-ply" : "binary-f32";
}

std::string_view file_extension(CloudFormat format) {
  return format == CloudFormat::AsciiPly ? ".ply" : ".bin";
}

namespace {

void write_ascii_ply(std::span<const Vec3> points, std::ofstream& out) {
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  out << std::setprecision(17);
  for (const Vec3& p : points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

void write_binary_f32(std::span<const Vec3> points, std::ofstream& out) {
  const std::uint64_t count = points.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  std::vector<float> buffer;
  buffer.reserve(points.size() * 3);
  for (const Vec3& p : points) {
    buffer.push_back(static_cast<float>(p.x()));
    buffer.push_back(static_cast<float>(p.y()));
    buffer.push_back(static_cast<float>(p.z()));
  }
  out.write(reinterpret_cast<const char*>(buffer.data()),
            static_cast<std::streamsize>(buffer.size() * sizeof(float)));
}

PointCloud read_ascii_ply(std::ifstream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line) || line != "ply") {
    throw Error(ErrorKind::InvalidArgument, name + ": missing 'ply' magic");
  }
  std::size_t vertex_count = 0;
  bool in_vertex = false;
  bool seen_vertex = false;
  std::vector<std::string> props;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string kind;
      ls >> kind;
      if (kind != "ascii") {
        throw Error(ErrorKind::InvalidArgument, name + ": only ascii PLY is supported");
      }
    } else if (word == "element") {
      std::string elem;
      ls >> elem;
      in_vertex = elem == "vertex";
      if (in_vertex) {
        if (seen_vertex) throw Error(ErrorKind::InvalidArgument, name + ": two vertex elements");
        seen_vertex = true;
        ls >> vertex_count;
      } else if (!seen_vertex) {
        throw Error(ErrorKind::InvalidArgument, name + ": vertex element must come first");
      }
    } else if (word == "property" && in_vertex) {
      std::string type, prop;
      ls >> type >> prop;
      if (type == "list") {
        throw Error(ErrorKind::InvalidArgument, name + ": list property on vertex element");
      }
      props.push_back(prop);
    } else if (word == "end_header") {
      break;
    }
  }
  std::array<std::size_t, 3> column{};
  const std::array<const char*, 3> axes{"x", "y", "z"};
  for (std::size_t a = 0; a < 3; ++a) {
    auto it = std::find(props.begin(), props.end(), axes[a]);
    if (it == props.end()) {
      throw Error(ErrorKind::InvalidArgument, name + ": vertex has no '" + axes[a] + "' property");
    }
    column[a] = static_cast<std::size_t>(it - props.begin());
  }
  PointCloud points;
  points.reserve(vertex_count);
  std::vector<double> values(props.size());
  for (std::size_t i = 0; i < vertex_count; ++i) {
    if (!std::getline(in, line)) {
      throw Error(ErrorKind::InvalidArgument, name + ": truncated at vertex " + std::to_string(i));
    }
    std::istringstream ls(line);
    for (double& v : values) {
      if (!(ls >> v)) {
        throw Error(ErrorKind::InvalidArgument, name + ": malformed vertex " + std::to_string(i));
      }
    }
    points.emplace_back(values[column[0]], values[column[1]], values[column[2]]);
  }
  return points;
}

PointCloud read_binary_f32(std::ifstream& in, const std::string& name) {
  std::uint64_t count = 0;
  if (!in.read(reinterpret_cast<char*>(&count), sizeof count)) {
    throw Error(ErrorKind::InvalidArgument, name + ": missing point count");
  }
  const auto start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto remaining = static_cast<std::uint64_t>(in.tellg() - start);
  in.seekg(start);
  if (remaining != count * 3 * sizeof(float)) {
    throw Error(ErrorKind::InvalidArgument,
                name + ": header says " + std::to_string(count) + " points but payload has " +
                    std::to_string(remaining) + " bytes");
  }
  std::vector<float> buffer(count * 3);
  in.read(reinterpret_cast<char*>(buffer.data()),
          static_cast<std::streamsize>(buffer.size() * sizeof(float)));
  PointCloud points(count);
  for (std::size_t i = 0; i < count; ++i) {
    points[i] = Vec3(buffer[3 * i], buffer[3 * i + 1], buffer[3 * i + 2]);
  }
  return points;
}

}  // namespace

void export_point_cloud(std::span<const Vec3> points, const std::filesystem::path& path,
                        CloudFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  if (format == CloudFormat::AsciiPly) {
    write_ascii_ply(points, out);
  } else {
    write_binary_f32(points, out);
  }
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

PointCloud load_point_cloud(const std::filesystem::path& path, CloudFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open " + path.string());
  return format == CloudFormat::AsciiPly ? read_ascii_ply(in, path.string())
                                         : read_binary_f32(in, path.string());
}

PointCloud load_point_cloud(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".ply") return load_point_cloud(path, CloudFormat::AsciiPly);
  if (ext == ".bin") return load_point_cloud(path, CloudFormat::BinaryF32);
  throw Error(ErrorKind::InvalidArgument, path.string() + ": unknown point cloud extension");
}

}  // namespace grl
