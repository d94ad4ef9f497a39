#pragma once

// Point cloud and transform files.
//
// XYZ: one point per line, three whitespace-separated decimals; text after
// '#' is ignored. PLY: ASCII format with float x, y, z vertex properties;
// other vertex properties are skipped. Transform: 16 decimals, row-major
// 4×4, last row 0 0 0 1.

#include <filesystem>
#include <iosfwd>
#include <string>

#include "ptt/point_tree.hpp"
#include "ptt/registration.hpp"

namespace ptt {

enum class CloudFormat { Xyz, Ply };

/// PLY when the extension is .ply (any case), XYZ otherwise.
CloudFormat format_for_path(const std::filesystem::path& path);

PointCloud read_xyz(std::istream& in, const std::string& source = "<stream>");
PointCloud read_ply(std::istream& in, const std::string& source = "<stream>");

/// Throws Data on unreadable files, parse errors (with the line number) and
/// empty clouds.
PointCloud load_cloud(const std::filesystem::path& path);

void write_xyz(std::ostream& out, const PointCloud& cloud);
void write_ply(std::ostream& out, const PointCloud& cloud);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path);

RigidTransform read_transform(std::istream& in, const std::string& source = "<stream>");
RigidTransform load_transform(const std::filesystem::path& path);
void write_transform(std::ostream& out, const RigidTransform& t);
void save_transform(const RigidTransform& t, const std::filesystem::path& path);

}  // namespace ptt
