#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "putf/pointcloud.hpp"

namespace putf {

// Text point format: one point per line, three fields separated by single
// spaces, '.' decimal separator, 9 significant digits on write; lines
// starting with '#' are skipped on read.
PointCloud read_xyz(const std::string& path);
void write_xyz(const PointCloud& cloud, const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

// Hex SHA-1 of a git-style blob header plus content ("blob <len>\0<bytes>").
std::string git_blob_sha1(const std::vector<std::uint8_t>& bytes);

}  // namespace putf
