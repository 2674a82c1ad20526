#pragma once

#include <array>
#include <filesystem>
#include <string>

#include "flowfuse/degradation.hpp"
#include "flowfuse/params.hpp"
#include "flowfuse/tensor.hpp"

namespace flowfuse {

// All writers go through a temp-file-then-rename sequence so a crash never
// leaves a truncated file at the destination. All binary payloads are
// little-endian; 64-bit doubles round-trip bit-exactly.

void write_text_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

// Array file: magic, version, rank, extents, row-major doubles. Holds both
// planes (rank 2) and cubes (rank 3).
void write_cube(const std::filesystem::path& path, const Tensor& t);
Tensor read_cube(const std::filesystem::path& path);

// Named-tensor container for network parameters.
void write_checkpoint(const std::filesystem::path& path, const ParamStore& params);
ParamStore read_checkpoint(const std::filesystem::path& path);

// Plain text, 4 rows of 4 band indices; band count is one past the largest
// index present.
void write_pattern(const std::filesystem::path& path, const SfaPattern& pattern);
SfaPattern read_pattern(const std::filesystem::path& path);

// 8-bit binary PPM pseudo-color preview of a cube; rgb_bands selects the
// source band per channel, values are clamped to [0,1].
void write_ppm(const std::filesystem::path& path, const Tensor& cube,
               const std::array<int, 3>& rgb_bands);

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

}  // namespace flowfuse
