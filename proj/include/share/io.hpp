#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "share/cube.hpp"

namespace share {

enum class CubeFormat {
  EnviBsq,     // ENVI header + band-sequential payload (data type 4 or 12)
  RawF32Json,  // little-endian float32 BSQ payload + JSON sidecar
  MatlabV7,    // MAT level-5 file, optionally zlib-compressed (v7)
};

CubeFormat parse_cube_format(std::string_view name);
std::string to_string(CubeFormat format);

/// Guess the format from the file extension (.f32/.raw, .hdr/.img/.bsq, .mat).
CubeFormat format_from_extension(const std::filesystem::path& path);

/// Load a cube in its native value range. No normalization is applied.
///
/// For RawF32Json, `path` names the payload and the sidecar lives next to it
/// with a `.json` extension. For EnviBsq, `path` may name either the header
/// or the payload. For MatlabV7 the first 2D/3D numeric array is read (or the
/// one called `variable`) and interpreted as [height, width, bands].
HsiCube load_cube(const std::filesystem::path& path, CubeFormat format,
                  const std::string& variable = {});
HsiCube load_cube(const std::filesystem::path& path);

void save_cube(const HsiCube& cube, const std::filesystem::path& path, CubeFormat format);
void save_cube(const HsiCube& cube, const std::filesystem::path& path);

/// Sidecar path for a raw payload: same stem, `.json` extension.
std::filesystem::path sidecar_path(const std::filesystem::path& payload);

/// Masks share the cube container; loading validates that every value is 0 or 1.
HsiCube load_mask(const std::filesystem::path& path);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace share
